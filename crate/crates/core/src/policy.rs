//! Formal policy model: app policies (what a platform does with data) and
//! data policies / user profiles (what a user permits or prohibits).
//!
//! Documents are UTF-8 JSON with a top-level `schema_version: 1`; unknown
//! fields are rejected. Serialization is canonical — specs sorted by port,
//! concept lists sorted lexicographically, stable field order — so identical
//! policies produce byte-identical files.

use crate::diag::{has_errors, Diagnostic};
use crate::vocab::{ConceptHierarchy, ConceptId, MatchMode};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("policy validation failed:\n{}", format_diags(.0))]
    Validation(Vec<Diagnostic>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn format_diags(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Marker for the `schema_version` field; only version 1 exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SchemaVersion;

impl Serialize for SchemaVersion {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u32(1)
    }
}

impl<'de> Deserialize<'de> for SchemaVersion {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = u32::deserialize(deserializer)?;
        if v == 1 {
            Ok(SchemaVersion)
        } else {
            Err(serde::de::Error::custom(format!(
                "unsupported schema_version {v}, expected 1"
            )))
        }
    }
}

/// Where a policy statement came from: one verbatim segment of one document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRef {
    pub doc_id: String,
    pub segment_index: u32,
    pub text: String,
}

/// The party using or receiving data.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartyRef {
    FirstParty,
    ThirdParty { name: Option<String> },
}

impl PartyRef {
    pub fn third_party(name: impl Into<String>) -> Self {
        PartyRef::ThirdParty { name: Some(name.into()) }
    }

    pub fn unnamed_third_party() -> Self {
        PartyRef::ThirdParty { name: None }
    }

    pub fn is_third_party(&self) -> bool {
        matches!(self, PartyRef::ThirdParty { .. })
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            PartyRef::FirstParty => None,
            PartyRef::ThirdParty { name } => name.as_deref(),
        }
    }
}

impl fmt::Display for PartyRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyRef::FirstParty => f.write_str("first-party"),
            PartyRef::ThirdParty { name: Some(n) } => write!(f, "third-party({n})"),
            PartyRef::ThirdParty { name: None } => f.write_str("third-party(unnamed)"),
        }
    }
}

/// Whether a practice is conditional on user action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Choice {
    OptIn,
    OptOut,
    #[default]
    Unconditional,
}

/// A third-party recipient of one input spec's data, with its own purposes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Downstream {
    pub recipient: PartyRef,
    pub purposes: Vec<ConceptId>,
    pub choice: Choice,
    pub provenance: SegmentRef,
}

/// One unit of data intake: what data enters at which port, for which
/// purposes, and which third parties receive it downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub port: String,
    pub data: Vec<ConceptId>,
    pub purposes: Vec<ConceptId>,
    pub downstreams: Vec<Downstream>,
    pub provenance: SegmentRef,
}

/// Formal description of one platform's data usage practices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppPolicy {
    pub schema_version: SchemaVersion,
    pub app_id: String,
    /// Total segments in the source document, including ones that carry no
    /// practices. Needed for corpus statistics; specs alone cannot supply it.
    pub segments_total: u32,
    pub input_specs: Vec<InputSpec>,
}

/// A concept plus the mode it is matched with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptScope {
    pub concept: ConceptId,
    pub mode: MatchMode,
}

/// Which purposes a rule covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PurposeScope {
    /// Matches every purpose, including `unspecified`.
    Any,
    /// Matches concrete purposes under the scope; never matches `unspecified`.
    Scoped(ConceptScope),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Effect {
    Permit,
    Prohibit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsumerScope {
    FirstPartyOnly,
    ThirdPartyOnly,
    AnyParty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefaultStance {
    PermitByDefault,
    ProhibitByDefault,
}

/// One permit/prohibit preference, scoped by purpose and consumer party.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub effect: Effect,
    pub purpose_scope: PurposeScope,
    pub consumer_scope: ConsumerScope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient_name_pattern: Option<String>,
}

/// A user's preference for one data-concept scope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPolicy {
    pub policy_id: String,
    pub data_scope: ConceptScope,
    pub default_stance: DefaultStance,
    pub rules: Vec<Rule>,
}

/// A named bundle of data policies covering one user's full preferences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserProfile {
    pub schema_version: SchemaVersion,
    pub profile_id: String,
    pub policies: Vec<DataPolicy>,
}

fn schema_error(err: serde_json::Error) -> PolicyError {
    PolicyError::Schema {
        path: format!("line {}, column {}", err.line(), err.column()),
        message: err.to_string(),
    }
}

/// Parse an app policy document. When a hierarchy is supplied, unknown
/// concepts are rejected; invariant violations fail either way.
pub fn parse_app_policy(
    document: &str,
    hierarchy: Option<&ConceptHierarchy>,
) -> Result<AppPolicy, PolicyError> {
    let policy: AppPolicy = serde_json::from_str(document).map_err(schema_error)?;
    let diags = validate_app_policy(&policy, hierarchy);
    if has_errors(&diags) {
        return Err(PolicyError::Validation(diags));
    }
    Ok(policy)
}

/// Parse a user-profile document. Same contract as [`parse_app_policy`].
pub fn parse_profile(
    document: &str,
    hierarchy: Option<&ConceptHierarchy>,
) -> Result<UserProfile, PolicyError> {
    let profile: UserProfile = serde_json::from_str(document).map_err(schema_error)?;
    let diags = validate_profile(&profile, hierarchy);
    if has_errors(&diags) {
        return Err(PolicyError::Validation(diags));
    }
    Ok(profile)
}

/// Canonical serialization: specs sorted by port, concept lists sorted,
/// downstreams sorted, stable field order, trailing newline.
pub fn serialize_app_policy(policy: &AppPolicy) -> String {
    let mut canonical = policy.clone();
    canonicalize_app_policy(&mut canonical);
    let mut out = serde_json::to_string_pretty(&canonical).expect("policy serializes");
    out.push('\n');
    out
}

pub fn serialize_profile(profile: &UserProfile) -> String {
    let mut out = serde_json::to_string_pretty(profile).expect("profile serializes");
    out.push('\n');
    out
}

/// Sort every list that has no semantic order, in place.
pub fn canonicalize_app_policy(policy: &mut AppPolicy) {
    for spec in &mut policy.input_specs {
        spec.data.sort();
        spec.data.dedup();
        spec.purposes.sort();
        spec.purposes.dedup();
        for d in &mut spec.downstreams {
            d.purposes.sort();
            d.purposes.dedup();
        }
        spec.downstreams.sort();
    }
    policy.input_specs.sort_by(|a, b| a.port.cmp(&b.port));
}

fn check_concept(
    c: &ConceptId,
    hierarchy: Option<&ConceptHierarchy>,
    location: String,
    diags: &mut Vec<Diagnostic>,
) {
    if c.is_unspecified() {
        return; // sentinel exemption
    }
    if let Some(h) = hierarchy {
        if !h.contains(c) {
            diags.push(Diagnostic::error(location, format!("unknown concept `{c}`")));
        }
    }
}

/// Validate an app policy against its invariants and, if supplied, a
/// hierarchy. Returns diagnostics; empty means valid.
pub fn validate_app_policy(
    policy: &AppPolicy,
    hierarchy: Option<&ConceptHierarchy>,
) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if policy.app_id.is_empty() {
        diags.push(Diagnostic::error("app_id", "app_id must be non-empty"));
    }
    let mut seen_ports = BTreeSet::new();
    for (i, spec) in policy.input_specs.iter().enumerate() {
        let at = |field: &str| format!("input_specs[{i}].{field}");
        if spec.port.is_empty() {
            diags.push(Diagnostic::error(at("port"), "port must be non-empty"));
        }
        if !seen_ports.insert(&spec.port) {
            diags.push(Diagnostic::error(
                at("port"),
                format!("duplicate port `{}`", spec.port),
            ));
        }
        if spec.data.is_empty() {
            diags.push(Diagnostic::error(
                at("data"),
                "data must be non-empty (use `unspecified` when unknown)",
            ));
        }
        for (j, c) in spec.data.iter().enumerate() {
            check_concept(c, hierarchy, at(&format!("data[{j}]")), &mut diags);
        }
        for (j, c) in spec.purposes.iter().enumerate() {
            check_concept(c, hierarchy, at(&format!("purposes[{j}]")), &mut diags);
        }
        let max_index = policy.segments_total;
        let check_range = |seg: &SegmentRef, location: String, diags: &mut Vec<Diagnostic>| {
            if seg.segment_index >= max_index {
                diags.push(Diagnostic::error(
                    location,
                    format!(
                        "segment index {} out of range (segments_total = {max_index})",
                        seg.segment_index
                    ),
                ));
            }
        };
        for (k, d) in spec.downstreams.iter().enumerate() {
            let dat = |field: &str| format!("input_specs[{i}].downstreams[{k}].{field}");
            if !d.recipient.is_third_party() {
                diags.push(Diagnostic::error(
                    dat("recipient"),
                    "downstream recipient must be a third party",
                ));
            }
            for (j, c) in d.purposes.iter().enumerate() {
                check_concept(c, hierarchy, dat(&format!("purposes[{j}]")), &mut diags);
            }
            check_range(&d.provenance, dat("provenance.segment_index"), &mut diags);
        }
        check_range(&spec.provenance, at("provenance.segment_index"), &mut diags);
    }
    diags
}

/// Validate a user profile. Returns diagnostics; empty means valid.
pub fn validate_profile(
    profile: &UserProfile,
    hierarchy: Option<&ConceptHierarchy>,
) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if profile.profile_id.is_empty() {
        diags.push(Diagnostic::error("profile_id", "profile_id must be non-empty"));
    }
    let mut seen = BTreeSet::new();
    for (i, dp) in profile.policies.iter().enumerate() {
        let at = |field: &str| format!("policies[{i}].{field}");
        if !seen.insert(&dp.policy_id) {
            diags.push(Diagnostic::error(
                at("policy_id"),
                format!("duplicate policy_id `{}`", dp.policy_id),
            ));
        }
        if dp.data_scope.concept.is_unspecified() {
            diags.push(Diagnostic::error(
                at("data_scope.concept"),
                "data_scope cannot target the `unspecified` sentinel",
            ));
        } else {
            check_concept(
                &dp.data_scope.concept,
                hierarchy,
                at("data_scope.concept"),
                &mut diags,
            );
        }
        for (j, rule) in dp.rules.iter().enumerate() {
            let rat = |field: &str| format!("policies[{i}].rules[{j}].{field}");
            if let PurposeScope::Scoped(scope) = &rule.purpose_scope {
                if scope.concept.is_unspecified() {
                    diags.push(Diagnostic::error(
                        rat("purpose_scope"),
                        "purpose scope cannot target the `unspecified` sentinel; use \"any\"",
                    ));
                } else {
                    check_concept(&scope.concept, hierarchy, rat("purpose_scope.concept"), &mut diags);
                }
            }
            if rule.recipient_name_pattern.is_some()
                && rule.consumer_scope == ConsumerScope::FirstPartyOnly
            {
                diags.push(Diagnostic::error(
                    rat("recipient_name_pattern"),
                    "recipient_name_pattern is only meaningful when the consumer scope \
                     involves third parties",
                ));
            }
        }
    }
    diags
}
