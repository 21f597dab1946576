//! Deterministic compliance checker: expands an app policy into atomic
//! usages, evaluates each against every data policy of a profile, and emits
//! a conflict report with provenance.
//!
//! Precedence is prohibit-overrides-permit; when no rule applies the
//! policy's default stance decides. The `unspecified` sentinel matches
//! any-scoped purpose rules but never concept-scoped ones, and unspecified
//! data passes only root-scoped (subtree over a hierarchy root) data scopes.

use crate::policy::{
    AppPolicy, Choice, ConsumerScope, DataPolicy, Effect, PartyRef, PurposeScope, SchemaVersion,
    SegmentRef, UserProfile,
};
use crate::vocab::{ConceptHierarchy, ConceptId, MatchMode};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// One atomic data usage: one data concept flowing to one consumer for one
/// purpose.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Usage {
    pub data: ConceptId,
    pub purpose: ConceptId,
    pub consumer: PartyRef,
    pub spec_port: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downstream_index: Option<u32>,
    pub choice: Choice,
    pub provenance: SegmentRef,
}

/// Outcome of evaluating one data policy against one usage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    NotApplicable,
    Permitted,
    Prohibited { rule_index: Option<u32>, reason: ConflictReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictReason {
    /// A prohibit rule matched the usage's purpose.
    ProhibitedPurpose,
    /// An any-purpose prohibition on third parties matched.
    ThirdPartyDisallowed,
    /// ProhibitByDefault stance and no permit rule matched.
    NotInPermittedSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conflict {
    pub profile_id: String,
    pub policy_id: String,
    /// Index of the prohibiting rule; absent for default-stance conflicts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_index: Option<u32>,
    pub app_id: String,
    pub reason: ConflictReason,
    pub usage: Usage,
    /// Verbatim text of the segment the usage came from.
    pub original_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportCounts {
    pub segments_total: u32,
    pub segments_with_practices: u32,
    pub segments_conflicting: u32,
    pub conflicts_total: u32,
}

/// Compliance result for one (app policy, user profile) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConflictReport {
    pub schema_version: SchemaVersion,
    pub app_id: String,
    pub profile_id: String,
    pub counts: ReportCounts,
    pub conflicts: Vec<Conflict>,
}

impl ConflictReport {
    pub fn parse(document: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(document)
    }

    pub fn serialize(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

/// Expand an app policy into its atomic usages: one per
/// (spec × data × purpose) for the first party, one per
/// (spec × data × downstream × downstream-purpose) for third parties.
/// Empty purpose lists expand with the `unspecified` sentinel.
pub fn expand_usages(policy: &AppPolicy) -> Vec<Usage> {
    let unspecified = [ConceptId::unspecified()];
    let mut usages = Vec::new();
    for spec in &policy.input_specs {
        let first_party_purposes: &[ConceptId] = if spec.purposes.is_empty() {
            &unspecified
        } else {
            &spec.purposes
        };
        for data in &spec.data {
            for purpose in first_party_purposes {
                usages.push(Usage {
                    data: data.clone(),
                    purpose: purpose.clone(),
                    consumer: PartyRef::FirstParty,
                    spec_port: spec.port.clone(),
                    downstream_index: None,
                    choice: Choice::Unconditional,
                    provenance: spec.provenance.clone(),
                });
            }
            for (i, downstream) in spec.downstreams.iter().enumerate() {
                let purposes: &[ConceptId] = if downstream.purposes.is_empty() {
                    &unspecified
                } else {
                    &downstream.purposes
                };
                for purpose in purposes {
                    usages.push(Usage {
                        data: data.clone(),
                        purpose: purpose.clone(),
                        consumer: downstream.recipient.clone(),
                        spec_port: spec.port.clone(),
                        downstream_index: Some(i as u32),
                        choice: downstream.choice,
                        provenance: downstream.provenance.clone(),
                    });
                }
            }
        }
    }
    usages
}

// Data-scope gate. Unspecified data passes only root-scoped subtree scopes.
fn data_in_scope(dp: &DataPolicy, usage: &Usage, h: &ConceptHierarchy) -> bool {
    if usage.data.is_unspecified() {
        return dp.data_scope.mode == MatchMode::Subtree && h.is_root(&dp.data_scope.concept);
    }
    h.match_concept(&usage.data, &dp.data_scope.concept, dp.data_scope.mode)
        .unwrap_or(false)
}

fn purpose_matches(scope: &PurposeScope, purpose: &ConceptId, h: &ConceptHierarchy) -> bool {
    match scope {
        PurposeScope::Any => true,
        PurposeScope::Scoped(s) => {
            if purpose.is_unspecified() {
                false
            } else {
                h.match_concept(purpose, &s.concept, s.mode).unwrap_or(false)
            }
        }
    }
}

fn consumer_matches(scope: ConsumerScope, consumer: &PartyRef) -> bool {
    match scope {
        ConsumerScope::FirstPartyOnly => !consumer.is_third_party(),
        ConsumerScope::ThirdPartyOnly => consumer.is_third_party(),
        ConsumerScope::AnyParty => true,
    }
}

fn recipient_pattern_matches(pattern: Option<&str>, consumer: &PartyRef) -> bool {
    match pattern {
        None => true,
        Some(p) => consumer.name().is_some_and(|n| n.contains(p)),
    }
}

/// Evaluate one data policy against one usage.
pub fn evaluate_policy(dp: &DataPolicy, usage: &Usage, h: &ConceptHierarchy) -> Verdict {
    if !data_in_scope(dp, usage, h) {
        return Verdict::NotApplicable;
    }
    let mut permitted = false;
    for (i, rule) in dp.rules.iter().enumerate() {
        if !purpose_matches(&rule.purpose_scope, &usage.purpose, h)
            || !consumer_matches(rule.consumer_scope, &usage.consumer)
            || !recipient_pattern_matches(rule.recipient_name_pattern.as_deref(), &usage.consumer)
        {
            continue;
        }
        match rule.effect {
            Effect::Prohibit => {
                let reason = match (&rule.purpose_scope, rule.consumer_scope) {
                    (PurposeScope::Any, ConsumerScope::ThirdPartyOnly) => {
                        ConflictReason::ThirdPartyDisallowed
                    }
                    _ => ConflictReason::ProhibitedPurpose,
                };
                return Verdict::Prohibited { rule_index: Some(i as u32), reason };
            }
            Effect::Permit => permitted = true,
        }
    }
    if permitted {
        return Verdict::Permitted;
    }
    match dp.default_stance {
        crate::policy::DefaultStance::PermitByDefault => Verdict::Permitted,
        crate::policy::DefaultStance::ProhibitByDefault => Verdict::Prohibited {
            rule_index: None,
            reason: ConflictReason::NotInPermittedSet,
        },
    }
}

fn segments_with_practices(policy: &AppPolicy) -> u32 {
    let mut segs: BTreeSet<(&str, u32)> = BTreeSet::new();
    for spec in &policy.input_specs {
        segs.insert((&spec.provenance.doc_id, spec.provenance.segment_index));
        for d in &spec.downstreams {
            segs.insert((&d.provenance.doc_id, d.provenance.segment_index));
        }
    }
    segs.len() as u32
}

/// Check one app policy against one user profile.
pub fn check_compliance(
    policy: &AppPolicy,
    profile: &UserProfile,
    h: &ConceptHierarchy,
) -> ConflictReport {
    let usages = expand_usages(policy);
    let mut conflicts = Vec::new();
    for dp in &profile.policies {
        for usage in &usages {
            if let Verdict::Prohibited { rule_index, reason } = evaluate_policy(dp, usage, h) {
                conflicts.push(Conflict {
                    profile_id: profile.profile_id.clone(),
                    policy_id: dp.policy_id.clone(),
                    rule_index,
                    app_id: policy.app_id.clone(),
                    reason,
                    usage: usage.clone(),
                    original_text: usage.provenance.text.clone(),
                });
            }
        }
    }
    conflicts.sort_by(|a, b| {
        (
            a.usage.provenance.segment_index,
            &a.usage.spec_port,
            &a.policy_id,
            a.rule_index,
            a.usage.downstream_index,
            &a.usage.data,
            &a.usage.purpose,
            &a.usage.consumer,
        )
            .cmp(&(
                b.usage.provenance.segment_index,
                &b.usage.spec_port,
                &b.policy_id,
                b.rule_index,
                b.usage.downstream_index,
                &b.usage.data,
                &b.usage.purpose,
                &b.usage.consumer,
            ))
    });
    let conflicting_segments: BTreeSet<u32> = conflicts
        .iter()
        .map(|c| c.usage.provenance.segment_index)
        .collect();
    ConflictReport {
        schema_version: SchemaVersion,
        app_id: policy.app_id.clone(),
        profile_id: profile.profile_id.clone(),
        counts: ReportCounts {
            segments_total: policy.segments_total,
            segments_with_practices: segments_with_practices(policy),
            segments_conflicting: conflicting_segments.len() as u32,
            conflicts_total: conflicts.len() as u32,
        },
        conflicts,
    }
}
