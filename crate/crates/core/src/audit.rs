//! Corpus-level audit statistics over conflict reports: per-website
//! counters, violation groups, group rates, and the reduction rate.

use crate::policy::SchemaVersion;
use crate::reason::ConflictReport;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("duplicate (app, profile) pair: ({app}, {profile})")]
    DuplicatePair { app: String, profile: String },
    #[error("inconsistent report for {app}: {reason}")]
    InconsistentReport { app: String, reason: String },
    #[error("cannot merge summaries: website {0} appears in both")]
    OverlappingMerge(String),
}

/// Per-profile counters for one website.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileCounts {
    pub profile_id: String,
    /// Conflicts this profile raised against the website.
    pub conflicts: u32,
    /// Distinct conflicting practices (spec or downstream units).
    pub practices: u32,
    /// Distinct conflicting segments.
    pub segments: u32,
}

/// All counters for one website.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WebsiteStats {
    pub app_id: String,
    /// Segments in the privacy policy.
    pub n_pp: u32,
    /// Segments carrying practices.
    pub n_wp: u32,
    /// Segments triggering at least one conflict, across all profiles.
    pub n_cs: u32,
    /// Total conflicts across all profiles.
    pub n_con: u32,
    /// Number of violated profiles (the website's violation group).
    pub vg: u32,
    pub violated_profiles: Vec<String>,
    pub per_profile: Vec<ProfileCounts>,
    /// Σ_p practices(p) / n_con — how controversial a practice is, as
    /// printed in the source formula.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub practices_per_conflict: Option<f64>,
    /// Secondary column: Σ_p practices(p) / vg, the per-violated-profile
    /// average reading of the same measure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub practices_per_violated_profile: Option<f64>,
}

/// Group-averaged rates over all websites violating the same number of
/// profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupStats {
    /// Violated-profile count shared by this group (N_vp).
    pub vg: u32,
    pub websites: Vec<String>,
    /// Mean over the group of n_con / n_pp (conflicts per policy segment).
    pub r_pp: f64,
    /// Mean over the group of n_con / n_cs; websites with n_cs = 0 are
    /// excluded, and the field is null when the whole group is excluded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_cs: Option<f64>,
    /// r_pp / vg; null for the vg = 0 group.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_pp_normalized: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditTotals {
    pub segments_total: u32,
    pub segments_with_practices: u32,
    pub segments_conflicting: u32,
    pub conflicts_total: u32,
}

/// Corpus-level audit document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSummary {
    pub schema_version: SchemaVersion,
    pub websites: Vec<WebsiteStats>,
    pub groups: Vec<GroupStats>,
    pub totals: AuditTotals,
    /// 1 − segments_conflicting / segments_total: the fraction of segments a
    /// reader can skip when only conflict-bearing segments matter.
    pub reduction_rate: f64,
}

impl AuditSummary {
    pub fn serialize(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("summary serializes");
        out.push('\n');
        out
    }

    /// Merge two summaries over disjoint website sets; groups, totals, and
    /// the reduction rate are recomputed.
    pub fn merge(&self, other: &AuditSummary) -> Result<AuditSummary, AuditError> {
        let mine: BTreeSet<&str> = self.websites.iter().map(|w| w.app_id.as_str()).collect();
        if let Some(dup) = other.websites.iter().find(|w| mine.contains(w.app_id.as_str())) {
            return Err(AuditError::OverlappingMerge(dup.app_id.clone()));
        }
        let mut websites: Vec<WebsiteStats> =
            self.websites.iter().chain(other.websites.iter()).cloned().collect();
        websites.sort_by(|a, b| a.app_id.cmp(&b.app_id));
        Ok(summarize(websites))
    }
}

/// Aggregate conflict reports (one per (app, profile) pair) into the audit
/// summary. Duplicate pairs and internally inconsistent reports are errors.
pub fn audit(reports: &[ConflictReport]) -> Result<AuditSummary, AuditError> {
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut by_app: BTreeMap<String, Vec<&ConflictReport>> = BTreeMap::new();
    for report in reports {
        let key = (report.app_id.clone(), report.profile_id.clone());
        if !seen.insert(key) {
            return Err(AuditError::DuplicatePair {
                app: report.app_id.clone(),
                profile: report.profile_id.clone(),
            });
        }
        if report.counts.conflicts_total as usize != report.conflicts.len() {
            return Err(AuditError::InconsistentReport {
                app: report.app_id.clone(),
                reason: format!(
                    "counts.conflicts_total = {} but the report lists {} conflicts (profile {})",
                    report.counts.conflicts_total,
                    report.conflicts.len(),
                    report.profile_id
                ),
            });
        }
        by_app.entry(report.app_id.clone()).or_default().push(report);
    }

    let mut websites = Vec::new();
    for (app_id, app_reports) in by_app {
        let n_pp = app_reports[0].counts.segments_total;
        let n_wp = app_reports[0].counts.segments_with_practices;
        for r in &app_reports {
            if r.counts.segments_total != n_pp || r.counts.segments_with_practices != n_wp {
                return Err(AuditError::InconsistentReport {
                    app: app_id.clone(),
                    reason: format!(
                        "segment counts disagree across profiles (profile {})",
                        r.profile_id
                    ),
                });
            }
        }
        let mut conflicting_segments: BTreeSet<u32> = BTreeSet::new();
        let mut n_con = 0u32;
        let mut per_profile = Vec::new();
        let mut violated = Vec::new();
        for r in &app_reports {
            let mut practices: BTreeSet<(&str, Option<u32>)> = BTreeSet::new();
            let mut segments: BTreeSet<u32> = BTreeSet::new();
            for c in &r.conflicts {
                practices.insert((c.usage.spec_port.as_str(), c.usage.downstream_index));
                segments.insert(c.usage.provenance.segment_index);
            }
            conflicting_segments.extend(&segments);
            n_con += r.conflicts.len() as u32;
            if !r.conflicts.is_empty() {
                violated.push(r.profile_id.clone());
            }
            per_profile.push(ProfileCounts {
                profile_id: r.profile_id.clone(),
                conflicts: r.conflicts.len() as u32,
                practices: practices.len() as u32,
                segments: segments.len() as u32,
            });
        }
        per_profile.sort_by(|a, b| a.profile_id.cmp(&b.profile_id));
        violated.sort();
        let practice_sum: u32 = per_profile.iter().map(|p| p.practices).sum();
        let vg = violated.len() as u32;
        websites.push(WebsiteStats {
            app_id,
            n_pp,
            n_wp,
            n_cs: conflicting_segments.len() as u32,
            n_con,
            vg,
            practices_per_conflict: (n_con > 0).then(|| practice_sum as f64 / n_con as f64),
            practices_per_violated_profile: (vg > 0).then(|| practice_sum as f64 / vg as f64),
            violated_profiles: violated,
            per_profile,
        });
    }
    Ok(summarize(websites))
}

fn summarize(websites: Vec<WebsiteStats>) -> AuditSummary {
    let mut by_group: BTreeMap<u32, Vec<&WebsiteStats>> = BTreeMap::new();
    for w in &websites {
        by_group.entry(w.vg).or_default().push(w);
    }
    let mut groups = Vec::new();
    for (vg, members) in by_group {
        let rates_pp: Vec<f64> = members
            .iter()
            .filter(|w| w.n_pp > 0)
            .map(|w| w.n_con as f64 / w.n_pp as f64)
            .collect();
        let r_pp = if rates_pp.is_empty() {
            0.0
        } else {
            rates_pp.iter().sum::<f64>() / rates_pp.len() as f64
        };
        let rates_cs: Vec<f64> = members
            .iter()
            .filter(|w| w.n_cs > 0)
            .map(|w| w.n_con as f64 / w.n_cs as f64)
            .collect();
        let r_cs = if rates_cs.is_empty() {
            None
        } else {
            Some(rates_cs.iter().sum::<f64>() / rates_cs.len() as f64)
        };
        groups.push(GroupStats {
            vg,
            websites: members.iter().map(|w| w.app_id.clone()).collect(),
            r_pp,
            r_cs,
            r_pp_normalized: (vg > 0).then(|| r_pp / vg as f64),
        });
    }
    let totals = AuditTotals {
        segments_total: websites.iter().map(|w| w.n_pp).sum(),
        segments_with_practices: websites.iter().map(|w| w.n_wp).sum(),
        segments_conflicting: websites.iter().map(|w| w.n_cs).sum(),
        conflicts_total: websites.iter().map(|w| w.n_con).sum(),
    };
    let reduction_rate = if totals.segments_total == 0 {
        1.0
    } else {
        1.0 - totals.segments_conflicting as f64 / totals.segments_total as f64
    };
    AuditSummary { schema_version: SchemaVersion, websites, groups, totals, reduction_rate }
}

/// Flat tabular export, one row per website: the headline counters plus one
/// conflicting-practice count column per profile.
pub fn summary_table(summary: &AuditSummary) -> String {
    let mut profile_ids: BTreeSet<&str> = BTreeSet::new();
    for w in &summary.websites {
        profile_ids.extend(w.per_profile.iter().map(|p| p.profile_id.as_str()));
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "app_id".to_string(),
        "n_pp".to_string(),
        "n_cs".to_string(),
        "n_con".to_string(),
        "vg".to_string(),
    ];
    header.extend(profile_ids.iter().map(|p| p.to_string()));
    writer.write_record(&header).expect("csv writes");
    for w in &summary.websites {
        let by_profile: BTreeMap<&str, u32> =
            w.per_profile.iter().map(|p| (p.profile_id.as_str(), p.practices)).collect();
        let mut row = vec![
            w.app_id.clone(),
            w.n_pp.to_string(),
            w.n_cs.to_string(),
            w.n_con.to_string(),
            w.vg.to_string(),
        ];
        row.extend(
            profile_ids
                .iter()
                .map(|p| by_profile.get(p).copied().unwrap_or(0).to_string()),
        );
        writer.write_record(&row).expect("csv writes");
    }
    String::from_utf8(writer.into_inner().expect("csv flushes")).expect("csv is utf-8")
}
