//! Extraction-evaluation metrics: relaxed span matching over the
//! longest-common-substring ratio, and the empty / non-empty / macro F1
//! split used for per-task scores.

use crate::extraction::{DocumentExtraction, EntityKind, TaskName};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("segment-id mismatch between gold and prediction: {0}")]
    SegmentKeyMismatch(String),
}

/// Longest common contiguous substring length over `max(|a|, |b|)`,
/// measured in chars. Both-empty compares as 1.0.
pub fn lcs_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let longest = lcs_substring_len(&a, &b);
    longest as f64 / a.len().max(b.len()) as f64
}

// Rolling single-row DP over match run-lengths.
fn lcs_substring_len(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut best = 0usize;
    let mut row = vec![0usize; b.len() + 1];
    for &ca in a {
        let mut diagonal = 0usize;
        for (j, &cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb { diagonal + 1 } else { 0 };
            best = best.max(row[j + 1]);
            diagonal = up;
        }
    }
    best
}

/// Inventory of one matching pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

fn stats_from(tp: f64, credited: usize, gold_len: usize, pred_len: usize) -> MatchStats {
    if gold_len == 0 && pred_len == 0 {
        // perfect empty prediction
        return MatchStats { precision: 1.0, recall: 1.0, f1: 1.0, tp: 0.0, fp: 0.0, fn_: 0.0 };
    }
    let fp = (pred_len - credited) as f64;
    let fn_ = (gold_len - credited) as f64;
    let precision = if pred_len == 0 { 0.0 } else { tp / pred_len as f64 };
    let recall = if gold_len == 0 { 0.0 } else { tp / gold_len as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    MatchStats { precision, recall, f1, tp, fp, fn_ }
}

/// Relaxed span-set F1: greedy one-to-one assignment of predictions to gold
/// by descending [`lcs_ratio`]; a pair clearing the threshold contributes
/// its ratio as fractional true positive. At threshold 1.0 this degenerates
/// to exact-match F1.
pub fn relaxed_f1(gold: &BTreeSet<String>, pred: &BTreeSet<String>, threshold: f64) -> MatchStats {
    assert!(threshold > 0.0 && threshold <= 1.0, "threshold must be in (0, 1]");
    if gold.is_empty() && pred.is_empty() {
        return stats_from(0.0, 0, 0, 0);
    }
    let mut candidates: Vec<(f64, &String, &String)> = Vec::new();
    for g in gold {
        for p in pred {
            let ratio = if g == p { 1.0 } else { lcs_ratio(g, p) };
            if ratio >= threshold {
                candidates.push((ratio, g, p));
            }
        }
    }
    candidates.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| x.1.cmp(y.1))
            .then_with(|| x.2.cmp(y.2))
    });
    let mut used_gold: BTreeSet<&String> = BTreeSet::new();
    let mut used_pred: BTreeSet<&String> = BTreeSet::new();
    let mut tp = 0.0;
    let mut credited = 0usize;
    for (ratio, g, p) in candidates {
        if used_gold.contains(g) || used_pred.contains(p) {
            continue;
        }
        used_gold.insert(g);
        used_pred.insert(p);
        tp += ratio;
        credited += 1;
    }
    stats_from(tp, credited, gold.len(), pred.len())
}

/// Plain exact-match set F1 (used by the classification and relation tasks).
pub fn exact_f1(gold: &BTreeSet<String>, pred: &BTreeSet<String>) -> MatchStats {
    let credited = gold.intersection(pred).count();
    stats_from(credited as f64, credited, gold.len(), pred.len())
}

/// Per-task score triple: F1 over non-empty-gold segments (micro-averaged),
/// F1 of the "segment is empty" binary classification over all segments,
/// and their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskScore {
    pub task: TaskName,
    pub f1_nonempty: f64,
    pub f1_empty: f64,
    pub f1_macro: f64,
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

/// Segment-keyed item sets for one task. Keys look like `doc#s3`.
pub type SegmentItems = BTreeMap<String, BTreeSet<String>>;

/// Matching regime per task: word tasks use relaxed LCS matching at 0.9;
/// classification and relation tasks use exact matching.
pub const RELAXED_THRESHOLD: f64 = 0.9;

fn uses_relaxed(task: TaskName) -> bool {
    matches!(
        task,
        TaskName::DataRecognition
            | TaskName::PurposeRecognition
            | TaskName::Action
            | TaskName::Party
    )
}

/// Score one task over segment-keyed gold and prediction item sets.
pub fn score_task(
    gold: &SegmentItems,
    pred: &SegmentItems,
    task: TaskName,
) -> Result<TaskScore, MetricsError> {
    if gold.len() != pred.len() || gold.keys().zip(pred.keys()).any(|(g, p)| g != p) {
        let missing: Vec<&String> = gold
            .keys()
            .filter(|k| !pred.contains_key(*k))
            .chain(pred.keys().filter(|k| !gold.contains_key(*k)))
            .collect();
        return Err(MetricsError::SegmentKeyMismatch(format!("{missing:?}")));
    }

    let mut tp = 0.0;
    let mut credited_total = 0usize;
    let mut gold_total = 0usize;
    let mut pred_total = 0usize;

    // binary "segment is empty" confusion counts; positive class = empty
    let mut empty_tp = 0usize;
    let mut empty_fp = 0usize;
    let mut empty_fn = 0usize;

    for (key, gold_items) in gold {
        let pred_items = &pred[key];
        match (gold_items.is_empty(), pred_items.is_empty()) {
            (true, true) => empty_tp += 1,
            (false, true) => empty_fp += 1,
            (true, false) => empty_fn += 1,
            (false, false) => {}
        }
        if gold_items.is_empty() {
            continue; // excluded from the non-empty aggregate
        }
        let stats = if uses_relaxed(task) {
            relaxed_f1(gold_items, pred_items, RELAXED_THRESHOLD)
        } else {
            exact_f1(gold_items, pred_items)
        };
        tp += stats.tp;
        credited_total += gold_items.len() - stats.fn_ as usize;
        gold_total += gold_items.len();
        pred_total += pred_items.len();
    }

    let f1_nonempty = {
        let precision = if pred_total == 0 { 0.0 } else { tp / pred_total as f64 };
        let recall = if gold_total == 0 { 0.0 } else { tp / gold_total as f64 };
        if gold_total == 0 && pred_total == 0 {
            1.0 // every segment was empty-gold; nothing to miss
        } else if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    };

    let f1_empty = {
        if empty_tp + empty_fp + empty_fn == 0 {
            // no empty segments anywhere and none predicted: vacuously perfect
            1.0
        } else {
            let p = if empty_tp + empty_fp == 0 {
                0.0
            } else {
                empty_tp as f64 / (empty_tp + empty_fp) as f64
            };
            let r = if empty_tp + empty_fn == 0 {
                0.0
            } else {
                empty_tp as f64 / (empty_tp + empty_fn) as f64
            };
            if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
        }
    };

    Ok(TaskScore {
        task,
        f1_nonempty,
        f1_empty,
        f1_macro: (f1_nonempty + f1_empty) / 2.0,
        tp,
        fp: (pred_total - credited_total) as f64,
        fn_: (gold_total - credited_total) as f64,
    })
}

/// Extract per-segment item sets for one task from a practice dump.
/// Recognition tasks yield surfaces, classification tasks concepts, Action
/// the practices' action words, and Relation the id triples
/// `practice|entity|role`.
pub fn task_items(doc: &DocumentExtraction, task: TaskName) -> SegmentItems {
    let mut out = SegmentItems::new();
    for segment in &doc.segments {
        let key = format!("{}#s{}", doc.doc_id, segment.index);
        let mut items = BTreeSet::new();
        match task {
            TaskName::DataRecognition | TaskName::PurposeRecognition | TaskName::Party => {
                let kind = match task {
                    TaskName::DataRecognition => EntityKind::Data,
                    TaskName::PurposeRecognition => EntityKind::Purpose,
                    _ => EntityKind::Party,
                };
                items.extend(
                    segment
                        .entities
                        .iter()
                        .filter(|e| e.kind == kind)
                        .map(|e| e.surface.clone()),
                );
            }
            TaskName::DataClassification | TaskName::PurposeClassification => {
                let kind = if task == TaskName::DataClassification {
                    EntityKind::Data
                } else {
                    EntityKind::Purpose
                };
                items.extend(
                    segment
                        .entities
                        .iter()
                        .filter(|e| e.kind == kind)
                        .filter_map(|e| e.concept.as_ref().map(|c| c.as_str().to_string())),
                );
            }
            TaskName::Action => {
                items.extend(segment.practices.iter().map(|p| p.action_surface.clone()));
            }
            TaskName::Relation => {
                items.extend(segment.links.iter().map(|l| {
                    let role = match l.role {
                        crate::extraction::RelationRole::Actor => "actor",
                        crate::extraction::RelationRole::DataObject => "data-object",
                        crate::extraction::RelationRole::Purpose => "purpose",
                        crate::extraction::RelationRole::Recipient => "recipient",
                    };
                    format!("{}|{}|{}", l.practice_id, l.entity_id, role)
                }));
            }
        }
        out.insert(key, items);
    }
    out
}

/// Scores for all seven tasks, serialized as the eval command's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub schema_version: crate::policy::SchemaVersion,
    pub scores: Vec<TaskScore>,
}

impl EvalReport {
    pub fn serialize(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

/// Score every task of a gold dump against a prediction dump.
pub fn evaluate_dumps(
    gold: &[DocumentExtraction],
    pred: &[DocumentExtraction],
) -> Result<EvalReport, MetricsError> {
    let mut scores = Vec::new();
    for task in TaskName::ALL {
        let mut gold_items = SegmentItems::new();
        let mut pred_items = SegmentItems::new();
        for doc in gold {
            gold_items.extend(task_items(doc, task));
        }
        for doc in pred {
            pred_items.extend(task_items(doc, task));
        }
        scores.push(score_task(&gold_items, &pred_items, task)?);
    }
    Ok(EvalReport { schema_version: crate::policy::SchemaVersion, scores })
}
