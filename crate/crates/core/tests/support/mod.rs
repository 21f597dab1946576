//! Shared test support: random instance generators and independent oracles.
//!
//! Everything here re-derives its answers from first principles (adjacency
//! maps, nested loops, full DP tables) rather than calling the production
//! code paths it is used to check.

#![allow(dead_code)]

use privacheck_core::policy::{
    AppPolicy, Choice, ConceptScope, ConsumerScope, DataPolicy, DefaultStance, Downstream, Effect,
    InputSpec, PartyRef, PurposeScope, Rule, SchemaVersion, SegmentRef, UserProfile,
};
use privacheck_core::reason::{Conflict, ConflictReason};
use privacheck_core::vocab::{load_vocabulary, ConceptHierarchy, ConceptId, MatchMode};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random DAG over `c0..c{n-1}`, returned both as a loaded hierarchy and
/// as a raw parent adjacency map for oracle use. Parents only point at
/// lower-numbered nodes, so acyclicity holds by construction.
pub struct RandomDag {
    pub hierarchy: ConceptHierarchy,
    pub parents: BTreeMap<String, Vec<String>>,
    pub names: Vec<String>,
}

pub fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize) -> RandomDag {
    let n = rng.gen_range(1..=max_nodes);
    let mut parents: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
    for (i, name) in names.iter().enumerate() {
        let mut ps = Vec::new();
        for parent in names.iter().take(i) {
            if rng.gen_bool(0.25) && ps.len() < 3 {
                ps.push(parent.clone());
            }
        }
        parents.insert(name.clone(), ps);
    }
    let mut doc = String::new();
    for name in &names {
        doc.push_str(&format!("{name}\tlabel {name}\t{}\n", parents[name].join(",")));
    }
    let hierarchy = load_vocabulary(&doc).expect("generated DAG loads");
    RandomDag { hierarchy, parents, names }
}

/// Floyd–Warshall-style reflexive-transitive closure over the parent map.
pub fn closure_oracle(dag: &RandomDag) -> BTreeMap<(String, String), bool> {
    let n = dag.names.len();
    let index: BTreeMap<&str, usize> =
        dag.names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for (child, ps) in &dag.parents {
        for parent in ps {
            reach[index[child.as_str()]][index[parent.as_str()]] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (i, a) in dag.names.iter().enumerate() {
        for (j, b) in dag.names.iter().enumerate() {
            out.insert((a.clone(), b.clone()), reach[i][j]);
        }
    }
    out
}

/// Recursive reachability straight off the adjacency map — the oracle's own
/// subconcept test, independent of the hierarchy's precomputed closure.
pub fn oracle_is_sub(parents: &BTreeMap<String, Vec<String>>, a: &str, b: &str) -> bool {
    if a == b {
        return true;
    }
    parents
        .get(a)
        .map(|ps| ps.iter().any(|p| oracle_is_sub(parents, p, b)))
        .unwrap_or(false)
}

fn concept(name: &str) -> ConceptId {
    ConceptId::new(name).unwrap()
}

fn random_concept(rng: &mut ChaCha8Rng, names: &[String], unspecified_chance: f64) -> ConceptId {
    if rng.gen_bool(unspecified_chance) {
        ConceptId::unspecified()
    } else {
        concept(names.choose(rng).unwrap())
    }
}

fn random_party(rng: &mut ChaCha8Rng) -> PartyRef {
    const POOL: [&str; 4] = ["ad partners", "analytics vendors", "data brokers", "affiliates"];
    if rng.gen_bool(0.3) {
        PartyRef::unnamed_third_party()
    } else {
        PartyRef::third_party(*POOL.choose(rng).unwrap())
    }
}

fn random_choice(rng: &mut ChaCha8Rng) -> Choice {
    *[Choice::OptIn, Choice::OptOut, Choice::Unconditional].choose(rng).unwrap()
}

fn random_mode(rng: &mut ChaCha8Rng) -> MatchMode {
    if rng.gen_bool(0.5) { MatchMode::Exact } else { MatchMode::Subtree }
}

pub fn random_app_policy(rng: &mut ChaCha8Rng, names: &[String]) -> AppPolicy {
    let segments_total = rng.gen_range(1..=12u32);
    let spec_count = rng.gen_range(0..=10);
    let mut specs = Vec::new();
    for i in 0..spec_count {
        let data_count = rng.gen_range(1..=3);
        let data: Vec<ConceptId> =
            (0..data_count).map(|_| random_concept(rng, names, 0.1)).collect();
        let purpose_count = rng.gen_range(0..=3);
        let purposes: Vec<ConceptId> =
            (0..purpose_count).map(|_| random_concept(rng, names, 0.1)).collect();
        let downstream_count = rng.gen_range(0..=3);
        let segment_index = rng.gen_range(0..segments_total);
        let downstreams: Vec<Downstream> = (0..downstream_count)
            .map(|_| Downstream {
                recipient: random_party(rng),
                purposes: (0..rng.gen_range(0..=2))
                    .map(|_| random_concept(rng, names, 0.1))
                    .collect(),
                choice: random_choice(rng),
                provenance: SegmentRef {
                    doc_id: "rand".into(),
                    segment_index: rng.gen_range(0..segments_total),
                    text: "sharing segment".into(),
                },
            })
            .collect();
        specs.push(InputSpec {
            port: format!("rand#s{segment_index}#{i}"),
            data,
            purposes,
            downstreams,
            provenance: SegmentRef {
                doc_id: "rand".into(),
                segment_index,
                text: "collection segment".into(),
            },
        });
    }
    AppPolicy {
        schema_version: SchemaVersion,
        app_id: "rand.example".into(),
        segments_total,
        input_specs: specs,
    }
}

pub fn random_profile(rng: &mut ChaCha8Rng, names: &[String]) -> UserProfile {
    const PATTERNS: [&str; 3] = ["partner", "broker", "vendor"];
    let policy_count = rng.gen_range(1..=3);
    let policies = (0..policy_count)
        .map(|i| {
            let rule_count = rng.gen_range(0..=5);
            let rules = (0..rule_count)
                .map(|_| {
                    let consumer_scope = *[
                        ConsumerScope::FirstPartyOnly,
                        ConsumerScope::ThirdPartyOnly,
                        ConsumerScope::AnyParty,
                    ]
                    .choose(rng)
                    .unwrap();
                    let recipient_name_pattern = if consumer_scope
                        != ConsumerScope::FirstPartyOnly
                        && rng.gen_bool(0.2)
                    {
                        Some((*PATTERNS.choose(rng).unwrap()).to_string())
                    } else {
                        None
                    };
                    Rule {
                        effect: if rng.gen_bool(0.5) { Effect::Permit } else { Effect::Prohibit },
                        purpose_scope: if rng.gen_bool(0.3) {
                            PurposeScope::Any
                        } else {
                            PurposeScope::Scoped(ConceptScope {
                                concept: concept(names.choose(rng).unwrap()),
                                mode: random_mode(rng),
                            })
                        },
                        consumer_scope,
                        recipient_name_pattern,
                    }
                })
                .collect();
            DataPolicy {
                policy_id: format!("pol{i}"),
                data_scope: ConceptScope {
                    concept: concept(names.choose(rng).unwrap()),
                    mode: random_mode(rng),
                },
                default_stance: if rng.gen_bool(0.7) {
                    DefaultStance::PermitByDefault
                } else {
                    DefaultStance::ProhibitByDefault
                },
                rules,
            }
        })
        .collect();
    UserProfile {
        schema_version: SchemaVersion,
        profile_id: "rand-profile".into(),
        policies,
    }
}

/// Conflict identity tuple for set comparison between the reasoner and the
/// oracle.
pub type ConflictKey = (
    String,      // policy_id
    Option<u32>, // rule_index
    String,      // spec_port
    Option<u32>, // downstream_index
    String,      // data
    String,      // purpose
    String,      // consumer, serialized
    String,      // reason, serialized
);

fn party_key(p: &PartyRef) -> String {
    match p {
        PartyRef::FirstParty => "first".into(),
        PartyRef::ThirdParty { name } => format!("third:{}", name.as_deref().unwrap_or("")),
    }
}

fn reason_key(r: ConflictReason) -> String {
    format!("{r:?}")
}

pub fn conflict_keys(conflicts: &[Conflict]) -> Vec<ConflictKey> {
    let mut keys: Vec<ConflictKey> = conflicts
        .iter()
        .map(|c| {
            (
                c.policy_id.clone(),
                c.rule_index,
                c.usage.spec_port.clone(),
                c.usage.downstream_index,
                c.usage.data.as_str().to_string(),
                c.usage.purpose.as_str().to_string(),
                party_key(&c.usage.consumer),
                reason_key(c.reason),
            )
        })
        .collect();
    keys.sort();
    keys
}

/// Naive enumeration of every (usage, data policy) pair, written directly
/// against the semantics: reachability by recursive DFS over the adjacency
/// map, prohibit-overrides-permit, default stance, sentinel rules. Never
/// touches the reasoner or the hierarchy's closure.
pub fn oracle_conflicts(
    policy: &AppPolicy,
    profile: &UserProfile,
    parents: &BTreeMap<String, Vec<String>>,
) -> Vec<ConflictKey> {
    struct OracleUsage {
        data: String,
        purpose: String,
        consumer: PartyRef,
        port: String,
        downstream_index: Option<u32>,
    }

    let mut usages = Vec::new();
    for spec in &policy.input_specs {
        let fp_purposes: Vec<String> = if spec.purposes.is_empty() {
            vec!["unspecified".into()]
        } else {
            spec.purposes.iter().map(|c| c.as_str().to_string()).collect()
        };
        for data in &spec.data {
            for purpose in &fp_purposes {
                usages.push(OracleUsage {
                    data: data.as_str().to_string(),
                    purpose: purpose.clone(),
                    consumer: PartyRef::FirstParty,
                    port: spec.port.clone(),
                    downstream_index: None,
                });
            }
            for (i, d) in spec.downstreams.iter().enumerate() {
                let ds_purposes: Vec<String> = if d.purposes.is_empty() {
                    vec!["unspecified".into()]
                } else {
                    d.purposes.iter().map(|c| c.as_str().to_string()).collect()
                };
                for purpose in &ds_purposes {
                    usages.push(OracleUsage {
                        data: data.as_str().to_string(),
                        purpose: purpose.clone(),
                        consumer: d.recipient.clone(),
                        port: spec.port.clone(),
                        downstream_index: Some(i as u32),
                    });
                }
            }
        }
    }

    let is_root = |c: &str| parents.get(c).map(|ps| ps.is_empty()).unwrap_or(false);
    let matches_scope = |candidate: &str, scope: &ConceptScope| match scope.mode {
        MatchMode::Exact => candidate == scope.concept.as_str(),
        MatchMode::Subtree => oracle_is_sub(parents, candidate, scope.concept.as_str()),
    };

    let mut keys = Vec::new();
    for dp in &profile.policies {
        for usage in &usages {
            let in_scope = if usage.data == "unspecified" {
                dp.data_scope.mode == MatchMode::Subtree && is_root(dp.data_scope.concept.as_str())
            } else {
                matches_scope(&usage.data, &dp.data_scope)
            };
            if !in_scope {
                continue;
            }
            let mut verdict: Option<(Option<u32>, ConflictReason)> = None;
            let mut permitted = false;
            for (i, rule) in dp.rules.iter().enumerate() {
                let purpose_ok = match &rule.purpose_scope {
                    PurposeScope::Any => true,
                    PurposeScope::Scoped(scope) => {
                        usage.purpose != "unspecified" && matches_scope(&usage.purpose, scope)
                    }
                };
                let consumer_ok = match rule.consumer_scope {
                    ConsumerScope::FirstPartyOnly => usage.consumer == PartyRef::FirstParty,
                    ConsumerScope::ThirdPartyOnly => usage.consumer.is_third_party(),
                    ConsumerScope::AnyParty => true,
                };
                let pattern_ok = match &rule.recipient_name_pattern {
                    None => true,
                    Some(p) => match &usage.consumer {
                        PartyRef::ThirdParty { name: Some(n) } => n.contains(p.as_str()),
                        _ => false,
                    },
                };
                if !(purpose_ok && consumer_ok && pattern_ok) {
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
                        verdict = Some((Some(i as u32), reason));
                        break;
                    }
                    Effect::Permit => permitted = true,
                }
            }
            if verdict.is_none() && !permitted && dp.default_stance == DefaultStance::ProhibitByDefault
            {
                verdict = Some((None, ConflictReason::NotInPermittedSet));
            }
            if let Some((rule_index, reason)) = verdict {
                keys.push((
                    dp.policy_id.clone(),
                    rule_index,
                    usage.port.clone(),
                    usage.downstream_index,
                    usage.data.clone(),
                    usage.purpose.clone(),
                    party_key(&usage.consumer),
                    reason_key(reason),
                ));
            }
        }
    }
    keys.sort();
    keys
}

/// Full-table dynamic-programming longest-common-substring oracle (chars).
pub fn lcs_len_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    let mut best = 0;
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            if a[i - 1] == b[j - 1] {
                table[i][j] = table[i - 1][j - 1] + 1;
                if table[i][j] > best {
                    best = table[i][j];
                }
            }
        }
    }
    best
}

pub fn lcs_ratio_oracle(a: &str, b: &str) -> f64 {
    let alen = a.chars().count();
    let blen = b.chars().count();
    if alen == 0 && blen == 0 {
        return 1.0;
    }
    lcs_len_oracle(a, b) as f64 / alen.max(blen) as f64
}

pub fn random_string(rng: &mut ChaCha8Rng, max_len: usize, alphabet: &[char]) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

/// Repo-root path helper for data files and fixtures.
pub fn workspace_path(relative: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(relative)
}

/// Exact-match F1 oracle over sets, for checking the relaxed metric's
/// threshold-1.0 degeneration.
pub fn exact_f1_oracle(gold: &BTreeSet<String>, pred: &BTreeSet<String>) -> f64 {
    if gold.is_empty() && pred.is_empty() {
        return 1.0;
    }
    let tp = gold.intersection(pred).count() as f64;
    let p = if pred.is_empty() { 0.0 } else { tp / pred.len() as f64 };
    let r = if gold.is_empty() { 0.0 } else { tp / gold.len() as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}
