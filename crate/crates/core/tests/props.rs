//! Property tests: canonical-serialization invariants, metric invariants,
//! reasoner monotonicity and profile independence, audit additivity.

mod support;

use privacheck_core::audit::audit;
use privacheck_core::metrics::{exact_f1, lcs_ratio, relaxed_f1};
use privacheck_core::policy::{
    parse_app_policy, serialize_app_policy, ConsumerScope, Effect, PurposeScope, Rule,
};
use privacheck_core::reason::check_compliance;
use proptest::prelude::*;
use rand::seq::SliceRandom as _;
use rand::Rng as _;
use support::*;

proptest! {
    #[test]
    fn lcs_ratio_is_symmetric_and_bounded(a in ".{0,32}", b in ".{0,32}") {
        let r1 = lcs_ratio(&a, &b);
        let r2 = lcs_ratio(&b, &a);
        prop_assert_eq!(r1, r2);
        prop_assert!((0.0..=1.0).contains(&r1));
    }

    #[test]
    fn lcs_ratio_is_one_iff_equal(a in "[ab]{1,16}", b in "[ab]{1,16}") {
        let r = lcs_ratio(&a, &b);
        if a == b {
            prop_assert_eq!(r, 1.0);
        } else {
            prop_assert!(r < 1.0, "{} vs {} gave {}", a, b, r);
        }
    }

    #[test]
    fn relaxed_f1_never_exceeds_one(
        gold in prop::collection::btree_set("[a-d]{1,8}", 0..5),
        pred in prop::collection::btree_set("[a-d]{1,8}", 0..5),
        threshold in 0.1f64..=1.0,
    ) {
        let stats = relaxed_f1(&gold, &pred, threshold);
        prop_assert!(stats.f1 <= 1.0 + 1e-12);
        prop_assert!(stats.precision <= 1.0 + 1e-12);
        prop_assert!(stats.recall <= 1.0 + 1e-12);
        prop_assert!(stats.tp <= gold.len().min(pred.len()) as f64 + 1e-12);
    }

    #[test]
    fn relaxed_threshold_one_is_exact_match(
        gold in prop::collection::btree_set("[a-c]{1,6}", 0..5),
        pred in prop::collection::btree_set("[a-c]{1,6}", 0..5),
    ) {
        let relaxed = relaxed_f1(&gold, &pred, 1.0);
        let exact = exact_f1(&gold, &pred);
        prop_assert_eq!(relaxed.f1, exact.f1);
        prop_assert_eq!(relaxed.tp, exact.tp);
    }
}

#[test]
fn parse_serialize_identity_on_random_policies() {
    let mut rng = rng(0x5eed_1001);
    for case in 0..100 {
        let dag = random_dag(&mut rng, 12);
        let policy = random_app_policy(&mut rng, &dag.names);
        let text = serialize_app_policy(&policy);
        let parsed = parse_app_policy(&text, None)
            .unwrap_or_else(|e| panic!("case {case}: round-trip parse failed: {e}"));
        assert_eq!(text, serialize_app_policy(&parsed), "case {case}: not a fixpoint");
    }
}

#[test]
fn serialization_is_permutation_invariant() {
    let mut rng = rng(0x5eed_1002);
    for case in 0..100 {
        let dag = random_dag(&mut rng, 12);
        let policy = random_app_policy(&mut rng, &dag.names);
        let canonical = serialize_app_policy(&policy);
        let mut shuffled = policy.clone();
        shuffled.input_specs.shuffle(&mut rng);
        for spec in &mut shuffled.input_specs {
            spec.data.shuffle(&mut rng);
            spec.purposes.shuffle(&mut rng);
            spec.downstreams.shuffle(&mut rng);
        }
        assert_eq!(
            canonical,
            serialize_app_policy(&shuffled),
            "case {case}: canonical form depends on input order"
        );
    }
}

// Independent canonicalizer: sorts in the struct domain with explicitly
// written keys matching the documented order, then serializes mechanically.
#[test]
fn canonical_order_matches_documented_keys() {
    let mut rng = rng(0x5eed_1003);
    for case in 0..100 {
        let dag = random_dag(&mut rng, 12);
        let policy = random_app_policy(&mut rng, &dag.names);
        let text = serialize_app_policy(&policy);
        let parsed = parse_app_policy(&text, None).unwrap();

        let mut oracle = policy.clone();
        for spec in &mut oracle.input_specs {
            spec.data.sort_by(|a, b| a.as_str().cmp(b.as_str()));
            spec.data.dedup();
            spec.purposes.sort_by(|a, b| a.as_str().cmp(b.as_str()));
            spec.purposes.dedup();
            for d in &mut spec.downstreams {
                d.purposes.sort_by(|a, b| a.as_str().cmp(b.as_str()));
                d.purposes.dedup();
            }
            spec.downstreams.sort_by_key(|d| {
                let party = match &d.recipient {
                    privacheck_core::policy::PartyRef::FirstParty => (0u8, String::new(), false),
                    privacheck_core::policy::PartyRef::ThirdParty { name } => {
                        (1, name.clone().unwrap_or_default(), name.is_some())
                    }
                };
                let purposes: Vec<String> =
                    d.purposes.iter().map(|c| c.as_str().to_string()).collect();
                let choice = match d.choice {
                    privacheck_core::policy::Choice::OptIn => 0u8,
                    privacheck_core::policy::Choice::OptOut => 1,
                    privacheck_core::policy::Choice::Unconditional => 2,
                };
                (
                    party.0,
                    party.2, // None sorts before Some
                    party.1,
                    purposes,
                    choice,
                    d.provenance.doc_id.clone(),
                    d.provenance.segment_index,
                    d.provenance.text.clone(),
                )
            });
        }
        oracle.input_specs.sort_by(|a, b| a.port.cmp(&b.port));

        assert_eq!(
            parsed.input_specs, oracle.input_specs,
            "case {case}: canonical order disagrees with the documented keys"
        );
    }
}

#[test]
fn adding_a_prohibit_rule_never_reduces_conflicts() {
    let mut rng = rng(0x5eed_1004);
    for _ in 0..200 {
        let dag = random_dag(&mut rng, 12);
        let policy = random_app_policy(&mut rng, &dag.names);
        let mut profile = random_profile(&mut rng, &dag.names);
        let before = check_compliance(&policy, &profile, &dag.hierarchy)
            .counts
            .conflicts_total;
        let target = profile.policies.choose_mut(&mut rng).unwrap();
        target.rules.push(Rule {
            effect: Effect::Prohibit,
            purpose_scope: PurposeScope::Any,
            consumer_scope: ConsumerScope::AnyParty,
            recipient_name_pattern: None,
        });
        let after = check_compliance(&policy, &profile, &dag.hierarchy)
            .counts
            .conflicts_total;
        assert!(
            after >= before,
            "prohibit rule lowered conflicts: {before} -> {after}"
        );
    }
}

#[test]
fn profiles_do_not_interact() {
    let mut rng = rng(0x5eed_1005);
    for _ in 0..200 {
        let dag = random_dag(&mut rng, 12);
        let policy = random_app_policy(&mut rng, &dag.names);
        let mut prof1 = random_profile(&mut rng, &dag.names);
        let mut prof2 = random_profile(&mut rng, &dag.names);
        for (i, dp) in prof1.policies.iter_mut().enumerate() {
            dp.policy_id = format!("a{i}");
        }
        for (i, dp) in prof2.policies.iter_mut().enumerate() {
            dp.policy_id = format!("b{i}");
        }
        let mut merged = prof1.clone();
        merged.policies.extend(prof2.policies.clone());

        let separate: Vec<ConflictKey> = {
            let mut keys = conflict_keys(&check_compliance(&policy, &prof1, &dag.hierarchy).conflicts);
            keys.extend(conflict_keys(
                &check_compliance(&policy, &prof2, &dag.hierarchy).conflicts,
            ));
            keys.sort();
            keys
        };
        let together = conflict_keys(&check_compliance(&policy, &merged, &dag.hierarchy).conflicts);
        assert_eq!(separate, together);
    }
}

#[test]
fn conflict_scope_is_recheckable_post_hoc() {
    // every reported conflict's usage satisfies its policy's data scope
    let mut rng = rng(0x5eed_1006);
    for _ in 0..200 {
        let dag = random_dag(&mut rng, 12);
        let policy = random_app_policy(&mut rng, &dag.names);
        let profile = random_profile(&mut rng, &dag.names);
        let report = check_compliance(&policy, &profile, &dag.hierarchy);
        for conflict in &report.conflicts {
            let dp = profile
                .policies
                .iter()
                .find(|p| p.policy_id == conflict.policy_id)
                .expect("conflict names a known policy");
            let ok = if conflict.usage.data.is_unspecified() {
                dp.data_scope.mode == privacheck_core::vocab::MatchMode::Subtree
                    && dag.hierarchy.is_root(&dp.data_scope.concept)
            } else {
                dag.hierarchy
                    .match_concept(&conflict.usage.data, &dp.data_scope.concept, dp.data_scope.mode)
                    .unwrap()
            };
            assert!(ok, "conflict escaped its data scope: {conflict:?}");
            assert_eq!(conflict.original_text, conflict.usage.provenance.text);
        }
    }
}

#[test]
fn converter_attachment_matches_bruteforce_matcher_oracle() {
    use privacheck_core::convert::convert;
    use privacheck_core::extraction::{EntityKind, EntitySpan, ExtractedPractice, PracticeKind};
    use privacheck_core::policy::{Choice, SegmentRef};
    use privacheck_core::vocab::ConceptId;

    let mut rng = rng(0x5eed_1008);
    for case in 0..200 {
        let dag = random_dag(&mut rng, 10);
        let names = &dag.names;
        let segments_total = 8u32;
        let mut practices: Vec<ExtractedPractice> = Vec::new();
        let mut per_segment_counter = vec![0usize; segments_total as usize];
        let concepts = |rng: &mut rand_chacha::ChaCha8Rng, max: usize| -> Vec<(String, String)> {
            (0..rng.gen_range(0..=max))
                .map(|i| {
                    let concept = if rng.gen_bool(0.15) {
                        "unspecified".to_string()
                    } else {
                        names[rng.gen_range(0..names.len())].clone()
                    };
                    (format!("span {i}"), concept)
                })
                .collect()
        };
        let practice_count = rng.gen_range(0..=8);
        for _ in 0..practice_count {
            let segment_index = rng.gen_range(0..segments_total);
            let ordinal = per_segment_counter[segment_index as usize];
            per_segment_counter[segment_index as usize] += 1;
            let sharing = rng.gen_bool(0.5);
            let data = concepts(&mut rng, 3);
            let recipient_tag = format!("recipient-{case}-{segment_index}-{ordinal}");
            practices.push(ExtractedPractice {
                id: format!("p{ordinal}"),
                kind: if sharing {
                    PracticeKind::ThirdPartySharingDisclosure
                } else {
                    PracticeKind::CollectionUse
                },
                segment: SegmentRef {
                    doc_id: "rand".into(),
                    segment_index,
                    text: format!("segment {segment_index}"),
                },
                action_surface: "does".into(),
                party: privacheck_core::policy::PartyRef::FirstParty,
                data: data
                    .iter()
                    .enumerate()
                    .map(|(i, (s, c))| EntitySpan {
                        id: format!("e{i}"),
                        kind: EntityKind::Data,
                        surface: s.clone(),
                        concept: Some(ConceptId::new(c.clone()).unwrap()),
                    })
                    .collect(),
                purposes: vec![],
                recipients: if sharing {
                    vec![privacheck_core::policy::PartyRef::third_party(recipient_tag)]
                } else {
                    vec![]
                },
                choice: Choice::Unconditional,
            });
        }

        let out = convert(&practices, "rand.example", segments_total, &dag.hierarchy);
        let policy = &out.policy;

        // oracle: a concept pair intersects iff either direction is
        // reachable over the adjacency map; the sentinel only matches itself
        let intersects = |shared: &[String], spec: &[String]| -> bool {
            shared.iter().any(|a| {
                spec.iter().any(|b| {
                    if a == "unspecified" || b == "unspecified" {
                        a == b
                    } else {
                        oracle_is_sub(&dag.parents, a, b) || oracle_is_sub(&dag.parents, b, a)
                    }
                })
            })
        };
        let concept_list = |p: &ExtractedPractice| -> Vec<String> {
            let mut v: Vec<String> =
                p.data.iter().map(|e| e.concept.clone().unwrap().as_str().to_string()).collect();
            if v.is_empty() {
                v.push("unspecified".into());
            }
            v.sort();
            v.dedup();
            v
        };

        let collection_specs: Vec<(&ExtractedPractice, Vec<String>)> = practices
            .iter()
            .filter(|p| p.kind == PracticeKind::CollectionUse)
            .map(|p| (p, concept_list(p)))
            .collect();
        for sharing in
            practices.iter().filter(|p| p.kind == PracticeKind::ThirdPartySharingDisclosure)
        {
            let shared = concept_list(sharing);
            let tag = sharing.recipients[0].name().unwrap().to_string();
            let expected_hosts: Vec<String> = collection_specs
                .iter()
                .filter(|(_, spec_data)| intersects(&shared, spec_data))
                .map(|(p, _)| format!("rand#s{}#{}", p.segment.segment_index, &p.id[1..]))
                .collect();
            let actual_hosts: Vec<String> = policy
                .input_specs
                .iter()
                .filter(|s| s.downstreams.iter().any(|d| d.recipient.name() == Some(tag.as_str())))
                .map(|s| s.port.clone())
                .collect();
            let own_port =
                format!("rand#s{}#{}", sharing.segment.segment_index, &sharing.id[1..]);
            if expected_hosts.is_empty() {
                assert_eq!(
                    actual_hosts,
                    vec![own_port.clone()],
                    "case {case}: orphan sharing practice must synthesize its own spec"
                );
                let synth = policy.input_specs.iter().find(|s| s.port == own_port).unwrap();
                assert_eq!(
                    synth.data.iter().map(|c| c.as_str().to_string()).collect::<Vec<_>>(),
                    shared
                );
                assert!(synth.purposes.is_empty());
            } else {
                let mut expected_sorted = expected_hosts.clone();
                expected_sorted.sort();
                let mut actual_sorted = actual_hosts.clone();
                actual_sorted.sort();
                assert_eq!(
                    actual_sorted, expected_sorted,
                    "case {case}: downstream attachment set disagrees with the matcher oracle"
                );
                assert!(!policy.input_specs.iter().any(|s| s.port == own_port));
            }
        }
        // port uniqueness
        let mut ports: Vec<&str> = policy.input_specs.iter().map(|s| s.port.as_str()).collect();
        let total = ports.len();
        ports.sort();
        ports.dedup();
        assert_eq!(ports.len(), total, "case {case}: ports must be unique");
    }
}

#[test]
fn audit_totals_are_additive_under_split() {
    let mut rng = rng(0x5eed_1007);
    for _ in 0..50 {
        let dag = random_dag(&mut rng, 12);
        let profile = random_profile(&mut rng, &dag.names);
        let mut reports = Vec::new();
        let app_count = rng.gen_range(2..=6);
        for i in 0..app_count {
            let mut policy = random_app_policy(&mut rng, &dag.names);
            policy.app_id = format!("site-{i}.example");
            reports.push(check_compliance(&policy, &profile, &dag.hierarchy));
        }
        let full = audit(&reports).unwrap();
        let split = rng.gen_range(1..app_count) as usize;
        let (left, right): (Vec<_>, Vec<_>) = reports
            .into_iter()
            .partition(|r| r.app_id < format!("site-{split}.example"));
        let merged = audit(&left).unwrap().merge(&audit(&right).unwrap()).unwrap();
        assert_eq!(full, merged);
        assert_eq!(full.totals.segments_total, merged.totals.segments_total);
    }
}
