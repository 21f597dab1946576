//! Regenerates the mock-backend fixture corpus under `fixtures/mock/`.
//!
//! Each segment's scripted model responses are declared here; the canonical
//! request payloads are built with the same code the pipeline uses, so the
//! fixtures always key correctly. Run from the workspace root:
//!
//! ```text
//! cargo run -p privacheck-core --example gen_fixtures
//! ```

use privacheck_core::extraction::tasks::{task_input, PracticeStub, TaskContext, TaskName};
use privacheck_core::extraction::{segment_document, EntityKind, EntitySpan, PracticeKind};
use serde_json::json;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Copy)]
enum EntityRef {
    Data(usize),
    Purpose(usize),
    Party(usize),
}

struct SegScript {
    /// (surface, concept) pairs returned by DR then classified by DC.
    data: Vec<(&'static str, &'static str)>,
    /// (surface, concept) pairs returned by PR then classified by PC.
    purposes: Vec<(&'static str, &'static str)>,
    /// (surface, kind, choice) entries returned by the action task.
    actions: Vec<(&'static str, PracticeKind, Option<&'static str>)>,
    /// (surface, kind) entries returned by the party task.
    parties: Vec<(&'static str, &'static str)>,
    /// (practice ordinal, role, entity) links returned by the relation task.
    links: Vec<(usize, &'static str, EntityRef)>,
    /// Wrap this segment's action response in a code fence (repair path).
    fence_action: bool,
}

impl SegScript {
    fn quiet() -> Self {
        SegScript {
            data: vec![],
            purposes: vec![],
            actions: vec![],
            parties: vec![],
            links: vec![],
            fence_action: false,
        }
    }
}

fn kind_str(kind: PracticeKind) -> &'static str {
    match kind {
        PracticeKind::CollectionUse => "collection-use",
        PracticeKind::ThirdPartySharingDisclosure => "third-party-sharing-disclosure",
    }
}

fn entity_id(script: &SegScript, entity: EntityRef) -> String {
    let index = match entity {
        EntityRef::Data(i) => i,
        EntityRef::Purpose(i) => script.data.len() + i,
        EntityRef::Party(i) => script.data.len() + script.purposes.len() + i,
    };
    format!("e{index}")
}

fn acme_script() -> Vec<SegScript> {
    vec![
        // s0: Welcome to Acme and thank you for trusting us.
        SegScript { parties: vec![("Acme", "first-party")], ..SegScript::quiet() },
        // s1: We collect your email address to create your account.
        SegScript {
            data: vec![("email address", "dpv:Contact")],
            purposes: vec![("create your account", "dpv:Internal")],
            actions: vec![("collect", PracticeKind::CollectionUse, None)],
            parties: vec![("We", "first-party")],
            links: vec![
                (0, "actor", EntityRef::Party(0)),
                (0, "data-object", EntityRef::Data(0)),
                (0, "purpose", EntityRef::Purpose(0)),
            ],
            fence_action: false,
        },
        // s2: We share your location with advertising partners.
        SegScript {
            data: vec![("location", "dpv:Location")],
            purposes: vec![],
            actions: vec![("share", PracticeKind::ThirdPartySharingDisclosure, None)],
            parties: vec![("We", "first-party"), ("advertising partners", "third-party")],
            links: vec![
                (0, "actor", EntityRef::Party(0)),
                (0, "data-object", EntityRef::Data(0)),
                (0, "recipient", EntityRef::Party(1)),
            ],
            fence_action: false,
        },
        // s3: We use cookies for analytics and advertising.
        SegScript {
            data: vec![("cookies", "dpv:Identifying")],
            purposes: vec![("analytics", "dpv:Analytics"), ("advertising", "dpv:Advertisement")],
            actions: vec![("use", PracticeKind::CollectionUse, None)],
            parties: vec![("We", "first-party")],
            links: vec![
                (0, "actor", EntityRef::Party(0)),
                (0, "data-object", EntityRef::Data(0)),
                (0, "purpose", EntityRef::Purpose(0)),
                (0, "purpose", EntityRef::Purpose(1)),
            ],
            fence_action: true,
        },
        // s4: You can opt out of sharing your contact details with our research partners.
        SegScript {
            data: vec![("contact details", "dpv:Contact")],
            purposes: vec![],
            actions: vec![("sharing", PracticeKind::ThirdPartySharingDisclosure, Some("opt-out"))],
            parties: vec![("our research partners", "third-party")],
            links: vec![
                (0, "data-object", EntityRef::Data(0)),
                (0, "recipient", EntityRef::Party(0)),
            ],
            fence_action: false,
        },
        // s5: We may disclose usage data to third parties for advertising purposes.
        SegScript {
            data: vec![("usage data", "x:UsageTelemetry")],
            purposes: vec![("advertising purposes", "dpv:Advertisement")],
            actions: vec![("disclose", PracticeKind::ThirdPartySharingDisclosure, None)],
            parties: vec![("We", "first-party"), ("third parties", "third-party")],
            links: vec![
                (0, "actor", EntityRef::Party(0)),
                (0, "data-object", EntityRef::Data(0)),
                (0, "purpose", EntityRef::Purpose(0)),
                (0, "recipient", EntityRef::Party(1)),
            ],
            fence_action: false,
        },
    ]
}

fn globex_script() -> Vec<SegScript> {
    vec![
        // s0: Globex builds tools for a connected world.
        SegScript::quiet(),
        // s1: We use your location to provide analytics services.
        SegScript {
            data: vec![("location", "dpv:Location")],
            purposes: vec![("analytics services", "dpv:Analytics")],
            actions: vec![("use", PracticeKind::CollectionUse, None)],
            parties: vec![("We", "first-party")],
            links: vec![
                (0, "actor", EntityRef::Party(0)),
                (0, "data-object", EntityRef::Data(0)),
                (0, "purpose", EntityRef::Purpose(0)),
            ],
            fence_action: false,
        },
        // s2: We share your location with our partners for advertising.
        SegScript {
            data: vec![("location", "dpv:Location")],
            purposes: vec![("advertising", "dpv:Advertisement")],
            actions: vec![("share", PracticeKind::ThirdPartySharingDisclosure, None)],
            parties: vec![("We", "first-party"), ("our partners", "third-party")],
            links: vec![
                (0, "actor", EntityRef::Party(0)),
                (0, "data-object", EntityRef::Data(0)),
                (0, "purpose", EntityRef::Purpose(0)),
                (0, "recipient", EntityRef::Party(1)),
            ],
            fence_action: false,
        },
        // s3: Your photos are stored to back up your device.
        SegScript {
            data: vec![("photos", "dpv:Picture")],
            purposes: vec![("back up your device", "dpv:Internal")],
            actions: vec![("stored", PracticeKind::CollectionUse, None)],
            parties: vec![],
            links: vec![
                (0, "data-object", EntityRef::Data(0)),
                (0, "purpose", EntityRef::Purpose(0)),
            ],
            fence_action: false,
        },
        // s4: We do not sell your personal information.
        SegScript { parties: vec![("We", "first-party")], ..SegScript::quiet() },
    ]
}

fn records_for(doc_id: &str, text: &str, scripts: &[SegScript]) -> Vec<serde_json::Value> {
    let segments = segment_document(doc_id, text);
    assert_eq!(segments.len(), scripts.len(), "{doc_id}: script/segment count mismatch");
    let mut records = Vec::new();
    let mut push = |task: TaskName, input: String, output: String| {
        records.push(json!({"task": task, "input": input, "output": output}));
    };

    for (segment, script) in segments.iter().zip(scripts) {
        for (surface, _) in script.data.iter().chain(&script.purposes) {
            assert!(segment.text.contains(surface), "{doc_id}#s{}: {surface:?}", segment.index);
        }

        let dr = json!({"spans": script.data.iter().map(|(s, _)| s).collect::<Vec<_>>()});
        push(
            TaskName::DataRecognition,
            task_input(TaskName::DataRecognition, segment, &TaskContext::None),
            dr.to_string(),
        );
        let pr = json!({"spans": script.purposes.iter().map(|(s, _)| s).collect::<Vec<_>>()});
        push(
            TaskName::PurposeRecognition,
            task_input(TaskName::PurposeRecognition, segment, &TaskContext::None),
            pr.to_string(),
        );
        for (surface, concept) in &script.data {
            push(
                TaskName::DataClassification,
                task_input(TaskName::DataClassification, segment, &TaskContext::Span(surface)),
                json!({"concept": concept}).to_string(),
            );
        }
        for (surface, concept) in &script.purposes {
            push(
                TaskName::PurposeClassification,
                task_input(TaskName::PurposeClassification, segment, &TaskContext::Span(surface)),
                json!({"concept": concept}).to_string(),
            );
        }

        let actions: Vec<serde_json::Value> = script
            .actions
            .iter()
            .map(|(surface, kind, choice)| match choice {
                Some(c) => json!({"surface": surface, "kind": kind_str(*kind), "choice": c}),
                None => json!({"surface": surface, "kind": kind_str(*kind)}),
            })
            .collect();
        let mut action_output = json!({ "actions": actions }).to_string();
        if script.fence_action {
            action_output = format!("```json\n{action_output}\n```");
        }
        push(
            TaskName::Action,
            task_input(TaskName::Action, segment, &TaskContext::None),
            action_output,
        );

        let parties: Vec<serde_json::Value> = script
            .parties
            .iter()
            .map(|(surface, kind)| json!({"surface": surface, "kind": kind}))
            .collect();
        push(
            TaskName::Party,
            task_input(TaskName::Party, segment, &TaskContext::None),
            json!({ "parties": parties }).to_string(),
        );

        if !script.actions.is_empty() {
            let stubs: Vec<PracticeStub> = script
                .actions
                .iter()
                .enumerate()
                .map(|(i, (surface, kind, _))| PracticeStub {
                    id: format!("p{i}"),
                    kind: *kind,
                    action: (*surface).to_string(),
                })
                .collect();
            let mut entities: Vec<EntitySpan> = Vec::new();
            for (surface, _) in &script.data {
                entities.push(EntitySpan {
                    id: format!("e{}", entities.len()),
                    kind: EntityKind::Data,
                    surface: (*surface).to_string(),
                    concept: None,
                });
            }
            for (surface, _) in &script.purposes {
                entities.push(EntitySpan {
                    id: format!("e{}", entities.len()),
                    kind: EntityKind::Purpose,
                    surface: (*surface).to_string(),
                    concept: None,
                });
            }
            for (surface, _) in &script.parties {
                entities.push(EntitySpan {
                    id: format!("e{}", entities.len()),
                    kind: EntityKind::Party,
                    surface: (*surface).to_string(),
                    concept: None,
                });
            }
            let links: Vec<serde_json::Value> = script
                .links
                .iter()
                .map(|(practice, role, entity)| {
                    json!({
                        "practice": format!("p{practice}"),
                        "entity": entity_id(script, *entity),
                        "role": role,
                    })
                })
                .collect();
            push(
                TaskName::Relation,
                task_input(
                    TaskName::Relation,
                    segment,
                    &TaskContext::Relation { practices: &stubs, entities: &entities },
                ),
                json!({ "links": links }).to_string(),
            );
        }
    }
    records
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let corpus = root.join("fixtures/corpus");
    let mock = root.join("fixtures/mock");
    std::fs::create_dir_all(&mock).expect("mock dir");

    for (doc_id, script) in [("acme.example", acme_script()), ("globex.example", globex_script())]
    {
        let text = std::fs::read_to_string(corpus.join(format!("{doc_id}.txt")))
            .unwrap_or_else(|e| panic!("read corpus {doc_id}: {e}"));
        let records = records_for(doc_id, &text, &script);
        let mut out = String::from("[\n");
        for (i, record) in records.iter().enumerate() {
            let pretty = serde_json::to_string_pretty(record).expect("record serializes");
            for line in pretty.lines() {
                writeln!(out, "  {line}").unwrap();
            }
            if i + 1 < records.len() {
                // keep one record per pretty block, comma-separated
                let len = out.trim_end().len();
                out.truncate(len);
                out.push_str(",\n");
            }
        }
        out.push_str("]\n");
        let path = mock.join(format!("{doc_id}.json"));
        std::fs::write(&path, &out).expect("write fixture file");
        println!("wrote {} ({} records)", path.display(), records.len());
    }
}
