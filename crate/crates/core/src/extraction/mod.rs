//! Extraction pipeline: segments a policy document, fans the seven tasks out
//! over a pluggable model backend, repairs malformed output, and assembles
//! per-segment practice records.
//!
//! Everything the model asserts is checked on the way in: spans must occur
//! verbatim in their segment, relation links must reference assigned ids,
//! and classification output must resolve in the hierarchy or it becomes
//! `unspecified`. Violations are dropped with a diagnostic rather than
//! propagated.

pub mod backend;
pub mod prompts;
pub mod repair;
pub mod tasks;

pub use tasks::TaskName;

use crate::diag::Diagnostic;
use crate::policy::{Choice, PartyRef, SchemaVersion, SegmentRef};
use crate::vocab::{ConceptHierarchy, ConceptId};
use backend::{ModelBackend, RetryPolicy};
use prompts::PromptSet;
use serde::{Deserialize, Serialize};
use tasks::{
    run_task, ActionItem, PartyItem, PartyKind, PracticeStub, TaskContext, TaskError, TaskOutput,
};

/// One line of the source policy, after blank-line dropping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub doc_id: String,
    pub index: u32,
    pub text: String,
}

impl Segment {
    pub fn to_ref(&self) -> SegmentRef {
        SegmentRef {
            doc_id: self.doc_id.clone(),
            segment_index: self.index,
            text: self.text.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityKind {
    Data,
    Purpose,
    Action,
    Party,
}

/// A recognized span. `concept` is set by classification for Data/Purpose
/// spans (possibly `unspecified`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntitySpan {
    pub id: String,
    pub kind: EntityKind,
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<ConceptId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PracticeKind {
    CollectionUse,
    ThirdPartySharingDisclosure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationRole {
    Actor,
    DataObject,
    Purpose,
    Recipient,
}

/// One validated relation between a practice and an entity of the same
/// segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationLink {
    pub practice_id: String,
    pub entity_id: String,
    pub role: RelationRole,
}

/// One assembled data practice from one segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractedPractice {
    pub id: String,
    pub kind: PracticeKind,
    pub segment: SegmentRef,
    pub action_surface: String,
    pub party: PartyRef,
    pub data: Vec<EntitySpan>,
    pub purposes: Vec<EntitySpan>,
    pub recipients: Vec<PartyRef>,
    pub choice: Choice,
}

/// Everything extracted from one segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentExtraction {
    pub index: u32,
    pub text: String,
    pub entities: Vec<EntitySpan>,
    pub links: Vec<RelationLink>,
    pub practices: Vec<ExtractedPractice>,
}

/// The practice dump for one document; the converter's input contract and
/// the unit gold/prediction files are keyed on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentExtraction {
    pub schema_version: SchemaVersion,
    pub doc_id: String,
    pub segments: Vec<SegmentExtraction>,
}

impl DocumentExtraction {
    pub fn segments_total(&self) -> u32 {
        self.segments.len() as u32
    }

    pub fn practices(&self) -> impl Iterator<Item = &ExtractedPractice> {
        self.segments.iter().flat_map(|s| s.practices.iter())
    }

    pub fn parse(document: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(document)
    }

    pub fn serialize(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("dump serializes");
        out.push('\n');
        out
    }
}

/// Split a policy document into per-line segments. Blank (whitespace-only)
/// lines are dropped; indices are contiguous over the survivors. Line text
/// is kept verbatim apart from the terminator.
pub fn segment_document(doc_id: &str, text: &str) -> Vec<Segment> {
    text.lines()
        .filter(|line| !line.trim().is_empty())
        .enumerate()
        .map(|(index, line)| Segment {
            doc_id: doc_id.to_string(),
            index: index as u32,
            text: line.to_string(),
        })
        .collect()
}

/// Extraction driver configuration; `workers` caps segment-level fan-out.
pub struct Extractor<'a> {
    pub backend: &'a dyn ModelBackend,
    pub prompts: PromptSet,
    pub retry: RetryPolicy,
    pub workers: usize,
}

impl<'a> Extractor<'a> {
    pub fn new(backend: &'a dyn ModelBackend) -> Self {
        Extractor {
            backend,
            prompts: PromptSet::default(),
            retry: RetryPolicy::default(),
            workers: 4,
        }
    }

    /// Run the full per-segment task graph over a document. Results are
    /// ordered by segment index regardless of completion order; failures are
    /// collected as diagnostics alongside the (possibly partial) results.
    pub fn extract_document(
        &self,
        hierarchy: &ConceptHierarchy,
        doc_id: &str,
        text: &str,
    ) -> (DocumentExtraction, Vec<Diagnostic>) {
        let segments = segment_document(doc_id, text);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .expect("thread pool builds");
        let results: Vec<(SegmentExtraction, Vec<Diagnostic>)> = pool.install(|| {
            use rayon::prelude::*;
            segments
                .par_iter()
                .map(|segment| self.extract_segment(hierarchy, segment))
                .collect()
        });
        let mut all_diags = Vec::new();
        let mut extracted = Vec::with_capacity(results.len());
        for (seg, diags) in results {
            all_diags.extend(diags);
            extracted.push(seg);
        }
        (
            DocumentExtraction {
                schema_version: SchemaVersion,
                doc_id: doc_id.to_string(),
                segments: extracted,
            },
            all_diags,
        )
    }

    fn extract_segment(
        &self,
        hierarchy: &ConceptHierarchy,
        segment: &Segment,
    ) -> (SegmentExtraction, Vec<Diagnostic>) {
        let mut diags = Vec::new();
        let loc = format!("{}#s{}", segment.doc_id, segment.index);

        let data_spans = self.span_task(TaskName::DataRecognition, segment, &loc, &mut diags);
        let purpose_spans = self.span_task(TaskName::PurposeRecognition, segment, &loc, &mut diags);
        let actions = self.action_task(segment, &loc, &mut diags);
        let parties = self.party_task(segment, &loc, &mut diags);

        // Assign ids: entities e0..eN over (data, purpose, party) in order,
        // practices p0..pM over action items. The relation task links them.
        let mut entities: Vec<EntitySpan> = Vec::new();
        for surface in data_spans {
            let concept =
                self.classify(TaskName::DataClassification, segment, &surface, hierarchy, &loc, &mut diags);
            entities.push(EntitySpan {
                id: format!("e{}", entities.len()),
                kind: EntityKind::Data,
                surface,
                concept: Some(concept),
            });
        }
        for surface in purpose_spans {
            let concept = self.classify(
                TaskName::PurposeClassification,
                segment,
                &surface,
                hierarchy,
                &loc,
                &mut diags,
            );
            entities.push(EntitySpan {
                id: format!("e{}", entities.len()),
                kind: EntityKind::Purpose,
                surface,
                concept: Some(concept),
            });
        }
        let mut party_kinds: Vec<PartyKind> = Vec::new();
        for PartyItem { surface, kind } in parties {
            entities.push(EntitySpan {
                id: format!("e{}", entities.len()),
                kind: EntityKind::Party,
                surface,
                concept: None,
            });
            party_kinds.push(kind);
        }
        // party_kinds is indexed in step with the Party entities' position
        // among entities of kind Party.

        let practice_stubs: Vec<PracticeStub> = actions
            .iter()
            .enumerate()
            .map(|(i, a)| PracticeStub {
                id: format!("p{i}"),
                kind: a.kind,
                action: a.surface.clone(),
            })
            .collect();

        let links = if practice_stubs.is_empty() {
            Vec::new()
        } else {
            self.relation_task(segment, &practice_stubs, &entities, &loc, &mut diags)
        };

        let practices =
            assemble_practices(segment, &actions, &entities, &party_kinds, &links, &loc, &mut diags);

        (
            SegmentExtraction {
                index: segment.index,
                text: segment.text.clone(),
                entities,
                links,
                practices,
            },
            diags,
        )
    }

    fn run(
        &self,
        task: TaskName,
        segment: &Segment,
        context: &TaskContext<'_>,
    ) -> Result<TaskOutput, TaskError> {
        let entities_context = match context {
            TaskContext::Span(s) => (*s).to_string(),
            TaskContext::Relation { practices, entities } => {
                tasks::task_input(task, segment, &TaskContext::Relation { practices, entities })
            }
            TaskContext::None => String::new(),
        };
        let instruction = self.prompts.render(task, &segment.text, &entities_context);
        run_task(self.backend, task, &instruction, segment, context, &self.retry)
    }

    fn span_task(
        &self,
        task: TaskName,
        segment: &Segment,
        loc: &str,
        diags: &mut Vec<Diagnostic>,
    ) -> Vec<String> {
        match self.run(task, segment, &TaskContext::None) {
            Ok(TaskOutput::Spans(out)) => {
                let mut kept = Vec::new();
                for span in out.spans {
                    if segment.text.contains(&span) {
                        kept.push(span);
                    } else {
                        diags.push(Diagnostic::warning(
                            loc.to_string(),
                            format!("{task}: span {span:?} does not occur in segment; dropped"),
                        ));
                    }
                }
                kept
            }
            Ok(_) => unreachable!("span task returns spans"),
            Err(e) => {
                diags.push(Diagnostic::error(loc.to_string(), e.to_string()));
                Vec::new()
            }
        }
    }

    fn classify(
        &self,
        task: TaskName,
        segment: &Segment,
        span: &str,
        hierarchy: &ConceptHierarchy,
        loc: &str,
        diags: &mut Vec<Diagnostic>,
    ) -> ConceptId {
        let raw = match self.run(task, segment, &TaskContext::Span(span)) {
            Ok(TaskOutput::Concept(out)) => out.concept,
            Ok(_) => unreachable!("classification task returns a concept"),
            Err(e) => {
                diags.push(Diagnostic::error(loc.to_string(), e.to_string()));
                None
            }
        };
        match raw {
            Some(name) => match ConceptId::new(name.clone()) {
                Ok(id) if hierarchy.contains(&id) => id,
                _ => {
                    diags.push(Diagnostic::info(
                        loc.to_string(),
                        format!(
                            "{task}: concept {name:?} for span {span:?} is not in the \
                             vocabulary; grounded to `unspecified`"
                        ),
                    ));
                    ConceptId::unspecified()
                }
            },
            None => ConceptId::unspecified(),
        }
    }

    fn action_task(
        &self,
        segment: &Segment,
        loc: &str,
        diags: &mut Vec<Diagnostic>,
    ) -> Vec<ActionItem> {
        match self.run(TaskName::Action, segment, &TaskContext::None) {
            Ok(TaskOutput::Actions(out)) => out
                .actions
                .into_iter()
                .filter(|a| {
                    let ok = segment.text.contains(&a.surface);
                    if !ok {
                        diags.push(Diagnostic::warning(
                            loc.to_string(),
                            format!(
                                "Action: surface {:?} does not occur in segment; dropped",
                                a.surface
                            ),
                        ));
                    }
                    ok
                })
                .collect(),
            Ok(_) => unreachable!("action task returns actions"),
            Err(e) => {
                diags.push(Diagnostic::error(loc.to_string(), e.to_string()));
                Vec::new()
            }
        }
    }

    fn party_task(
        &self,
        segment: &Segment,
        loc: &str,
        diags: &mut Vec<Diagnostic>,
    ) -> Vec<PartyItem> {
        match self.run(TaskName::Party, segment, &TaskContext::None) {
            Ok(TaskOutput::Parties(out)) => out
                .parties
                .into_iter()
                .filter(|p| {
                    let ok = segment.text.contains(&p.surface);
                    if !ok {
                        diags.push(Diagnostic::warning(
                            loc.to_string(),
                            format!(
                                "Party: surface {:?} does not occur in segment; dropped",
                                p.surface
                            ),
                        ));
                    }
                    ok
                })
                .collect(),
            Ok(_) => unreachable!("party task returns parties"),
            Err(e) => {
                diags.push(Diagnostic::error(loc.to_string(), e.to_string()));
                Vec::new()
            }
        }
    }

    fn relation_task(
        &self,
        segment: &Segment,
        practices: &[PracticeStub],
        entities: &[EntitySpan],
        loc: &str,
        diags: &mut Vec<Diagnostic>,
    ) -> Vec<RelationLink> {
        let context = TaskContext::Relation { practices, entities };
        match self.run(TaskName::Relation, segment, &context) {
            Ok(TaskOutput::Links(out)) => {
                let mut kept = Vec::new();
                for link in out.links {
                    let practice_ok = practices.iter().any(|p| p.id == link.practice);
                    let entity_ok = entities.iter().any(|e| e.id == link.entity);
                    if practice_ok && entity_ok {
                        kept.push(RelationLink {
                            practice_id: link.practice,
                            entity_id: link.entity,
                            role: link.role,
                        });
                    } else {
                        diags.push(Diagnostic::warning(
                            loc.to_string(),
                            format!(
                                "Relation: link references unknown id \
                                 ({} -> {}); dropped",
                                link.practice, link.entity
                            ),
                        ));
                    }
                }
                kept
            }
            Ok(_) => unreachable!("relation task returns links"),
            Err(e) => {
                diags.push(Diagnostic::error(loc.to_string(), e.to_string()));
                Vec::new()
            }
        }
    }
}

// Build ExtractedPractice records from validated task outputs. Roles are
// checked against entity kinds; mismatched links are dropped with a
// diagnostic.
fn assemble_practices(
    segment: &Segment,
    actions: &[ActionItem],
    entities: &[EntitySpan],
    party_kinds: &[PartyKind],
    links: &[RelationLink],
    loc: &str,
    diags: &mut Vec<Diagnostic>,
) -> Vec<ExtractedPractice> {
    let entity_by_id = |id: &str| entities.iter().find(|e| e.id == id);
    let party_kind_of = |span: &EntitySpan| -> Option<PartyKind> {
        let position = entities
            .iter()
            .filter(|e| e.kind == EntityKind::Party)
            .position(|e| e.id == span.id)?;
        party_kinds.get(position).copied()
    };
    let party_ref_of = |span: &EntitySpan| -> Option<PartyRef> {
        match party_kind_of(span)? {
            PartyKind::FirstParty => Some(PartyRef::FirstParty),
            PartyKind::ThirdParty => Some(PartyRef::third_party(span.surface.clone())),
        }
    };

    let mut practices = Vec::new();
    for (ordinal, action) in actions.iter().enumerate() {
        let pid = format!("p{ordinal}");
        let mut party = PartyRef::FirstParty;
        let mut data = Vec::new();
        let mut purposes = Vec::new();
        let mut recipients = Vec::new();
        for link in links.iter().filter(|l| l.practice_id == pid) {
            let Some(entity) = entity_by_id(&link.entity_id) else { continue };
            match (link.role, entity.kind) {
                (RelationRole::Actor, EntityKind::Party) => {
                    if let Some(p) = party_ref_of(entity) {
                        party = p;
                    }
                }
                (RelationRole::DataObject, EntityKind::Data) => data.push(entity.clone()),
                (RelationRole::Purpose, EntityKind::Purpose) => purposes.push(entity.clone()),
                (RelationRole::Recipient, EntityKind::Party) => match party_ref_of(entity) {
                    Some(p @ PartyRef::ThirdParty { .. }) => recipients.push(p),
                    _ => diags.push(Diagnostic::warning(
                        loc.to_string(),
                        format!(
                            "Relation: recipient link to first-party span {:?} dropped",
                            entity.surface
                        ),
                    )),
                },
                (role, kind) => diags.push(Diagnostic::warning(
                    loc.to_string(),
                    format!(
                        "Relation: role {role:?} does not fit entity kind {kind:?} \
                         ({pid} -> {}); dropped",
                        entity.id
                    ),
                )),
            }
        }
        match action.kind {
            PracticeKind::CollectionUse => {
                if !recipients.is_empty() {
                    diags.push(Diagnostic::warning(
                        loc.to_string(),
                        format!("collection-use practice {pid} cannot carry recipients; dropped"),
                    ));
                    recipients.clear();
                }
            }
            PracticeKind::ThirdPartySharingDisclosure => {
                if recipients.is_empty() {
                    recipients.push(PartyRef::unnamed_third_party());
                }
            }
        }
        practices.push(ExtractedPractice {
            id: pid,
            kind: action.kind,
            segment: segment.to_ref(),
            action_surface: action.surface.clone(),
            party,
            data,
            purposes,
            recipients,
            choice: action.choice.unwrap_or_default(),
        });
    }
    practices
}
