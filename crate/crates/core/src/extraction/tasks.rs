//! The seven per-segment extraction tasks: payload construction, output
//! schemas, and the retrying `run_task` driver.

use super::backend::{BackendError, DecodingParams, ModelBackend, RetryPolicy};
use super::repair::repair_output;
use super::{EntityKind, EntitySpan, RelationRole, Segment};
use crate::policy::Choice;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Recognition / classification tasks, one model query each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskName {
    #[serde(rename = "DR")]
    DataRecognition,
    #[serde(rename = "DC")]
    DataClassification,
    #[serde(rename = "PR")]
    PurposeRecognition,
    #[serde(rename = "PC")]
    PurposeClassification,
    #[serde(rename = "Action")]
    Action,
    #[serde(rename = "Party")]
    Party,
    #[serde(rename = "Relation")]
    Relation,
}

impl TaskName {
    pub const ALL: [TaskName; 7] = [
        TaskName::DataRecognition,
        TaskName::DataClassification,
        TaskName::PurposeRecognition,
        TaskName::PurposeClassification,
        TaskName::Action,
        TaskName::Party,
        TaskName::Relation,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            TaskName::DataRecognition => "DR",
            TaskName::DataClassification => "DC",
            TaskName::PurposeRecognition => "PR",
            TaskName::PurposeClassification => "PC",
            TaskName::Action => "Action",
            TaskName::Party => "Party",
            TaskName::Relation => "Relation",
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for TaskName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskName::ALL
            .into_iter()
            .find(|t| t.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("backend error on {task}: {source}")]
    Backend {
        task: TaskName,
        #[source]
        source: BackendError,
    },
    #[error("unrepairable {task} output: {reason}")]
    Unrepairable { task: TaskName, reason: String },
}

/// Task-specific context beyond the segment itself.
#[derive(Debug, Clone)]
pub enum TaskContext<'a> {
    /// DR / PR / Action / Party: the segment alone.
    None,
    /// DC / PC: the recognized span to classify.
    Span(&'a str),
    /// Relation: every practice and entity of the segment, with assigned ids.
    Relation {
        practices: &'a [PracticeStub],
        entities: &'a [EntitySpan],
    },
}

/// Minimal practice view sent to the relation task.
#[derive(Debug, Clone, Serialize)]
pub struct PracticeStub {
    pub id: String,
    pub kind: super::PracticeKind,
    pub action: String,
}

// Canonical payload shapes. These strings are what mock fixtures key on, so
// their construction must stay byte-stable.
#[derive(Serialize)]
struct ClassifyPayload<'a> {
    segment: &'a str,
    span: &'a str,
}

#[derive(Serialize)]
struct RelationEntity<'a> {
    id: &'a str,
    kind: EntityKind,
    surface: &'a str,
}

#[derive(Serialize)]
struct RelationPayload<'a> {
    segment: &'a str,
    practices: &'a [PracticeStub],
    entities: Vec<RelationEntity<'a>>,
}

/// Build the canonical input payload for a task over a segment.
pub fn task_input(task: TaskName, segment: &Segment, context: &TaskContext<'_>) -> String {
    match (task, context) {
        (
            TaskName::DataRecognition
            | TaskName::PurposeRecognition
            | TaskName::Action
            | TaskName::Party,
            _,
        ) => segment.text.clone(),
        (TaskName::DataClassification | TaskName::PurposeClassification, TaskContext::Span(span)) => {
            serde_json::to_string(&ClassifyPayload { segment: &segment.text, span })
                .expect("payload serializes")
        }
        (TaskName::Relation, TaskContext::Relation { practices, entities }) => {
            let entities: Vec<RelationEntity<'_>> = entities
                .iter()
                .map(|e| RelationEntity { id: &e.id, kind: e.kind, surface: &e.surface })
                .collect();
            serde_json::to_string(&RelationPayload { segment: &segment.text, practices, entities })
                .expect("payload serializes")
        }
        // A classification or relation call without its context cannot name a
        // meaningful payload; fall back to the bare segment.
        _ => segment.text.clone(),
    }
}

/// Raw span list produced by DR / PR.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpansOutput {
    #[serde(default)]
    pub spans: Vec<String>,
}

/// Concept assignment produced by DC / PC. Anything missing or unknown is
/// grounded to `unspecified` by the pipeline.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptOutput {
    #[serde(default)]
    pub concept: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionItem {
    pub surface: String,
    pub kind: super::PracticeKind,
    #[serde(default)]
    pub choice: Option<Choice>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionsOutput {
    #[serde(default)]
    pub actions: Vec<ActionItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartyKind {
    FirstParty,
    ThirdParty,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartyItem {
    pub surface: String,
    pub kind: PartyKind,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartiesOutput {
    #[serde(default)]
    pub parties: Vec<PartyItem>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkItem {
    pub practice: String,
    pub entity: String,
    pub role: RelationRole,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinksOutput {
    #[serde(default)]
    pub links: Vec<LinkItem>,
}

/// Schema-conforming output of one task run.
#[derive(Debug, Clone)]
pub enum TaskOutput {
    Spans(SpansOutput),
    Concept(ConceptOutput),
    Actions(ActionsOutput),
    Parties(PartiesOutput),
    Links(LinksOutput),
}

/// Run one task against the backend: canonical payload, deterministic
/// decoding, transport retries with exponential backoff, output repair, and
/// schema parsing. An unrepairable output is an error value for the caller
/// to downgrade to an empty result plus a diagnostic.
pub fn run_task(
    backend: &dyn ModelBackend,
    task: TaskName,
    instruction: &str,
    segment: &Segment,
    context: &TaskContext<'_>,
    retry: &RetryPolicy,
) -> Result<TaskOutput, TaskError> {
    let input = task_input(task, segment, context);
    let params = DecodingParams::default();
    let mut attempt = 0;
    let raw = loop {
        attempt += 1;
        match backend.complete(task, instruction, &input, &params) {
            Ok(raw) => break raw,
            Err(e) if e.is_retryable() && attempt < retry.max_attempts.max(1) => {
                let delay = retry.base_delay_ms.saturating_mul(1u64 << (attempt - 1));
                std::thread::sleep(std::time::Duration::from_millis(delay));
            }
            Err(e) => return Err(TaskError::Backend { task, source: e }),
        }
    };
    let value = repair_output(&raw)
        .map_err(|e| TaskError::Unrepairable { task, reason: e.reason })?;
    parse_output(task, value)
}

fn parse_output(task: TaskName, value: serde_json::Value) -> Result<TaskOutput, TaskError> {
    let unrepairable = |e: serde_json::Error| TaskError::Unrepairable {
        task,
        reason: format!("schema mismatch: {e}"),
    };
    match task {
        TaskName::DataRecognition | TaskName::PurposeRecognition => {
            Ok(TaskOutput::Spans(serde_json::from_value(value).map_err(unrepairable)?))
        }
        TaskName::DataClassification | TaskName::PurposeClassification => {
            Ok(TaskOutput::Concept(serde_json::from_value(value).map_err(unrepairable)?))
        }
        TaskName::Action => {
            Ok(TaskOutput::Actions(serde_json::from_value(value).map_err(unrepairable)?))
        }
        TaskName::Party => {
            Ok(TaskOutput::Parties(serde_json::from_value(value).map_err(unrepairable)?))
        }
        TaskName::Relation => {
            Ok(TaskOutput::Links(serde_json::from_value(value).map_err(unrepairable)?))
        }
    }
}
