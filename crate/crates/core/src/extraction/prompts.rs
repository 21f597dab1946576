//! Prompt templates, one per task, with `{{segment}}` / `{{entities}}`
//! placeholder substitution. Built-in defaults ship with the crate; a
//! directory of `<task>.txt` files overrides them without a rebuild.

use super::tasks::TaskName;
use super::backend::BackendError;
use std::collections::BTreeMap;
use std::path::Path;

const DEFAULT_DR: &str = include_str!("../../../../data/prompts/dr.txt");
const DEFAULT_DC: &str = include_str!("../../../../data/prompts/dc.txt");
const DEFAULT_PR: &str = include_str!("../../../../data/prompts/pr.txt");
const DEFAULT_PC: &str = include_str!("../../../../data/prompts/pc.txt");
const DEFAULT_ACTION: &str = include_str!("../../../../data/prompts/action.txt");
const DEFAULT_PARTY: &str = include_str!("../../../../data/prompts/party.txt");
const DEFAULT_RELATION: &str = include_str!("../../../../data/prompts/relation.txt");

/// The instruction texts handed to the backend as system prompts.
#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<TaskName, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert(TaskName::DataRecognition, DEFAULT_DR.to_string());
        templates.insert(TaskName::DataClassification, DEFAULT_DC.to_string());
        templates.insert(TaskName::PurposeRecognition, DEFAULT_PR.to_string());
        templates.insert(TaskName::PurposeClassification, DEFAULT_PC.to_string());
        templates.insert(TaskName::Action, DEFAULT_ACTION.to_string());
        templates.insert(TaskName::Party, DEFAULT_PARTY.to_string());
        templates.insert(TaskName::Relation, DEFAULT_RELATION.to_string());
        PromptSet { templates }
    }
}

impl PromptSet {
    /// Load overrides from a directory of `dr.txt`, `dc.txt`, … files.
    /// Tasks without an override keep the built-in template.
    pub fn from_dir(dir: &Path) -> Result<Self, BackendError> {
        let mut set = PromptSet::default();
        for task in TaskName::ALL {
            let path = dir.join(format!("{}.txt", task.code().to_lowercase()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    BackendError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                set.templates.insert(task, text);
            }
        }
        Ok(set)
    }

    /// Render the instruction for one call. `entities` is the task-specific
    /// context (the span for DC/PC, the id-annotated payload for Relation).
    pub fn render(&self, task: TaskName, segment: &str, entities: &str) -> String {
        self.templates[&task]
            .replace("{{segment}}", segment)
            .replace("{{entities}}", entities)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_every_task() {
        let set = PromptSet::default();
        for task in TaskName::ALL {
            let rendered = set.render(task, "SEG", "ENT");
            assert!(!rendered.is_empty(), "{task} template empty");
            assert!(!rendered.contains("{{segment}}"), "{task} placeholder left");
        }
    }

    #[test]
    fn directory_overrides_single_task() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("dr.txt"), "find data in {{segment}}").unwrap();
        let set = PromptSet::from_dir(dir.path()).unwrap();
        assert_eq!(
            set.render(TaskName::DataRecognition, "abc", ""),
            "find data in abc"
        );
        // other tasks keep defaults
        assert!(!set.render(TaskName::Party, "abc", "").is_empty());
    }
}
