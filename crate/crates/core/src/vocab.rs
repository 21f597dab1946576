//! Concept vocabulary: a DPV-style subclass-of DAG with hierarchy matching.
//!
//! The hierarchy is immutable after [`load_vocabulary`] / [`ConceptHierarchy::extend`];
//! queries are cheap lookups against a precomputed reflexive-transitive closure, so a
//! single hierarchy can be shared across any number of worker threads.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// Identifier string reserved for the out-of-hierarchy sentinel concept.
///
/// `unspecified` marks data or purposes the extraction stage could not ground
/// in the vocabulary. It never resolves in a [`ConceptHierarchy`]; the reasoner
/// gives it its own matching rules.
pub const UNSPECIFIED: &str = "unspecified";

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("invalid concept id {value:?}: {reason}")]
    InvalidConceptId { value: String, reason: String },
    #[error("line {line}: malformed vocabulary record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate concept id `{0}`")]
    DuplicateConcept(ConceptId),
    #[error("concept `{child}` references undeclared parent `{parent}`")]
    DanglingParent { child: ConceptId, parent: ConceptId },
    #[error("subclass cycle detected: {}", format_cycle(.0))]
    CycleDetected(Vec<ConceptId>),
    #[error("unknown concept id `{0}`")]
    UnknownConcept(ConceptId),
}

fn format_cycle(ids: &[ConceptId]) -> String {
    ids.iter()
        .map(|id| format!("`{id}`"))
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Opaque, IRI-like concept identifier (e.g. `dpv:Location`).
///
/// Non-empty, whitespace-free; comparison is exact byte equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ConceptId(String);

impl ConceptId {
    pub fn new(value: impl Into<String>) -> Result<Self, VocabError> {
        let value = value.into();
        if value.is_empty() {
            return Err(VocabError::InvalidConceptId {
                value,
                reason: "empty".into(),
            });
        }
        if value.chars().any(char::is_whitespace) {
            return Err(VocabError::InvalidConceptId {
                value,
                reason: "contains whitespace".into(),
            });
        }
        Ok(ConceptId(value))
    }

    /// The sentinel concept for unrecognized data/purposes. Lives outside
    /// every hierarchy.
    pub fn unspecified() -> Self {
        ConceptId(UNSPECIFIED.to_string())
    }

    pub fn is_unspecified(&self) -> bool {
        self.0 == UNSPECIFIED
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ConceptId {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let value = String::deserialize(deserializer)?;
        ConceptId::new(value).map_err(serde::de::Error::custom)
    }
}

/// One vocabulary concept and its direct superclasses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptNode {
    pub id: ConceptId,
    pub label: String,
    pub parents: BTreeSet<ConceptId>,
}

/// How a candidate concept is matched against a target concept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Candidate must equal the target exactly.
    Exact,
    /// Candidate must be the target or any transitive subconcept of it.
    Subtree,
}

/// Subclass-of DAG over vocabulary concepts.
///
/// Multiple inheritance is permitted; acyclicity is verified on construction.
#[derive(Debug, Clone, Default)]
pub struct ConceptHierarchy {
    nodes: BTreeMap<ConceptId, ConceptNode>,
    // Reflexive-transitive closure of the parent relation, built once.
    ancestors: BTreeMap<ConceptId, BTreeSet<ConceptId>>,
}

impl ConceptHierarchy {
    fn from_nodes(nodes: BTreeMap<ConceptId, ConceptNode>) -> Result<Self, VocabError> {
        for node in nodes.values() {
            for parent in &node.parents {
                if !nodes.contains_key(parent) {
                    return Err(VocabError::DanglingParent {
                        child: node.id.clone(),
                        parent: parent.clone(),
                    });
                }
            }
        }
        check_acyclic(&nodes)?;
        let ancestors = build_closure(&nodes);
        Ok(ConceptHierarchy { nodes, ancestors })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn get(&self, id: &ConceptId) -> Option<&ConceptNode> {
        self.nodes.get(id)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &ConceptNode> {
        self.nodes.values()
    }

    /// Concepts with no declared parents.
    pub fn roots(&self) -> impl Iterator<Item = &ConceptNode> {
        self.nodes.values().filter(|n| n.parents.is_empty())
    }

    pub fn is_root(&self, id: &ConceptId) -> bool {
        self.nodes
            .get(id)
            .map(|n| n.parents.is_empty())
            .unwrap_or(false)
    }

    fn require(&self, id: &ConceptId) -> Result<(), VocabError> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(VocabError::UnknownConcept(id.clone()))
        }
    }

    /// True iff `a` equals `b` or `b` is reachable from `a` via parent edges.
    pub fn is_subconcept(&self, a: &ConceptId, b: &ConceptId) -> Result<bool, VocabError> {
        self.require(a)?;
        self.require(b)?;
        Ok(self.ancestors[a].contains(b))
    }

    /// Match `candidate` against `target` under the given mode.
    pub fn match_concept(
        &self,
        candidate: &ConceptId,
        target: &ConceptId,
        mode: MatchMode,
    ) -> Result<bool, VocabError> {
        match mode {
            MatchMode::Exact => {
                self.require(candidate)?;
                self.require(target)?;
                Ok(candidate == target)
            }
            MatchMode::Subtree => self.is_subconcept(candidate, target),
        }
    }

    /// Build a new hierarchy with extra nodes and extra subclass edges.
    /// `self` is left untouched; acyclicity is re-verified on the result.
    pub fn extend(
        &self,
        additions: &[(ConceptId, ConceptId)],
        new_nodes: Vec<ConceptNode>,
    ) -> Result<ConceptHierarchy, VocabError> {
        let mut nodes = self.nodes.clone();
        for node in new_nodes {
            if nodes.contains_key(&node.id) {
                return Err(VocabError::DuplicateConcept(node.id));
            }
            nodes.insert(node.id.clone(), node);
        }
        for (child, parent) in additions {
            let Some(node) = nodes.get_mut(child) else {
                return Err(VocabError::UnknownConcept(child.clone()));
            };
            node.parents.insert(parent.clone());
        }
        ConceptHierarchy::from_nodes(nodes)
    }

    /// Emit the line-oriented vocabulary format, records sorted by id.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for node in self.nodes.values() {
            let parents = node
                .parents
                .iter()
                .map(ConceptId::as_str)
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(node.id.as_str());
            out.push('\t');
            out.push_str(&node.label);
            out.push('\t');
            out.push_str(&parents);
            out.push('\n');
        }
        out
    }
}

/// Parse a vocabulary document: one `id<TAB>label<TAB>parent1,parent2,...`
/// record per line, `#`-prefixed comment lines and blank lines ignored.
pub fn load_vocabulary(source: &str) -> Result<ConceptHierarchy, VocabError> {
    let mut nodes: BTreeMap<ConceptId, ConceptNode> = BTreeMap::new();
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(VocabError::MalformedRecord {
                line,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let id = ConceptId::new(fields[0])
            .map_err(|e| VocabError::MalformedRecord { line, reason: e.to_string() })?;
        if id.is_unspecified() {
            return Err(VocabError::MalformedRecord {
                line,
                reason: format!("`{UNSPECIFIED}` is reserved and cannot be declared"),
            });
        }
        let mut parents = BTreeSet::new();
        for p in fields[2].split(',').filter(|p| !p.is_empty()) {
            let parent = ConceptId::new(p)
                .map_err(|e| VocabError::MalformedRecord { line, reason: e.to_string() })?;
            parents.insert(parent);
        }
        let node = ConceptNode {
            id: id.clone(),
            label: fields[1].to_string(),
            parents,
        };
        if nodes.insert(id.clone(), node).is_some() {
            return Err(VocabError::DuplicateConcept(id));
        }
    }
    ConceptHierarchy::from_nodes(nodes)
}

/// Load a vocabulary document from a file.
pub fn load_vocabulary_file(path: &std::path::Path) -> Result<ConceptHierarchy, VocabError> {
    let text = std::fs::read_to_string(path).map_err(|e| VocabError::MalformedRecord {
        line: 0,
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    load_vocabulary(&text)
}

// Depth-first three-color search over parent edges; reports the members of the
// first cycle found.
fn check_acyclic(nodes: &BTreeMap<ConceptId, ConceptNode>) -> Result<(), VocabError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    let mut color: BTreeMap<&ConceptId, Color> =
        nodes.keys().map(|id| (id, Color::White)).collect();
    let mut stack: Vec<ConceptId> = Vec::new();

    fn visit<'a>(
        id: &'a ConceptId,
        nodes: &'a BTreeMap<ConceptId, ConceptNode>,
        color: &mut BTreeMap<&'a ConceptId, Color>,
        stack: &mut Vec<ConceptId>,
    ) -> Result<(), VocabError> {
        color.insert(id, Color::Gray);
        stack.push(id.clone());
        for parent in &nodes[id].parents {
            match color[parent] {
                Color::White => visit(parent, nodes, color, stack)?,
                Color::Gray => {
                    let start = stack.iter().position(|c| c == parent).unwrap_or(0);
                    let mut members: Vec<ConceptId> = stack[start..].to_vec();
                    members.push(parent.clone());
                    return Err(VocabError::CycleDetected(members));
                }
                Color::Black => {}
            }
        }
        stack.pop();
        color.insert(id, Color::Black);
        Ok(())
    }

    for id in nodes.keys() {
        if color[id] == Color::White {
            visit(id, nodes, &mut color, &mut stack)?;
        }
    }
    Ok(())
}

fn build_closure(
    nodes: &BTreeMap<ConceptId, ConceptNode>,
) -> BTreeMap<ConceptId, BTreeSet<ConceptId>> {
    let mut closure: BTreeMap<ConceptId, BTreeSet<ConceptId>> = BTreeMap::new();

    fn ancestors_of(
        id: &ConceptId,
        nodes: &BTreeMap<ConceptId, ConceptNode>,
        closure: &mut BTreeMap<ConceptId, BTreeSet<ConceptId>>,
    ) -> BTreeSet<ConceptId> {
        if let Some(done) = closure.get(id) {
            return done.clone();
        }
        let mut set = BTreeSet::new();
        set.insert(id.clone());
        for parent in &nodes[id].parents {
            set.extend(ancestors_of(parent, nodes, closure));
        }
        closure.insert(id.clone(), set.clone());
        set
    }

    for id in nodes.keys() {
        ancestors_of(id, nodes, &mut closure);
    }
    closure
}
