//! Privacy-policy compliance toolkit.
//!
//! The pipeline turns privacy-policy text into a formal description of the
//! platform's data usage (an *app policy*), checks it against user
//! preferences (*data policies* bundled into *user profiles*) over a concept
//! hierarchy, and aggregates corpus-level audit statistics:
//!
//! - [`vocab`] — the DPV-style concept DAG and hierarchy matching
//! - [`policy`] — formal app-policy / user-profile model and schemas
//! - [`extraction`] — the model-backed extraction pipeline
//! - [`convert`] — extracted practices → app policy
//! - [`reason`] — the deterministic compliance checker
//! - [`metrics`] — relaxed span-matching evaluation metrics
//! - [`audit`] — corpus-level conflict statistics

pub mod audit;
pub mod convert;
pub mod diag;
pub mod extraction;
pub mod metrics;
pub mod policy;
pub mod reason;
pub mod vocab;

pub use diag::{Diagnostic, Severity};
pub use vocab::{ConceptHierarchy, ConceptId, MatchMode};
