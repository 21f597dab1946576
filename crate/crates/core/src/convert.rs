//! Converts extracted practices into a formal app policy.
//!
//! Collection-use practices become input specs; sharing practices become
//! downstreams attached to every collection spec whose data intersects the
//! shared data under subtree matching (in either direction). A sharing
//! practice matching no spec gets a synthesized spec of its own, so nothing
//! the extractor found is lost.

use crate::diag::Diagnostic;
use crate::extraction::{DocumentExtraction, EntitySpan, ExtractedPractice, PracticeKind};
use crate::policy::{
    canonicalize_app_policy, AppPolicy, Downstream, InputSpec, PartyRef, SchemaVersion,
};
use crate::vocab::{ConceptHierarchy, ConceptId, MatchMode};

/// Conversion result: the policy plus notes about degenerate inputs.
#[derive(Debug, Clone)]
pub struct Converted {
    pub policy: AppPolicy,
    pub diagnostics: Vec<Diagnostic>,
}

/// Port scheme: `{doc_id}#s{segment_index}#{ordinal}`, where the ordinal is
/// the numeric suffix of the extraction-assigned practice id (`p0`, `p1`,
/// …). Injective per document because practice ids are unique per segment.
fn port_for(practice: &ExtractedPractice) -> String {
    let ordinal = practice
        .id
        .strip_prefix('p')
        .filter(|rest| rest.chars().all(|c| c.is_ascii_digit()))
        .unwrap_or(&practice.id);
    format!(
        "{}#s{}#{}",
        practice.segment.doc_id, practice.segment.segment_index, ordinal
    )
}

fn concepts_of(spans: &[EntitySpan]) -> Vec<ConceptId> {
    let mut out: Vec<ConceptId> = spans
        .iter()
        .map(|s| s.concept.clone().unwrap_or_else(ConceptId::unspecified))
        .collect();
    out.sort();
    out.dedup();
    out
}

// "Same data" for downstream attachment: subtree match in either direction.
// The sentinel intersects only itself — it is outside the hierarchy, so
// subtree matching is undefined for it.
fn data_intersects(h: &ConceptHierarchy, shared: &[ConceptId], spec: &[ConceptId]) -> bool {
    shared.iter().any(|a| {
        spec.iter().any(|b| {
            if a.is_unspecified() || b.is_unspecified() {
                return a == b;
            }
            h.match_concept(a, b, MatchMode::Subtree).unwrap_or(false)
                || h.match_concept(b, a, MatchMode::Subtree).unwrap_or(false)
        })
    })
}

/// Convert one document's practices into an app policy.
///
/// `segments_total` is the document's full segment count (practices alone
/// cannot supply it). Deterministic and order-stable: permuting the input
/// practices yields the same canonical policy.
pub fn convert(
    practices: &[ExtractedPractice],
    app_id: &str,
    segments_total: u32,
    h: &ConceptHierarchy,
) -> Converted {
    let mut diagnostics = Vec::new();

    let mut ordered: Vec<&ExtractedPractice> = practices.iter().collect();
    ordered.sort_by_key(|p| (p.segment.segment_index, port_for(p)));

    // Pass 1: collection-use practices become input specs.
    let mut specs: Vec<InputSpec> = Vec::new();
    for practice in ordered.iter().filter(|p| p.kind == PracticeKind::CollectionUse) {
        let port = port_for(practice);
        let mut data = concepts_of(&practice.data);
        if data.is_empty() {
            diagnostics.push(Diagnostic::info(
                port.clone(),
                "practice names no data; substituted `unspecified`",
            ));
            data.push(ConceptId::unspecified());
        }
        specs.push(InputSpec {
            port,
            data,
            purposes: concepts_of(&practice.purposes),
            downstreams: Vec::new(),
            provenance: practice.segment.clone(),
        });
    }

    // Pass 2: sharing practices attach downstreams to every matching
    // collection spec, or synthesize a spec when none matches. Only pass-1
    // specs are attachment targets; chaining onto synthesized specs would
    // make the result depend on input order.
    let collection_spec_count = specs.len();
    for practice in ordered
        .iter()
        .filter(|p| p.kind == PracticeKind::ThirdPartySharingDisclosure)
    {
        let port = port_for(practice);
        let mut shared_data = concepts_of(&practice.data);
        if shared_data.is_empty() {
            diagnostics.push(Diagnostic::info(
                port.clone(),
                "sharing practice names no data; substituted `unspecified`",
            ));
            shared_data.push(ConceptId::unspecified());
        }
        let mut purposes = concepts_of(&practice.purposes);
        if purposes.is_empty() {
            purposes.push(ConceptId::unspecified());
        }
        let mut recipients = practice.recipients.clone();
        if recipients.is_empty() {
            diagnostics.push(Diagnostic::warning(
                port.clone(),
                "sharing practice names no recipient; substituted unnamed third party",
            ));
            recipients.push(PartyRef::unnamed_third_party());
        }
        let downstreams: Vec<Downstream> = recipients
            .into_iter()
            .map(|recipient| Downstream {
                recipient,
                purposes: purposes.clone(),
                choice: practice.choice,
                provenance: practice.segment.clone(),
            })
            .collect();

        let matching: Vec<usize> = specs[..collection_spec_count]
            .iter()
            .enumerate()
            .filter(|(_, spec)| data_intersects(h, &shared_data, &spec.data))
            .map(|(i, _)| i)
            .collect();
        if matching.is_empty() {
            diagnostics.push(Diagnostic::info(
                port.clone(),
                "sharing practice matches no collected data; synthesized an input spec",
            ));
            specs.push(InputSpec {
                port,
                data: shared_data,
                purposes: Vec::new(),
                downstreams,
                provenance: practice.segment.clone(),
            });
        } else {
            for i in matching {
                specs[i].downstreams.extend(downstreams.iter().cloned());
            }
        }
    }

    let mut policy = AppPolicy {
        schema_version: SchemaVersion,
        app_id: app_id.to_string(),
        segments_total,
        input_specs: specs,
    };
    canonicalize_app_policy(&mut policy);
    Converted { policy, diagnostics }
}

/// Convenience wrapper over a whole practice dump.
pub fn convert_document(doc: &DocumentExtraction, app_id: &str, h: &ConceptHierarchy) -> Converted {
    let practices: Vec<ExtractedPractice> = doc.practices().cloned().collect();
    convert(&practices, app_id, doc.segments_total(), h)
}
