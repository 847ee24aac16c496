//! Denotation accuracy and labeled-span F1.

use crate::data::Domain;
use crate::tree::{labeled_spans, SpanTree};
use crate::types::{DomainSchema, Program};

/// Whether `predicted` executes to the same result as `gold`. A missing
/// prediction or a failed execution counts as wrong.
pub fn denotation_match(predicted: Option<&Program>, gold: &Program, domain: &Domain, schema: &DomainSchema) -> bool {
    let Some(p) = predicted else { return false };
    match (domain.execute(p, schema), domain.execute(gold, schema)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Share of items whose predicted and gold programs have equal denotations.
/// `None` predictions (no valid tree) count as wrong. Zero for no items.
pub fn denotation_accuracy(
    predictions: &[Option<Program>],
    golds: &[Program],
    domain: &Domain,
    schema: &DomainSchema,
) -> f64 {
    assert_eq!(predictions.len(), golds.len(), "one prediction per gold program");
    if golds.is_empty() {
        return 0.0;
    }
    let correct = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| denotation_match(p.as_ref(), g, domain, schema))
        .count();
    correct as f64 / golds.len() as f64
}

/// F1 between the labeled spans of two trees, NoSem spans excluded.
/// Two trees without labeled spans score 1.
pub fn labeled_span_f1(pred: &SpanTree, gold: &SpanTree) -> f64 {
    let p = labeled_spans(pred);
    let g = labeled_spans(gold);
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    let hit = p.intersection(&g).count() as f64;
    if hit == 0.0 {
        return 0.0;
    }
    let precision = hit / p.len() as f64;
    let recall = hit / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
