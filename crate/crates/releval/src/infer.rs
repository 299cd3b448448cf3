//! Turning raw model output into relation predictions.
//!
//! All parsers are total: every output string maps to a prediction, with
//! unparseable output falling back to the NoTA relation and the fallback
//! recorded in `parse_status` so its frequency stays measurable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::CandidateSet;

/// How a prediction was obtained from the model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    /// Output was already a member of the allowed answer space.
    Constrained,
    /// Output matched a label exactly after case/whitespace normalization.
    ExactMatch,
    /// Output was recovered by lenient matching (leading option letter,
    /// unique label substring).
    FuzzyMatch,
    /// Output was unparseable; the prediction defaulted to NoTA.
    FallbackNota,
}

/// A parsed relation decision for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_id: String,
    pub relation: String,
    pub raw_output: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_option_scores: Option<BTreeMap<String, f64>>,
    pub parse_status: ParseStatus,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InferError {
    #[error("no entailment scores to aggregate")]
    EmptyScores,
}

/// Parses multiple-choice output. A bare option letter counts as
/// constrained; a leading letter followed by punctuation or end of string
/// (e.g. `B. Acme was founded by Ada`) counts as a fuzzy match; anything
/// else falls back to NoTA. Letters of a multi-template relation collapse to
/// their shared label.
pub fn parse_qa4re(output: &str, candidates: &CandidateSet, example_id: &str) -> Prediction {
    let make = |relation: &str, status: ParseStatus| Prediction {
        example_id: example_id.to_string(),
        relation: relation.to_string(),
        raw_output: output.to_string(),
        per_option_scores: None,
        parse_status: status,
    };

    let trimmed = output.trim();
    let mut chars = trimmed.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        if let Some(option) = candidates.by_letter(c) {
            return make(&option.relation, ParseStatus::Constrained);
        }
    }

    // Strip leading punctuation like "(" and examine the first character.
    let stripped = trimmed.trim_start_matches(|c: char| !c.is_alphanumeric());
    let mut chars = stripped.chars();
    if let Some(first) = chars.next() {
        let next_is_word = chars.next().is_some_and(|c| c.is_alphanumeric());
        if !next_is_word {
            if let Some(option) = candidates.by_letter(first) {
                return make(&option.relation, ParseStatus::FuzzyMatch);
            }
        }
    }

    make(candidates.nota_label(), ParseStatus::FallbackNota)
}

/// Parses label output: case-insensitive exact match against the retained
/// labels first, then a unique-substring match; ambiguous or unmatched
/// output falls back to NoTA.
pub fn parse_vanilla(output: &str, candidates: &CandidateSet, example_id: &str) -> Prediction {
    let make = |relation: &str, status: ParseStatus| Prediction {
        example_id: example_id.to_string(),
        relation: relation.to_string(),
        raw_output: output.to_string(),
        per_option_scores: None,
        parse_status: status,
    };

    let normalized = output.trim().to_lowercase();
    let labels = candidates.retained_labels();

    for label in &labels {
        if normalized == label.to_lowercase() {
            return make(label, ParseStatus::ExactMatch);
        }
    }

    let matches: Vec<&str> = labels
        .iter()
        .filter(|label| normalized.contains(&label.to_lowercase()))
        .copied()
        .collect();
    if let [only] = matches.as_slice() {
        return make(only, ParseStatus::FuzzyMatch);
    }

    make(candidates.nota_label(), ParseStatus::FallbackNota)
}

/// Applies the entailment threshold rule. `entail_probs` holds one
/// per-relation entailment probability (already the max over that relation's
/// templates) in schema order; if the maximum is below `threshold` the
/// prediction is NoTA, otherwise the argmax relation, ties going to the
/// earlier relation.
pub fn aggregate_nli(
    entail_probs: &[(String, f64)],
    threshold: f64,
    nota_label: &str,
    example_id: &str,
) -> Result<Prediction, InferError> {
    let (best_relation, best_prob) = entail_probs
        .iter()
        .fold(None::<(&str, f64)>, |best, (relation, prob)| match best {
            Some((_, p)) if *prob <= p => best,
            _ => Some((relation, *prob)),
        })
        .ok_or(InferError::EmptyScores)?;

    let relation = if best_prob < threshold {
        nota_label
    } else {
        best_relation
    };
    Ok(Prediction {
        example_id: example_id.to_string(),
        relation: relation.to_string(),
        raw_output: format!("max_entailment {best_relation}={best_prob}"),
        per_option_scores: Some(
            entail_probs
                .iter()
                .map(|(r, p)| (r.clone(), *p))
                .collect(),
        ),
        parse_status: ParseStatus::Constrained,
    })
}
