//! Filling relation templates with entity surfaces or positional markers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{SlotOrder, Template, HEAD_SLOT, TAIL_SLOT};

/// Marker inserted for the head slot when rendering relation explanations.
pub const HEAD_MARKER: &str = "Entity 1";
/// Marker inserted for the tail slot when rendering relation explanations.
pub const TAIL_MARKER: &str = "Entity 2";

/// A template with its slots replaced, remembering which relation and which
/// of its templates produced the text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilledTemplate {
    pub relation: String,
    pub text: String,
    pub template_index: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FillError {
    #[error("head surface is empty")]
    EmptyHeadSurface,
    #[error("tail surface is empty")]
    EmptyTailSurface,
}

/// Replaces the head slot with `head_surface` and the tail slot with
/// `tail_surface`. Substitution is a single pass over the pattern, so a
/// surface containing a literal slot string is inserted verbatim and never
/// re-expanded.
pub fn fill(template: &Template, head_surface: &str, tail_surface: &str) -> Result<String, FillError> {
    if head_surface.is_empty() {
        return Err(FillError::EmptyHeadSurface);
    }
    if tail_surface.is_empty() {
        return Err(FillError::EmptyTailSurface);
    }
    Ok(splice(template, head_surface, tail_surface))
}

/// Replaces the head slot with "Entity 1" and the tail slot with "Entity 2",
/// preserving the pattern's slot order. Used for relation explanations in
/// the label-list formulation.
pub fn fill_with_markers(template: &Template) -> String {
    splice(template, HEAD_MARKER, TAIL_MARKER)
}

fn splice(template: &Template, head: &str, tail: &str) -> String {
    let pattern = template.pattern();
    let head_pos = pattern.find(HEAD_SLOT).expect("template invariant: head slot");
    let tail_pos = pattern.find(TAIL_SLOT).expect("template invariant: tail slot");
    debug_assert_eq!(
        template.slot_order(),
        if head_pos < tail_pos { SlotOrder::HeadFirst } else { SlotOrder::TailFirst }
    );

    let (first_pos, first_len, first_text, second_pos, second_len, second_text) =
        if head_pos < tail_pos {
            (head_pos, HEAD_SLOT.len(), head, tail_pos, TAIL_SLOT.len(), tail)
        } else {
            (tail_pos, TAIL_SLOT.len(), tail, head_pos, HEAD_SLOT.len(), head)
        };

    let mut out = String::with_capacity(pattern.len() + head.len() + tail.len());
    out.push_str(&pattern[..first_pos]);
    out.push_str(first_text);
    out.push_str(&pattern[first_pos + first_len..second_pos]);
    out.push_str(second_text);
    out.push_str(&pattern[second_pos + second_len..]);
    out
}
