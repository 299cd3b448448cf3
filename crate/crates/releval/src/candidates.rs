//! Type-constrained candidate option construction.
//!
//! For each example, the candidate set holds one lettered option per
//! (retained relation, template) pair: relations whose head/tail entity-type
//! constraints are compatible with the example's entity types, in schema
//! order, with the NoTA option always present and always last. Multi-template
//! relations contribute one option per template; they collapse back to a
//! single label at parsing time.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RelationExample;
use crate::schema::{RelationSchema, RelationType, TemplateSet};
use crate::verbalize::{fill, FilledTemplate};

/// One answer option of a candidate set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateOption {
    pub index: usize,
    pub letter: char,
    pub relation: String,
    pub text: FilledTemplate,
}

/// The ordered, type-constrained answer options for one example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub options: Vec<CandidateOption>,
    pub nota_index: usize,
}

impl CandidateSet {
    pub fn nota_option(&self) -> &CandidateOption {
        &self.options[self.nota_index]
    }

    pub fn nota_label(&self) -> &str {
        &self.nota_option().relation
    }

    /// Options other than NoTA, in order.
    pub fn positive_options(&self) -> impl Iterator<Item = &CandidateOption> {
        let nota = self.nota_index;
        self.options
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != nota)
            .map(|(_, opt)| opt)
    }

    /// Case-insensitive option lookup by letter.
    pub fn by_letter(&self, letter: char) -> Option<&CandidateOption> {
        let upper = letter.to_ascii_uppercase();
        self.options.iter().find(|opt| opt.letter == upper)
    }

    pub fn contains_relation(&self, label: &str) -> bool {
        self.options.iter().any(|opt| opt.relation == label)
    }

    /// Distinct retained labels in option order (NoTA last). This is the
    /// label list shown by label-based formulations.
    pub fn retained_labels(&self) -> Vec<&str> {
        let mut labels: Vec<&str> = Vec::new();
        for opt in &self.options {
            if !labels.contains(&opt.relation.as_str()) {
                labels.push(&opt.relation);
            }
        }
        labels
    }

    /// True when the constraints left nothing but NoTA; such examples are
    /// answered without a model call.
    pub fn is_forced_nota(&self) -> bool {
        self.options.len() == 1
    }
}

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("option index {index} exceeds the letter range A-Z")]
    LetterOverflow { index: usize },
    #[error("example {example_id}: gold label `{label}` is not in the schema")]
    GoldNotInSchema { example_id: String, label: String },
    #[error("example {example_id}: cannot fill template for `{relation}`: {source}")]
    Fill {
        example_id: String,
        relation: String,
        source: crate::verbalize::FillError,
    },
}

/// Maps an option index to its letter: 0 -> 'A', 1 -> 'B', ... 25 -> 'Z'.
pub fn option_letter(index: usize) -> Result<char, CandidateError> {
    if index >= 26 {
        return Err(CandidateError::LetterOverflow { index });
    }
    Ok((b'A' + index as u8) as char)
}

/// Positive relations compatible with the example's entity types, in schema
/// order. An example without entity types retains the full positive space.
pub fn retained_relations<'a>(
    schema: &'a RelationSchema,
    example: &RelationExample,
) -> Vec<&'a RelationType> {
    let head_type = example.head.entity_type.as_deref();
    let tail_type = example.tail.entity_type.as_deref();
    schema
        .positive_relations()
        .filter(|r| r.admits(head_type, tail_type))
        .collect()
}

/// Builds the candidate set for an example: retained positive relations in
/// schema order (one option per template), then the NoTA option last.
pub fn build_candidates(
    schema: &RelationSchema,
    template_set: &TemplateSet,
    example: &RelationExample,
) -> Result<CandidateSet, CandidateError> {
    build_candidates_seeded(schema, template_set, example, None)
}

/// [`build_candidates`] with an optional seeded shuffle of the positive
/// options, for position-bias studies. NoTA stays last either way.
pub fn build_candidates_seeded(
    schema: &RelationSchema,
    template_set: &TemplateSet,
    example: &RelationExample,
    shuffle_seed: Option<u64>,
) -> Result<CandidateSet, CandidateError> {
    if !schema.contains(&example.gold) {
        return Err(CandidateError::GoldNotInSchema {
            example_id: example.id.clone(),
            label: example.gold.clone(),
        });
    }

    let mut entries: Vec<(&str, usize, &crate::schema::Template)> = Vec::new();
    for relation in retained_relations(schema, example) {
        let templates = template_set
            .templates(&relation.label)
            .unwrap_or(&relation.templates);
        for (template_index, template) in templates.iter().enumerate() {
            entries.push((&relation.label, template_index, template));
        }
    }

    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..entries.len()).rev() {
            let j = rng.gen_range(0..=i);
            entries.swap(i, j);
        }
    }

    let nota = schema.nota();
    let nota_templates = template_set
        .templates(&nota.label)
        .unwrap_or(&nota.templates);
    for (template_index, template) in nota_templates.iter().enumerate() {
        entries.push((&nota.label, template_index, template));
    }

    let mut options = Vec::with_capacity(entries.len());
    for (index, (relation, template_index, template)) in entries.iter().enumerate() {
        let letter = option_letter(index)?;
        let text = fill(template, &example.head.surface, &example.tail.surface).map_err(
            |source| CandidateError::Fill {
                example_id: example.id.clone(),
                relation: relation.to_string(),
                source,
            },
        )?;
        options.push(CandidateOption {
            index,
            letter,
            relation: relation.to_string(),
            text: FilledTemplate {
                relation: relation.to_string(),
                text,
                template_index: *template_index,
            },
        });
    }

    let nota_index = options
        .iter()
        .position(|opt| opt.relation == nota.label)
        .expect("NoTA option is always appended");
    Ok(CandidateSet { options, nota_index })
}
