//! The four prompt formulations.
//!
//! Rendering is byte-stable: LF line endings, a single space after field
//! labels, exactly one blank line between blocks, and the trailing cue line
//! (`Relationship:`, `Option:`, `Category:`) bare with no trailing
//! whitespace. Golden-file tests pin the exact output for each formulation.
//!
//! In-context demonstrations are complete solved blocks of the same shape as
//! the query, separated by one blank line, with the instruction stated once
//! at the top. A demonstration's answer is always a member of its own answer
//! space (its own candidate letters, or the retained label list).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::CandidateSet;
use crate::corpus::RelationExample;
use crate::verbalize::fill_with_markers;

const VANILLA_INSTRUCTION: &str = "Given a sentence, and two entities within the sentence, classify the relationship between the two entities based on the provided sentence. All possible Relationships are listed below:";

const VANILLA_TEMP_INSTRUCTION: &str = "Given a sentence, and two entities within the sentence, classify the relationship between the two entities based on the provided sentence. All possible Relationships are listed below with explanations:";

const QA4RE_INSTRUCTION: &str = "Determine which option can be inferred from the given Sentence.";

const QA4RE_QUESTION: &str = "Which option can be inferred from the given Sentence?";

const NLI_INSTRUCTION: &str = "In this task, you will be presented with a premise and a hypothesis sentence.\nDetermine whether the hypothesis sentence entails (implies), contradicts (opposes), or is neutral with respect to the given premise sentence. Please answer with \"Contradiction\", \"Neutral\", or \"Entailment\".";

/// The three admissible outputs of the entailment formulation.
pub const NLI_LABELS: [&str; 3] = ["Entailment", "Neutral", "Contradiction"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// Label-list prompting: the model emits a relation label.
    Vanilla,
    /// Label list with marker-filled template explanations.
    VanillaTemp,
    /// Multiple-choice: entity-filled templates as lettered options.
    Qa4re,
    /// Per-option premise/hypothesis entailment scoring.
    Nli4re,
}

impl Formulation {
    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::Vanilla => "vanilla",
            Formulation::VanillaTemp => "vanilla-temp",
            Formulation::Qa4re => "qa4re",
            Formulation::Nli4re => "nli4re",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Formulation {
    type Err = FormulateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" => Ok(Formulation::Vanilla),
            "vanilla-temp" | "vanilla_temp" => Ok(Formulation::VanillaTemp),
            "qa4re" => Ok(Formulation::Qa4re),
            "nli4re" => Ok(Formulation::Nli4re),
            other => Err(FormulateError::UnknownFormulation {
                name: other.to_string(),
            }),
        }
    }
}

/// Which candidate option an entailment prompt's hypothesis came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisRef {
    pub relation: String,
    pub template_index: usize,
}

/// A rendered prompt plus its decoding contract: the strings the model is
/// allowed to emit and how each maps back to a relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub formulation: Formulation,
    pub text: String,
    pub allowed_outputs: Vec<String>,
    pub candidate_map: BTreeMap<String, String>,
    /// Present only for entailment prompts.
    pub hypothesis: Option<HypothesisRef>,
}

/// A solved in-context example: the demonstration's own candidate set plus
/// its gold answer in the target formulation's answer space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demonstration {
    pub example: RelationExample,
    pub candidates: CandidateSet,
    pub answer: String,
}

impl Demonstration {
    pub fn new(
        example: RelationExample,
        candidates: CandidateSet,
        formulation: Formulation,
    ) -> Result<Demonstration, FormulateError> {
        let answer = gold_answer(&example, &candidates, formulation).ok_or(
            FormulateError::DemonstrationsUnsupported { formulation },
        )?;
        Ok(Demonstration {
            example,
            candidates,
            answer,
        })
    }
}

/// The gold output string for an example in a generative formulation's
/// answer space: the gold label (or letter of the gold's first option), or
/// NoTA when constraints filtered the gold out. `None` for the entailment
/// formulation, which has no single gold string.
pub fn gold_answer(
    example: &RelationExample,
    candidates: &CandidateSet,
    formulation: Formulation,
) -> Option<String> {
    match formulation {
        Formulation::Vanilla | Formulation::VanillaTemp => {
            let label = if candidates.contains_relation(&example.gold) {
                example.gold.as_str()
            } else {
                candidates.nota_label()
            };
            Some(label.to_string())
        }
        Formulation::Qa4re => {
            let option = candidates
                .options
                .iter()
                .find(|opt| opt.relation == example.gold)
                .unwrap_or_else(|| candidates.nota_option());
            Some(option.letter.to_string())
        }
        Formulation::Nli4re => None,
    }
}

#[derive(Debug, Error)]
pub enum FormulateError {
    #[error("unknown formulation `{name}` (expected vanilla, vanilla-temp, qa4re, or nli4re)")]
    UnknownFormulation { name: String },
    #[error("candidate set has no positive options to form hypotheses from")]
    NoPositiveCandidates,
    #[error("{formulation} does not take in-context demonstrations")]
    DemonstrationsUnsupported { formulation: Formulation },
}

fn vanilla_query_block(example: &RelationExample, answer: Option<&str>) -> String {
    let mut block = format!(
        "Sentence: {}\nEntity 1: {}\nEntity 2: {}\nRelationship:",
        example.sentence(),
        example.head.surface,
        example.tail.surface
    );
    if let Some(answer) = answer {
        block.push(' ');
        block.push_str(answer);
    }
    block
}

fn qa4re_query_block(
    example: &RelationExample,
    candidates: &CandidateSet,
    answer: Option<&str>,
) -> String {
    let mut block = format!("Sentence: {}\nOptions:\n", example.sentence());
    for option in &candidates.options {
        block.push_str(&format!("{}. {}\n", option.letter, option.text.text));
    }
    block.push('\n');
    block.push_str(QA4RE_QUESTION);
    block.push_str("\nOption:");
    if let Some(answer) = answer {
        block.push(' ');
        block.push_str(answer);
    }
    block
}

fn build_labelled(
    formulation: Formulation,
    instruction: &str,
    example: &RelationExample,
    candidates: &CandidateSet,
    demos: &[Demonstration],
    explanations: Option<&BTreeMap<String, String>>,
) -> Prompt {
    let mut text = String::new();
    text.push_str(instruction);
    text.push('\n');
    for label in candidates.retained_labels() {
        text.push_str("- ");
        text.push_str(label);
        if let Some(explanations) = explanations {
            text.push_str(": ");
            text.push_str(&explanations[label]);
        }
        text.push('\n');
    }
    text.push('\n');
    for demo in demos {
        text.push_str(&vanilla_query_block(&demo.example, Some(&demo.answer)));
        text.push_str("\n\n");
    }
    text.push_str(&vanilla_query_block(example, None));

    let allowed: Vec<String> = candidates
        .retained_labels()
        .iter()
        .map(|l| l.to_string())
        .collect();
    let candidate_map = allowed.iter().map(|l| (l.clone(), l.clone())).collect();
    Prompt {
        formulation,
        text,
        allowed_outputs: allowed,
        candidate_map,
        hypothesis: None,
    }
}

/// Renders the label-list formulation. Demonstrations, if any, sit between
/// the instruction block and the query as solved blocks.
pub fn build_vanilla(
    example: &RelationExample,
    candidates: &CandidateSet,
    demos: &[Demonstration],
) -> Prompt {
    build_labelled(
        Formulation::Vanilla,
        VANILLA_INSTRUCTION,
        example,
        candidates,
        demos,
        None,
    )
}

/// Renders the label-list formulation with template explanations: each line
/// is `- <label>: <template filled with Entity 1/Entity 2 markers>`.
/// Multi-template relations are explained by their first template.
pub fn build_vanilla_temp(
    example: &RelationExample,
    candidates: &CandidateSet,
    demos: &[Demonstration],
    template_set: &crate::schema::TemplateSet,
) -> Prompt {
    let explanations: BTreeMap<String, String> = candidates
        .retained_labels()
        .iter()
        .map(|label| {
            let templates = template_set
                .templates(label)
                .expect("candidate labels come from the template set");
            ((*label).to_string(), fill_with_markers(&templates[0]))
        })
        .collect();
    build_labelled(
        Formulation::VanillaTemp,
        VANILLA_TEMP_INSTRUCTION,
        example,
        candidates,
        demos,
        Some(&explanations),
    )
}

/// Renders the multiple-choice formulation: the sentence, lettered options
/// (entity-filled templates, NoTA last), and the closing question. The model
/// is expected to emit an option letter.
pub fn build_qa4re(
    example: &RelationExample,
    candidates: &CandidateSet,
    demos: &[Demonstration],
) -> Prompt {
    let mut text = String::new();
    text.push_str(QA4RE_INSTRUCTION);
    text.push_str("\n\n");
    for demo in demos {
        text.push_str(&qa4re_query_block(&demo.example, &demo.candidates, Some(&demo.answer)));
        text.push_str("\n\n");
    }
    text.push_str(&qa4re_query_block(example, candidates, None));

    let allowed: Vec<String> = candidates
        .options
        .iter()
        .map(|opt| opt.letter.to_string())
        .collect();
    let candidate_map = candidates
        .options
        .iter()
        .map(|opt| (opt.letter.to_string(), opt.relation.clone()))
        .collect();
    Prompt {
        formulation: Formulation::Qa4re,
        text,
        allowed_outputs: allowed,
        candidate_map,
        hypothesis: None,
    }
}

/// Renders one premise/hypothesis prompt per positive option. NoTA gets no
/// hypothesis; it arises from the entailment threshold at aggregation time.
/// Multi-template relations yield one prompt per template and are collapsed
/// by max entailment downstream.
pub fn build_nli(
    example: &RelationExample,
    candidates: &CandidateSet,
) -> Result<Vec<Prompt>, FormulateError> {
    let positives: Vec<_> = candidates.positive_options().collect();
    if positives.is_empty() {
        return Err(FormulateError::NoPositiveCandidates);
    }
    let sentence = example.sentence();
    Ok(positives
        .into_iter()
        .map(|option| {
            let text = format!(
                "{NLI_INSTRUCTION}\n\nPremise: {sentence}\nHypothesis: {}\n\nCategory:",
                option.text.text
            );
            Prompt {
                formulation: Formulation::Nli4re,
                text,
                allowed_outputs: NLI_LABELS.iter().map(|l| l.to_string()).collect(),
                candidate_map: NLI_LABELS
                    .iter()
                    .map(|l| (l.to_string(), option.relation.clone()))
                    .collect(),
                hypothesis: Some(HypothesisRef {
                    relation: option.relation.clone(),
                    template_index: option.text.template_index,
                }),
            }
        })
        .collect())
}
