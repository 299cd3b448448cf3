//! Dataset ingestion and sampling.
//!
//! Two input formats are supported:
//!
//! * TACRED-family JSON: an array of records with `token`, `subj_start`,
//!   `subj_end`, `obj_start`, `obj_end`, `subj_type`, `obj_type`, and
//!   `relation` fields. The subject becomes the head span and the object
//!   the tail span.
//! * SemEval text: each example is a sentence line with inline
//!   `<e1>…</e1>`/`<e2>…</e2>` markers (optionally prefixed by an id and a
//!   tab, optionally quoted) followed by the relation label on the next
//!   line; `Comment:` lines and blank lines are ignored.
//!
//! Sentences are reconstructed by space-joining tokens, so every span's
//! surface equals the joined tokens it covers.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::RelationSchema;

/// Inclusive token span of one entity mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub entity_type: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// One sentence with marked head/tail entities and a gold relation label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationExample {
    pub id: String,
    pub tokens: Vec<String>,
    pub head: EntitySpan,
    pub tail: EntitySpan,
    pub gold: String,
    pub split: Split,
}

impl RelationExample {
    /// The sentence as rendered into prompts: tokens joined by single spaces.
    pub fn sentence(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("record {index}: span {start}..={end} out of range for {token_count} tokens")]
    SpanOutOfRange {
        index: usize,
        start: usize,
        end: usize,
        token_count: usize,
    },
    #[error("record {index}: relation `{label}` is not in the schema")]
    UnknownLabel { index: usize, label: String },
    #[error("record {index}: {detail}")]
    MalformedRecord { index: usize, detail: String },
    #[error("line {line}: {detail}")]
    MalformedSentence { line: usize, detail: String },
    #[error("cannot sample {requested} examples from a pool of {available}")]
    SampleTooLarge { requested: usize, available: usize },
}

#[derive(Debug, Deserialize)]
struct TacredRecord {
    #[serde(default)]
    id: Option<String>,
    token: Vec<String>,
    subj_start: usize,
    subj_end: usize,
    obj_start: usize,
    obj_end: usize,
    #[serde(default)]
    subj_type: Option<String>,
    #[serde(default)]
    obj_type: Option<String>,
    relation: String,
}

fn span_from(
    index: usize,
    tokens: &[String],
    start: usize,
    end: usize,
    entity_type: Option<String>,
) -> Result<EntitySpan, CorpusError> {
    if start > end || end >= tokens.len() {
        return Err(CorpusError::SpanOutOfRange {
            index,
            start,
            end,
            token_count: tokens.len(),
        });
    }
    Ok(EntitySpan {
        start,
        end,
        surface: tokens[start..=end].join(" "),
        entity_type,
    })
}

/// Loads a TACRED, RETACRED, or TACREV split, preserving file order.
pub fn load_tacred_family(
    path: &Path,
    schema: &RelationSchema,
    split: Split,
) -> Result<Vec<RelationExample>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_tacred_json(&text, schema, split).map_err(|e| match e {
        CorpusError::Json { source, .. } => CorpusError::Json {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Parses TACRED-family JSON from a string; see [`load_tacred_family`].
pub fn parse_tacred_json(
    json: &str,
    schema: &RelationSchema,
    split: Split,
) -> Result<Vec<RelationExample>, CorpusError> {
    let records: Vec<serde_json::Value> =
        serde_json::from_str(json).map_err(|source| CorpusError::Json {
            path: "<string>".to_string(),
            source,
        })?;
    let mut examples = Vec::with_capacity(records.len());
    for (index, value) in records.into_iter().enumerate() {
        let record: TacredRecord =
            serde_json::from_value(value).map_err(|e| CorpusError::MalformedRecord {
                index,
                detail: e.to_string(),
            })?;
        if record.token.is_empty() {
            return Err(CorpusError::MalformedRecord {
                index,
                detail: "empty token list".to_string(),
            });
        }
        if !schema.contains(&record.relation) {
            return Err(CorpusError::UnknownLabel {
                index,
                label: record.relation,
            });
        }
        let head = span_from(
            index,
            &record.token,
            record.subj_start,
            record.subj_end,
            record.subj_type,
        )?;
        let tail = span_from(
            index,
            &record.token,
            record.obj_start,
            record.obj_end,
            record.obj_type,
        )?;
        examples.push(RelationExample {
            id: record.id.unwrap_or_else(|| format!("record-{index}")),
            tokens: record.token,
            head,
            tail,
            gold: record.relation,
            split,
        });
    }
    Ok(examples)
}

/// Loads a SemEval split, preserving file order. The `<e1>` span becomes the
/// head and `<e2>` the tail; markers are stripped from the tokens and the
/// directed relation label is kept verbatim.
pub fn load_semeval(
    path: &Path,
    schema: &RelationSchema,
    split: Split,
) -> Result<Vec<RelationExample>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_semeval_text(&text, schema, split)
}

/// Parses SemEval-format text from a string; see [`load_semeval`].
pub fn parse_semeval_text(
    text: &str,
    schema: &RelationSchema,
    split: Split,
) -> Result<Vec<RelationExample>, CorpusError> {
    let mut examples = Vec::new();
    let mut pending: Option<(usize, String, String)> = None; // (line, id, sentence)

    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("Comment") {
            continue;
        }
        match pending.take() {
            None => {
                let (id, sentence) = split_semeval_sentence_line(line_no + 1, line)?;
                pending = Some((line_no + 1, id, sentence));
            }
            Some((sentence_line, id, sentence)) => {
                let label = line.to_string();
                if !schema.contains(&label) {
                    return Err(CorpusError::UnknownLabel {
                        index: examples.len(),
                        label,
                    });
                }
                examples.push(semeval_example(sentence_line, id, &sentence, label, split)?);
            }
        }
    }
    if let Some((line, _, _)) = pending {
        return Err(CorpusError::MalformedSentence {
            line,
            detail: "sentence has no relation label line".to_string(),
        });
    }
    Ok(examples)
}

fn split_semeval_sentence_line(
    line_no: usize,
    line: &str,
) -> Result<(String, String), CorpusError> {
    let (id, rest) = match line.split_once('\t') {
        Some((id, rest)) if id.chars().all(|c| c.is_ascii_digit()) && !id.is_empty() => {
            (id.to_string(), rest)
        }
        _ => (format!("line-{line_no}"), line),
    };
    let sentence = rest.trim().trim_matches('"').to_string();
    if !sentence.contains("<e1>") {
        return Err(CorpusError::MalformedSentence {
            line: line_no,
            detail: "expected a sentence containing <e1>/<e2> markers".to_string(),
        });
    }
    Ok((id, sentence))
}

fn semeval_example(
    line: usize,
    id: String,
    sentence: &str,
    gold: String,
    split: Split,
) -> Result<RelationExample, CorpusError> {
    // Isolate the marker tags as their own whitespace tokens, then walk the
    // token stream recording where each marked span starts and ends.
    let spaced = sentence
        .replace("<e1>", " <e1> ")
        .replace("</e1>", " </e1> ")
        .replace("<e2>", " <e2> ")
        .replace("</e2>", " </e2> ");

    let mut tokens: Vec<String> = Vec::new();
    let mut e1: (Option<usize>, Option<usize>) = (None, None);
    let mut e2: (Option<usize>, Option<usize>) = (None, None);
    for piece in spaced.split_whitespace() {
        match piece {
            "<e1>" => e1.0 = Some(tokens.len()),
            "</e1>" => e1.1 = Some(tokens.len()),
            "<e2>" => e2.0 = Some(tokens.len()),
            "</e2>" => e2.1 = Some(tokens.len()),
            word => tokens.push(word.to_string()),
        }
    }

    let spans = [("e1", e1), ("e2", e2)].map(|(name, (start, end))| match (start, end) {
        (Some(s), Some(e)) if s < e => Ok((s, e - 1)),
        _ => Err(CorpusError::MalformedSentence {
            line,
            detail: format!("missing or empty <{name}> span"),
        }),
    });
    let [head_span, tail_span] = spans;
    let (hs, he) = head_span?;
    let (ts, te) = tail_span?;

    Ok(RelationExample {
        id,
        head: EntitySpan {
            start: hs,
            end: he,
            surface: tokens[hs..=he].join(" "),
            entity_type: None,
        },
        tail: EntitySpan {
            start: ts,
            end: te,
            surface: tokens[ts..=te].join(" "),
            entity_type: None,
        },
        tokens,
        gold,
        split,
    })
}

/// Uniform sample of `n` examples without replacement, deterministic for a
/// fixed seed, returned in the pool's original order.
pub fn sample_test(
    examples: &[RelationExample],
    n: usize,
    seed: u64,
) -> Result<Vec<RelationExample>, CorpusError> {
    if n > examples.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            available: examples.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = sample_indices(&mut rng, examples.len(), n);
    Ok(chosen.into_iter().map(|i| examples[i].clone()).collect())
}

/// Partial Fisher–Yates: draws `n` distinct indices out of `len`, returned
/// sorted ascending.
fn sample_indices(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..len).collect();
    for i in 0..n {
        let j = rng.gen_range(i..len);
        indices.swap(i, j);
    }
    let mut chosen = indices[..n].to_vec();
    chosen.sort_unstable();
    chosen
}

/// A relation that had fewer than `k` training examples available.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortage {
    pub relation: String,
    pub available: usize,
    pub requested: usize,
}

/// The K-per-relation pool demonstrations are drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    pub examples: Vec<RelationExample>,
    pub shortages: Vec<Shortage>,
}

/// Samples up to `k` training examples per relation (including NoTA).
/// Relations with fewer than `k` examples contribute everything they have
/// and are reported in `shortages`. Deterministic per seed; the returned
/// examples keep the train file's original order.
pub fn sample_kshot(
    train: &[RelationExample],
    k: usize,
    seed: u64,
    schema: &RelationSchema,
) -> SupportSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = Vec::new();
    let mut shortages = Vec::new();
    for relation in &schema.relations {
        let pool: Vec<usize> = train
            .iter()
            .enumerate()
            .filter(|(_, ex)| ex.gold == relation.label)
            .map(|(i, _)| i)
            .collect();
        if pool.is_empty() {
            continue;
        }
        if pool.len() <= k {
            if pool.len() < k {
                shortages.push(Shortage {
                    relation: relation.label.clone(),
                    available: pool.len(),
                    requested: k,
                });
            }
            picked.extend(pool);
        } else {
            let chosen = sample_indices(&mut rng, pool.len(), k);
            picked.extend(chosen.into_iter().map(|i| pool[i]));
        }
    }
    picked.sort_unstable();
    SupportSet {
        examples: picked.into_iter().map(|i| train[i].clone()).collect(),
        shortages,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{schema_from_strs, DatasetId};

    fn tiny_schema() -> RelationSchema {
        schema_from_strs(
            DatasetId::Tacred,
            r#"{
                "no_relation": "{E_h} has no known relations to {E_t}",
                "per:title": "{E_h} is a {E_t}",
                "org:founded_by": "{E_h} was founded by {E_t}"
            }"#,
            None,
        )
        .unwrap()
        .schema
    }

    fn semeval_schema() -> RelationSchema {
        schema_from_strs(
            DatasetId::Semeval,
            r#"{
                "Other": "{subj} has no known relations to {obj}",
                "Component-Whole(e1,e2)": "{subj} is the component of {obj}"
            }"#,
            None,
        )
        .unwrap()
        .schema
    }

    #[test]
    fn tacred_records_map_subject_to_head() {
        let json = r#"[{
            "id": "e1",
            "token": ["Bill", "Gates", "founded", "Microsoft", "."],
            "subj_start": 3, "subj_end": 3,
            "obj_start": 0, "obj_end": 1,
            "subj_type": "ORGANIZATION", "obj_type": "PERSON",
            "relation": "org:founded_by"
        }]"#;
        let examples = parse_tacred_json(json, &tiny_schema(), Split::Test).unwrap();
        assert_eq!(examples.len(), 1);
        let ex = &examples[0];
        assert_eq!(ex.head.surface, "Microsoft");
        assert_eq!(ex.head.entity_type.as_deref(), Some("ORGANIZATION"));
        assert_eq!(ex.tail.surface, "Bill Gates");
        assert_eq!(ex.sentence(), "Bill Gates founded Microsoft .");
    }

    #[test]
    fn tacred_span_out_of_range_reports_record_index() {
        let json = r#"[
            {"token": ["a", "b"], "subj_start": 0, "subj_end": 0,
             "obj_start": 1, "obj_end": 1, "relation": "no_relation"},
            {"token": ["a", "b"], "subj_start": 0, "subj_end": 12,
             "obj_start": 1, "obj_end": 1, "relation": "no_relation"}
        ]"#;
        match parse_tacred_json(json, &tiny_schema(), Split::Train).unwrap_err() {
            CorpusError::SpanOutOfRange { index, end, token_count, .. } => {
                assert_eq!(index, 1);
                assert_eq!(end, 12);
                assert_eq!(token_count, 2);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn tacred_unknown_relation_fails() {
        let json = r#"[{"token": ["x"], "subj_start": 0, "subj_end": 0,
            "obj_start": 0, "obj_end": 0, "relation": "per:ghost"}]"#;
        assert!(matches!(
            parse_tacred_json(json, &tiny_schema(), Split::Test).unwrap_err(),
            CorpusError::UnknownLabel { index: 0, label } if label == "per:ghost"
        ));
    }

    #[test]
    fn semeval_markers_become_spans() {
        let text = "1\t\"The <e1>engine</e1> of the <e2>car</e2> roared.\"\nComponent-Whole(e1,e2)\nComment:\n\n";
        let examples = parse_semeval_text(text, &semeval_schema(), Split::Test).unwrap();
        let ex = &examples[0];
        assert_eq!(ex.id, "1");
        assert_eq!(ex.head.surface, "engine");
        assert_eq!(ex.tail.surface, "car");
        assert!(ex.head.entity_type.is_none());
        assert_eq!(ex.gold, "Component-Whole(e1,e2)");
        assert_eq!(ex.sentence(), "The engine of the car roared.");
    }

    #[test]
    fn semeval_missing_marker_is_an_error() {
        let text = "1\t\"The <e1>engine</e1> of the car roared.\"\nOther\n";
        assert!(matches!(
            parse_semeval_text(text, &semeval_schema(), Split::Test).unwrap_err(),
            CorpusError::MalformedSentence { .. }
        ));
    }

    #[test]
    fn semeval_other_maps_to_nota() {
        let text = "7\t\"A <e1>x</e1> near a <e2>y</e2>.\"\nOther\n";
        let schema = semeval_schema();
        let examples = parse_semeval_text(text, &schema, Split::Test).unwrap();
        assert_eq!(examples[0].gold, schema.nota_label);
    }

    fn numbered_examples(n: usize) -> Vec<RelationExample> {
        (0..n)
            .map(|i| RelationExample {
                id: format!("ex-{i}"),
                tokens: vec!["tok".to_string()],
                head: EntitySpan {
                    start: 0,
                    end: 0,
                    surface: "tok".to_string(),
                    entity_type: Some("PERSON".to_string()),
                },
                tail: EntitySpan {
                    start: 0,
                    end: 0,
                    surface: "tok".to_string(),
                    entity_type: Some("TITLE".to_string()),
                },
                gold: if i % 3 == 0 { "no_relation" } else { "per:title" }.to_string(),
                split: Split::Train,
            })
            .collect()
    }

    #[test]
    fn sample_test_is_deterministic_and_order_preserving() {
        let pool = numbered_examples(200);
        let a = sample_test(&pool, 50, 7).unwrap();
        let b = sample_test(&pool, 50, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        // Original order preserved.
        let positions: Vec<usize> = a
            .iter()
            .map(|ex| ex.id["ex-".len()..].parse().unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        // Distinct seeds disagree on a pool this large.
        let c = sample_test(&pool, 50, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_test_exhaustive_and_oversized() {
        let pool = numbered_examples(10);
        let all = sample_test(&pool, 10, 3).unwrap();
        assert_eq!(all, pool);
        assert!(matches!(
            sample_test(&pool, 11, 3).unwrap_err(),
            CorpusError::SampleTooLarge { requested: 11, available: 10 }
        ));
    }

    #[test]
    fn kshot_caps_per_relation_and_reports_shortages() {
        let schema = tiny_schema();
        let mut train = numbered_examples(30);
        // Make org:founded_by rare: exactly 2 examples.
        train[1].gold = "org:founded_by".to_string();
        train[2].gold = "org:founded_by".to_string();
        for ex in train.iter_mut().skip(3) {
            if ex.gold == "org:founded_by" {
                ex.gold = "per:title".to_string();
            }
        }
        let support = sample_kshot(&train, 4, 1, &schema);
        for relation in schema.labels() {
            let count = support.examples.iter().filter(|e| e.gold == relation).count();
            assert!(count <= 4, "{relation} has {count} > 4");
        }
        assert_eq!(
            support.shortages,
            vec![Shortage {
                relation: "org:founded_by".to_string(),
                available: 2,
                requested: 4
            }]
        );
        // No duplicate ids.
        let mut ids: Vec<&str> = support.examples.iter().map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), support.examples.len());
        // Deterministic per seed, different across seeds 1..=3.
        let again = sample_kshot(&train, 4, 1, &schema);
        assert_eq!(support, again);
        let other = sample_kshot(&train, 4, 2, &schema);
        assert_ne!(support, other);
    }
}
