//! Synthetic schemas and corpora for pipeline proofs.
//!
//! The synthetic world has three entity types and six positive relations
//! with full type constraints, so candidate sets are small and every gold
//! label of a positive example survives its own constraints. Paired with the
//! oracle backend this closes the loop: perfect answers must produce perfect
//! metrics.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EntitySpan, RelationExample, Split};
use crate::schema::{schema_from_strs, DatasetId, RelationSchema};

const TEMPLATES: &str = r#"{
    "no_relation": "{E_h} has no known relations to {E_t}",
    "per:works_at": "{E_h} is employed by {E_t}",
    "per:born_in": "{E_h} was born in {E_t}",
    "per:knows": "{E_h} is acquainted with {E_t}",
    "org:led_by": "{E_h} is led by {E_t}",
    "org:located_in": "{E_h} is based in {E_t}",
    "org:owns": "{E_h} is the owner of {E_t}"
}"#;

const CONSTRAINTS: &str = r#"{
    "per:works_at": {"head_types": ["PERSON"], "tail_types": ["ORGANIZATION"]},
    "per:born_in": {"head_types": ["PERSON"], "tail_types": ["LOCATION"]},
    "per:knows": {"head_types": ["PERSON"], "tail_types": ["PERSON"]},
    "org:led_by": {"head_types": ["ORGANIZATION"], "tail_types": ["PERSON"]},
    "org:located_in": {"head_types": ["ORGANIZATION"], "tail_types": ["LOCATION"]},
    "org:owns": {"head_types": ["ORGANIZATION"], "tail_types": ["ORGANIZATION"]}
}"#;

const PERSONS: [&str; 6] = ["Ada Ray", "Bo Chen", "Cy Park", "Di Wu", "Eli Moss", "Fay Lund"];
const ORGS: [&str; 5] = ["Acme Labs", "Borel Inc", "Carbide Co", "Delta Mills", "Ember Corp"];
const LOCATIONS: [&str; 4] = ["Lund", "Kyoto", "Dover", "Quito"];

fn pool(entity_type: &str) -> &'static [&'static str] {
    match entity_type {
        "PERSON" => &PERSONS,
        "ORGANIZATION" => &ORGS,
        "LOCATION" => &LOCATIONS,
        other => panic!("no surface pool for entity type {other}"),
    }
}

/// A seven-label schema (six positives plus NoTA) over PERSON,
/// ORGANIZATION, and LOCATION entities.
pub fn synthetic_schema() -> RelationSchema {
    schema_from_strs(DatasetId::Tacred, TEMPLATES, Some(CONSTRAINTS))
        .expect("synthetic schema is well-formed")
        .schema
}

/// Generates `n` examples cycling through all relations including NoTA.
/// Positive examples carry entity types matching their own constraints;
/// NoTA examples borrow a positive relation's type signature so their
/// candidate sets stay non-trivial. Every sentence embeds its example index,
/// so no two examples render the same prompt.
pub fn synthetic_examples(
    schema: &RelationSchema,
    n: usize,
    seed: u64,
    split: Split,
) -> Vec<RelationExample> {
    let positives: Vec<_> = schema.positive_relations().collect();
    let mut cycle: Vec<&str> = positives.iter().map(|r| r.label.as_str()).collect();
    cycle.push(&schema.nota_label);
    let split_tag = match split {
        Split::Train => "train",
        Split::Dev => "dev",
        Split::Test => "test",
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let gold = cycle[i % cycle.len()];
            let signature = if gold == schema.nota_label {
                positives[i % positives.len()]
            } else {
                schema.relation(gold).expect("gold is in schema")
            };
            let head_type = signature
                .head_types
                .iter()
                .next()
                .expect("synthetic relations are constrained")
                .clone();
            let tail_type = signature
                .tail_types
                .iter()
                .next()
                .expect("synthetic relations are constrained")
                .clone();

            let head_pool = pool(&head_type);
            let tail_pool = pool(&tail_type);
            let head_surface = head_pool[rng.gen_range(0..head_pool.len())];
            let tail_surface = loop {
                let candidate = tail_pool[rng.gen_range(0..tail_pool.len())];
                if candidate != head_surface {
                    break candidate;
                }
            };

            let head_tokens: Vec<String> =
                head_surface.split_whitespace().map(str::to_string).collect();
            let tail_tokens: Vec<String> =
                tail_surface.split_whitespace().map(str::to_string).collect();
            let mut tokens = head_tokens.clone();
            tokens.push("appears".to_string());
            tokens.push("alongside".to_string());
            let tail_start = tokens.len();
            tokens.extend(tail_tokens.clone());
            tokens.push("in".to_string());
            tokens.push(split_tag.to_string());
            tokens.push("case".to_string());
            tokens.push(i.to_string());
            tokens.push(".".to_string());

            RelationExample {
                id: format!("{split_tag}-syn-{i:04}"),
                head: EntitySpan {
                    start: 0,
                    end: head_tokens.len() - 1,
                    surface: head_surface.to_string(),
                    entity_type: Some(head_type),
                },
                tail: EntitySpan {
                    start: tail_start,
                    end: tail_start + tail_tokens.len() - 1,
                    surface: tail_surface.to_string(),
                    entity_type: Some(tail_type),
                },
                tokens,
                gold: gold.to_string(),
                split,
            }
        })
        .collect()
}

/// Writes a synthetic dataset directory (train/dev/test in the
/// TACRED-family JSON layout plus template and constraint files) under
/// `root`, and returns the sizes written.
pub fn write_synthetic_data_dir(
    root: &std::path::Path,
    schema: &RelationSchema,
    train: usize,
    dev: usize,
    test: usize,
    seed: u64,
) -> std::io::Result<()> {
    let dataset_dir = root.join(schema.dataset_id.as_str());
    std::fs::create_dir_all(&dataset_dir)?;
    std::fs::create_dir_all(root.join("templates"))?;
    std::fs::create_dir_all(root.join("constraints"))?;

    for (name, count, split, offset) in [
        ("train", train, Split::Train, 0),
        ("dev", dev, Split::Dev, 1),
        ("test", test, Split::Test, 2),
    ] {
        let examples = synthetic_examples(schema, count, seed + offset, split);
        let records: Vec<serde_json::Value> = examples
            .iter()
            .map(|ex| {
                serde_json::json!({
                    "id": ex.id,
                    "token": ex.tokens,
                    "subj_start": ex.head.start,
                    "subj_end": ex.head.end,
                    "obj_start": ex.tail.start,
                    "obj_end": ex.tail.end,
                    "subj_type": ex.head.entity_type,
                    "obj_type": ex.tail.entity_type,
                    "relation": ex.gold,
                })
            })
            .collect();
        std::fs::write(
            dataset_dir.join(format!("{name}.json")),
            serde_json::to_string_pretty(&records)?,
        )?;
    }

    std::fs::write(
        root.join("templates").join(format!(
            "{}_sure.json",
            schema.dataset_id.as_str()
        )),
        TEMPLATES,
    )?;
    std::fs::write(
        root.join("constraints").join(format!(
            "{}_constraints.json",
            schema.dataset_id.as_str()
        )),
        CONSTRAINTS,
    )?;
    Ok(())
}
