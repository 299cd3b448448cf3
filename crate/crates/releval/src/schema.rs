//! Relation label spaces: per-relation verbalization templates, the
//! none-of-the-above (NoTA) designation, and entity-type constraints.
//!
//! A [`RelationSchema`] is loaded from two JSON documents: a template file
//! mapping each relation label to one or more patterns containing a head
//! slot `{E_h}` and a tail slot `{E_t}`, and an optional constraint file
//! mapping labels to the entity types their head and tail arguments accept.
//! Key order in the template file defines the relation order everywhere
//! downstream (option ordering, tie-breaking, reports).

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Head-entity placeholder in canonical template patterns.
pub const HEAD_SLOT: &str = "{E_h}";
/// Tail-entity placeholder in canonical template patterns.
pub const TAIL_SLOT: &str = "{E_t}";

/// The four datasets the toolkit knows how to load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetId {
    Tacred,
    Retacred,
    Tacrev,
    Semeval,
}

impl DatasetId {
    /// Label used for the none-of-the-above relation in this dataset's files.
    pub fn nota_label(self) -> &'static str {
        match self {
            DatasetId::Tacred | DatasetId::Retacred | DatasetId::Tacrev => "no_relation",
            DatasetId::Semeval => "Other",
        }
    }

    /// SemEval is the only supported dataset without entity types; its
    /// candidate sets are therefore never type-filtered.
    pub fn has_entity_types(self) -> bool {
        !matches!(self, DatasetId::Semeval)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Tacred => "tacred",
            DatasetId::Retacred => "retacred",
            DatasetId::Tacrev => "tacrev",
            DatasetId::Semeval => "semeval",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tacred" => Ok(DatasetId::Tacred),
            "retacred" => Ok(DatasetId::Retacred),
            "tacrev" => Ok(DatasetId::Tacrev),
            "semeval" => Ok(DatasetId::Semeval),
            other => Err(SchemaError::UnknownDataset {
                name: other.to_string(),
            }),
        }
    }
}

/// Textual order of the two slots within a pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotOrder {
    HeadFirst,
    TailFirst,
}

/// What is wrong with a template pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotIssue {
    MissingHeadSlot,
    MissingTailSlot,
    DuplicateHeadSlot,
    DuplicateTailSlot,
}

impl fmt::Display for SlotIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            SlotIssue::MissingHeadSlot => "missing head slot {E_h}",
            SlotIssue::MissingTailSlot => "missing tail slot {E_t}",
            SlotIssue::DuplicateHeadSlot => "head slot {E_h} appears more than once",
            SlotIssue::DuplicateTailSlot => "tail slot {E_t} appears more than once",
        };
        f.write_str(msg)
    }
}

/// A verbalization pattern with exactly one head slot and one tail slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pattern: String,
    slot_order: SlotOrder,
}

impl Template {
    /// Parses a canonical pattern, rejecting missing or duplicated slots.
    pub fn parse(pattern: &str) -> Result<Template, SlotIssue> {
        let head_count = pattern.matches(HEAD_SLOT).count();
        let tail_count = pattern.matches(TAIL_SLOT).count();
        match (head_count, tail_count) {
            (0, _) => return Err(SlotIssue::MissingHeadSlot),
            (_, 0) => return Err(SlotIssue::MissingTailSlot),
            (h, _) if h > 1 => return Err(SlotIssue::DuplicateHeadSlot),
            (_, t) if t > 1 => return Err(SlotIssue::DuplicateTailSlot),
            _ => {}
        }
        let head_pos = pattern.find(HEAD_SLOT).expect("head slot present");
        let tail_pos = pattern.find(TAIL_SLOT).expect("tail slot present");
        let slot_order = if head_pos < tail_pos {
            SlotOrder::HeadFirst
        } else {
            SlotOrder::TailFirst
        };
        Ok(Template {
            pattern: pattern.to_string(),
            slot_order,
        })
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn slot_order(&self) -> SlotOrder {
        self.slot_order
    }
}

/// One relation type within a schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub label: String,
    pub is_nota: bool,
    pub templates: Vec<Template>,
    /// Entity types the head argument accepts; empty means unconstrained.
    pub head_types: BTreeSet<String>,
    /// Entity types the tail argument accepts; empty means unconstrained.
    pub tail_types: BTreeSet<String>,
}

impl RelationType {
    /// Whether an example with the given head/tail entity types may carry
    /// this relation. An absent entity type passes every constraint, which
    /// is how SemEval examples keep the full label space.
    pub fn admits(&self, head_type: Option<&str>, tail_type: Option<&str>) -> bool {
        let head_ok = self.head_types.is_empty()
            || head_type.map_or(true, |t| self.head_types.contains(t));
        let tail_ok = self.tail_types.is_empty()
            || tail_type.map_or(true, |t| self.tail_types.contains(t));
        head_ok && tail_ok
    }
}

/// A dataset's full label space in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    pub dataset_id: DatasetId,
    pub relations: Vec<RelationType>,
    pub nota_label: String,
    pub has_entity_types: bool,
}

impl RelationSchema {
    pub fn relation(&self, label: &str) -> Option<&RelationType> {
        self.relations.iter().find(|r| r.label == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.relation(label).is_some()
    }

    /// Position of a label in schema order.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.label == label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.relations.iter().map(|r| r.label.as_str())
    }

    /// Non-NoTA relations in schema order.
    pub fn positive_relations(&self) -> impl Iterator<Item = &RelationType> {
        self.relations.iter().filter(|r| !r.is_nota)
    }

    pub fn nota(&self) -> &RelationType {
        self.relation(&self.nota_label)
            .expect("schema invariant: NoTA relation exists")
    }

    /// Stable JSON form; reloading with [`RelationSchema::from_json`] yields
    /// an identical schema, order included.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json(json: &str) -> Result<RelationSchema, SchemaError> {
        serde_json::from_str(json).map_err(|source| SchemaError::Json {
            context: "schema document".to_string(),
            source,
        })
    }
}

/// A named template mapping usable with any schema of the same dataset,
/// e.g. the alternative verbalization styles used in robustness runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub name: String,
    pub dataset_id: DatasetId,
    pub mapping: IndexMap<String, Vec<Template>>,
}

impl TemplateSet {
    pub fn templates(&self, label: &str) -> Option<&[Template]> {
        self.mapping.get(label).map(|v| v.as_slice())
    }

    /// The template set a schema was loaded with.
    pub fn from_schema(schema: &RelationSchema, name: &str) -> TemplateSet {
        TemplateSet {
            name: name.to_string(),
            dataset_id: schema.dataset_id,
            mapping: schema
                .relations
                .iter()
                .map(|r| (r.label.clone(), r.templates.clone()))
                .collect(),
        }
    }
}

/// Result of loading a schema: the schema itself plus non-fatal warnings,
/// e.g. labels a constraint file does not cover.
#[derive(Debug, Clone)]
pub struct LoadedSchema {
    pub schema: RelationSchema,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("unknown dataset `{name}` (expected tacred, retacred, tacrev, or semeval)")]
    UnknownDataset { name: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {context}: {source}")]
    Json {
        context: String,
        source: serde_json::Error,
    },
    #[error("template file has no `{expected}` relation, required as NoTA for {dataset}")]
    MissingNota {
        dataset: DatasetId,
        expected: String,
    },
    #[error("relation `{label}` has an empty template list")]
    EmptyTemplates { label: String },
    #[error("relation `{label}` template `{pattern}`: {issue}")]
    BadTemplate {
        label: String,
        pattern: String,
        issue: SlotIssue,
    },
    #[error("constraint file references unknown relation `{label}`")]
    UnknownConstraintLabel { label: String },
    #[error("template set `{name}` is missing schema relation `{label}`")]
    TemplateSetMissingLabel { name: String, label: String },
    #[error("template set `{name}` contains label `{label}` absent from the schema")]
    TemplateSetExtraLabel { name: String, label: String },
}

/// One pattern or a list of patterns for a label in a template file.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TemplateEntry {
    One(String),
    Many(Vec<String>),
}

impl TemplateEntry {
    fn into_patterns(self) -> Vec<String> {
        match self {
            TemplateEntry::One(p) => vec![p],
            TemplateEntry::Many(ps) => ps,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ConstraintEntry {
    #[serde(default)]
    head_types: BTreeSet<String>,
    #[serde(default)]
    tail_types: BTreeSet<String>,
}

/// SemEval template files may use the `{subj}`/`{obj}` spelling; canonicalize
/// to the head/tail slots before parsing.
fn normalize_pattern(dataset: DatasetId, pattern: &str) -> String {
    if dataset == DatasetId::Semeval {
        pattern.replace("{subj}", HEAD_SLOT).replace("{obj}", TAIL_SLOT)
    } else {
        pattern.to_string()
    }
}

fn parse_templates(
    dataset: DatasetId,
    json: &str,
) -> Result<IndexMap<String, Vec<Template>>, SchemaError> {
    let raw: IndexMap<String, TemplateEntry> =
        serde_json::from_str(json).map_err(|source| SchemaError::Json {
            context: "template file".to_string(),
            source,
        })?;
    let mut mapping = IndexMap::with_capacity(raw.len());
    for (label, entry) in raw {
        let patterns = entry.into_patterns();
        if patterns.is_empty() {
            return Err(SchemaError::EmptyTemplates { label });
        }
        let mut templates = Vec::with_capacity(patterns.len());
        for pattern in patterns {
            let canonical = normalize_pattern(dataset, &pattern);
            let template =
                Template::parse(&canonical).map_err(|issue| SchemaError::BadTemplate {
                    label: label.clone(),
                    pattern,
                    issue,
                })?;
            templates.push(template);
        }
        mapping.insert(label, templates);
    }
    Ok(mapping)
}

/// Builds a schema from in-memory JSON documents. Relation order equals the
/// template file's key order; with no constraint document every relation is
/// unconstrained.
pub fn schema_from_strs(
    dataset: DatasetId,
    templates_json: &str,
    constraints_json: Option<&str>,
) -> Result<LoadedSchema, SchemaError> {
    let mapping = parse_templates(dataset, templates_json)?;
    let nota = dataset.nota_label();
    if !mapping.contains_key(nota) {
        return Err(SchemaError::MissingNota {
            dataset,
            expected: nota.to_string(),
        });
    }

    let mut relations: Vec<RelationType> = mapping
        .into_iter()
        .map(|(label, templates)| RelationType {
            is_nota: label == nota,
            label,
            templates,
            head_types: BTreeSet::new(),
            tail_types: BTreeSet::new(),
        })
        .collect();

    let mut warnings = Vec::new();
    if let Some(json) = constraints_json {
        let constraints: IndexMap<String, ConstraintEntry> =
            serde_json::from_str(json).map_err(|source| SchemaError::Json {
                context: "constraint file".to_string(),
                source,
            })?;
        for label in constraints.keys() {
            if !relations.iter().any(|r| &r.label == label) {
                return Err(SchemaError::UnknownConstraintLabel {
                    label: label.clone(),
                });
            }
        }
        for relation in &mut relations {
            match constraints.get(&relation.label) {
                Some(entry) => {
                    relation.head_types = entry.head_types.clone();
                    relation.tail_types = entry.tail_types.clone();
                }
                None if !relation.is_nota => {
                    // A transcription gap in the constraint tables must be
                    // visible, not silently unconstrained.
                    warnings.push(format!(
                        "constraint file has no entry for `{}`; relation left unconstrained",
                        relation.label
                    ));
                }
                None => {}
            }
        }
    }

    Ok(LoadedSchema {
        schema: RelationSchema {
            dataset_id: dataset,
            relations,
            nota_label: nota.to_string(),
            has_entity_types: dataset.has_entity_types(),
        },
        warnings,
    })
}

/// Loads a schema from a template file and an optional constraint file.
pub fn load_schema(
    dataset: DatasetId,
    template_file: &Path,
    constraint_file: Option<&Path>,
) -> Result<LoadedSchema, SchemaError> {
    let templates = read_file(template_file)?;
    let constraints = match constraint_file {
        Some(path) => Some(read_file(path)?),
        None => None,
    };
    schema_from_strs(dataset, &templates, constraints.as_deref())
}

/// Parses a named template set from JSON and validates it against a schema:
/// every schema label must be covered and no extra labels are allowed.
pub fn template_set_from_str(
    name: &str,
    schema: &RelationSchema,
    json: &str,
) -> Result<TemplateSet, SchemaError> {
    let mapping = parse_templates(schema.dataset_id, json)?;
    for label in mapping.keys() {
        if !schema.contains(label) {
            return Err(SchemaError::TemplateSetExtraLabel {
                name: name.to_string(),
                label: label.clone(),
            });
        }
    }
    for relation in &schema.relations {
        if !mapping.contains_key(&relation.label) {
            return Err(SchemaError::TemplateSetMissingLabel {
                name: name.to_string(),
                label: relation.label.clone(),
            });
        }
    }
    Ok(TemplateSet {
        name: name.to_string(),
        dataset_id: schema.dataset_id,
        mapping,
    })
}

pub fn load_template_set(
    name: &str,
    schema: &RelationSchema,
    path: &Path,
) -> Result<TemplateSet, SchemaError> {
    let json = read_file(path)?;
    template_set_from_str(name, schema, &json)
}

fn read_file(path: &Path) -> Result<String, SchemaError> {
    std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A single invariant violation found by [`validate_schema`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoNota,
    MultipleNota { labels: Vec<String> },
    NotaLabelMismatch { nota_label: String },
    DuplicateLabel { label: String },
    NoTemplates { label: String },
    BadTemplate { label: String, pattern: String, issue: SlotIssue },
    SlotOrderMismatch { label: String, pattern: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoNota => write!(f, "no relation is marked as NoTA"),
            Violation::MultipleNota { labels } => {
                write!(f, "more than one NoTA relation: {}", labels.join(", "))
            }
            Violation::NotaLabelMismatch { nota_label } => write!(
                f,
                "nota_label `{nota_label}` does not name a relation with is_nota = true"
            ),
            Violation::DuplicateLabel { label } => write!(f, "duplicate label `{label}`"),
            Violation::NoTemplates { label } => {
                write!(f, "relation `{label}` has no templates")
            }
            Violation::BadTemplate { label, pattern, issue } => {
                write!(f, "relation `{label}` template `{pattern}`: {issue}")
            }
            Violation::SlotOrderMismatch { label, pattern } => write!(
                f,
                "relation `{label}` template `{pattern}`: slot_order disagrees with the pattern"
            ),
        }
    }
}

/// Checks every schema invariant and reports violations as data rather than
/// failing. An empty report means the schema is well-formed.
pub fn validate_schema(schema: &RelationSchema) -> Vec<Violation> {
    let mut violations = Vec::new();

    let nota_labels: Vec<String> = schema
        .relations
        .iter()
        .filter(|r| r.is_nota)
        .map(|r| r.label.clone())
        .collect();
    match nota_labels.len() {
        0 => violations.push(Violation::NoNota),
        1 => {}
        _ => violations.push(Violation::MultipleNota {
            labels: nota_labels.clone(),
        }),
    }
    if !schema
        .relations
        .iter()
        .any(|r| r.is_nota && r.label == schema.nota_label)
    {
        violations.push(Violation::NotaLabelMismatch {
            nota_label: schema.nota_label.clone(),
        });
    }

    let mut seen = BTreeSet::new();
    for relation in &schema.relations {
        if !seen.insert(relation.label.clone()) {
            violations.push(Violation::DuplicateLabel {
                label: relation.label.clone(),
            });
        }
        if relation.templates.is_empty() {
            violations.push(Violation::NoTemplates {
                label: relation.label.clone(),
            });
        }
        for template in &relation.templates {
            match Template::parse(template.pattern()) {
                Ok(reparsed) => {
                    if reparsed.slot_order() != template.slot_order() {
                        violations.push(Violation::SlotOrderMismatch {
                            label: relation.label.clone(),
                            pattern: template.pattern().to_string(),
                        });
                    }
                }
                Err(issue) => violations.push(Violation::BadTemplate {
                    label: relation.label.clone(),
                    pattern: template.pattern().to_string(),
                    issue,
                }),
            }
        }
    }

    violations
}
