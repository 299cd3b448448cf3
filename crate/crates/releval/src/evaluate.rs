//! The metric suite: micro F1 with NoTA excluded (the headline RE metric),
//! NoTA-included macro F1, and binary positive-vs-NoTA micro/macro F1.
//!
//! Conventions, surfaced in the report so alternative choices stay
//! auditable: any 0/0 ratio is 0; macro averages skip classes with neither
//! gold nor predicted instances; a correct positive prediction requires an
//! exact label match, including direction for directed label sets.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::RelationSchema;

/// Exact-match tallies for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ClassCounts {
    fn gold(&self) -> usize {
        self.tp + self.fn_
    }

    fn predicted(&self) -> usize {
        self.tp + self.fp
    }

    fn active(&self) -> bool {
        self.gold() > 0 || self.predicted() > 0
    }

    fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

/// The four cells of the positive-vs-NoTA binary confusion matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotaCells {
    /// gold positive, predicted positive (any positive label).
    pub pos_pos: usize,
    /// gold positive, predicted NoTA.
    pub pos_nota: usize,
    /// gold NoTA, predicted positive.
    pub nota_pos: usize,
    /// gold NoTA, predicted NoTA.
    pub nota_nota: usize,
}

/// Per-relation and aggregate confusion tallies for one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_class: IndexMap<String, ClassCounts>,
    pub nota_label: String,
    pub n: usize,
    pub gold_positive: usize,
    pub predicted_positive: usize,
    /// Predictions where the positive gold label was matched exactly.
    pub correct_positive: usize,
    pub nota_cells: NotaCells,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("gold and prediction lists differ in length: {golds} vs {preds}")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("label `{label}` is not in the schema")]
    UnknownLabel { label: String },
}

fn ratio(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Tallies per-relation and binary confusion counts over aligned gold and
/// prediction vectors.
pub fn confusion(
    golds: &[String],
    preds: &[String],
    schema: &RelationSchema,
) -> Result<ConfusionCounts, EvalError> {
    if golds.len() != preds.len() {
        return Err(EvalError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    let per_class: IndexMap<String, ClassCounts> = schema
        .labels()
        .map(|l| (l.to_string(), ClassCounts::default()))
        .collect();
    for label in golds.iter().chain(preds) {
        if !per_class.contains_key(label) {
            return Err(EvalError::UnknownLabel {
                label: label.clone(),
            });
        }
    }

    let nota = schema.nota_label.as_str();
    let mut counts = ConfusionCounts {
        per_class,
        nota_label: nota.to_string(),
        n: golds.len(),
        gold_positive: 0,
        predicted_positive: 0,
        correct_positive: 0,
        nota_cells: NotaCells::default(),
    };

    for (gold, pred) in golds.iter().zip(preds) {
        if gold == pred {
            counts.per_class[gold].tp += 1;
        } else {
            counts.per_class[pred].fp += 1;
            counts.per_class[gold].fn_ += 1;
        }

        let gold_pos = gold != nota;
        let pred_pos = pred != nota;
        counts.gold_positive += gold_pos as usize;
        counts.predicted_positive += pred_pos as usize;
        counts.correct_positive += (gold_pos && gold == pred) as usize;
        match (gold_pos, pred_pos) {
            (true, true) => counts.nota_cells.pos_pos += 1,
            (true, false) => counts.nota_cells.pos_nota += 1,
            (false, true) => counts.nota_cells.nota_pos += 1,
            (false, false) => counts.nota_cells.nota_nota += 1,
        }
    }
    Ok(counts)
}

impl ConfusionCounts {
    /// Precision, recall, and micro F1 over positive predictions only.
    pub fn micro_f1_excl_nota(&self) -> (f64, f64, f64) {
        let precision = ratio(self.correct_positive, self.predicted_positive);
        let recall = ratio(self.correct_positive, self.gold_positive);
        (precision, recall, harmonic(precision, recall))
    }

    /// Unweighted mean of per-class F1 over every relation including NoTA;
    /// classes with no gold and no predicted instances are skipped.
    pub fn macro_f1_incl_nota(&self) -> f64 {
        let active: Vec<f64> = self
            .per_class
            .values()
            .filter(|c| c.active())
            .map(|c| c.f1())
            .collect();
        if active.is_empty() {
            0.0
        } else {
            active.iter().sum::<f64>() / active.len() as f64
        }
    }

    /// Micro and macro F1 after collapsing all positive relations against
    /// NoTA. The binary micro F1 over both classes equals accuracy; the
    /// macro is the mean of the two class F1s, skipping an inactive class.
    pub fn pvn_f1(&self) -> (f64, f64) {
        let cells = &self.nota_cells;
        let micro = ratio(cells.pos_pos + cells.nota_nota, self.n);

        let pos = ClassCounts {
            tp: cells.pos_pos,
            fp: cells.nota_pos,
            fn_: cells.pos_nota,
        };
        let nota = ClassCounts {
            tp: cells.nota_nota,
            fp: cells.pos_nota,
            fn_: cells.nota_pos,
        };
        let active: Vec<f64> = [pos, nota]
            .iter()
            .filter(|c| c.active())
            .map(|c| c.f1())
            .collect();
        let macro_f1 = if active.is_empty() {
            0.0
        } else {
            active.iter().sum::<f64>() / active.len() as f64
        };
        (micro, macro_f1)
    }
}

/// The run-level evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub micro_f1_excl_nota: f64,
    pub macro_f1_incl_nota: f64,
    pub pvn_micro_f1: f64,
    pub pvn_macro_f1: f64,
    pub n_examples: usize,
    pub fallback_rate: f64,
}

impl MetricsReport {
    pub fn from_counts(counts: &ConfusionCounts, fallback_rate: f64) -> MetricsReport {
        let (precision, recall, micro) = counts.micro_f1_excl_nota();
        let (pvn_micro, pvn_macro) = counts.pvn_f1();
        MetricsReport {
            precision,
            recall,
            micro_f1_excl_nota: micro,
            macro_f1_incl_nota: counts.macro_f1_incl_nota(),
            pvn_micro_f1: pvn_micro,
            pvn_macro_f1: pvn_macro,
            n_examples: counts.n,
            fallback_rate,
        }
    }

    pub fn from_predictions(
        golds: &[String],
        preds: &[String],
        schema: &RelationSchema,
        fallback_rate: f64,
    ) -> Result<MetricsReport, EvalError> {
        Ok(MetricsReport::from_counts(
            &confusion(golds, preds, schema)?,
            fallback_rate,
        ))
    }

    /// Fixed-width text table for logs.
    pub fn render_table(&self) -> String {
        let rows = [
            ("precision", self.precision),
            ("recall", self.recall),
            ("micro F1 (excl. NoTA)", self.micro_f1_excl_nota),
            ("macro F1 (incl. NoTA)", self.macro_f1_incl_nota),
            ("P-vs-N micro F1", self.pvn_micro_f1),
            ("P-vs-N macro F1", self.pvn_macro_f1),
            ("fallback rate", self.fallback_rate),
        ];
        let mut out = String::new();
        out.push_str(&format!("{:<24}{:>10}\n", "metric", "value"));
        out.push_str(&format!("{:-<34}\n", ""));
        for (name, value) in rows {
            out.push_str(&format!("{name:<24}{value:>10.4}\n"));
        }
        out.push_str(&format!("{:<24}{:>10}\n", "examples", self.n_examples));
        out
    }
}
