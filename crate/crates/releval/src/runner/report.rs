//! Cross-run comparison tables.
//!
//! Reads finished run directories (manifest + metrics) and renders an
//! aligned P/R/F1 grid per dataset, with a ΔF1 column against the vanilla
//! baseline where both runs exist, and a mean row for groups that differ
//! only in seed (the few-shot multi-subset protocol).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evaluate::MetricsReport;
use crate::formulate::Formulation;
use crate::schema::DatasetId;

use super::{RunManifest, RunnerError};

/// One run's identity and metrics, as read back from its directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: DatasetId,
    pub formulation: Formulation,
    pub seed: u64,
    pub k_shot: usize,
    pub chosen_n_demos: Option<usize>,
    pub metrics: MetricsReport,
}

pub fn load_run_summary(run_dir: &Path) -> Result<RunSummary, RunnerError> {
    let read = |name: &str| -> Result<String, RunnerError> {
        let path = run_dir.join(name);
        std::fs::read_to_string(&path).map_err(|source| RunnerError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    let manifest: RunManifest =
        serde_json::from_str(&read("manifest.json")?).map_err(|e| RunnerError::Config {
            detail: format!("{} has a malformed manifest: {e}", run_dir.display()),
        })?;
    let metrics: MetricsReport =
        serde_json::from_str(&read("metrics.json")?).map_err(|e| RunnerError::Config {
            detail: format!("{} has malformed metrics: {e}", run_dir.display()),
        })?;
    Ok(RunSummary {
        dataset: manifest.config.dataset,
        formulation: manifest.config.formulation,
        seed: manifest.config.seed,
        k_shot: manifest.config.k_shot,
        chosen_n_demos: manifest.chosen_n_demos,
        metrics,
    })
}

/// One rendered table row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: DatasetId,
    pub formulation: Formulation,
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub micro_f1: f64,
    pub delta_f1_vs_vanilla: Option<f64>,
}

/// Machine-readable comparison plus its fixed-width rendering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
    pub table: String,
}

/// Builds the comparison over any number of runs. Runs sharing (dataset,
/// formulation, k_shot, n_demos) but differing in seed get a mean row.
pub fn emit_report(runs: &[RunSummary]) -> ComparisonReport {
    type GroupKey = (String, String, usize, Option<usize>);
    let mut groups: BTreeMap<GroupKey, Vec<&RunSummary>> = BTreeMap::new();
    for run in runs {
        groups
            .entry((
                run.dataset.to_string(),
                run.formulation.to_string(),
                run.k_shot,
                run.chosen_n_demos,
            ))
            .or_default()
            .push(run);
    }

    // Vanilla mean F1 per dataset, the baseline for delta columns.
    let mut vanilla_f1: BTreeMap<String, f64> = BTreeMap::new();
    for ((dataset, formulation, _, _), members) in &groups {
        if formulation == Formulation::Vanilla.as_str() {
            let mean = members
                .iter()
                .map(|r| r.metrics.micro_f1_excl_nota)
                .sum::<f64>()
                / members.len() as f64;
            vanilla_f1.insert(dataset.clone(), mean);
        }
    }

    let mut rows = Vec::new();
    for ((_, _, k_shot, _), members) in &groups {
        for run in members {
            rows.push(make_row(run, *k_shot, &vanilla_f1, None));
        }
        if members.len() > 1 {
            let mean = mean_summary(members);
            rows.push(make_row(
                &mean,
                *k_shot,
                &vanilla_f1,
                Some(format!("mean of {} seeds", members.len())),
            ));
        }
    }

    let table = render_table(&rows);
    ComparisonReport { rows, table }
}

fn make_row(
    run: &RunSummary,
    k_shot: usize,
    vanilla_f1: &BTreeMap<String, f64>,
    mean_label: Option<String>,
) -> ReportRow {
    let shot = if k_shot == 0 {
        "zero-shot".to_string()
    } else {
        format!("{k_shot}-shot")
    };
    let label = match mean_label {
        Some(tag) => format!("{shot} {tag}"),
        None => format!("{shot} seed={}", run.seed),
    };
    let delta = vanilla_f1.get(&run.dataset.to_string()).and_then(|base| {
        (run.formulation != Formulation::Vanilla)
            .then(|| run.metrics.micro_f1_excl_nota - base)
    });
    ReportRow {
        dataset: run.dataset,
        formulation: run.formulation,
        label,
        precision: run.metrics.precision,
        recall: run.metrics.recall,
        micro_f1: run.metrics.micro_f1_excl_nota,
        delta_f1_vs_vanilla: delta,
    }
}

fn mean_summary(members: &[&RunSummary]) -> RunSummary {
    let n = members.len() as f64;
    let mean = |f: &dyn Fn(&RunSummary) -> f64| members.iter().map(|r| f(r)).sum::<f64>() / n;
    let first = members[0];
    RunSummary {
        dataset: first.dataset,
        formulation: first.formulation,
        seed: first.seed,
        k_shot: first.k_shot,
        chosen_n_demos: first.chosen_n_demos,
        metrics: MetricsReport {
            precision: mean(&|r| r.metrics.precision),
            recall: mean(&|r| r.metrics.recall),
            micro_f1_excl_nota: mean(&|r| r.metrics.micro_f1_excl_nota),
            macro_f1_incl_nota: mean(&|r| r.metrics.macro_f1_incl_nota),
            pvn_micro_f1: mean(&|r| r.metrics.pvn_micro_f1),
            pvn_macro_f1: mean(&|r| r.metrics.pvn_macro_f1),
            n_examples: first.metrics.n_examples,
            fallback_rate: mean(&|r| r.metrics.fallback_rate),
        },
    }
}

fn render_table(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:<13} {:<22} {:>7} {:>7} {:>7} {:>8}\n",
        "dataset", "formulation", "run", "P", "R", "F1", "dF1"
    ));
    out.push_str(&format!("{:-<79}\n", ""));
    for row in rows {
        let delta = row
            .delta_f1_vs_vanilla
            .map(|d| format!("{d:+.4}"))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{:<10} {:<13} {:<22} {:>7.4} {:>7.4} {:>7.4} {:>8}\n",
            row.dataset.to_string(),
            row.formulation.to_string(),
            row.label,
            row.precision,
            row.recall,
            row.micro_f1,
            delta
        ));
    }
    out
}
