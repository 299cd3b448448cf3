//! Command-line driver: run experiments, search demo counts, compare runs,
//! validate schema/data files, and inspect the response cache.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use releval::backend::ResponseCache;
use releval::corpus::{load_semeval, load_tacred_family, Split};
use releval::runner::report::{emit_report, load_run_summary};
use releval::runner::{
    http_backend_from_config, run_experiment, search_n_demos, ExperimentConfig, NDemos,
    RunnerError,
};
use releval::schema::{load_schema, validate_schema, DatasetId};

#[derive(Parser)]
#[command(
    name = "releval",
    version,
    about = "Relation extraction evaluation over instruction-tuned LLMs: \
             multiple-choice, label-list, and entailment prompt formulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment end to end and write a run directory.
    Run(RunArgs),
    /// Search the in-context demonstration count on a 100-example dev subset.
    SearchDemos(RunArgs),
    /// Render a comparison table over finished run directories.
    Report(ReportArgs),
    /// Check schema files (and optionally a data file) for violations.
    Validate(ValidateArgs),
    /// Inspect or export the response cache.
    Cache(CacheArgs),
}

/// Experiment parameters; every flag overrides the config file value.
#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset: tacred, retacred, tacrev, or semeval.
    #[arg(long)]
    dataset: Option<String>,
    /// Root of the data layout (templates/, constraints/, <dataset>/).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Formulation: vanilla, vanilla-temp, qa4re, or nli4re.
    #[arg(long)]
    formulation: Option<String>,
    /// Template set name: sure or temp1..temp4.
    #[arg(long)]
    templates: Option<String>,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Labeled examples per relation for the support set; 0 = zero-shot.
    #[arg(long)]
    k_shot: Option<usize>,
    /// In-context demonstrations: 1, 2, 5, or "search".
    #[arg(long)]
    n_demos: Option<String>,
    /// Base URL of the OpenAI-compatible endpoint.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API credential.
    #[arg(long)]
    credential_env: Option<String>,
    /// Wire protocol: completion or chat.
    #[arg(long)]
    protocol: Option<String>,
    /// Maximum in-flight requests.
    #[arg(long)]
    parallel: Option<usize>,
    /// Output directory root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Response cache file.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Output directory leaf (defaults to a timestamp).
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    nli_threshold: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Finished run directories (each containing manifest.json/metrics.json).
    #[arg(required = true)]
    run_dirs: Vec<PathBuf>,
    /// Also write the machine-readable report to this path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "sure")]
    templates: String,
    /// Optionally also load a data file against the schema.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Split label for --data.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct CacheArgs {
    #[command(subcommand)]
    action: CacheAction,
}

#[derive(Subcommand)]
enum CacheAction {
    /// Print entry count and location.
    Stats {
        #[arg(long, default_value = "cache/completions.jsonl")]
        cache: PathBuf,
    },
    /// Dump all records as JSON lines, sorted by key.
    Export {
        #[arg(long, default_value = "cache/completions.jsonl")]
        cache: PathBuf,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn config_error(detail: String) -> RunnerError {
    RunnerError::Config { detail }
}

fn resolve_config(args: &RunArgs) -> Result<ExperimentConfig, RunnerError> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dataset) = &args.dataset {
        config.dataset = dataset.parse()?;
    }
    if let Some(dir) = &args.data_dir {
        config.data_dir = dir.clone();
    }
    if let Some(formulation) = &args.formulation {
        config.formulation = formulation.parse()?;
    }
    if let Some(templates) = &args.templates {
        config.template_set = templates.clone();
    }
    if let Some(n) = args.sample_size {
        config.sample_size = n;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(k) = args.k_shot {
        config.k_shot = k;
    }
    if let Some(n_demos) = &args.n_demos {
        config.n_demos = Some(if n_demos == "search" {
            NDemos::Search
        } else {
            let n: usize = n_demos.parse().map_err(|_| {
                config_error(format!("--n-demos must be a number or \"search\", got {n_demos}"))
            })?;
            NDemos::Fixed(n)
        });
    }
    if let Some(endpoint) = &args.endpoint {
        config.backend.endpoint = endpoint.clone();
    }
    if let Some(model) = &args.model {
        config.backend.model = model.clone();
    }
    if let Some(var) = &args.credential_env {
        config.backend.credential_env = Some(var.clone());
    }
    if let Some(protocol) = &args.protocol {
        config.backend.protocol = match protocol.as_str() {
            "completion" => releval::backend::WireProtocol::Completion,
            "chat" => releval::backend::WireProtocol::Chat,
            other => {
                return Err(config_error(format!(
                    "--protocol must be completion or chat, got {other}"
                )))
            }
        };
    }
    if let Some(parallel) = args.parallel {
        config.backend.parallel = parallel;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(cache) = &args.cache {
        config.cache_path = cache.clone();
    }
    if let Some(run_id) = &args.run_id {
        config.run_id = Some(run_id.clone());
    }
    if let Some(threshold) = args.nli_threshold {
        config.nli_threshold = threshold;
    }
    Ok(config)
}

fn cmd_run(args: &RunArgs) -> Result<(), RunnerError> {
    let config = resolve_config(args)?;
    let artifacts = run_experiment(&config)?;
    print!("{}", artifacts.metrics.render_table());
    if let Some(stats) = &artifacts.manifest.cache {
        println!(
            "cache: {} hits, {} misses ({} entries)",
            stats.hits, stats.misses, stats.entries
        );
    }
    if let Some(n) = artifacts.manifest.chosen_n_demos {
        println!("n_demos: {n}");
    }
    println!("run written to {}", artifacts.run_dir.display());
    Ok(())
}

fn cmd_search_demos(args: &RunArgs) -> Result<(), RunnerError> {
    let config = resolve_config(args)?;
    let backend = http_backend_from_config(&config)?;
    let outcome = search_n_demos(&config, &backend)?;
    for score in &outcome.scores {
        println!(
            "n_demos={} micro_f1={:.4} (dev examples: {})",
            score.n_demos, score.micro_f1, score.dev_examples
        );
    }
    println!("chosen: {}", outcome.chosen);
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), RunnerError> {
    let mut summaries = Vec::new();
    for dir in &args.run_dirs {
        summaries.push(load_run_summary(dir)?);
    }
    let report = emit_report(&summaries);
    print!("{}", report.table);
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&report.rows).expect("report serializes");
        std::fs::write(path, json + "\n").map_err(|source| RunnerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        println!("report rows written to {}", path.display());
    }
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), RunnerError> {
    let dataset: DatasetId = args.dataset.parse()?;
    let config = ExperimentConfig {
        dataset,
        data_dir: args.data_dir.clone(),
        template_set: args.templates.clone(),
        ..ExperimentConfig::default()
    };
    let template_path = config.resolved_template_path();
    let constraint_path = config.resolved_constraint_path();
    let loaded = load_schema(dataset, &template_path, constraint_path.as_deref())?;
    for warning in &loaded.warnings {
        println!("warning: {warning}");
    }
    let violations = validate_schema(&loaded.schema);
    for violation in &violations {
        println!("violation: {violation}");
    }
    println!(
        "schema: {} relations, NoTA = {}, entity types: {}",
        loaded.schema.relations.len(),
        loaded.schema.nota_label,
        if loaded.schema.has_entity_types { "yes" } else { "no" }
    );

    if let Some(data_path) = &args.data {
        let split = match args.split.as_str() {
            "train" => Split::Train,
            "dev" => Split::Dev,
            "test" => Split::Test,
            other => {
                return Err(config_error(format!(
                    "--split must be train, dev, or test, got {other}"
                )))
            }
        };
        let examples = if dataset == DatasetId::Semeval {
            load_semeval(data_path, &loaded.schema, split)?
        } else {
            load_tacred_family(data_path, &loaded.schema, split)?
        };
        println!("data: {} examples loaded from {}", examples.len(), data_path.display());
    }

    if violations.is_empty() {
        println!("ok");
        Ok(())
    } else {
        Err(config_error(format!(
            "schema has {} violation(s)",
            violations.len()
        )))
    }
}

fn cmd_cache(args: &CacheArgs) -> Result<(), RunnerError> {
    match &args.action {
        CacheAction::Stats { cache } => {
            let cache = ResponseCache::open(cache)?;
            println!("path: {}", cache.path().display());
            println!("entries: {}", cache.len());
        }
        CacheAction::Export { cache, out } => {
            let cache = ResponseCache::open(cache)?;
            match out {
                Some(path) => {
                    let mut buffer = Vec::new();
                    cache.export(&mut buffer)?;
                    std::fs::write(path, buffer).map_err(|source| RunnerError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    println!("exported {} records to {}", cache.len(), path.display());
                }
                None => {
                    let mut stdout = std::io::stdout().lock();
                    cache.export(&mut stdout)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::SearchDemos(args) => cmd_search_demos(args),
        Command::Report(args) => cmd_report(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Cache(args) => cmd_cache(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code())
        }
    }
}
