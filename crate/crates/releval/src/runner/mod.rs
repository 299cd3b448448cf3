//! End-to-end experiment orchestration: load, sample, build candidates and
//! prompts, fan requests out to the backend with bounded parallelism, parse,
//! score, and write a reproducible run directory.
//!
//! A run directory `<out>/<dataset>/<formulation>/<run-id>/` contains
//! `predictions.jsonl` (one record per sampled example, input order),
//! `metrics.json`, `manifest.json` (resolved config, hashes, cache and
//! fallback statistics), and `prompts_sample.txt` with the rendered prompts
//! of the first three examples for eyeball audits. Given the same config and
//! cache state, two runs differ in no output byte.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::testing::OracleBackend;
use crate::backend::{
    score_labels, BackendError, CacheStats, CachedBackend, CompletionBackend, CompletionRequest,
    HttpBackend, HttpConfig, ResponseCache,
};
use crate::candidates::{build_candidates_seeded, retained_relations, CandidateError};
use crate::corpus::{
    load_semeval, load_tacred_family, sample_kshot, sample_test, CorpusError, RelationExample,
    Shortage, Split, SupportSet,
};
use crate::evaluate::{EvalError, MetricsReport};
use crate::formulate::{
    build_nli, build_qa4re, build_vanilla, build_vanilla_temp, Demonstration, FormulateError,
    Formulation, Prompt, NLI_LABELS,
};
use crate::infer::{aggregate_nli, parse_qa4re, parse_vanilla, InferError, ParseStatus, Prediction};
use crate::schema::{
    load_schema, load_template_set, DatasetId, RelationSchema, SchemaError, TemplateSet,
};

mod config;
pub mod report;

pub use config::{BackendSpec, ExperimentConfig, NDemos};

/// Dev-subset size used by the demo-count search.
pub const DEMO_SEARCH_DEV_SIZE: usize = 100;
/// Demo counts the search evaluates.
pub const DEMO_SEARCH_CANDIDATES: [usize; 3] = [1, 2, 5];

const QA4RE_MAX_TOKENS: u32 = 4;
const VANILLA_MAX_TOKENS: u32 = 24;
const PROMPT_SAMPLE_COUNT: usize = 3;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config error: {detail}")]
    Config { detail: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Candidates(#[from] CandidateError),
    #[error(transparent)]
    Formulate(#[from] FormulateError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("demonstration selection needs a non-empty support set")]
    EmptySupport,
    #[error("I/O failure at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl RunnerError {
    /// CLI exit code: 1 config, 2 backend, 3 data.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunnerError::Config { .. } => 1,
            RunnerError::Backend(_) => 2,
            _ => 3,
        }
    }
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub example_id: String,
    pub gold: String,
    pub predicted: String,
    pub formulation: Formulation,
    pub parse_status: ParseStatus,
    pub raw_output: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoSearchScore {
    pub n_demos: usize,
    pub micro_f1: f64,
    pub dev_examples: usize,
}

/// Everything recorded beside the predictions for provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub schema_hash: String,
    pub n_examples: usize,
    pub chosen_n_demos: Option<usize>,
    pub demo_search: Option<Vec<DemoSearchScore>>,
    pub cache: Option<CacheStats>,
    pub transport_calls: Option<u64>,
    pub fallback_rate: f64,
    /// Examples answered NoTA without a model call because constraints left
    /// a single option.
    pub forced_nota: usize,
    /// Examples whose gold label was filtered out by the type constraints.
    pub gold_filtered: usize,
    pub relaxations: BTreeMap<String, usize>,
    pub kshot_shortages: Vec<Shortage>,
    pub schema_warnings: Vec<String>,
}

/// Paths and summary of one finished run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub metrics: MetricsReport,
    pub predictions_path: PathBuf,
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
}

/// How far demonstration selection had to relax its type constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationLevel {
    /// All demos share the test example's retained relation set.
    Strict,
    /// Some demos only share the head entity type.
    HeadType,
    /// Some demos were drawn without any type restriction.
    Unrestricted,
}

impl RelaxationLevel {
    fn as_str(self) -> &'static str {
        match self {
            RelaxationLevel::Strict => "strict",
            RelaxationLevel::HeadType => "head_type",
            RelaxationLevel::Unrestricted => "unrestricted",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoSelection {
    pub examples: Vec<RelationExample>,
    pub relaxation: RelaxationLevel,
}

/// Per-example seed derivation: stable across platforms, spreads one run
/// seed into distinct per-example streams.
fn derived_seed(seed: u64, tag: &str) -> u64 {
    let digest = crate::backend::hex_digest(tag.as_bytes());
    let bytes: [u8; 8] = digest.as_bytes()[..8].try_into().expect("digest length");
    seed ^ u64::from_le_bytes(bytes)
}

fn draw<T: Clone>(rng: &mut ChaCha8Rng, pool: &[T], n: usize) -> Vec<T> {
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    let take = n.min(pool.len());
    for i in 0..take {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
    }
    indices[..take].iter().map(|&i| pool[i].clone()).collect()
}

/// Selects up to `n` demonstrations for a test example. Preference order:
/// support examples whose retained relation set equals the test example's,
/// then examples sharing the head entity type, then anything. The loosest
/// pool actually used is reported as the relaxation level.
pub fn select_demos(
    support: &[RelationExample],
    test_example: &RelationExample,
    n: usize,
    schema: &RelationSchema,
    seed: u64,
) -> Result<DemoSelection, RunnerError> {
    if support.is_empty() {
        return Err(RunnerError::EmptySupport);
    }
    let target: BTreeSet<&str> = retained_relations(schema, test_example)
        .iter()
        .map(|r| r.label.as_str())
        .collect();

    let candidates: Vec<&RelationExample> = support
        .iter()
        .filter(|ex| ex.id != test_example.id)
        .collect();
    let strict: Vec<RelationExample> = candidates
        .iter()
        .filter(|ex| {
            let retained: BTreeSet<&str> = retained_relations(schema, ex)
                .iter()
                .map(|r| r.label.as_str())
                .collect();
            retained == target
        })
        .map(|ex| (*ex).clone())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, &test_example.id));
    let mut selected = draw(&mut rng, &strict, n);
    let mut relaxation = RelaxationLevel::Strict;

    if selected.len() < n {
        let picked_ids: BTreeSet<&str> = selected.iter().map(|e| e.id.as_str()).collect();
        let head_pool: Vec<RelationExample> = candidates
            .iter()
            .filter(|ex| {
                !picked_ids.contains(ex.id.as_str())
                    && ex.head.entity_type == test_example.head.entity_type
            })
            .map(|ex| (*ex).clone())
            .collect();
        let extra = draw(&mut rng, &head_pool, n - selected.len());
        if !extra.is_empty() {
            relaxation = RelaxationLevel::HeadType;
        }
        selected.extend(extra);
    }

    if selected.len() < n {
        let picked_ids: BTreeSet<&str> = selected.iter().map(|e| e.id.as_str()).collect();
        let rest: Vec<RelationExample> = candidates
            .iter()
            .filter(|ex| !picked_ids.contains(ex.id.as_str()))
            .map(|ex| (*ex).clone())
            .collect();
        let extra = draw(&mut rng, &rest, n - selected.len());
        if !extra.is_empty() {
            relaxation = RelaxationLevel::Unrestricted;
        }
        selected.extend(extra);
    }

    Ok(DemoSelection {
        examples: selected,
        relaxation,
    })
}

/// Builds solved demonstration blocks for one test example, mirroring the
/// prompt pipeline exactly (same candidate construction, same answers).
pub fn demonstrations_for(
    schema: &RelationSchema,
    template_set: &TemplateSet,
    formulation: Formulation,
    support: &[RelationExample],
    test_example: &RelationExample,
    n: usize,
    seed: u64,
    shuffle_seed: Option<u64>,
) -> Result<(Vec<Demonstration>, RelaxationLevel), RunnerError> {
    let selection = select_demos(support, test_example, n, schema, seed)?;
    let mut demos = Vec::with_capacity(selection.examples.len());
    for example in selection.examples {
        let candidates = build_candidates_seeded(schema, template_set, &example, shuffle_seed)?;
        demos.push(Demonstration::new(example, candidates, formulation)?);
    }
    Ok((demos, selection.relaxation))
}

/// Shared state of one evaluation pass.
struct EvalEnv<'a> {
    schema: &'a RelationSchema,
    template_set: &'a TemplateSet,
    formulation: Formulation,
    backend: &'a dyn CompletionBackend,
    model: &'a str,
    threshold: f64,
    shuffle_seed: Option<u64>,
    support: Option<&'a SupportSet>,
    seed: u64,
    parallel: usize,
}

struct ExampleOutcome {
    prediction: Prediction,
    prompt_texts: Vec<String>,
    forced: bool,
    gold_filtered: bool,
    relaxation: Option<RelaxationLevel>,
}

#[derive(Debug, Default, Clone)]
struct EvalStats {
    forced_nota: usize,
    gold_filtered: usize,
    fallbacks: usize,
    relaxations: BTreeMap<String, usize>,
}

fn process_example(
    env: &EvalEnv<'_>,
    example: &RelationExample,
    n_demos: Option<usize>,
) -> Result<ExampleOutcome, RunnerError> {
    let candidates =
        build_candidates_seeded(env.schema, env.template_set, example, env.shuffle_seed)?;
    let gold_filtered = !candidates.contains_relation(&example.gold);

    if candidates.is_forced_nota() {
        // The answer is forced; no prompt is issued.
        return Ok(ExampleOutcome {
            prediction: Prediction {
                example_id: example.id.clone(),
                relation: candidates.nota_label().to_string(),
                raw_output: String::new(),
                per_option_scores: None,
                parse_status: ParseStatus::Constrained,
            },
            prompt_texts: Vec::new(),
            forced: true,
            gold_filtered,
            relaxation: None,
        });
    }

    let (demos, relaxation) = match (n_demos, env.support) {
        (Some(n), Some(support)) if n > 0 => {
            let (demos, relaxation) = demonstrations_for(
                env.schema,
                env.template_set,
                env.formulation,
                &support.examples,
                example,
                n,
                env.seed,
                env.shuffle_seed,
            )?;
            (demos, Some(relaxation))
        }
        _ => (Vec::new(), None),
    };

    let outcome = match env.formulation {
        Formulation::Vanilla | Formulation::VanillaTemp => {
            let prompt = if env.formulation == Formulation::Vanilla {
                build_vanilla(example, &candidates, &demos)
            } else {
                build_vanilla_temp(example, &candidates, &demos, env.template_set)
            };
            let response = env.backend.complete(&generative_request(
                env.model,
                &prompt,
                VANILLA_MAX_TOKENS,
            ))?;
            let prediction = parse_vanilla(&response.text, &candidates, &example.id);
            ExampleOutcome {
                prediction,
                prompt_texts: vec![prompt.text],
                forced: false,
                gold_filtered,
                relaxation,
            }
        }
        Formulation::Qa4re => {
            let prompt = build_qa4re(example, &candidates, &demos);
            let response = env.backend.complete(&generative_request(
                env.model,
                &prompt,
                QA4RE_MAX_TOKENS,
            ))?;
            let prediction = parse_qa4re(&response.text, &candidates, &example.id);
            ExampleOutcome {
                prediction,
                prompt_texts: vec![prompt.text],
                forced: false,
                gold_filtered,
                relaxation,
            }
        }
        Formulation::Nli4re => {
            let prompts = build_nli(example, &candidates)?;
            let labels: BTreeSet<String> = NLI_LABELS.iter().map(|l| l.to_string()).collect();
            // One entailment probability per relation, max over templates,
            // kept in candidate (= schema) order for the tie-break rule.
            let mut per_relation: Vec<(String, f64)> = Vec::new();
            for prompt in &prompts {
                let scores = score_labels(env.backend, env.model, &prompt.text, &labels)?;
                let entail = scores.get("Entailment").copied().unwrap_or(0.0);
                let relation = &prompt.hypothesis.as_ref().expect("nli prompt").relation;
                match per_relation.iter_mut().find(|(r, _)| r == relation) {
                    Some((_, best)) => *best = best.max(entail),
                    None => per_relation.push((relation.clone(), entail)),
                }
            }
            let prediction = aggregate_nli(
                &per_relation,
                env.threshold,
                candidates.nota_label(),
                &example.id,
            )?;
            ExampleOutcome {
                prediction,
                prompt_texts: prompts.into_iter().map(|p| p.text).collect(),
                forced: false,
                gold_filtered,
                relaxation,
            }
        }
    };
    Ok(outcome)
}

fn generative_request(model: &str, prompt: &Prompt, max_tokens: u32) -> CompletionRequest {
    CompletionRequest {
        model: model.to_string(),
        prompt_text: prompt.text.clone(),
        max_output_tokens: max_tokens,
        temperature: 0.0,
        allowed_outputs: Some(prompt.allowed_outputs.iter().cloned().collect()),
        want_logprobs: false,
    }
}

/// Evaluates a list of examples with bounded parallelism. Results are
/// buffered by input position, so output order never depends on completion
/// order.
fn evaluate_examples(
    env: &EvalEnv<'_>,
    examples: &[RelationExample],
    n_demos: Option<usize>,
) -> Result<(Vec<Prediction>, EvalStats, Vec<String>), RunnerError> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<ExampleOutcome, RunnerError>>>> =
        (0..examples.len()).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..env.parallel.max(1) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= examples.len() {
                    break;
                }
                let outcome = process_example(env, &examples[index], n_demos);
                *slots[index].lock().expect("result slot") = Some(outcome);
            });
        }
    });

    let mut predictions = Vec::with_capacity(examples.len());
    let mut stats = EvalStats::default();
    let mut prompt_samples = Vec::new();
    for (index, slot) in slots.into_iter().enumerate() {
        let outcome = slot
            .into_inner()
            .expect("result slot")
            .expect("every example is processed")?;
        if outcome.forced {
            stats.forced_nota += 1;
        }
        if outcome.gold_filtered {
            stats.gold_filtered += 1;
        }
        if outcome.prediction.parse_status == ParseStatus::FallbackNota {
            stats.fallbacks += 1;
        }
        if let Some(level) = outcome.relaxation {
            *stats.relaxations.entry(level.as_str().to_string()).or_insert(0) += 1;
        }
        if index < PROMPT_SAMPLE_COUNT {
            for (k, text) in outcome.prompt_texts.iter().enumerate() {
                prompt_samples.push(format!(
                    "### example {} prompt {}\n{}\n",
                    examples[index].id, k, text
                ));
            }
        }
        predictions.push(outcome.prediction);
    }
    Ok((predictions, stats, prompt_samples))
}

/// Outcome of the dev-set search over {1, 2, 5} in-context demonstrations.
#[derive(Debug, Clone)]
pub struct DemoSearchOutcome {
    pub chosen: usize,
    pub scores: Vec<DemoSearchScore>,
}

fn search_demo_count(
    env: &EvalEnv<'_>,
    dev_subset: &[RelationExample],
) -> Result<DemoSearchOutcome, RunnerError> {
    let mut scores = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for n in DEMO_SEARCH_CANDIDATES {
        let (predictions, stats, _) = evaluate_examples(env, dev_subset, Some(n))?;
        let golds: Vec<String> = dev_subset.iter().map(|e| e.gold.clone()).collect();
        let preds: Vec<String> = predictions.iter().map(|p| p.relation.clone()).collect();
        let report = MetricsReport::from_predictions(
            &golds,
            &preds,
            env.schema,
            stats.fallbacks as f64 / dev_subset.len().max(1) as f64,
        )?;
        scores.push(DemoSearchScore {
            n_demos: n,
            micro_f1: report.micro_f1_excl_nota,
            dev_examples: dev_subset.len(),
        });
        // Strictly greater wins, so ties keep the smaller n.
        if best.map_or(true, |(_, f1)| report.micro_f1_excl_nota > f1) {
            best = Some((n, report.micro_f1_excl_nota));
        }
    }
    Ok(DemoSearchOutcome {
        chosen: best.expect("search candidates are non-empty").0,
        scores,
    })
}

fn load_split(
    config: &ExperimentConfig,
    schema: &RelationSchema,
    split: Split,
) -> Result<Vec<RelationExample>, RunnerError> {
    let path = config.resolved_split_path(split);
    let examples = if config.dataset == DatasetId::Semeval {
        load_semeval(&path, schema, split)?
    } else {
        load_tacred_family(&path, schema, split)?
    };
    Ok(examples)
}

/// Loads the schema and template set a config points at.
pub fn load_environment(
    config: &ExperimentConfig,
) -> Result<(RelationSchema, TemplateSet, Vec<String>), RunnerError> {
    let template_path = config.resolved_template_path();
    let constraint_path = config.resolved_constraint_path();
    let loaded = load_schema(config.dataset, &template_path, constraint_path.as_deref())?;
    let template_set = load_template_set(&config.template_set, &loaded.schema, &template_path)?;
    Ok((loaded.schema, template_set, loaded.warnings))
}

/// Builds the backend a config describes: an OpenAI-compatible HTTP client
/// behind the persistent response cache.
pub fn http_backend_from_config(config: &ExperimentConfig) -> Result<CachedBackend, RunnerError> {
    let http = HttpBackend::new(HttpConfig {
        endpoint: config.backend.endpoint.clone(),
        protocol: config.backend.protocol,
        credential_env: config.backend.credential_env.clone(),
        timeout_secs: config.backend.timeout_secs,
        max_attempts: config.backend.max_attempts,
        backoff_ms: 250,
    })?;
    let cache = ResponseCache::open(&config.cache_path)?;
    Ok(CachedBackend::new(Arc::new(http), Arc::new(cache)))
}

/// Runs an experiment against the backend described by the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts, RunnerError> {
    config.validate()?;
    let backend = http_backend_from_config(config)?;
    run_experiment_with_backend(config, &backend)
}

/// Runs an experiment against any backend, e.g. the oracle for pipeline
/// proofs or a cached mock in tests.
pub fn run_experiment_with_backend(
    config: &ExperimentConfig,
    backend: &dyn CompletionBackend,
) -> Result<RunArtifacts, RunnerError> {
    config.validate()?;
    if config.formulation == Formulation::Nli4re && !backend.supports_label_scoring() {
        return Err(RunnerError::Config {
            detail: format!(
                "nli4re needs label scoring, which backend `{}` does not support",
                backend.backend_id()
            ),
        });
    }

    let (schema, template_set, schema_warnings) = load_environment(config)?;
    let test_pool = load_split(config, &schema, Split::Test)?;
    let test_sample = sample_test(&test_pool, config.sample_size, config.seed)?;

    let mut support = None;
    let mut kshot_shortages = Vec::new();
    if config.k_shot >= 1 {
        let train = load_split(config, &schema, Split::Train)?;
        let support_set = sample_kshot(&train, config.k_shot, config.seed, &schema);
        kshot_shortages = support_set.shortages.clone();
        support = Some(support_set);
    }

    let env = EvalEnv {
        schema: &schema,
        template_set: &template_set,
        formulation: config.formulation,
        backend,
        model: &config.backend.model,
        threshold: config.nli_threshold,
        shuffle_seed: config.shuffle_options_seed,
        support: support.as_ref(),
        seed: config.seed,
        parallel: config.backend.parallel,
    };

    let mut chosen_n_demos = None;
    let mut demo_search = None;
    if config.k_shot >= 1 {
        let n = match config.effective_n_demos() {
            NDemos::Fixed(n) => n,
            NDemos::Search => {
                let dev_pool = load_split(config, &schema, Split::Dev)?;
                let dev_subset = sample_test(&dev_pool, DEMO_SEARCH_DEV_SIZE, config.seed)?;
                let outcome = search_demo_count(&env, &dev_subset)?;
                demo_search = Some(outcome.scores.clone());
                outcome.chosen
            }
        };
        chosen_n_demos = Some(n);
    }
    let n_demos = chosen_n_demos;

    let (predictions, stats, prompt_samples) = evaluate_examples(&env, &test_sample, n_demos)?;

    let golds: Vec<String> = test_sample.iter().map(|e| e.gold.clone()).collect();
    let preds: Vec<String> = predictions.iter().map(|p| p.relation.clone()).collect();
    let fallback_rate = stats.fallbacks as f64 / test_sample.len() as f64;
    let metrics = MetricsReport::from_predictions(&golds, &preds, &schema, fallback_rate)?;

    let records: Vec<PredictionRecord> = test_sample
        .iter()
        .zip(&predictions)
        .map(|(example, prediction)| PredictionRecord {
            example_id: example.id.clone(),
            gold: example.gold.clone(),
            predicted: prediction.relation.clone(),
            formulation: config.formulation,
            parse_status: prediction.parse_status,
            raw_output: prediction.raw_output.clone(),
        })
        .collect();

    let mut manifest_config = config.clone();
    manifest_config.run_id = None;
    let manifest = RunManifest {
        config_hash: config.config_hash(),
        schema_hash: crate::backend::hex_digest(schema.to_json().as_bytes()),
        config: manifest_config,
        n_examples: records.len(),
        chosen_n_demos,
        demo_search,
        cache: backend.cache_stats(),
        transport_calls: backend.transport_calls(),
        fallback_rate,
        forced_nota: stats.forced_nota,
        gold_filtered: stats.gold_filtered,
        relaxations: stats.relaxations,
        kshot_shortages,
        schema_warnings,
    };

    let run_dir = run_directory(config);
    write_run(&run_dir, &records, &metrics, &manifest, &prompt_samples)?;

    Ok(RunArtifacts {
        metrics,
        predictions_path: run_dir.join("predictions.jsonl"),
        run_dir,
        manifest,
    })
}

/// Standalone demo-count search over a 100-example dev subset, as used by
/// the `search-demos` subcommand.
pub fn search_n_demos(
    config: &ExperimentConfig,
    backend: &dyn CompletionBackend,
) -> Result<DemoSearchOutcome, RunnerError> {
    config.validate()?;
    if config.k_shot == 0 {
        return Err(RunnerError::Config {
            detail: "search-demos requires k_shot >= 1".to_string(),
        });
    }
    let (schema, template_set, _) = load_environment(config)?;
    let train = load_split(config, &schema, Split::Train)?;
    let support = sample_kshot(&train, config.k_shot, config.seed, &schema);
    let dev_pool = load_split(config, &schema, Split::Dev)?;
    let dev_subset = sample_test(&dev_pool, DEMO_SEARCH_DEV_SIZE, config.seed)?;
    let env = EvalEnv {
        schema: &schema,
        template_set: &template_set,
        formulation: config.formulation,
        backend,
        model: &config.backend.model,
        threshold: config.nli_threshold,
        shuffle_seed: config.shuffle_options_seed,
        support: Some(&support),
        seed: config.seed,
        parallel: config.backend.parallel,
    };
    search_demo_count(&env, &dev_subset)
}

fn run_directory(config: &ExperimentConfig) -> PathBuf {
    let leaf = config.run_id.clone().unwrap_or_else(|| {
        let millis = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        format!("run-{millis}")
    });
    config
        .out_dir
        .join(config.dataset.as_str())
        .join(config.formulation.as_str())
        .join(leaf)
}

fn write_run(
    run_dir: &Path,
    records: &[PredictionRecord],
    metrics: &MetricsReport,
    manifest: &RunManifest,
    prompt_samples: &[String],
) -> Result<(), RunnerError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source: std::io::Error| RunnerError::Io {
            path: path.clone(),
            source,
        }
    };
    std::fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;

    let predictions_path = run_dir.join("predictions.jsonl");
    let mut lines = String::new();
    for record in records {
        lines.push_str(&serde_json::to_string(record).expect("record serializes"));
        lines.push('\n');
    }
    std::fs::write(&predictions_path, lines).map_err(io_err(&predictions_path))?;

    let metrics_path = run_dir.join("metrics.json");
    let metrics_json = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    std::fs::write(&metrics_path, metrics_json + "\n").map_err(io_err(&metrics_path))?;

    let manifest_path = run_dir.join("manifest.json");
    let manifest_json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, manifest_json + "\n").map_err(io_err(&manifest_path))?;

    let samples_path = run_dir.join("prompts_sample.txt");
    std::fs::write(&samples_path, prompt_samples.join("\n")).map_err(io_err(&samples_path))?;
    Ok(())
}

/// Populates an oracle backend with gold answers for every prompt this
/// config would issue, by walking the identical pipeline. `demo_counts`
/// lists every in-context size the oracle must cover (empty for zero-shot).
pub fn populate_oracle_for_examples(
    oracle: &OracleBackend,
    schema: &RelationSchema,
    template_set: &TemplateSet,
    formulation: Formulation,
    examples: &[RelationExample],
    support: Option<&SupportSet>,
    demo_counts: &[usize],
    seed: u64,
    shuffle_seed: Option<u64>,
    gold_entailment: f64,
    other_entailment: f64,
) -> Result<(), RunnerError> {
    use crate::backend::testing::OracleAnswer;
    use crate::formulate::gold_answer;

    let mut demo_variants: Vec<Option<usize>> = vec![None];
    demo_variants.extend(demo_counts.iter().map(|&n| Some(n)));

    for example in examples {
        let candidates = build_candidates_seeded(schema, template_set, example, shuffle_seed)?;
        if candidates.is_forced_nota() {
            continue;
        }
        for variant in &demo_variants {
            let demos = match (variant, support) {
                (Some(n), Some(support)) => {
                    demonstrations_for(
                        schema,
                        template_set,
                        formulation,
                        &support.examples,
                        example,
                        *n,
                        seed,
                        shuffle_seed,
                    )?
                    .0
                }
                _ => Vec::new(),
            };
            match formulation {
                Formulation::Nli4re => {
                    for prompt in build_nli(example, &candidates)? {
                        let hypothesis = prompt.hypothesis.as_ref().expect("nli prompt");
                        let entail = if hypothesis.relation == example.gold {
                            gold_entailment
                        } else {
                            other_entailment
                        };
                        let rest = (1.0 - entail) / 2.0;
                        oracle.insert(
                            &prompt.text,
                            OracleAnswer::scored(
                                [
                                    ("Entailment".to_string(), entail),
                                    ("Neutral".to_string(), rest),
                                    ("Contradiction".to_string(), rest),
                                ]
                                .into(),
                            ),
                        );
                    }
                }
                Formulation::Vanilla | Formulation::VanillaTemp | Formulation::Qa4re => {
                    let prompt = match formulation {
                        Formulation::Vanilla => build_vanilla(example, &candidates, &demos),
                        Formulation::VanillaTemp => {
                            build_vanilla_temp(example, &candidates, &demos, template_set)
                        }
                        _ => build_qa4re(example, &candidates, &demos),
                    };
                    let answer = gold_answer(example, &candidates, formulation)
                        .expect("generative formulations have gold answers");
                    oracle.insert(&prompt.text, OracleAnswer::text(answer));
                }
            }
        }
    }
    Ok(())
}
