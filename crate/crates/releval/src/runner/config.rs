//! Experiment configuration: one TOML document per experiment, with every
//! field overridable from the command line. The fully resolved config is
//! embedded in each run's manifest for provenance.

use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::backend::WireProtocol;
use crate::corpus::Split;
use crate::formulate::Formulation;
use crate::schema::DatasetId;

use super::RunnerError;

/// Number of in-context demonstrations: a fixed count from {1, 2, 5} or a
/// dev-set search over those values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NDemos {
    Fixed(usize),
    Search,
}

impl Serialize for NDemos {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            NDemos::Fixed(n) => serializer.serialize_u64(*n as u64),
            NDemos::Search => serializer.serialize_str("search"),
        }
    }
}

impl<'de> Deserialize<'de> for NDemos {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Mode(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Count(n) => Ok(NDemos::Fixed(n as usize)),
            Raw::Mode(s) if s == "search" => Ok(NDemos::Search),
            Raw::Mode(s) => Err(D::Error::custom(format!(
                "n_demos must be a number or \"search\", got \"{s}\""
            ))),
        }
    }
}

/// Where and how to reach the completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSpec {
    pub endpoint: String,
    pub model: String,
    pub protocol: WireProtocol,
    pub credential_env: Option<String>,
    /// Maximum in-flight requests.
    pub parallel: usize,
    pub timeout_secs: u64,
    pub max_attempts: u32,
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec {
            endpoint: "http://localhost:8000".to_string(),
            model: String::new(),
            protocol: WireProtocol::Completion,
            credential_env: None,
            parallel: 4,
            timeout_secs: 60,
            max_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetId,
    pub formulation: Formulation,
    /// Named template set; resolves to `<data_dir>/templates/<dataset>_<name>.json`.
    pub template_set: String,
    pub data_dir: PathBuf,
    /// Explicit file overrides; resolution falls back to the data_dir layout.
    pub template_path: Option<PathBuf>,
    pub constraint_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub sample_size: usize,
    pub seed: u64,
    /// 0 = zero-shot.
    pub k_shot: usize,
    pub n_demos: Option<NDemos>,
    pub nli_threshold: f64,
    /// Optional seeded shuffle of positive options, for position-bias runs.
    pub shuffle_options_seed: Option<u64>,
    pub backend: BackendSpec,
    pub out_dir: PathBuf,
    pub cache_path: PathBuf,
    /// Output directory leaf; defaults to a timestamp. Not part of the
    /// config hash, so reruns with explicit run ids stay byte-comparable.
    pub run_id: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetId::Tacred,
            formulation: Formulation::Qa4re,
            template_set: "sure".to_string(),
            data_dir: PathBuf::from("data"),
            template_path: None,
            constraint_path: None,
            test_path: None,
            train_path: None,
            dev_path: None,
            sample_size: 1000,
            seed: 0,
            k_shot: 0,
            n_demos: None,
            nli_threshold: 0.5,
            shuffle_options_seed: None,
            backend: BackendSpec::default(),
            out_dir: PathBuf::from("runs"),
            cache_path: PathBuf::from("cache/completions.jsonl"),
            run_id: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig, RunnerError> {
        toml::from_str(text).map_err(|e| RunnerError::Config {
            detail: format!("config parse error: {e}"),
        })
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunnerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let fail = |detail: String| Err(RunnerError::Config { detail });
        if self.sample_size == 0 {
            return fail("sample_size must be at least 1".to_string());
        }
        if self.backend.model.is_empty() {
            return fail("backend.model must be set".to_string());
        }
        if self.backend.parallel == 0 {
            return fail("backend.parallel must be at least 1".to_string());
        }
        if self.k_shot == 0 && self.n_demos.is_some() {
            return fail("n_demos requires k_shot >= 1".to_string());
        }
        if let Some(NDemos::Fixed(n)) = self.n_demos {
            if ![1, 2, 5].contains(&n) {
                return fail(format!("n_demos must be 1, 2, 5, or \"search\", got {n}"));
            }
        }
        if !(0.0..=1.0).contains(&self.nli_threshold) {
            return fail(format!(
                "nli_threshold must be within [0, 1], got {}",
                self.nli_threshold
            ));
        }
        Ok(())
    }

    /// The demo-count policy once k_shot is set: explicit value or search.
    pub fn effective_n_demos(&self) -> NDemos {
        self.n_demos.unwrap_or(NDemos::Search)
    }

    pub fn resolved_template_path(&self) -> PathBuf {
        self.template_path.clone().unwrap_or_else(|| {
            self.data_dir
                .join("templates")
                .join(format!("{}_{}.json", self.dataset, self.template_set))
        })
    }

    /// SemEval has no entity types, hence no constraint file by default.
    pub fn resolved_constraint_path(&self) -> Option<PathBuf> {
        if let Some(path) = &self.constraint_path {
            return Some(path.clone());
        }
        if self.dataset == DatasetId::Semeval {
            return None;
        }
        Some(
            self.data_dir
                .join("constraints")
                .join(format!("{}_constraints.json", self.dataset)),
        )
    }

    pub fn resolved_split_path(&self, split: Split) -> PathBuf {
        let explicit = match split {
            Split::Train => &self.train_path,
            Split::Dev => &self.dev_path,
            Split::Test => &self.test_path,
        };
        if let Some(path) = explicit {
            return path.clone();
        }
        let name = match split {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        };
        let ext = if self.dataset == DatasetId::Semeval {
            "txt"
        } else {
            "json"
        };
        self.data_dir
            .join(self.dataset.as_str())
            .join(format!("{name}.{ext}"))
    }

    /// Digest of the config with the run id cleared, so replays of the same
    /// experiment hash identically regardless of output naming.
    pub fn config_hash(&self) -> String {
        let mut hashable = self.clone();
        hashable.run_id = None;
        let bytes = serde_json::to_vec(&hashable).expect("config serializes");
        crate::backend::hex_digest(&bytes)
    }
}
