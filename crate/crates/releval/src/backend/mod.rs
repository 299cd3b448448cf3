//! The completion backend abstraction: one `complete` call over either an
//! OpenAI-compatible HTTP endpoint or a deterministic in-process test
//! backend, with persistent response caching layered on top.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

mod cache;
mod http;
pub mod testing;

pub use cache::{CacheStats, CachedBackend, ResponseCache};
pub use http::{HttpBackend, HttpConfig, WireProtocol};

/// One generation request. `allowed_outputs` carries the constrained-
/// decoding contract; whether a backend can honor it is reported on the
/// response via `constrained`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt_text: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub allowed_outputs: Option<BTreeSet<String>>,
    pub want_logprobs: bool,
}

/// A generation result. `label_logprobs` is present when the request asked
/// for log-probabilities and the backend can score label continuations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub label_logprobs: Option<BTreeMap<String, f64>>,
    pub backend_id: String,
    pub cached: bool,
    /// Whether the backend honored `allowed_outputs`. False means generation
    /// was unconstrained and parsing carries the burden.
    pub constrained: bool,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("credential environment variable `{var}` is not set")]
    MissingCredential { var: String },
    #[error("transport failure after {attempts} attempts: {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("endpoint returned status {status}: {body}")]
    Api { status: u16, body: String },
    #[error("authentication failed (status {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("malformed response: {detail}")]
    MalformedResponse { detail: String },
    #[error("backend `{backend_id}` does not support label scoring")]
    ScoringUnsupported { backend_id: String },
    #[error("backend `{backend_id}` returned no log-probabilities to score labels with")]
    MissingLogprobs { backend_id: String },
    #[error("score_labels called with an empty label set")]
    EmptyLabelSet,
    #[error("oracle has no answer for prompt digest {digest}")]
    UncoveredPrompt { digest: String },
    #[error("cache I/O failure at {path}: {source}")]
    Cache {
        path: String,
        source: std::io::Error,
    },
    #[error("cache record on line {line} is corrupt: {source}")]
    CacheCorrupt {
        line: usize,
        source: serde_json::Error,
    },
}

/// A completion provider. Implementations must be deterministic at
/// temperature 0 for the caching and replay guarantees to hold.
pub trait CompletionBackend: Send + Sync {
    /// Stable identifier, part of every cache key.
    fn backend_id(&self) -> String;

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    /// Whether [`score_labels`] can work against this backend.
    fn supports_label_scoring(&self) -> bool {
        false
    }

    /// Number of transport-level calls made so far, when the backend tracks
    /// them. Cache layers forward to the wrapped backend.
    fn transport_calls(&self) -> Option<u64> {
        None
    }

    /// Hit/miss statistics, when a cache sits in front of the backend.
    fn cache_stats(&self) -> Option<CacheStats> {
        None
    }
}

/// Stable cache key: a SHA-256 digest over every request field that affects
/// the response, with the allowed-output set in canonical (sorted) order.
pub fn cache_key(backend_id: &str, request: &CompletionRequest) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        backend_id: &'a str,
        model: &'a str,
        prompt_text: &'a str,
        max_output_tokens: u32,
        temperature: f64,
        allowed_outputs: Option<&'a BTreeSet<String>>,
        want_logprobs: bool,
    }
    let material = KeyMaterial {
        backend_id,
        model: &request.model,
        prompt_text: &request.prompt_text,
        max_output_tokens: request.max_output_tokens,
        temperature: request.temperature,
        allowed_outputs: request.allowed_outputs.as_ref(),
        want_logprobs: request.want_logprobs,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex_digest(&bytes)
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(digest.len() * 2);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Scores each label as a continuation of `prompt_text` and normalizes the
/// resulting probabilities over the label set (softmax over the returned
/// log-probabilities; labels the backend did not score get a floor of
/// effectively zero). The output sums to 1 within 1e-9 and is invariant
/// under label-set reordering.
pub fn score_labels(
    backend: &dyn CompletionBackend,
    model: &str,
    prompt_text: &str,
    labels: &BTreeSet<String>,
) -> Result<BTreeMap<String, f64>, BackendError> {
    if labels.is_empty() {
        return Err(BackendError::EmptyLabelSet);
    }
    if !backend.supports_label_scoring() {
        return Err(BackendError::ScoringUnsupported {
            backend_id: backend.backend_id(),
        });
    }
    let request = CompletionRequest {
        model: model.to_string(),
        prompt_text: prompt_text.to_string(),
        max_output_tokens: 2,
        temperature: 0.0,
        allowed_outputs: Some(labels.clone()),
        want_logprobs: true,
    };
    let response = backend.complete(&request)?;
    let logprobs = response
        .label_logprobs
        .ok_or_else(|| BackendError::MissingLogprobs {
            backend_id: backend.backend_id(),
        })?;
    Ok(normalize_label_logprobs(labels, &logprobs))
}

const UNSCORED_LOGPROB: f64 = -1.0e9;

fn normalize_label_logprobs(
    labels: &BTreeSet<String>,
    logprobs: &BTreeMap<String, f64>,
) -> BTreeMap<String, f64> {
    let raw: Vec<(&String, f64)> = labels
        .iter()
        .map(|label| (label, logprobs.get(label).copied().unwrap_or(UNSCORED_LOGPROB)))
        .collect();
    let max = raw
        .iter()
        .map(|(_, lp)| *lp)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = raw.iter().map(|(_, lp)| (lp - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    raw.iter()
        .zip(weights)
        .map(|((label, _), w)| ((*label).clone(), w / total))
        .collect()
}
