//! Deterministic in-process backends for tests and pipeline proofs.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use super::{hex_digest, BackendError, CompletionBackend, CompletionRequest, CompletionResponse};

/// Stable digest of a prompt text, the key space of [`OracleBackend`].
pub fn prompt_digest(prompt_text: &str) -> String {
    hex_digest(prompt_text.as_bytes())
}

/// A gold answer for one prompt: the text to return, plus label
/// probabilities when the prompt is to be scored rather than generated.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAnswer {
    pub text: String,
    pub label_probs: Option<BTreeMap<String, f64>>,
}

impl OracleAnswer {
    pub fn text(text: impl Into<String>) -> OracleAnswer {
        OracleAnswer {
            text: text.into(),
            label_probs: None,
        }
    }

    /// Builds a scored answer; the returned text is the argmax label.
    pub fn scored(label_probs: BTreeMap<String, f64>) -> OracleAnswer {
        let text = label_probs
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
            .map(|(label, _)| label.clone())
            .unwrap_or_default();
        OracleAnswer {
            text,
            label_probs: Some(label_probs),
        }
    }
}

/// Answers from a prompt-digest → gold-output map and fails on anything
/// uncovered. Driving the full pipeline with an oracle proves it end to end:
/// perfect answers must yield perfect metrics.
#[derive(Default)]
pub struct OracleBackend {
    gold: Mutex<HashMap<String, OracleAnswer>>,
    calls: AtomicU64,
}

impl OracleBackend {
    pub fn new() -> OracleBackend {
        OracleBackend::default()
    }

    pub fn insert(&self, prompt_text: &str, answer: OracleAnswer) {
        self.gold
            .lock()
            .expect("oracle lock")
            .insert(prompt_digest(prompt_text), answer);
    }

    pub fn covers(&self, prompt_text: &str) -> bool {
        self.gold
            .lock()
            .expect("oracle lock")
            .contains_key(&prompt_digest(prompt_text))
    }

    pub fn len(&self) -> usize {
        self.gold.lock().expect("oracle lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for OracleBackend {
    fn backend_id(&self) -> String {
        "oracle".to_string()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = prompt_digest(&request.prompt_text);
        let answer = self
            .gold
            .lock()
            .expect("oracle lock")
            .get(&digest)
            .cloned()
            .ok_or(BackendError::UncoveredPrompt { digest })?;
        let label_logprobs = match (&answer.label_probs, request.want_logprobs) {
            (Some(probs), true) => Some(probs.iter().map(|(l, p)| (l.clone(), p.ln())).collect()),
            _ => None,
        };
        Ok(CompletionResponse {
            text: answer.text,
            label_logprobs,
            backend_id: self.backend_id(),
            cached: false,
            constrained: request.allowed_outputs.is_some(),
        })
    }

    fn supports_label_scoring(&self) -> bool {
        true
    }

    fn transport_calls(&self) -> Option<u64> {
        Some(self.calls())
    }
}

/// Returns a fixed text (and optionally fixed label probabilities) for every
/// request, counting calls.
pub struct MockBackend {
    text: String,
    label_probs: Option<BTreeMap<String, f64>>,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn fixed(text: impl Into<String>) -> MockBackend {
        MockBackend {
            text: text.into(),
            label_probs: None,
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_label_probs(mut self, probs: BTreeMap<String, f64>) -> MockBackend {
        self.label_probs = Some(probs);
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for MockBackend {
    fn backend_id(&self) -> String {
        "mock".to_string()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let label_logprobs = match (&self.label_probs, request.want_logprobs) {
            (Some(probs), true) => Some(probs.iter().map(|(l, p)| (l.clone(), p.ln())).collect()),
            _ => None,
        };
        Ok(CompletionResponse {
            text: self.text.clone(),
            label_logprobs,
            backend_id: self.backend_id(),
            cached: false,
            constrained: request.allowed_outputs.is_some(),
        })
    }

    fn supports_label_scoring(&self) -> bool {
        self.label_probs.is_some()
    }

    fn transport_calls(&self) -> Option<u64> {
        Some(self.calls())
    }
}
