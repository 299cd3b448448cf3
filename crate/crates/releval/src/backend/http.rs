//! OpenAI-compatible HTTP backend.
//!
//! Two wire protocols are supported. The completion protocol posts to
//! `/v1/completions` and emulates constrained decoding by sending a
//! `logit_bias` map of +100 over the allowed output strings (the serving
//! side maps each string to its first token) together with the request's
//! small output cap; it can also return per-token log-probabilities for
//! label scoring. The chat protocol posts to `/v1/chat/completions`, has no
//! bias analog, and therefore always generates unconstrained — the response
//! carries `constrained: false` and parsing recovers the answer.
//!
//! Retries: transport errors, 429, and 5xx are retried with exponential
//! backoff; other statuses fail immediately.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireProtocol {
    Completion,
    Chat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL, e.g. `http://localhost:8000`; the protocol path is appended.
    pub endpoint: String,
    pub protocol: WireProtocol,
    /// Environment variable holding the bearer token, if the endpoint
    /// requires one.
    pub credential_env: Option<String>,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "http://localhost:8000".to_string(),
            protocol: WireProtocol::Completion,
            credential_env: None,
            timeout_secs: 60,
            max_attempts: 3,
            backoff_ms: 250,
        }
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    calls: AtomicU64,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<HttpBackend, BackendError> {
        let api_key = match &config.credential_env {
            Some(var) => Some(std::env::var(var).map_err(|_| BackendError::MissingCredential {
                var: var.clone(),
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport {
                attempts: 0,
                detail: e.to_string(),
            })?;
        Ok(HttpBackend {
            config,
            api_key,
            client,
            calls: AtomicU64::new(0),
        })
    }

    fn url(&self) -> String {
        let base = self.config.endpoint.trim_end_matches('/');
        match self.config.protocol {
            WireProtocol::Completion => format!("{base}/v1/completions"),
            WireProtocol::Chat => format!("{base}/v1/chat/completions"),
        }
    }

    fn body(&self, request: &CompletionRequest) -> serde_json::Value {
        match self.config.protocol {
            WireProtocol::Completion => {
                let mut body = json!({
                    "model": request.model,
                    "prompt": request.prompt_text,
                    "max_tokens": request.max_output_tokens,
                    "temperature": request.temperature,
                });
                if let Some(allowed) = &request.allowed_outputs {
                    let bias: BTreeMap<&String, i32> =
                        allowed.iter().map(|s| (s, 100)).collect();
                    body["logit_bias"] = json!(bias);
                }
                if request.want_logprobs {
                    body["logprobs"] = json!(5);
                }
                body
            }
            WireProtocol::Chat => json!({
                "model": request.model,
                "messages": [{"role": "user", "content": request.prompt_text}],
                "max_tokens": request.max_output_tokens,
                "temperature": request.temperature,
            }),
        }
    }

    fn send(&self, body: &serde_json::Value) -> Result<serde_json::Value, BackendError> {
        let mut last_detail = String::new();
        for attempt in 0..self.config.max_attempts {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(delay));
            }
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut builder = self.client.post(self.url()).json(body);
            if let Some(key) = &self.api_key {
                builder = builder.bearer_auth(key);
            }
            match builder.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response.json().map_err(|e| BackendError::MalformedResponse {
                            detail: e.to_string(),
                        });
                    }
                    let body_text = response.text().unwrap_or_default();
                    if status.as_u16() == 401 || status.as_u16() == 403 {
                        return Err(BackendError::Auth {
                            status: status.as_u16(),
                            body: body_text,
                        });
                    }
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_detail = format!("status {status}: {body_text}");
                        continue;
                    }
                    return Err(BackendError::Api {
                        status: status.as_u16(),
                        body: body_text,
                    });
                }
                Err(e) => {
                    last_detail = e.to_string();
                    continue;
                }
            }
        }
        Err(BackendError::Transport {
            attempts: self.config.max_attempts,
            detail: last_detail,
        })
    }
}

#[derive(Debug, Deserialize)]
struct CompletionWire {
    choices: Vec<CompletionChoice>,
}

#[derive(Debug, Deserialize)]
struct CompletionChoice {
    #[serde(default)]
    text: String,
    #[serde(default)]
    logprobs: Option<LogprobsWire>,
}

#[derive(Debug, Deserialize)]
struct LogprobsWire {
    #[serde(default)]
    top_logprobs: Vec<BTreeMap<String, f64>>,
}

#[derive(Debug, Deserialize)]
struct ChatWire {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: String,
}

/// Matches requested labels against the first generated position's
/// top-logprob tokens: a token scores a label when the label starts with
/// the token text (ignoring leading whitespace). Labels never seen keep no
/// entry and are floored during normalization.
fn label_logprobs_from_top(
    top: &BTreeMap<String, f64>,
    labels: &std::collections::BTreeSet<String>,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for label in labels {
        let mut best: Option<f64> = None;
        for (token, logprob) in top {
            let token_text = token.trim_start();
            if !token_text.is_empty() && label.starts_with(token_text) {
                best = Some(best.map_or(*logprob, |b: f64| b.max(*logprob)));
            }
        }
        if let Some(lp) = best {
            out.insert(label.clone(), lp);
        }
    }
    out
}

impl CompletionBackend for HttpBackend {
    fn backend_id(&self) -> String {
        let protocol = match self.config.protocol {
            WireProtocol::Completion => "completion",
            WireProtocol::Chat => "chat",
        };
        format!("http:{protocol}:{}", self.config.endpoint.trim_end_matches('/'))
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let value = self.send(&self.body(request))?;
        match self.config.protocol {
            WireProtocol::Completion => {
                let wire: CompletionWire = serde_json::from_value(value).map_err(|e| {
                    BackendError::MalformedResponse { detail: e.to_string() }
                })?;
                let choice = wire.choices.into_iter().next().ok_or_else(|| {
                    BackendError::MalformedResponse {
                        detail: "no choices in response".to_string(),
                    }
                })?;
                let label_logprobs = match (&request.allowed_outputs, choice.logprobs) {
                    (Some(labels), Some(lp)) if request.want_logprobs => lp
                        .top_logprobs
                        .first()
                        .map(|top| label_logprobs_from_top(top, labels)),
                    _ => None,
                };
                Ok(CompletionResponse {
                    text: choice.text,
                    label_logprobs,
                    backend_id: self.backend_id(),
                    cached: false,
                    constrained: request.allowed_outputs.is_some(),
                })
            }
            WireProtocol::Chat => {
                let wire: ChatWire = serde_json::from_value(value).map_err(|e| {
                    BackendError::MalformedResponse { detail: e.to_string() }
                })?;
                let choice = wire.choices.into_iter().next().ok_or_else(|| {
                    BackendError::MalformedResponse {
                        detail: "no choices in response".to_string(),
                    }
                })?;
                Ok(CompletionResponse {
                    text: choice.message.content,
                    label_logprobs: None,
                    backend_id: self.backend_id(),
                    cached: false,
                    constrained: false,
                })
            }
        }
    }

    fn supports_label_scoring(&self) -> bool {
        self.config.protocol == WireProtocol::Completion
    }

    fn transport_calls(&self) -> Option<u64> {
        Some(self.calls.load(Ordering::SeqCst))
    }
}
