//! HTTP clients for a model server exposing `/generate`, `/nli` and
//! `/health` with JSON bodies.
//!
//! ```text
//! POST /nli       {"claim", "evidence"}
//!              -> {"label": "supported"|"refuted"|"neutral",
//!                  "probs": {"supported", "refuted", "neutral"}}
//! POST /generate  {"system", "prompt", "temperature", "max_new_tokens", "seed"}
//!              -> {"text", "model_id"}
//! GET  /health -> {"status": "ok", "models": {...}}
//! errors       -> non-2xx with {"error": "...", "retryable": bool}
//! ```

use std::time::Duration;

use claimrefine_core::data::{GenerateRequest, GeneratorBackend, Provenance};
use claimrefine_core::factcheck::{FactCheckBackend, NliClass, Probs, Verdict};
use claimrefine_core::{BackendError, Label};
use serde::{Deserialize, Serialize};

pub const ENV_NLI_URL: &str = "CLAIMREFINE_NLI_URL";
pub const ENV_GENERATOR_URL: &str = "CLAIMREFINE_GENERATOR_URL";
pub const ENV_API_KEY: &str = "CLAIMREFINE_API_KEY";

/// Connection settings. Endpoint and key come from the environment; timeout
/// and retry policy from the run config.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteSettings {
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    /// Upper bound on concurrent requests per backend.
    pub max_in_flight: usize,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        RemoteSettings { timeout_secs: 60, retries: 3, backoff_ms: 500, max_in_flight: 4 }
    }
}

#[derive(Clone, Debug)]
pub struct Endpoint {
    pub base_url: String,
    pub api_key: Option<String>,
}

impl Endpoint {
    pub fn new(base_url: impl Into<String>) -> Endpoint {
        Endpoint { base_url: base_url.into().trim_end_matches('/').to_string(), api_key: None }
    }

    /// Reads the base URL from `var` and the key from [`ENV_API_KEY`].
    pub fn from_env(var: &str) -> Result<Endpoint, BackendError> {
        let url = std::env::var(var)
            .map_err(|_| BackendError::InvalidInput(format!("environment variable {var} is not set")))?;
        let mut ep = Endpoint::new(url);
        ep.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(ep)
    }
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default)]
    retryable: bool,
}

/// Shared request machinery with retries.
#[derive(Clone, Debug)]
pub struct HttpClient {
    agent: ureq::Agent,
    endpoint: Endpoint,
    settings: RemoteSettings,
}

impl HttpClient {
    pub fn new(endpoint: Endpoint, settings: RemoteSettings) -> HttpClient {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .max_idle_connections_per_host(settings.max_in_flight.max(1))
            .build();
        HttpClient { agent, endpoint, settings }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    fn once(&self, method: &str, path: &str, body: Option<&serde_json::Value>) -> Result<serde_json::Value, BackendError> {
        let url = format!("{}{path}", self.endpoint.base_url);
        let mut req = self.agent.request(method, &url).set("Accept", "application/json");
        if let Some(key) = &self.endpoint.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let result = match body {
            Some(b) => req.send_json(b),
            None => req.call(),
        };
        match result {
            Ok(resp) => resp
                .into_json::<serde_json::Value>()
                .map_err(|e| BackendError::Protocol(format!("{url}: unreadable body: {e}"))),
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                let parsed: Option<ErrorBody> = serde_json::from_str(&text).ok();
                let retryable = parsed.as_ref().map_or(code >= 500 || code == 429, |b| b.retryable);
                let message = parsed.map_or(text, |b| b.error);
                Err(BackendError::Transport { message: format!("{url}: HTTP {code}: {message}"), retryable })
            }
            Err(ureq::Error::Transport(t)) => {
                Err(BackendError::Transport { message: format!("{url}: {t}"), retryable: true })
            }
        }
    }

    /// Sends the request, retrying retryable failures with exponential
    /// backoff.
    pub fn call(&self, method: &str, path: &str, body: Option<&serde_json::Value>) -> Result<serde_json::Value, BackendError> {
        let mut attempt = 0;
        loop {
            match self.once(method, path, body) {
                Err(e) if e.is_retryable() && attempt < self.settings.retries => {
                    let wait = self.settings.backoff_ms.saturating_mul(1 << attempt.min(10));
                    log::warn!("{e}; retrying in {wait} ms");
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    pub fn health(&self) -> Result<serde_json::Value, BackendError> {
        self.call("GET", "/health", None)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NliRequest {
    pub claim: String,
    pub evidence: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireProbs {
    pub supported: f64,
    pub refuted: f64,
    pub neutral: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NliResponse {
    pub label: String,
    pub probs: WireProbs,
}

/// Accepts verdict names or NLI class names, any case.
pub fn parse_wire_label(raw: &str) -> Option<Label> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "supported" | "supports" => Some(Label::Supported),
        "refuted" | "refutes" => Some(Label::Refuted),
        "neutral" => Some(Label::Neutral),
        "entailment" => Some(NliClass::Entailment.to_label()),
        "contradiction" => Some(NliClass::Contradiction.to_label()),
        _ => None,
    }
}

pub fn verdict_from_response(resp: NliResponse) -> Result<Verdict, BackendError> {
    let label = parse_wire_label(&resp.label)
        .ok_or_else(|| BackendError::Protocol(format!("unknown label {:?}", resp.label)))?;
    let probs = Probs { supported: resp.probs.supported, refuted: resp.probs.refuted, neutral: resp.probs.neutral };
    Verdict::from_wire(label, probs)
}

/// Fact checker behind `/nli`.
#[derive(Clone, Debug)]
pub struct RemoteNli {
    pub client: HttpClient,
}

impl FactCheckBackend for RemoteNli {
    fn check(&self, claim: &str, evidence: &str) -> Result<Verdict, BackendError> {
        let body = serde_json::to_value(NliRequest { claim: claim.into(), evidence: evidence.into() })
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        let value = self.client.call("POST", "/nli", Some(&body))?;
        let resp: NliResponse =
            serde_json::from_value(value).map_err(|e| BackendError::Protocol(format!("malformed /nli reply: {e}")))?;
        verdict_from_response(resp)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
    pub model_id: String,
}

/// Text generator behind `/generate`.
#[derive(Clone, Debug)]
pub struct RemoteGenerator {
    pub client: HttpClient,
}

impl GeneratorBackend for RemoteGenerator {
    fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        let body = serde_json::to_value(request).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let value = self.client.call("POST", "/generate", Some(&body))?;
        let resp: GenerateResponse = serde_json::from_value(value)
            .map_err(|e| BackendError::Protocol(format!("malformed /generate reply: {e}")))?;
        if resp.text.trim().is_empty() {
            return Err(BackendError::Protocol("empty generation".into()));
        }
        Ok(resp.text)
    }

    fn provenance(&self) -> Provenance {
        Provenance::Backend
    }
}
