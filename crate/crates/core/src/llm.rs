//! Chat-completion client with a deterministic mock/replay backend; the only
//! nondeterministic boundary in the pipeline.
//!
//! Every call is recorded as a [`Transcript`]; a transcript store is enough
//! to replay a whole run offline through [`ReplayBackend`].

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default temperature for structured generation calls.
pub const GENERATION_TEMPERATURE: f64 = 0.2;
/// Default temperature for rejection-sampling calls.
pub const SAMPLING_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after retry budget")]
    RateLimited,
    #[error("backend error: {0}")]
    Backend(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("no canned response for request {0}")]
    NoFixture(String),
}

impl LlmError {
    fn transient(&self) -> bool {
        matches!(
            self,
            LlmError::RateLimited | LlmError::Transport(_) | LlmError::Backend(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn user(model: &str, content: &str, temperature: f64) -> CompletionRequest {
        CompletionRequest {
            model: model.to_string(),
            messages: vec![Message {
                role: Role::User,
                content: content.to_string(),
            }],
            temperature,
            max_tokens: 4096,
            seed: None,
        }
    }

    pub fn last_user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    /// Stable digest of the canonical request JSON; the replay key.
    pub fn key(&self) -> String {
        let json = serde_json::to_string(self).expect("request serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// One completed call, append-only once recorded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transcript {
    pub request: CompletionRequest,
    pub response: String,
    pub latency_ms: u64,
    pub backend: String,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError>;
}

/// Scripted backend for tests and fixtures. Rules are tried in order; the
/// first whose matcher hits the last user message serves the next queued
/// response. An exhausted queue keeps repeating its final response, which
/// makes bounded regeneration loops deterministic.
pub struct MockBackend {
    rules: Vec<MockRule>,
}

/// Queue entry that makes the mock fail once with a transient error.
pub const MOCK_RATE_LIMIT: &str = "<<RATE_LIMITED>>";

struct MockRule {
    needle: Option<String>,
    responses: Mutex<VecDeque<String>>,
    last: Mutex<Option<String>>,
}

impl MockBackend {
    pub fn new() -> MockBackend {
        MockBackend { rules: Vec::new() }
    }

    /// Serves `responses` in order to requests whose last user message
    /// contains `needle`.
    pub fn on(mut self, needle: &str, responses: &[&str]) -> Self {
        self.rules.push(MockRule {
            needle: Some(needle.to_string()),
            responses: Mutex::new(responses.iter().map(|s| s.to_string()).collect()),
            last: Mutex::new(None),
        });
        self
    }

    /// Fallback responses for any request no other rule matches.
    pub fn otherwise(mut self, responses: &[&str]) -> Self {
        self.rules.push(MockRule {
            needle: None,
            responses: Mutex::new(responses.iter().map(|s| s.to_string()).collect()),
            last: Mutex::new(None),
        });
        self
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let text = request.last_user_text();
        for rule in &self.rules {
            let hit = match &rule.needle {
                Some(n) => text.contains(n.as_str()),
                None => true,
            };
            if !hit {
                continue;
            }
            let mut queue = rule.responses.lock().unwrap();
            let response = match queue.pop_front() {
                Some(r) => {
                    *rule.last.lock().unwrap() = Some(r.clone());
                    r
                }
                None => rule
                    .last
                    .lock()
                    .unwrap()
                    .clone()
                    .ok_or_else(|| LlmError::NoFixture(request.key()))?,
            };
            if response == MOCK_RATE_LIMIT {
                return Err(LlmError::RateLimited);
            }
            return Ok(response);
        }
        Err(LlmError::NoFixture(request.key()))
    }
}

/// Replays recorded transcripts keyed by request digest, in recorded order.
pub struct ReplayBackend {
    responses: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ReplayBackend {
    pub fn from_transcripts(transcripts: &[Transcript]) -> ReplayBackend {
        let mut responses: HashMap<String, VecDeque<String>> = HashMap::new();
        for t in transcripts {
            responses
                .entry(t.request.key())
                .or_default()
                .push_back(t.response.clone());
        }
        ReplayBackend {
            responses: Mutex::new(responses),
        }
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> String {
        "replay".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let key = request.key();
        let mut map = self.responses.lock().unwrap();
        map.get_mut(&key)
            .and_then(|q| q.pop_front())
            .ok_or(LlmError::NoFixture(key))
    }
}

/// Generic chat-completion JSON POST backend. The endpoint, model, and key
/// environment variable come from configuration.
pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(url: &str, key_env: &str) -> HttpBackend {
        HttpBackend {
            url: url.to_string(),
            api_key: std::env::var(key_env).ok(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.url)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let mut call = self.client.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call
            .send()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(LlmError::Auth(status.to_string()));
        }
        if status.as_u16() == 429 {
            return Err(LlmError::RateLimited);
        }
        if !status.is_success() {
            return Err(LlmError::Backend(status.to_string()));
        }
        let body: serde_json::Value = response
            .json()
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryConfig {
    pub max: u32,
    pub base_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max: 3,
            base_ms: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    /// "mock", "replay", or "http".
    pub kind: String,
    #[serde(default)]
    pub url: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_key_env")]
    pub key_env: String,
}

fn default_model() -> String {
    "default-model".into()
}

fn default_key_env() -> String {
    "LLM_API_KEY".into()
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: "mock".into(),
            url: String::new(),
            model: default_model(),
            key_env: default_key_env(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcurrencyConfig {
    pub max_in_flight: usize,
}

impl Default for ConcurrencyConfig {
    fn default() -> Self {
        ConcurrencyConfig { max_in_flight: 4 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LlmConfig {
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub retry: RetryConfig,
    #[serde(default)]
    pub concurrency: ConcurrencyConfig,
}

/// Shareable client enforcing retry and bounded in-flight concurrency.
pub struct Client {
    backend: Arc<dyn Backend>,
    retry: RetryConfig,
    max_in_flight: usize,
    pub model: String,
    transcripts: Mutex<Vec<Transcript>>,
}

impl Client {
    pub fn new(backend: Arc<dyn Backend>, config: &LlmConfig) -> Client {
        Client {
            backend,
            retry: config.retry.clone(),
            max_in_flight: config.concurrency.max_in_flight.max(1),
            model: config.backend.model.clone(),
            transcripts: Mutex::new(Vec::new()),
        }
    }

    pub fn mock(backend: MockBackend) -> Client {
        let config = LlmConfig {
            retry: RetryConfig {
                max: 3,
                base_ms: 0,
            },
            ..LlmConfig::default()
        };
        Client::new(Arc::new(backend), &config)
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    /// Completes one request, retrying transient failures with exponential
    /// backoff up to the configured budget.
    pub fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            match self.backend.complete(request) {
                Ok(response) => {
                    self.transcripts.lock().unwrap().push(Transcript {
                        request: request.clone(),
                        response: response.clone(),
                        latency_ms: started.elapsed().as_millis() as u64,
                        backend: self.backend.id(),
                    });
                    return Ok(response);
                }
                Err(e) if e.transient() && attempt < self.retry.max => {
                    let backoff = self.retry.base_ms.saturating_mul(1 << attempt.min(16));
                    if backoff > 0 {
                        std::thread::sleep(Duration::from_millis(backoff));
                    }
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Completes a batch with at most `max_in_flight` outstanding calls.
    /// Results align positionally with the requests; one failure never
    /// aborts the batch.
    pub fn complete_many(
        &self,
        requests: &[CompletionRequest],
    ) -> Vec<Result<String, LlmError>> {
        let workers = self.max_in_flight.min(requests.len().max(1));
        if workers <= 1 {
            return requests.iter().map(|r| self.complete(r)).collect();
        }
        let next = AtomicUsize::new(0);
        let results: Vec<Mutex<Option<Result<String, LlmError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let result = self.complete(&requests[i]);
                    *results[i].lock().unwrap() = Some(result);
                });
            }
        });
        results
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("worker filled every slot"))
            .collect()
    }

    /// Drains every transcript recorded so far, in call order.
    pub fn take_transcripts(&self) -> Vec<Transcript> {
        std::mem::take(&mut self.transcripts.lock().unwrap())
    }
}

/// Builds a client from configuration; `replay_transcripts` feeds the
/// replay backend when `backend.kind = "replay"`.
pub fn client_from_config(
    config: &LlmConfig,
    replay_transcripts: Option<Vec<Transcript>>,
) -> Result<Client, LlmError> {
    let backend: Arc<dyn Backend> = match config.backend.kind.as_str() {
        "mock" => Arc::new(MockBackend::new()),
        "replay" => Arc::new(ReplayBackend::from_transcripts(
            &replay_transcripts.unwrap_or_default(),
        )),
        "http" => Arc::new(HttpBackend::new(
            &config.backend.url,
            &config.backend.key_env,
        )),
        other => {
            return Err(LlmError::Backend(format!(
                "unknown backend kind {other:?}"
            )))
        }
    };
    Ok(Client::new(backend, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(text: &str) -> CompletionRequest {
        CompletionRequest::user("m", text, 0.0)
    }

    #[test]
    fn mock_serves_canned_text() {
        let client = Client::mock(MockBackend::new().on("hello", &["world"]));
        assert_eq!(client.complete(&req("say hello")).unwrap(), "world");
    }

    #[test]
    fn exhausted_retry_budget_surfaces_rate_limit() {
        let backend = MockBackend::new().otherwise(&[
            MOCK_RATE_LIMIT,
            MOCK_RATE_LIMIT,
            MOCK_RATE_LIMIT,
            MOCK_RATE_LIMIT,
            MOCK_RATE_LIMIT,
        ]);
        let client = Client::mock(backend);
        assert_eq!(client.complete(&req("x")).unwrap_err(), LlmError::RateLimited);
    }

    #[test]
    fn transient_failure_is_retried() {
        let backend = MockBackend::new().otherwise(&[MOCK_RATE_LIMIT, "recovered"]);
        let client = Client::mock(backend);
        assert_eq!(client.complete(&req("x")).unwrap(), "recovered");
    }

    #[test]
    fn complete_many_aligns_positionally() {
        let backend = MockBackend::new()
            .on("alpha", &["A"])
            .on("beta", &["B"])
            .on("gamma", &["C"]);
        let client = Client::mock(backend);
        let results = client.complete_many(&[req("gamma"), req("alpha"), req("beta")]);
        let texts: Vec<_> = results.into_iter().map(|r| r.unwrap()).collect();
        assert_eq!(texts, vec!["C", "A", "B"]);
    }

    #[test]
    fn one_failed_item_does_not_abort_batch() {
        let backend = MockBackend::new().on("good", &["ok", "ok"]);
        let client = Client::mock(backend);
        let results = client.complete_many(&[req("good"), req("missing"), req("good")]);
        assert!(results[0].is_ok());
        assert!(results[1].is_err());
        assert!(results[2].is_ok());
    }

    #[test]
    fn identical_sampling_requests_draw_successive_responses() {
        let backend = MockBackend::new().on("sample", &["r1", "r2", "r3"]);
        let client = Client::mock(backend);
        let requests: Vec<_> = (0..3).map(|_| req("sample")).collect();
        let texts: Vec<_> = requests.iter().map(|r| client.complete(r).unwrap()).collect();
        assert_eq!(texts, vec!["r1", "r2", "r3"]);
    }

    #[test]
    fn record_replay_equivalence() {
        let client = Client::mock(MockBackend::new().on("q", &["answer one", "answer two"]));
        let r = req("q");
        let first = client.complete(&r).unwrap();
        let second = client.complete(&r).unwrap();
        let transcripts = client.take_transcripts();

        let replay = Client::new(
            Arc::new(ReplayBackend::from_transcripts(&transcripts)),
            &LlmConfig::default(),
        );
        assert_eq!(replay.complete(&r).unwrap(), first);
        assert_eq!(replay.complete(&r).unwrap(), second);
        assert!(replay.complete(&r).is_err());
    }
}
