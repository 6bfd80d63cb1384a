//! Chat-completion transports and the annotate/feedback protocol.
//!
//! [`annotate_report`] drives the whole exchange for one report: render the
//! prompt (truncated to the token budget), send it as a single user message,
//! and optionally repeat with the prior response under `Updates:` plus the
//! probe `are you sure?` for a configured number of feedback rounds. The
//! final response is parsed into a [`Timeline`].
//!
//! Transports are pluggable: a JSON-over-HTTPS client for real endpoints, a
//! fixture transport serving canned responses for offline runs, and
//! wrappers adding disk caching and request pacing.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime};
use thiserror::Error;

use crate::corpus::CaseReport;
use crate::prompt::{
    base_prompt, render_prompt, truncate_to_budget, CharsPerToken, PromptBundle, PromptError,
    TokenEstimator, DEFAULT_FEEDBACK_PROMPT,
};
use crate::timeline::{parse_llm_timeline, Timeline, TimelineError};
use crate::util::{atomic_write, parallel_map, sha256_hex, Secret};

/// Environment variable holding the API key; `OPENAI_API_KEY` is honored as
/// a fallback. Keys are never accepted as flags and never logged or cached.
pub const API_KEY_ENV: &str = "CASETIME_API_KEY";
pub const API_KEY_ENV_FALLBACK: &str = "OPENAI_API_KEY";
/// Environment variable overriding the chat endpoint URL.
pub const CHAT_URL_ENV: &str = "CASETIME_CHAT_URL";

const DEFAULT_CHAT_URL: &str = "https://api.openai.com/v1/chat/completions";

/// Endpoint, sampling, budget and retry settings for one annotation
/// strategy. `feedback_rounds` is 0 for single-shot strategies and 2 for
/// the feedback strategy; other values are allowed for experimentation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmConfig {
    pub model_name: String,
    pub temperature: f64,
    pub token_limit: usize,
    pub feedback_rounds: usize,
    pub endpoint_url: String,
    pub max_retries: u32,
    pub request_timeout: Duration,
    pub retry_backoff: Duration,
}

impl LlmConfig {
    pub fn new(model_name: impl Into<String>) -> Self {
        LlmConfig {
            model_name: model_name.into(),
            temperature: 0.0,
            token_limit: 8192,
            feedback_rounds: 0,
            endpoint_url: std::env::var(CHAT_URL_ENV).unwrap_or_else(|_| DEFAULT_CHAT_URL.into()),
            max_retries: 3,
            request_timeout: Duration::from_secs(120),
            retry_backoff: Duration::from_millis(500),
        }
    }

    /// Single-shot strategy at temperature 0 with an 8,192-token budget.
    pub fn gpt4() -> Self {
        LlmConfig::new("gpt-4")
    }

    /// Two feedback rounds on top of [`LlmConfig::gpt4`].
    pub fn gpt4_feedback() -> Self {
        LlmConfig {
            feedback_rounds: 2,
            ..LlmConfig::new("gpt-4")
        }
    }

    /// Single-shot strategy at temperature 1 (the endpoint rejects 0) with
    /// a 32,768-token budget.
    pub fn o1_preview() -> Self {
        LlmConfig {
            temperature: 1.0,
            token_limit: 32_768,
            ..LlmConfig::new("o1-preview")
        }
    }

    /// Annotator tag for timelines from this config: the model name, with
    /// `-feedback` appended when feedback rounds are enabled.
    pub fn annotator_tag(&self) -> String {
        if self.feedback_rounds > 0 {
            format!("{}-feedback", self.model_name)
        } else {
            self.model_name.clone()
        }
    }

    /// Stable digest of the whole config, used in cache keys and report
    /// provenance.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        sha256_hex(&[&json])
    }
}

/// One chat request as seen by a transport. `fixture_key` and `round` let
/// the fixture transport pick a canned response; network transports ignore
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub content: String,
    pub fixture_key: Option<String>,
    pub round: usize,
}

/// One request/response exchange, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request_text: String,
    pub response_text: String,
    pub round_index: usize,
    pub model_name: String,
    pub latency: Duration,
}

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("transport failed after {attempts} attempt(s): {detail}")]
    Transport { detail: String, attempts: u32 },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("endpoint rejected temperature {0}")]
    TemperatureRejected(f64),
}

/// A single-attempt chat completion. Retry policy lives in [`chat_once`],
/// not in transports.
pub trait ChatTransport: Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError>;
    fn name(&self) -> &str;
}

/// Send one single-user-message request, retrying transient failures with
/// exponential backoff up to `config.max_retries`. Authentication errors
/// are not retried. If the endpoint rejects the configured temperature the
/// request is retried once at temperature 1.
pub fn chat_once(
    prompt: &str,
    config: &LlmConfig,
    transport: &dyn ChatTransport,
) -> Result<String, ChatError> {
    chat_once_keyed(prompt, config, transport, None, 0)
}

pub(crate) fn chat_once_keyed(
    prompt: &str,
    config: &LlmConfig,
    transport: &dyn ChatTransport,
    fixture_key: Option<String>,
    round: usize,
) -> Result<String, ChatError> {
    let mut request = ChatRequest {
        endpoint_url: config.endpoint_url.clone(),
        model_name: config.model_name.clone(),
        temperature: config.temperature,
        content: prompt.to_string(),
        fixture_key,
        round,
    };
    let mut attempt: u32 = 0;
    loop {
        match transport.complete(&request) {
            Ok(text) => return Ok(text),
            Err(ChatError::Auth(detail)) => return Err(ChatError::Auth(detail)),
            Err(ChatError::TemperatureRejected(_)) if request.temperature != 1.0 => {
                request.temperature = 1.0;
            }
            Err(err) => {
                if attempt >= config.max_retries {
                    return Err(match err {
                        ChatError::Transport { detail, .. } => ChatError::Transport {
                            detail,
                            attempts: attempt + 1,
                        },
                        other => other,
                    });
                }
                std::thread::sleep(config.retry_backoff * 2u32.pow(attempt.min(8)));
                attempt += 1;
            }
        }
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: [WireMessage<'a>; 1],
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    content: Option<String>,
}

/// JSON-over-HTTPS chat-completion client using the de-facto `messages`
/// schema.
pub struct HttpChatTransport {
    agent: ureq::Agent,
    api_key: Option<Secret>,
}

impl std::fmt::Debug for HttpChatTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatTransport")
            .field("api_key", &self.api_key)
            .finish_non_exhaustive()
    }
}

impl HttpChatTransport {
    pub fn new(timeout: Duration) -> Self {
        HttpChatTransport {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            api_key: None,
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(Secret::new(key));
        self
    }

    /// Construct from the environment: key from [`API_KEY_ENV`] or
    /// [`API_KEY_ENV_FALLBACK`] when present.
    pub fn from_env(timeout: Duration) -> Self {
        let key = std::env::var(API_KEY_ENV)
            .or_else(|_| std::env::var(API_KEY_ENV_FALLBACK))
            .ok();
        let transport = HttpChatTransport::new(timeout);
        match key {
            Some(key) => transport.with_api_key(key),
            None => transport,
        }
    }
}

impl ChatTransport for HttpChatTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        let body = serde_json::to_string(&WireRequest {
            model: &request.model_name,
            messages: [WireMessage {
                role: "user",
                content: &request.content,
            }],
            temperature: request.temperature,
        })
        .expect("chat request serializes");
        let mut http = self
            .agent
            .post(&request.endpoint_url)
            .set("content-type", "application/json");
        if let Some(key) = &self.api_key {
            http = http.set("authorization", &format!("Bearer {}", key.expose()));
        }
        match http.send_string(&body) {
            Ok(response) => {
                let raw = response.into_string().map_err(|e| ChatError::Transport {
                    detail: format!("reading response body: {e}"),
                    attempts: 1,
                })?;
                let parsed: WireResponse =
                    serde_json::from_str(&raw).map_err(|e| ChatError::Transport {
                        detail: format!("malformed response: {e}"),
                        attempts: 1,
                    })?;
                parsed
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| ChatError::Transport {
                        detail: "response had no assistant message".into(),
                        attempts: 1,
                    })
            }
            Err(ureq::Error::Status(code, response)) => {
                let detail = response
                    .into_string()
                    .unwrap_or_else(|_| format!("status {code}"));
                match code {
                    401 | 403 => Err(ChatError::Auth(detail)),
                    400 if detail.contains("temperature") => {
                        Err(ChatError::TemperatureRejected(request.temperature))
                    }
                    _ => Err(ChatError::Transport {
                        detail: format!("status {code}: {detail}"),
                        attempts: 1,
                    }),
                }
            }
            Err(ureq::Error::Transport(t)) => {
                let detail = t.to_string();
                if detail.to_lowercase().contains("timed out") {
                    Err(ChatError::Timeout(detail))
                } else {
                    Err(ChatError::Transport { detail, attempts: 1 })
                }
            }
        }
    }

    fn name(&self) -> &str {
        "http"
    }
}

/// Offline transport serving canned responses.
///
/// Lookup order for a request with fixture key `K` in round `r`:
/// in-memory entry `K.r{r}`, in-memory entry `K`, file `{dir}/K.r{r}.txt`,
/// file `{dir}/K.txt`, then the default response. Anything else is a
/// transport error, which is what an offline run without fixtures should
/// produce.
#[derive(Debug, Clone, Default)]
pub struct FixtureTransport {
    dir: Option<PathBuf>,
    canned: HashMap<String, String>,
    default_response: Option<String>,
}

impl FixtureTransport {
    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        FixtureTransport {
            dir: Some(dir.into()),
            ..FixtureTransport::default()
        }
    }

    pub fn with_response(mut self, key: impl Into<String>, response: impl Into<String>) -> Self {
        self.canned.insert(key.into(), response.into());
        self
    }

    pub fn with_default_response(mut self, response: impl Into<String>) -> Self {
        self.default_response = Some(response.into());
        self
    }
}

impl ChatTransport for FixtureTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        if let Some(key) = &request.fixture_key {
            let round_key = format!("{key}.r{}", request.round);
            if let Some(text) = self.canned.get(&round_key).or_else(|| self.canned.get(key)) {
                return Ok(text.clone());
            }
            if let Some(dir) = &self.dir {
                for name in [format!("{round_key}.txt"), format!("{key}.txt")] {
                    let path = dir.join(name);
                    if let Ok(text) = std::fs::read_to_string(&path) {
                        return Ok(text);
                    }
                }
            }
        }
        match &self.default_response {
            Some(text) => Ok(text.clone()),
            None => Err(ChatError::Transport {
                detail: format!(
                    "no fixture response for key {:?} round {}",
                    request.fixture_key, request.round
                ),
                attempts: 1,
            }),
        }
    }

    fn name(&self) -> &str {
        "fixture"
    }
}

/// Enforces a minimum interval between request starts across threads.
pub struct PacedTransport<'a> {
    inner: &'a dyn ChatTransport,
    min_interval: Duration,
    last_start: Mutex<Option<Instant>>,
}

impl<'a> PacedTransport<'a> {
    pub fn new(inner: &'a dyn ChatTransport, min_interval: Duration) -> Self {
        PacedTransport {
            inner,
            min_interval,
            last_start: Mutex::new(None),
        }
    }
}

impl ChatTransport for PacedTransport<'_> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        loop {
            let wait = {
                let mut last = self.last_start.lock().unwrap();
                let now = Instant::now();
                match *last {
                    Some(prev) if now.duration_since(prev) < self.min_interval => {
                        self.min_interval - now.duration_since(prev)
                    }
                    _ => {
                        *last = Some(now);
                        break;
                    }
                }
            };
            std::thread::sleep(wait);
        }
        self.inner.complete(request)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

/// One cached exchange on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CachedExchange {
    pub request_text: String,
    pub response_text: String,
    pub model_name: String,
    pub round_index: usize,
    pub created_unix: u64,
    pub config_digest: String,
}

/// Disk cache of exchanges, one JSON document per request, keyed by
/// `(report id, model, config digest, prompt text)`. Reads are lock-free;
/// writes are serialized and atomic.
pub struct ExchangeCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ExchangeCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ExchangeCache {
            dir: dir.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &std::path::Path {
        &self.dir
    }

    fn key(&self, request: &ChatRequest, config_digest: &str) -> String {
        sha256_hex(&[
            request.fixture_key.as_deref().unwrap_or(""),
            &request.model_name,
            config_digest,
            &request.content,
        ])
    }

    pub fn get(&self, request: &ChatRequest, config_digest: &str) -> Option<CachedExchange> {
        let path = self.dir.join(format!("{}.json", self.key(request, config_digest)));
        let raw = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&raw).ok()
    }

    pub fn put(&self, request: &ChatRequest, config_digest: &str, response_text: &str) {
        let entry = CachedExchange {
            request_text: request.content.clone(),
            response_text: response_text.to_string(),
            model_name: request.model_name.clone(),
            round_index: request.round,
            created_unix: SystemTime::now()
                .duration_since(SystemTime::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config_digest: config_digest.to_string(),
        };
        let path = self.dir.join(format!("{}.json", self.key(request, config_digest)));
        if let Ok(json) = serde_json::to_string_pretty(&entry) {
            let _lock = self.write_lock.lock().unwrap();
            let _ = atomic_write(&path, json.as_bytes());
        }
    }
}

/// Transport wrapper that answers from the exchange cache and records
/// misses, so reruns cost nothing.
pub struct CachingTransport<'a> {
    inner: &'a dyn ChatTransport,
    cache: &'a ExchangeCache,
    config_digest: String,
}

impl<'a> CachingTransport<'a> {
    pub fn new(inner: &'a dyn ChatTransport, cache: &'a ExchangeCache, config: &LlmConfig) -> Self {
        CachingTransport {
            inner,
            cache,
            config_digest: config.digest(),
        }
    }
}

impl ChatTransport for CachingTransport<'_> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        if let Some(hit) = self.cache.get(request, &self.config_digest) {
            return Ok(hit.response_text);
        }
        let response = self.inner.complete(request)?;
        self.cache.put(request, &self.config_digest, &response);
        Ok(response)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
}

/// Timeline plus the full conversation that produced it.
#[derive(Debug, Clone)]
pub struct AnnotationOutcome {
    pub timeline: Timeline,
    pub exchanges: Vec<ChatExchange>,
}

/// Annotate one report with the packaged base prompt, the default feedback
/// probe, and the default token estimator.
pub fn annotate_report(
    report: &CaseReport,
    config: &LlmConfig,
    transport: &dyn ChatTransport,
) -> Result<AnnotationOutcome, AnnotateError> {
    annotate_report_with(
        report,
        config,
        transport,
        &CharsPerToken::default(),
        base_prompt(),
        DEFAULT_FEEDBACK_PROMPT,
    )
}

/// Full-control variant of [`annotate_report`].
///
/// Round 0 sends the plain prompt; each feedback round re-renders with the
/// previous response under `Updates:` plus `feedback_probe`, re-truncating
/// the case text to the budget each time. Performs exactly
/// `config.feedback_rounds + 1` transport calls and parses the final
/// response.
pub fn annotate_report_with(
    report: &CaseReport,
    config: &LlmConfig,
    transport: &dyn ChatTransport,
    estimator: &dyn TokenEstimator,
    base: &str,
    feedback_probe: &str,
) -> Result<AnnotationOutcome, AnnotateError> {
    let mut exchanges: Vec<ChatExchange> = Vec::new();
    let mut response: Option<String> = None;
    for round in 0..=config.feedback_rounds {
        let bundle = match &response {
            None => PromptBundle::new(base, &report.body),
            Some(prior) => {
                PromptBundle::new(base, &report.body).with_feedback_prompt(prior, feedback_probe)
            }
        };
        let bundle = truncate_to_budget(&bundle, config.token_limit, estimator)?;
        let prompt = render_prompt(&bundle)?;
        let started = Instant::now();
        let text = chat_once_keyed(&prompt, config, transport, Some(report.id.clone()), round)?;
        exchanges.push(ChatExchange {
            request_text: prompt,
            response_text: text.clone(),
            round_index: round,
            model_name: config.model_name.clone(),
            latency: started.elapsed(),
        });
        response = Some(text);
    }
    let final_text = response.expect("at least one round ran");
    let timeline = parse_llm_timeline(&final_text, &report.id, &config.annotator_tag())?;
    Ok(AnnotationOutcome {
        timeline,
        exchanges,
    })
}

/// Annotate many reports on a bounded worker pool; per-report rounds stay
/// sequential. Results are in input order.
pub fn annotate_corpus(
    reports: Vec<CaseReport>,
    config: &LlmConfig,
    transport: &dyn ChatTransport,
    workers: usize,
) -> Vec<(String, Result<AnnotationOutcome, AnnotateError>)> {
    parallel_map(reports, workers, |report| {
        let outcome = annotate_report(&report, config, transport);
        (report.id, outcome)
    })
}
