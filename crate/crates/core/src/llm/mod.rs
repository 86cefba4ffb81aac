//! Chat and embedding access behind one gateway, with an offline mock.
//!
//! Remote mode speaks the common chat-completion JSON protocol: requests
//! `{model, messages, temperature}` to `{endpoint}/chat/completions`, reply
//! text from `choices[0].message.content`; embeddings `{model, input}` to
//! `{endpoint}/embeddings`, vector from `data[0].embedding`.

mod config;
mod embed;
mod limiter;
pub mod mock;
mod transport;

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{BackendConfig, BackendMode, RetryPolicy};
pub use embed::{cosine, hash_embed, EmbeddingSource, EmbeddingVector};
pub use limiter::{FairLimiter, Permit};
pub use mock::{mock_generate, mock_mutate, MockTask};
pub use transport::{
    Fixture, FixtureTransport, ForbiddenTransport, HttpTransport, RecordedExchange, Transport,
    TransportError,
};

use crate::util::{derive_seed, sha256_hex};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("API key environment variable `{0}` is not set")]
    Auth(String),
    #[error("rate limited after {0} tries")]
    RateLimited(u32),
    #[error("request timed out after {0} tries")]
    Timeout(u32),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("empty request: {0}")]
    EmptyInput(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    /// Per-request seed; the mock combines it with the backend seed.
    pub seed: u64,
    /// What the mock should answer. Remote backends ignore it.
    pub task: MockTask,
}

/// One gateway call as kept for replay and auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub endpoint: String,
    pub request_hash: String,
    pub response: String,
    pub latency_ms: f64,
    pub tries: u32,
}

/// Hash of the wire-level request, used to tie provenance to exchanges.
pub fn request_hash(model: &str, messages: &[ChatMessage], temperature: f64) -> String {
    let body = json!({ "model": model, "messages": messages, "temperature": temperature });
    sha256_hex(body.to_string().as_bytes())
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct Gateway {
    cfg: BackendConfig,
    transport: Arc<dyn Transport>,
    limiter: FairLimiter,
    sleeper: Sleeper,
    log: Mutex<Vec<ExchangeRecord>>,
}

impl Gateway {
    /// Gateway for `cfg`. Mock mode gets a transport that refuses all
    /// requests, so it cannot reach the network even by mistake.
    pub fn new(cfg: BackendConfig) -> Result<Self, LlmError> {
        let transport: Arc<dyn Transport> = match cfg.mode {
            BackendMode::Remote => Arc::new(HttpTransport),
            BackendMode::Mock => Arc::new(ForbiddenTransport::default()),
        };
        Self::with_transport(cfg, transport)
    }

    pub fn mock(seed: u64) -> Self {
        Self::new(BackendConfig::mock(seed)).expect("mock config is valid")
    }

    pub fn with_transport(cfg: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, LlmError> {
        cfg.validate()?;
        Ok(Self {
            limiter: FairLimiter::new(cfg.max_in_flight),
            cfg,
            transport,
            sleeper: Arc::new(std::thread::sleep),
            log: Mutex::new(Vec::new()),
        })
    }

    /// Replaces the backoff sleep, e.g. with a recorder in tests.
    pub fn with_sleeper(mut self, f: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(f);
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn is_mock(&self) -> bool {
        self.cfg.mode == BackendMode::Mock
    }

    pub fn model_name(&self) -> &str {
        if self.is_mock() {
            "mock"
        } else {
            &self.cfg.model
        }
    }

    /// Takes the exchanges recorded so far.
    pub fn drain_exchanges(&self) -> Vec<ExchangeRecord> {
        std::mem::take(&mut *self.log.lock().expect("exchange log poisoned"))
    }

    pub fn chat(&self, req: &ChatRequest) -> Result<String, LlmError> {
        if req.messages.is_empty() {
            return Err(LlmError::EmptyInput("no messages"));
        }
        let hash = request_hash(self.model_name(), &req.messages, req.temperature);
        match self.cfg.mode {
            BackendMode::Mock => {
                let seed = derive_seed(self.cfg.seed.unwrap_or(0), &format!("chat/{}", req.seed));
                let text = mock::mock_reply(seed, &req.task);
                self.record("chat", hash, &text, 0.0, 1);
                Ok(text)
            }
            BackendMode::Remote => {
                let body = json!({
                    "model": self.cfg.model,
                    "messages": req.messages,
                    "temperature": req.temperature,
                });
                let (resp, ms, tries) = self.post("chat/completions", &body)?;
                let text = resp
                    .pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .ok_or_else(|| {
                        LlmError::MalformedResponse("missing choices[0].message.content".into())
                    })?
                    .to_string();
                self.record("chat", hash, &text, ms, tries);
                Ok(text)
            }
        }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        if text.is_empty() {
            return Err(LlmError::EmptyInput("empty text"));
        }
        match self.cfg.mode {
            BackendMode::Mock => Ok(hash_embed(text, self.cfg.embed_dim)),
            BackendMode::Remote => {
                let body = json!({ "model": self.cfg.embed_model, "input": text });
                let hash = sha256_hex(body.to_string().as_bytes());
                let (resp, ms, tries) = self.post("embeddings", &body)?;
                let values: Vec<f64> = resp
                    .pointer("/data/0/embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| LlmError::MalformedResponse("missing data[0].embedding".into()))?
                    .iter()
                    .map(|v| {
                        v.as_f64()
                            .ok_or_else(|| LlmError::MalformedResponse("non-numeric embedding".into()))
                    })
                    .collect::<Result<_, _>>()?;
                if values.is_empty() {
                    return Err(LlmError::MalformedResponse("empty embedding".into()));
                }
                self.record("embeddings", hash, &format!("dim={}", values.len()), ms, tries);
                Ok(EmbeddingVector::normalized(values, EmbeddingSource::Remote))
            }
        }
    }

    fn record(&self, endpoint: &str, request_hash: String, response: &str, latency_ms: f64, tries: u32) {
        self.log
            .lock()
            .expect("exchange log poisoned")
            .push(ExchangeRecord {
                endpoint: endpoint.to_string(),
                request_hash,
                response: response.to_string(),
                latency_ms,
                tries,
            });
    }

    /// POST with retries on transport errors, 429 and 5xx.
    fn post(&self, path: &str, body: &Value) -> Result<(Value, f64, u32), LlmError> {
        // The key is read before anything touches the network.
        let key = std::env::var(&self.cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::Auth(self.cfg.api_key_env.clone()))?;
        let url = format!("{}/{path}", self.cfg.endpoint);
        let _permit = self.limiter.acquire();
        let start = Instant::now();
        let max = self.cfg.retry.max_tries;
        let mut last = LlmError::Transport("no attempt made".into());
        for attempt in 0..max {
            if attempt > 0 {
                (self.sleeper)(self.cfg.retry.delay(attempt - 1));
            }
            match self.transport.post_json(&url, &key, body, self.cfg.timeout()) {
                Ok((status, text)) if (200..300).contains(&status) => {
                    let v: Value = serde_json::from_str(&text)
                        .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
                    let ms = start.elapsed().as_secs_f64() * 1e3;
                    return Ok((v, ms, attempt + 1));
                }
                Ok((401, _)) | Ok((403, _)) => return Err(LlmError::Auth(self.cfg.api_key_env.clone())),
                Ok((429, _)) => last = LlmError::RateLimited(attempt + 1),
                Ok((status, text)) if status >= 500 => {
                    last = LlmError::Transport(format!("HTTP {status}: {}", truncate(&text)))
                }
                Ok((status, text)) => {
                    return Err(LlmError::MalformedResponse(format!(
                        "HTTP {status}: {}",
                        truncate(&text)
                    )))
                }
                Err(TransportError::Timeout) => last = LlmError::Timeout(attempt + 1),
                Err(TransportError::Io(m)) => last = LlmError::Transport(m),
            }
        }
        Err(last)
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::StrategyKind;

    struct Scripted {
        replies: Mutex<Vec<Result<(u16, String), TransportError>>>,
    }

    impl Transport for Scripted {
        fn post_json(&self, _: &str, _: &str, _: &Value, _: Duration) -> Result<(u16, String), TransportError> {
            self.replies.lock().unwrap().remove(0)
        }
    }

    fn request() -> ChatRequest {
        ChatRequest {
            messages: vec![ChatMessage::user("hi")],
            temperature: 1.0,
            seed: 0,
            task: MockTask::Reference {
                kind: StrategyKind::Init,
            },
        }
    }

    fn remote(env: &str) -> BackendConfig {
        BackendConfig {
            api_key_env: env.into(),
            ..BackendConfig::remote("http://127.0.0.1:9", "m", "e")
        }
    }

    #[test]
    fn mock_chat_is_deterministic_and_offline() {
        let t = Arc::new(ForbiddenTransport::default());
        let g = Gateway::with_transport(BackendConfig::mock(5), t.clone()).unwrap();
        let a = g.chat(&request()).unwrap();
        let b = g.chat(&request()).unwrap();
        assert_eq!(a, b);
        g.embed("some text").unwrap();
        assert_eq!(t.calls(), 0);
    }

    #[test]
    fn missing_key_fails_before_any_request() {
        let t = Arc::new(ForbiddenTransport::default());
        let g = Gateway::with_transport(remote("EVOPLACE_TEST_UNSET_KEY"), t.clone()).unwrap();
        assert_eq!(
            g.chat(&request()),
            Err(LlmError::Auth("EVOPLACE_TEST_UNSET_KEY".into()))
        );
        assert_eq!(t.calls(), 0);
    }

    #[test]
    fn retries_back_off_then_succeed() {
        std::env::set_var("EVOPLACE_TEST_KEY_RETRY", "k");
        let ok = r#"{"choices":[{"message":{"content":"done"}}]}"#.to_string();
        let t = Arc::new(Scripted {
            replies: Mutex::new(vec![
                Ok((429, String::new())),
                Err(TransportError::Io("reset".into())),
                Ok((503, String::new())),
                Ok((200, ok)),
            ]),
        });
        let slept = Arc::new(Mutex::new(Vec::new()));
        let s2 = slept.clone();
        let g = Gateway::with_transport(remote("EVOPLACE_TEST_KEY_RETRY"), t)
            .unwrap()
            .with_sleeper(move |d| s2.lock().unwrap().push(d.as_secs_f64()));
        assert_eq!(g.chat(&request()).unwrap(), "done");
        assert_eq!(*slept.lock().unwrap(), vec![1.0, 2.0, 4.0]);
        assert_eq!(g.drain_exchanges()[0].tries, 4);
    }

    #[test]
    fn rate_limit_gives_up_after_five_tries() {
        std::env::set_var("EVOPLACE_TEST_KEY_429", "k");
        let t = Arc::new(Scripted {
            replies: Mutex::new((0..5).map(|_| Ok((429, String::new()))).collect()),
        });
        let g = Gateway::with_transport(remote("EVOPLACE_TEST_KEY_429"), t)
            .unwrap()
            .with_sleeper(|_| {});
        assert_eq!(g.chat(&request()), Err(LlmError::RateLimited(5)));
    }

    #[test]
    fn malformed_body_is_reported() {
        std::env::set_var("EVOPLACE_TEST_KEY_BAD", "k");
        let t = Arc::new(Scripted {
            replies: Mutex::new(vec![Ok((200, r#"{"choices":[]}"#.into()))]),
        });
        let g = Gateway::with_transport(remote("EVOPLACE_TEST_KEY_BAD"), t).unwrap();
        assert!(matches!(g.chat(&request()), Err(LlmError::MalformedResponse(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = BackendConfig::mock(1);
        c.seed = None;
        assert!(c.validate().is_err());
        assert!(BackendConfig::remote("", "m", "e").validate().is_err());
    }
}
