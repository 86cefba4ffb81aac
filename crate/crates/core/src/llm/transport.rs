use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Failure below the HTTP status level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Io(String),
}

/// Sends one JSON POST and returns `(status, body)`.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        api_key: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<(u16, String), TransportError>;
}

/// Blocking HTTPS client.
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        api_key: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<(u16, String), TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let resp = agent
            .post(url)
            .header("Authorization", &format!("Bearer {api_key}"))
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => TransportError::Timeout,
                other => TransportError::Io(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| TransportError::Io(e.to_string()))?;
        Ok((status, text))
    }
}

/// Refuses every request and counts the attempts. Mock gateways hold one so
/// any accidental network path shows up as an error and a non-zero count.
#[derive(Default)]
pub struct ForbiddenTransport {
    calls: AtomicUsize,
}

impl ForbiddenTransport {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for ForbiddenTransport {
    fn post_json(
        &self,
        url: &str,
        _api_key: &str,
        _body: &Value,
        _timeout: Duration,
    ) -> Result<(u16, String), TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(TransportError::Io(format!(
            "network access is disabled for this backend (attempted {url})"
        )))
    }
}

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedExchange {
    /// `chat` or `embeddings`.
    pub endpoint: String,
    pub request: Value,
    pub status: u16,
    pub response: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub description: String,
    pub exchanges: Vec<RecordedExchange>,
}

/// Replays recorded exchanges. Requests are answered by the next unused
/// exchange for the same endpoint, cycling when exhausted.
pub struct FixtureTransport {
    fixture: Fixture,
    cursor: Mutex<[usize; 2]>,
}

impl FixtureTransport {
    pub fn new(fixture: Fixture) -> Self {
        Self {
            fixture,
            cursor: Mutex::new([0, 0]),
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let fixture = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::new(fixture))
    }

    pub fn fixture(&self) -> &Fixture {
        &self.fixture
    }
}

impl Transport for FixtureTransport {
    fn post_json(
        &self,
        url: &str,
        _api_key: &str,
        _body: &Value,
        _timeout: Duration,
    ) -> Result<(u16, String), TransportError> {
        let (endpoint, slot) = if url.ends_with("/embeddings") {
            ("embeddings", 1)
        } else {
            ("chat", 0)
        };
        let matching: Vec<&RecordedExchange> = self
            .fixture
            .exchanges
            .iter()
            .filter(|e| e.endpoint == endpoint)
            .collect();
        if matching.is_empty() {
            return Err(TransportError::Io(format!("fixture has no `{endpoint}` exchange")));
        }
        let mut cursor = self.cursor.lock().expect("fixture cursor poisoned");
        let ex = matching[cursor[slot] % matching.len()];
        cursor[slot] += 1;
        Ok((ex.status, ex.response.to_string()))
    }
}
