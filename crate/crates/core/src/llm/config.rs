use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    Remote,
    #[default]
    Mock,
}

impl std::str::FromStr for BackendMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "remote" => Ok(BackendMode::Remote),
            "mock" => Ok(BackendMode::Mock),
            _ => Err(format!("unknown backend `{s}` (remote, mock)")),
        }
    }
}

/// Exponential backoff: `base * factor^k` before retry `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub base_secs: f64,
    pub factor: f64,
    pub max_tries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_secs: 1.0,
            factor: 2.0,
            max_tries: 5,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1` (0-based `attempt`).
    pub fn delay(&self, attempt: u32) -> Duration {
        Duration::from_secs_f64(self.base_secs * self.factor.powi(attempt as i32))
    }
}

/// Backend settings. The API key itself never appears here, only the name
/// of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub mode: BackendMode,
    /// Base URL; `/chat/completions` and `/embeddings` are appended.
    pub endpoint: String,
    pub model: String,
    pub embed_model: String,
    pub temperature: f64,
    pub reflection_temperature: f64,
    pub timeout_secs: f64,
    pub retry: RetryPolicy,
    pub api_key_env: String,
    /// Required in mock mode.
    pub seed: Option<u64>,
    pub max_in_flight: usize,
    /// Dimension of `hash_embed` vectors.
    pub embed_dim: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            mode: BackendMode::Mock,
            endpoint: String::new(),
            model: String::new(),
            embed_model: String::new(),
            temperature: 1.0,
            reflection_temperature: 0.7,
            timeout_secs: 120.0,
            retry: RetryPolicy::default(),
            api_key_env: "EVOPLACE_API_KEY".to_string(),
            seed: Some(0),
            max_in_flight: 8,
            embed_dim: 256,
        }
    }
}

impl BackendConfig {
    pub fn mock(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::default()
        }
    }

    pub fn remote(endpoint: &str, model: &str, embed_model: &str) -> Self {
        Self {
            mode: BackendMode::Remote,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            embed_model: embed_model.to_string(),
            seed: None,
            ..Self::default()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::InvalidConfig(m.to_string()));
        match self.mode {
            BackendMode::Remote if self.endpoint.is_empty() || self.model.is_empty() => {
                return bad("remote backend needs an endpoint and a model")
            }
            BackendMode::Mock if self.seed.is_none() => return bad("mock backend needs a seed"),
            _ => {}
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1");
        }
        if self.embed_dim < 16 {
            return bad("embed_dim must be at least 16");
        }
        if self.retry.max_tries == 0 {
            return bad("retry.max_tries must be at least 1");
        }
        Ok(())
    }
}
