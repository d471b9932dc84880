//! Transport shared by the live text-generation and embedding providers:
//! an OpenAI-compatible JSON-over-HTTP client and the retry policy.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Environment variable holding the API key for live providers.
pub const API_KEY_ENV: &str = "TL_API_KEY";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("provider unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { attempts: u32, reason: String },
    #[error("provider rate limited the request after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("provider rejected the request (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("provider returned an empty completion")]
    EmptyCompletion,
    #[error("provider response could not be understood: {0}")]
    InvalidResponse(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
}

impl ProviderError {
    /// Transport failures worth retrying.
    pub fn is_transient(&self) -> bool {
        matches!(self, Self::ProviderUnavailable { .. } | Self::RateLimited { .. })
    }

    fn with_attempts(self, attempts: u32) -> Self {
        match self {
            Self::ProviderUnavailable { reason, .. } => Self::ProviderUnavailable { attempts, reason },
            Self::RateLimited { .. } => Self::RateLimited { attempts },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each subsequent retry.
    #[serde(with = "millis")]
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `retry` (0-based): 1s, 2s, 4s, ... by default.
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay
            .saturating_mul(1u32.checked_shl(retry).unwrap_or(u32::MAX))
    }

    /// Runs `op` until it succeeds, fails with a non-transient error, or
    /// the retry budget is spent.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() && attempt < self.max_retries => {
                    log::warn!(
                        "transient provider error ({e}); retry {} of {}",
                        attempt + 1,
                        self.max_retries
                    );
                    std::thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e.with_attempts(attempt + 1)),
            }
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Reads the API key from [`API_KEY_ENV`].
pub fn api_key_from_env() -> Result<String, ProviderError> {
    match std::env::var(API_KEY_ENV) {
        Ok(k) if !k.trim().is_empty() => Ok(k),
        _ => Err(ProviderError::MissingApiKey(API_KEY_ENV.to_string())),
    }
}

/// Minimal blocking JSON client for OpenAI-compatible endpoints.
#[derive(Debug, Clone)]
pub struct HttpClient {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(base_url: &str, api_key: String, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// POSTs `body` to `<base_url>/<path>`; maps HTTP 429 to `RateLimited`,
    /// 5xx and connection failures to `ProviderUnavailable`, other non-2xx
    /// statuses to `Rejected`.
    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = format!("{}/{}", self.base_url, path.trim_start_matches('/'));
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| ProviderError::ProviderUnavailable {
                attempts: 1,
                reason: format!("{url}: {e}"),
            })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::ProviderUnavailable {
                attempts: 1,
                reason: format!("{url}: reading body: {e}"),
            })?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| ProviderError::InvalidResponse(format!("{url}: {e}"))),
            429 => Err(ProviderError::RateLimited { attempts: 1 }),
            500..=599 => Err(ProviderError::ProviderUnavailable {
                attempts: 1,
                reason: format!("{url}: HTTP {status}"),
            }),
            _ => Err(ProviderError::Rejected { status, body: text }),
        }
    }
}
