//! Client for the JSON scoring protocol.
//!
//! ```text
//! POST /v1/score     {"context", "continuation"} -> {"tokens": [..], "token_logprobs": [..]}
//! POST /v1/generate  {"prompt", "max_tokens", "seed"} -> {"text"}
//! ```
//!
//! 4xx answers are final. 5xx answers, timeouts and connection failures are
//! retried with capped exponential backoff.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::warn;
use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{GenerationRequest, LanguageModel};
use crate::error::{BackendError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 4,
            base_delay: Duration::from_millis(200),
            max_delay: Duration::from_secs(5),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.checked_mul(factor).unwrap_or(self.max_delay).min(self.max_delay)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub token: Option<String>,
    pub max_in_flight: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            token: None,
            max_in_flight: 8,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter { available: Mutex::new(n), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Serialize)]
struct ScoreBody<'a> {
    context: &'a str,
    continuation: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    tokens: Vec<String>,
    token_logprobs: Vec<f64>,
}

#[derive(Serialize)]
struct GenerateBody<'a> {
    prompt: &'a str,
    max_tokens: usize,
    seed: u64,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: Client,
    limiter: Limiter,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.endpoint.trim().is_empty() {
            return Err(Error::InvalidArgument("remote backend requires an endpoint".into()));
        }
        if config.max_in_flight == 0 {
            return Err(Error::InvalidArgument("max_in_flight must be at least 1".into()));
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build HTTP client: {e}")))?;
        Ok(RemoteBackend { limiter: Limiter::new(config.max_in_flight), config, client })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn post_once<B: Serialize, R: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
        identity: &str,
    ) -> Result<R, BackendError> {
        let _permit = self.limiter.acquire();
        let mut req = self.client.post(self.url(path)).json(body);
        if let Some(token) = &self.config.token {
            req = req.bearer_auth(token);
        }
        let transport = |message: String| BackendError::Transport { request: identity.to_string(), message };
        let resp = req.send().map_err(|e| transport(e.to_string()))?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(|e| transport(e.to_string()))?;
        if status.is_server_error() {
            return Err(transport(format!("HTTP {status}")));
        }
        if status.is_client_error() {
            let message = serde_json::from_slice::<ErrorBody>(&bytes)
                .map(|b| b.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
            return Err(BackendError::Rejected {
                request: identity.to_string(),
                status: status.as_u16(),
                message,
            });
        }
        serde_json::from_slice(&bytes)
            .map_err(|e| BackendError::Protocol { request: identity.to_string(), message: e.to_string() })
    }

    fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
        identity: &str,
    ) -> Result<R, BackendError> {
        let mut attempt = 0;
        loop {
            match self.post_once(path, body, identity) {
                Err(e) if e.is_retryable() && attempt < self.config.retry.max_retries => {
                    let delay = self.config.retry.delay(attempt);
                    warn!("{e}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

impl LanguageModel for RemoteBackend {
    fn continuation_logprobs(&self, context: &str, continuation: &str) -> Result<Vec<f64>, BackendError> {
        let identity = format!("POST /v1/score continuation={continuation:?}");
        let resp: ScoreResponse = self.post("/v1/score", &ScoreBody { context, continuation }, &identity)?;
        if resp.tokens.len() != resp.token_logprobs.len() {
            return Err(BackendError::Protocol {
                request: identity,
                message: format!("{} tokens but {} logprobs", resp.tokens.len(), resp.token_logprobs.len()),
            });
        }
        if let Some(bad) = resp.token_logprobs.iter().find(|lp| !lp.is_finite() || **lp > 0.0) {
            return Err(BackendError::Protocol {
                request: identity,
                message: format!("token logprob {bad} is not <= 0"),
            });
        }
        Ok(resp.token_logprobs)
    }

    fn generate_text(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let identity = format!("POST /v1/generate seed={}", request.seed);
        let resp: GenerateResponse = self.post(
            "/v1/generate",
            &GenerateBody { prompt: &request.prompt, max_tokens: request.max_tokens, seed: request.seed },
            &identity,
        )?;
        Ok(resp.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_is_capped_and_doubles() {
        let p = RetryPolicy {
            max_retries: 10,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(1000),
        };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(3), Duration::from_millis(800));
        assert_eq!(p.delay(4), Duration::from_millis(1000));
        assert_eq!(p.delay(40), Duration::from_millis(1000));
    }

    #[test]
    fn requires_endpoint() {
        assert!(RemoteBackend::new(RemoteConfig::new("")).is_err());
    }
}
