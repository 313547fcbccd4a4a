//! JSON-over-HTTP with bounded retries.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use conformal_rag_core::ProviderError;
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// The only place an API key is read from.
pub const API_KEY_ENV: &str = "CONFORMAL_RAG_API_KEY";

pub fn api_key_from_env() -> Option<String> {
    std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub timeout: Duration,
    /// Seeds the backoff jitter.
    pub seed: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
            timeout: Duration::from_secs(60),
            seed: 0,
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff with "equal jitter": half the step is fixed, the
    /// other half uniform.
    fn delay(&self, attempt: u32, rng: &Mutex<Pcg64>) -> Duration {
        let step = self
            .base_delay
            .saturating_mul(1u32 << (attempt - 1).min(16))
            .min(self.max_delay);
        let half = step / 2;
        let u: f64 = rng.lock().map(|mut r| r.random()).unwrap_or(0.5);
        half + half.mul_f64(u)
    }
}

enum Failure {
    Retry(String),
    Fatal(String),
    Malformed(String),
}

pub struct JsonClient {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    rng: Mutex<Pcg64>,
    requests: AtomicU64,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("retry", &self.retry)
            .finish()
    }
}

impl JsonClient {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, retry: RetryPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(retry.timeout))
            .http_status_as_error(true)
            .build()
            .new_agent();
        JsonClient {
            agent,
            endpoint: endpoint.into(),
            api_key,
            rng: Mutex::new(Pcg64::seed_from_u64(retry.seed)),
            retry,
            requests: AtomicU64::new(0),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// HTTP requests sent so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn attempt<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, Failure> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::StatusCode(code) if code == 408 || code == 429 || code >= 500 => {
                Failure::Retry(format!("HTTP {code}"))
            }
            ureq::Error::StatusCode(code) => Failure::Fatal(format!("HTTP {code}")),
            other => Failure::Retry(other.to_string()),
        })?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retry(e.to_string()))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::Malformed(format!("{e}: {}", snippet(&text))))
    }

    /// POSTs `body`, retrying transport failures, timeouts, 408, 429 and
    /// 5xx up to `max_attempts` times in total.
    pub fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        body: &Req,
    ) -> Result<Resp, ProviderError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(body) {
                Ok(r) => return Ok(r),
                Err(Failure::Malformed(m)) => return Err(ProviderError::Malformed(m)),
                Err(Failure::Fatal(message)) => {
                    return Err(ProviderError::Transport { attempts, message })
                }
                Err(Failure::Retry(message)) => {
                    if attempts >= self.retry.max_attempts {
                        return Err(ProviderError::Transport { attempts, message });
                    }
                    let wait = self.retry.delay(attempts, &self.rng);
                    log::warn!(
                        "{}: attempt {attempts} failed ({message}); retrying in {wait:?}",
                        self.endpoint
                    );
                    std::thread::sleep(wait);
                }
            }
        }
    }
}

fn snippet(s: &str) -> String {
    let mut out: String = s.chars().take(200).collect();
    if out.len() < s.len() {
        out.push('…');
    }
    out
}
