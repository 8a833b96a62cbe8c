use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const URL_VAR: &str = "AURA_LLM_URL";
pub const KEY_VAR: &str = "AURA_LLM_KEY";

/// Request body sent to the completion endpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompletionRequest<'a> {
    pub system: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Failed(String),
}

/// Single-turn text completion. Provider adapters implement this; the
/// default [`HttpTransport`] speaks the plain `{prompt} -> {text}` schema.
pub trait CompletionTransport: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> std::result::Result<String, TransportError>;
}

pub struct HttpTransport {
    url: String,
    key: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, key: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTransport {
            url: url.into(),
            key: key.into(),
            agent,
        }
    }

    /// Reads the endpoint and key from `AURA_LLM_URL` / `AURA_LLM_KEY`.
    pub fn from_env(timeout: Duration) -> Result<Self> {
        let url = std::env::var(URL_VAR).map_err(|_| Error::Config(format!("{URL_VAR} is not set")))?;
        let key = std::env::var(KEY_VAR).map_err(|_| Error::Config(format!("{KEY_VAR} is not set")))?;
        Ok(Self::new(url, key, timeout))
    }
}

impl CompletionTransport for HttpTransport {
    fn complete(&self, request: &CompletionRequest<'_>) -> std::result::Result<String, TransportError> {
        let mut response = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(request)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => TransportError::Timeout,
                other => TransportError::Failed(other.to_string()),
            })?;
        let body: CompletionResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Failed(format!("bad response body: {e}")))?;
        Ok(body.text)
    }
}

/// Counting semaphore bounding concurrent remote calls.
#[derive(Debug)]
pub struct InFlightLimiter {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlightLimiter {
    pub fn new(limit: usize) -> Self {
        InFlightLimiter {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock().expect("limiter poisoned");
        while *active >= self.limit {
            active = self.freed.wait(active).expect("limiter poisoned");
        }
        *active += 1;
        InFlightGuard { limiter: self }
    }

    pub fn active(&self) -> usize {
        *self.active.lock().expect("limiter poisoned")
    }
}

pub struct InFlightGuard<'a> {
    limiter: &'a InFlightLimiter,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut active = self.limiter.active.lock().expect("limiter poisoned");
        *active -= 1;
        self.limiter.freed.notify_one();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSettings {
    pub timeout_secs: f64,
    pub retries: u32,
    pub max_in_flight: usize,
    pub retry_backoff_ms: u64,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        RemoteSettings {
            timeout_secs: 10.0,
            retries: 2,
            max_in_flight: 2,
            retry_backoff_ms: 250,
        }
    }
}

/// Remote completion client with retries and an in-flight cap.
#[derive(Clone)]
pub struct RemoteBackend {
    transport: Arc<dyn CompletionTransport>,
    settings: RemoteSettings,
    limiter: Arc<InFlightLimiter>,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend").field("settings", &self.settings).finish_non_exhaustive()
    }
}

impl RemoteBackend {
    pub fn new(transport: Arc<dyn CompletionTransport>, settings: RemoteSettings) -> Self {
        RemoteBackend {
            transport,
            limiter: Arc::new(InFlightLimiter::new(settings.max_in_flight)),
            settings,
        }
    }

    pub fn settings(&self) -> &RemoteSettings {
        &self.settings
    }

    /// Sends at temperature 0, retrying up to `retries` times.
    pub fn complete(&self, system: &str, prompt: &str) -> std::result::Result<String, TransportError> {
        let request = CompletionRequest {
            system,
            prompt,
            temperature: 0.0,
        };
        let mut last = TransportError::Failed("no attempt made".into());
        for attempt in 0..=self.settings.retries {
            if attempt > 0 && self.settings.retry_backoff_ms > 0 {
                std::thread::sleep(Duration::from_millis(self.settings.retry_backoff_ms * u64::from(attempt)));
            }
            let _slot = self.limiter.acquire();
            match self.transport.complete(&request) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    tracing::debug!(attempt, error = %e, "remote completion failed");
                    last = e;
                }
            }
        }
        Err(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Flaky {
        calls: AtomicUsize,
        fail_first: usize,
    }

    impl CompletionTransport for Flaky {
        fn complete(&self, _: &CompletionRequest<'_>) -> std::result::Result<String, TransportError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(TransportError::Timeout)
            } else {
                Ok("3".into())
            }
        }
    }

    fn settings() -> RemoteSettings {
        RemoteSettings {
            retry_backoff_ms: 0,
            ..Default::default()
        }
    }

    #[test]
    fn retries_then_succeeds() {
        let t = Arc::new(Flaky { calls: AtomicUsize::new(0), fail_first: 2 });
        let remote = RemoteBackend::new(t.clone(), settings());
        assert_eq!(remote.complete("s", "p"), Ok("3".into()));
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_retries() {
        let t = Arc::new(Flaky { calls: AtomicUsize::new(0), fail_first: 10 });
        let remote = RemoteBackend::new(t.clone(), settings());
        assert_eq!(remote.complete("s", "p"), Err(TransportError::Timeout));
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn limiter_caps_concurrency() {
        struct Slow {
            limiter: Arc<Mutex<(usize, usize)>>,
        }
        impl CompletionTransport for Slow {
            fn complete(&self, _: &CompletionRequest<'_>) -> std::result::Result<String, TransportError> {
                {
                    let mut g = self.limiter.lock().unwrap();
                    g.0 += 1;
                    g.1 = g.1.max(g.0);
                }
                std::thread::sleep(Duration::from_millis(20));
                self.limiter.lock().unwrap().0 -= 1;
                Ok("1".into())
            }
        }
        let seen = Arc::new(Mutex::new((0, 0)));
        let remote = RemoteBackend::new(Arc::new(Slow { limiter: seen.clone() }), settings());
        std::thread::scope(|s| {
            for _ in 0..6 {
                s.spawn(|| remote.complete("s", "p").unwrap());
            }
        });
        assert_eq!(seen.lock().unwrap().1, 2);
    }

    #[test]
    fn unreachable_http_endpoint_fails_cleanly() {
        let t = HttpTransport::new("http://127.0.0.1:9/complete", "k", Duration::from_secs(2));
        let request = CompletionRequest { system: "s", prompt: "p", temperature: 0.0 };
        assert!(t.complete(&request).is_err());
    }
}
