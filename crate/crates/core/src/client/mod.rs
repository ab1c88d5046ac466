//! Text-generation client.
//!
//! [`Client`] wraps a [`Backend`] (the live chat-completion endpoint or the
//! deterministic [`MockBackend`]) with a response cache, retries with
//! exponential backoff, a request-rate limiter and an in-flight bound.
//!
//! Cache keys are `sha256(backend id, prompt digest, params digest, sample
//! index)`, so every sample index of a prompt is cached independently.

mod cache;
mod live;
mod mock;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::ResponseCache;
pub use live::LiveBackend;
pub use mock::{MockBackend, MockPolicy};

use crate::seed::digest_hex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("client configuration error: {0}")]
    Config(String),
    #[error("transport error: {message}")]
    Transport { message: String, transient: bool },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("backend returned an empty response")]
    Empty,
}

impl ClientError {
    pub fn is_config(&self) -> bool {
        matches!(self, ClientError::Config(_))
    }

    fn is_transient(&self) -> bool {
        matches!(self, ClientError::Transport { transient: true, .. })
    }
}

/// Sampling parameters. `seed` only affects the mock backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GenParams {
    /// Description, template and explanation generation.
    pub fn generation() -> Self {
        GenParams {
            temperature: 0.7,
            max_tokens: 512,
            n: 1,
            seed: 0,
        }
    }

    /// Evaluation decoding.
    pub fn evaluation() -> Self {
        GenParams {
            temperature: 0.01,
            ..Self::generation()
        }
    }

    /// Preference-pair sampling.
    pub fn sampling(n: usize) -> Self {
        GenParams {
            temperature: 1.0,
            n,
            ..Self::generation()
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.temperature >= 0.0) {
            return Err(ClientError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.n == 0 {
            return Err(ClientError::Config("n must be >= 1".into()));
        }
        Ok(())
    }

    fn digest(&self) -> String {
        digest_hex(
            format!(
                "{:?}\0{}\0{}\0{}",
                self.temperature, self.max_tokens, self.n, self.seed
            )
            .as_bytes(),
        )
    }
}

pub trait Backend: Send + Sync {
    /// Stable identifier included in cache keys.
    fn id(&self) -> String;

    /// Produces completion number `index` for `prompt`.
    fn generate(&self, prompt: &str, params: &GenParams, index: usize) -> Result<String, ClientError>;
}

#[derive(Clone, Debug)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Spaces request starts at least `1/qps` seconds apart.
#[derive(Debug)]
struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(qps: f64) -> Self {
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / qps),
            next: Mutex::new(Instant::now()),
        }
    }

    fn wait(&self) {
        let slot = {
            let mut next = self.next.lock().expect("limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

#[derive(Debug)]
struct InFlight {
    max: usize,
    count: Mutex<usize>,
    cv: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut c = self.count.lock().expect("in-flight poisoned");
        while *c >= self.max {
            c = self.cv.wait(c).expect("in-flight poisoned");
        }
        *c += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().expect("in-flight poisoned") -= 1;
        self.0.cv.notify_one();
    }
}

/// Shareable client. Clone is cheap.
#[derive(Clone)]
pub struct Client {
    inner: Arc<Inner>,
}

struct Inner {
    backend: Arc<dyn Backend>,
    cache: ResponseCache,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
    in_flight: InFlight,
    calls: AtomicU64,
}

impl Client {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Client::builder(backend).build()
    }

    pub fn builder(backend: Arc<dyn Backend>) -> ClientBuilder {
        ClientBuilder {
            backend,
            cache: ResponseCache::in_memory(),
            retry: RetryPolicy::default(),
            qps: None,
            max_in_flight: 8,
        }
    }

    pub fn backend_id(&self) -> String {
        self.inner.backend.id()
    }

    /// Number of requests that reached the backend (cache hits excluded,
    /// retries included).
    pub fn calls(&self) -> u64 {
        self.inner.calls.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.inner.cache
    }

    pub fn cache_key(&self, prompt: &str, params: &GenParams, index: usize) -> String {
        let prompt_digest = digest_hex(prompt.as_bytes());
        digest_hex(
            format!(
                "{}\0{prompt_digest}\0{}\0{index}",
                self.inner.backend.id(),
                params.digest()
            )
            .as_bytes(),
        )
    }

    pub fn complete(&self, prompt: &str, params: &GenParams) -> Result<String, ClientError> {
        self.complete_indexed(prompt, params, 0)
    }

    /// Completion number `index`; cached independently of other indices.
    pub fn complete_indexed(
        &self,
        prompt: &str,
        params: &GenParams,
        index: usize,
    ) -> Result<String, ClientError> {
        params.validate()?;
        let key = self.cache_key(prompt, params, index);
        if let Some(hit) = self.inner.cache.get(&key) {
            return Ok(hit);
        }
        let text = self.call_with_retry(prompt, params, index)?;
        if let Err(e) = self.inner.cache.put(&key, &text) {
            tracing::warn!("response cache write failed: {e}");
        }
        Ok(text)
    }

    /// `n` completions, one per sample index. Failures are reported per
    /// index next to the successes.
    pub fn sample_n(
        &self,
        prompt: &str,
        n: usize,
        params: &GenParams,
    ) -> Vec<Result<String, ClientError>> {
        let params = GenParams {
            n,
            ..params.clone()
        };
        (0..n)
            .map(|i| self.complete_indexed(prompt, &params, i))
            .collect()
    }

    fn call_with_retry(
        &self,
        prompt: &str,
        params: &GenParams,
        index: usize,
    ) -> Result<String, ClientError> {
        let inner = &self.inner;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = {
                let _slot = inner.in_flight.acquire();
                if let Some(l) = &inner.limiter {
                    l.wait();
                }
                inner.calls.fetch_add(1, Ordering::SeqCst);
                inner.backend.generate(prompt, params, index)
            };
            match result {
                Ok(text) if text.trim().is_empty() => return Err(ClientError::Empty),
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() && attempt < inner.retry.max_attempts => {
                    let d = inner.retry.delay(attempt - 1);
                    tracing::debug!("transient failure ({e}); retry {attempt} in {d:?}");
                    std::thread::sleep(d);
                }
                Err(e) if e.is_transient() => {
                    return Err(ClientError::Exhausted {
                        attempts: attempt,
                        last: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

pub struct ClientBuilder {
    backend: Arc<dyn Backend>,
    cache: ResponseCache,
    retry: RetryPolicy,
    qps: Option<f64>,
    max_in_flight: usize,
}

impl ClientBuilder {
    pub fn cache(mut self, cache: ResponseCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn qps(mut self, qps: Option<f64>) -> Self {
        self.qps = qps.filter(|q| *q > 0.0);
        self
    }

    pub fn max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn build(self) -> Client {
        Client {
            inner: Arc::new(Inner {
                backend: self.backend,
                cache: self.cache,
                retry: self.retry,
                limiter: self.qps.map(RateLimiter::new),
                in_flight: InFlight {
                    max: self.max_in_flight,
                    count: Mutex::new(0),
                    cv: Condvar::new(),
                },
                calls: AtomicU64::new(0),
            }),
        }
    }
}

/// Backend selection as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Live {
        endpoint: String,
        model: String,
        #[serde(default = "default_key_env")]
        api_key_env: String,
        #[serde(default)]
        qps: Option<f64>,
    },
    Mock {
        #[serde(default)]
        policy: MockPolicy,
        #[serde(default)]
        seed: u64,
    },
}

fn default_key_env() -> String {
    "IEALIGN_API_KEY".to_string()
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock {
            policy: MockPolicy::EchoGold,
            seed: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    struct Flaky {
        fail_first: u32,
        seen: AtomicU32,
        transient: bool,
    }

    impl Backend for Flaky {
        fn id(&self) -> String {
            "flaky".into()
        }

        fn generate(&self, prompt: &str, _: &GenParams, index: usize) -> Result<String, ClientError> {
            let n = self.seen.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(ClientError::Transport {
                    message: "503".into(),
                    transient: self.transient,
                })
            } else {
                Ok(format!("{prompt}#{index}"))
            }
        }
    }

    fn fast_retry(max_attempts: u32) -> RetryPolicy {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(2),
        }
    }

    fn flaky(fail_first: u32, transient: bool) -> Arc<Flaky> {
        Arc::new(Flaky {
            fail_first,
            seen: AtomicU32::new(0),
            transient,
        })
    }

    #[test]
    fn retries_transient_failures() {
        let c = Client::builder(flaky(2, true)).retry(fast_retry(5)).build();
        assert_eq!(c.complete("p", &GenParams::generation()).unwrap(), "p#0");
        assert_eq!(c.calls(), 3);
    }

    #[test]
    fn exhausts_and_does_not_retry_permanent() {
        let c = Client::builder(flaky(10, true)).retry(fast_retry(3)).build();
        assert!(matches!(
            c.complete("p", &GenParams::generation()),
            Err(ClientError::Exhausted { attempts: 3, .. })
        ));
        let c = Client::builder(flaky(10, false)).retry(fast_retry(3)).build();
        assert!(c.complete("p", &GenParams::generation()).is_err());
        assert_eq!(c.calls(), 1);
    }

    #[test]
    fn cache_hit_skips_backend() {
        let c = Client::new(flaky(0, true));
        let p = GenParams::generation();
        c.complete("p", &p).unwrap();
        c.complete("p", &p).unwrap();
        assert_eq!(c.calls(), 1);
        let samples = c.sample_n("q", 3, &p);
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[2].as_deref().unwrap(), "q#2");
        assert_eq!(c.calls(), 4);
        c.sample_n("q", 3, &p);
        assert_eq!(c.calls(), 4);
    }

    #[test]
    fn params_are_validated() {
        let c = Client::new(flaky(0, true));
        let mut p = GenParams::generation();
        p.temperature = -1.0;
        assert!(c.complete("p", &p).unwrap_err().is_config());
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let r = RetryPolicy {
            max_attempts: 9,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
        };
        assert_eq!(r.delay(0), Duration::from_millis(100));
        assert_eq!(r.delay(1), Duration::from_millis(200));
        assert_eq!(r.delay(2), Duration::from_millis(350));
    }
}
