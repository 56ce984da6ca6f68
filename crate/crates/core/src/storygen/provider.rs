//! Chat-completion provider abstraction plus retry and rate-limit wrappers.

use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    /// Dropped by adapters whose vendor does not accept it.
    pub top_k: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub params: SamplingParams,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
    #[error("unexpected response: {0}")]
    Malformed(String),
}

impl ProviderError {
    /// Transport failures, rate limiting and server errors are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Transport(_) => true,
            Self::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for Box<P> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub fn thread_sleeper() -> Sleeper {
    Arc::new(thread::sleep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): base * 2^retry, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.min(31));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Retries retryable failures with exponential backoff.
pub struct Retrying<P> {
    inner: P,
    policy: RetryPolicy,
    sleeper: Sleeper,
}

impl<P> Retrying<P> {
    pub fn new(inner: P, policy: RetryPolicy) -> Self {
        Self::with_sleeper(inner, policy, thread_sleeper())
    }

    pub fn with_sleeper(inner: P, policy: RetryPolicy, sleeper: Sleeper) -> Self {
        Self {
            inner,
            policy,
            sleeper,
        }
    }
}

impl<P: ChatProvider> ChatProvider for Retrying<P> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let mut attempt = 0;
        loop {
            match self.inner.complete(request) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt + 1 < self.policy.max_attempts => {
                    let delay = self.policy.delay(attempt);
                    log::warn!("{e}; retrying in {delay:?}");
                    (self.sleeper)(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Token bucket shared by every caller holding a clone.
#[derive(Clone)]
pub struct RateLimiter {
    state: Arc<Mutex<Bucket>>,
    capacity: f64,
    per_second: f64,
    sleeper: Sleeper,
}

struct Bucket {
    tokens: f64,
    last: Instant,
}

impl RateLimiter {
    /// `per_second` tokens are added continuously up to `capacity`.
    pub fn new(capacity: u32, per_second: f64) -> Self {
        Self::with_sleeper(capacity, per_second, thread_sleeper())
    }

    pub fn with_sleeper(capacity: u32, per_second: f64, sleeper: Sleeper) -> Self {
        let capacity = f64::from(capacity.max(1));
        Self {
            state: Arc::new(Mutex::new(Bucket {
                tokens: capacity,
                last: Instant::now(),
            })),
            capacity,
            per_second: per_second.max(f64::MIN_POSITIVE),
            sleeper,
        }
    }

    /// Takes one token, waiting if the bucket is empty.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut b = self.state.lock().unwrap_or_else(|p| p.into_inner());
                let now = Instant::now();
                let refill = now.duration_since(b.last).as_secs_f64() * self.per_second;
                b.tokens = (b.tokens + refill).min(self.capacity);
                b.last = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - b.tokens) / self.per_second)
            };
            (self.sleeper)(wait);
        }
    }
}

pub struct RateLimited<P> {
    inner: P,
    limiter: RateLimiter,
}

impl<P> RateLimited<P> {
    pub fn new(inner: P, limiter: RateLimiter) -> Self {
        Self { inner, limiter }
    }
}

impl<P: ChatProvider> ChatProvider for RateLimited<P> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        self.limiter.acquire();
        self.inner.complete(request)
    }
}

/// One canned reply. The first rule whose `contains` occurs in the last user
/// message answers; a rule without `contains` matches anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub contains: Option<String>,
    /// `{turn}` is replaced by the number of assistant messages already in the
    /// request, plus one.
    pub response: String,
}

/// Injected failure: call number `call` (0-based, across all callers) fails
/// with `status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFailure {
    pub call: usize,
    pub status: u16,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub failures: Vec<MockFailure>,
}

/// Offline provider answering from a canned script and recording every call.
pub struct MockProvider {
    script: MockScript,
    calls: Mutex<Vec<ChatRequest>>,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ProviderError::Transport(format!("{}: {e}", path.display())))?;
        let script = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Malformed(format!("{}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    /// Requests received so far, failed ones included.
    pub fn calls(&self) -> Vec<ChatRequest> {
        self.calls.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap_or_else(|p| p.into_inner()).len()
    }
}

impl ChatProvider for MockProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let index = {
            let mut calls = self.calls.lock().unwrap_or_else(|p| p.into_inner());
            calls.push(request.clone());
            calls.len() - 1
        };
        if let Some(f) = self.script.failures.iter().find(|f| f.call == index) {
            return Err(ProviderError::Status {
                status: f.status,
                body: "injected failure".into(),
            });
        }
        let last_user = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str());
        let turn = request
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .count()
            + 1;
        self.script
            .rules
            .iter()
            .find(|r| r.contains.as_deref().is_none_or(|c| last_user.contains(c)))
            .map(|r| r.response.replace("{turn}", &turn.to_string()))
            .ok_or_else(|| ProviderError::Malformed("no mock rule matches".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn request(text: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![Message::new(Role::User, text)],
            params: SamplingParams {
                temperature: 1.0,
                top_p: 0.95,
                top_k: Some(40),
            },
        }
    }

    fn recording_sleeper() -> (Sleeper, Arc<Mutex<Vec<Duration>>>) {
        let log = Arc::new(Mutex::new(Vec::new()));
        let l = log.clone();
        (Arc::new(move |d| l.lock().unwrap().push(d)), log)
    }

    fn script(failures: Vec<MockFailure>) -> MockScript {
        MockScript {
            rules: vec![MockRule {
                contains: None,
                response: "ok {turn}".into(),
            }],
            failures,
        }
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 10,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
        };
        let d: Vec<_> = (0..4).map(|i| p.delay(i).as_millis()).collect();
        assert_eq!(d, vec![100, 200, 350, 350]);
    }

    #[test]
    fn retry_after_429() {
        let mock = Arc::new(MockProvider::new(script(vec![MockFailure { call: 0, status: 429 }])));
        let (sleeper, slept) = recording_sleeper();
        let p = Retrying::with_sleeper(mock.clone(), RetryPolicy::default(), sleeper);
        assert_eq!(p.complete(&request("hi")).unwrap(), "ok 1");
        assert_eq!(mock.call_count(), 2);
        assert_eq!(*slept.lock().unwrap(), vec![Duration::from_millis(500)]);
    }

    #[test]
    fn retry_is_bounded_and_skips_client_errors() {
        let failures = (0..10).map(|call| MockFailure { call, status: 503 }).collect();
        let mock = Arc::new(MockProvider::new(script(failures)));
        let (sleeper, _) = recording_sleeper();
        let policy = RetryPolicy {
            max_attempts: 3,
            ..RetryPolicy::default()
        };
        let p = Retrying::with_sleeper(mock.clone(), policy, sleeper.clone());
        assert!(matches!(p.complete(&request("x")), Err(ProviderError::Status { status: 503, .. })));
        assert_eq!(mock.call_count(), 3);

        let mock = Arc::new(MockProvider::new(script(vec![MockFailure { call: 0, status: 401 }])));
        let p = Retrying::with_sleeper(mock.clone(), policy, sleeper);
        assert!(p.complete(&request("x")).is_err());
        assert_eq!(mock.call_count(), 1);
    }

    #[test]
    fn mock_rules_match_last_user_message() {
        let mock = MockProvider::new(MockScript {
            rules: vec![
                MockRule {
                    contains: Some("plot".into()),
                    response: "P".into(),
                },
                MockRule {
                    contains: None,
                    response: "D{turn}".into(),
                },
            ],
            failures: vec![],
        });
        assert_eq!(mock.complete(&request("the plot")).unwrap(), "P");
        assert_eq!(mock.complete(&request("other")).unwrap(), "D1");
    }

    #[test]
    fn limiter_waits_when_empty() {
        let waits = Arc::new(AtomicUsize::new(0));
        let w = waits.clone();
        let sleeper: Sleeper = Arc::new(move |d| {
            w.fetch_add(1, Ordering::SeqCst);
            thread::sleep(d);
        });
        let limiter = RateLimiter::with_sleeper(2, 1000.0, sleeper);
        let shared = limiter.clone();
        limiter.acquire();
        shared.acquire();
        assert_eq!(waits.load(Ordering::SeqCst), 0);
        limiter.acquire();
        assert!(waits.load(Ordering::SeqCst) >= 1);
    }

    #[test]
    fn limiter_is_shared_across_threads() {
        let limiter = RateLimiter::new(3, 200.0);
        let start = Instant::now();
        thread::scope(|s| {
            for _ in 0..3 {
                let l = limiter.clone();
                s.spawn(move || {
                    for _ in 0..3 {
                        l.acquire();
                    }
                });
            }
        });
        // 9 tokens, 3 up front, 6 refilled at 200/s: at least ~30 ms
        assert!(start.elapsed() >= Duration::from_millis(25));
    }
}
