//! Chat-completion gateway: request validation, the redaction guard, retry
//! with exponential backoff, a concurrency limit, and pluggable transports.
//!
//! Transports move raw JSON bodies so that a recording transport sees exactly
//! the bytes that would leave the host. The wire format is the common
//! chat-completions shape:
//!
//! ```text
//! request:  {"model": str, "messages": [{"role": str, "content": str}],
//!            "temperature": num, "max_tokens": int}
//! response: {"choices": [{"message": {"role": "assistant", "content": str},
//!            "finish_reason": "stop" | "length" | ...}]}
//! ```

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use pmchat_core::chat::{ChatMessage, Role};
use pmchat_core::prompt::section_headers;
use pmchat_core::redact::{DenyIndex, RedactionReport};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 2048;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<ChatMessage>,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl CompletionRequest {
    pub fn new(model_name: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        CompletionRequest {
            messages,
            model_name: model_name.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |m: &str| Err(GatewayError::InvalidRequest(m.into()));
        if self.messages.is_empty() {
            return invalid("no messages");
        }
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return invalid("at least one user message is required");
        }
        if self.messages.iter().skip(1).any(|m| m.role == Role::System) {
            return invalid("a system message may only come first");
        }
        if self.messages.iter().any(|m| m.role != Role::System && m.content.trim().is_empty()) {
            return invalid("user and assistant messages must have content");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return invalid("temperature must be within [0, 2]");
        }
        if self.max_output_tokens == 0 {
            return invalid("max_output_tokens must be positive");
        }
        Ok(())
    }

    pub fn to_wire(&self) -> String {
        let messages: Vec<Value> =
            self.messages.iter().map(|m| json!({ "role": m.role.as_str(), "content": m.content })).collect();
        json!({
            "model": self.model_name,
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
        })
        .to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Complete,
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub content: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    pub provider: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("request timed out")]
    Timeout,
    #[error("rate limited by provider")]
    RateLimited,
    #[error("provider returned empty content")]
    EmptyContent,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("provider error {status}: {message}")]
    Server { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unreadable provider response: {0}")]
    Protocol(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::InvalidRequest(_) | GatewayError::Auth(_) => false,
            GatewayError::Server { status, .. } => *status >= 500 || *status == 408,
            _ => true,
        }
    }
}

pub trait Transport: Send + Sync {
    fn provider(&self) -> &str;
    /// Sends one serialized request and returns the raw response body.
    fn send(&self, body: &str) -> Result<String, GatewayError>;
}

pub fn parse_wire_response(body: &str) -> Result<(String, FinishReason), GatewayError> {
    let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::Protocol(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GatewayError::Protocol("no choices in response".into()))?;
    let content = choice.pointer("/message/content").and_then(Value::as_str).unwrap_or("");
    if content.trim().is_empty() {
        return Err(GatewayError::EmptyContent);
    }
    let finish = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Truncated,
        _ => FinishReason::Complete,
    };
    Ok((content.to_string(), finish))
}

/// Remote provider over HTTPS.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        HttpTransport { agent, url: format!("{}/chat/completions", base_url.trim_end_matches('/')), api_key }
    }
}

impl fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpTransport").field("url", &self.url).finish_non_exhaustive()
    }
}

impl Transport for HttpTransport {
    fn provider(&self) -> &str {
        "remote"
    }

    fn send(&self, body: &str) -> Result<String, GatewayError> {
        let mut request = self.agent.post(&self.url).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        let mut response = match request.send(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(GatewayError::Timeout),
            Err(e) => return Err(GatewayError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => GatewayError::Timeout,
            other => GatewayError::Transport(other.to_string()),
        })?;
        match status {
            200..=299 => Ok(text),
            401 | 403 => Err(GatewayError::Auth(format!("status {status}"))),
            429 => Err(GatewayError::RateLimited),
            _ => Err(GatewayError::Server { status, message: text.chars().take(200).collect() }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MockFailure {
    Timeout,
    RateLimited,
    EmptyContent,
    Auth,
    Server,
}

/// Offline provider. Replies with a fixed template naming the prompt's
/// section headers and a decimal digest of the request body, so equal
/// requests get equal replies.
#[derive(Debug)]
pub struct MockTransport {
    fail_first: usize,
    failure: MockFailure,
    calls: AtomicUsize,
}

impl Default for MockTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl MockTransport {
    pub fn new() -> Self {
        Self::failing(0, MockFailure::Timeout)
    }

    /// Fails the first `n` calls, then answers normally.
    pub fn failing(n: usize, failure: MockFailure) -> Self {
        MockTransport { fail_first: n, failure, calls: AtomicUsize::new(0) }
    }

    pub fn always_failing(failure: MockFailure) -> Self {
        Self::failing(usize::MAX, failure)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn wire_reply(content: &str, finish_reason: &str) -> String {
    json!({
        "object": "chat.completion",
        "choices": [{ "index": 0, "message": { "role": "assistant", "content": content }, "finish_reason": finish_reason }],
    })
    .to_string()
}

/// The mock reply for a serialized request.
pub fn mock_reply_content(body: &str) -> Result<String, GatewayError> {
    let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
    let messages = v.get("messages").and_then(Value::as_array).cloned().unwrap_or_default();
    let last_user = messages
        .iter()
        .rev()
        .find(|m| m.get("role").and_then(Value::as_str) == Some("user"))
        .and_then(|m| m.get("content").and_then(Value::as_str))
        .ok_or_else(|| GatewayError::InvalidRequest("no user message".into()))?;
    let headers = section_headers(last_user);
    let digest = Sha256::digest(body.as_bytes());
    let n = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
    let kind = if headers.is_empty() { "follow-up question" } else { "structured prompt" };
    let sections = if headers.is_empty() { "none".to_string() } else { headers.join(", ") };
    Ok(format!(
        "Mock analysis of a {kind} ({} message(s) in context). Sections: {sections}. Request digest {n:020}.",
        messages.len()
    ))
}

impl Transport for MockTransport {
    fn provider(&self) -> &str {
        "mock"
    }

    fn send(&self, body: &str) -> Result<String, GatewayError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        if call < self.fail_first {
            return match self.failure {
                MockFailure::Timeout => Err(GatewayError::Timeout),
                MockFailure::RateLimited => Err(GatewayError::RateLimited),
                MockFailure::EmptyContent => Ok(wire_reply("", "stop")),
                MockFailure::Auth => Err(GatewayError::Auth("mock credentials rejected".into())),
                MockFailure::Server => Err(GatewayError::Server { status: 503, message: "mock outage".into() }),
            };
        }
        Ok(wire_reply(&mock_reply_content(body)?, "stop"))
    }
}

/// Wraps a transport and keeps a copy of every outbound body.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    bodies: Mutex<Vec<String>>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        RecordingTransport { inner, bodies: Mutex::default() }
    }

    pub fn bodies(&self) -> Vec<String> {
        self.bodies.lock().unwrap().clone()
    }

    pub fn calls(&self) -> usize {
        self.bodies.lock().unwrap().len()
    }
}

impl Transport for RecordingTransport {
    fn provider(&self) -> &str {
        self.inner.provider()
    }

    fn send(&self, body: &str) -> Result<String, GatewayError> {
        self.bodies.lock().unwrap().push(body.to_string());
        self.inner.send(body)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub backoff_factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_secs(1), backoff_factor: 2.0 }
    }
}

impl RetryPolicy {
    pub fn new(max_attempts: u32, base_delay: Duration, backoff_factor: f64) -> Result<Self, GatewayError> {
        if max_attempts == 0 {
            return Err(GatewayError::InvalidRequest("max_attempts must be at least 1".into()));
        }
        if !backoff_factor.is_finite() || backoff_factor < 1.0 {
            return Err(GatewayError::InvalidRequest("backoff_factor must be a finite number >= 1".into()));
        }
        Ok(RetryPolicy { max_attempts, base_delay, backoff_factor })
    }

    /// Delay after failed attempt `attempt` (1-based): `base * factor^(attempt-1)`.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        self.base_delay.mul_f64(self.backoff_factor.powi(attempt.saturating_sub(1) as i32))
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, delay: Duration);
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, delay: Duration) {
        std::thread::sleep(delay);
    }
}

/// Records requested delays without sleeping.
#[derive(Debug, Default)]
pub struct RecordingSleeper {
    delays: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn delays(&self) -> Vec<Duration> {
        self.delays.lock().unwrap().clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, delay: Duration) {
        self.delays.lock().unwrap().push(delay);
    }
}

#[derive(Debug)]
struct Limiter {
    in_flight: Mutex<usize>,
    released: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.limit {
            n = self.released.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.released.notify_one();
    }
}

/// Why a request was refused before any provider call.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Rejected {
    #[error("{0}")]
    Invalid(GatewayError),
    #[error("{0}")]
    Redaction(RedactionReport),
}

#[derive(Clone, Debug, PartialEq)]
pub enum CompletionOutcome {
    Completed { result: CompletionResult, attempts: u32 },
    /// Retries exhausted, or a non-retryable provider error.
    NotAvailable { attempts: u32, last_error: GatewayError },
}

/// Passes iff no message contains a deny-index entry.
pub fn redaction_guard(request: &CompletionRequest, deny: &DenyIndex) -> Result<(), RedactionReport> {
    deny.check_messages(&request.messages)
}

pub struct Gateway {
    transport: Arc<dyn Transport>,
    sleeper: Arc<dyn Sleeper>,
    limiter: Limiter,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.transport.provider())
            .field("concurrency", &self.limiter.limit)
            .finish()
    }
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self::with_options(transport, Arc::new(ThreadSleeper), DEFAULT_CONCURRENCY)
    }

    pub fn with_options(transport: Arc<dyn Transport>, sleeper: Arc<dyn Sleeper>, concurrency: usize) -> Self {
        Gateway {
            transport,
            sleeper,
            limiter: Limiter { in_flight: Mutex::new(0), released: Condvar::new(), limit: concurrency.max(1) },
        }
    }

    pub fn provider(&self) -> &str {
        self.transport.provider()
    }

    /// One provider call. Does not retry and does not apply the redaction guard.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        request.validate()?;
        let body = request.to_wire();
        let _permit = self.limiter.acquire();
        let started = Instant::now();
        let raw = self.transport.send(&body)?;
        let (content, finish_reason) = parse_wire_response(&raw)?;
        Ok(CompletionResult {
            content,
            finish_reason,
            latency_ms: started.elapsed().as_millis() as u64,
            provider: self.transport.provider().to_string(),
        })
    }

    /// Applies the redaction guard, then calls the provider up to
    /// `policy.max_attempts` times. Provider failures never surface as errors,
    /// only as [`CompletionOutcome::NotAvailable`].
    pub fn complete_with_retry(
        &self,
        request: &CompletionRequest,
        policy: &RetryPolicy,
        deny: &DenyIndex,
    ) -> Result<CompletionOutcome, Rejected> {
        request.validate().map_err(Rejected::Invalid)?;
        redaction_guard(request, deny).map_err(Rejected::Redaction)?;
        let max = policy.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.complete(request) {
                Ok(result) => return Ok(CompletionOutcome::Completed { result, attempts: attempt }),
                Err(e) if e.is_retryable() && attempt < max => {
                    self.sleeper.sleep(policy.delay_after(attempt));
                    attempt += 1;
                }
                Err(last_error) => return Ok(CompletionOutcome::NotAvailable { attempts: attempt, last_error }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> CompletionRequest {
        CompletionRequest::new("mock", vec![ChatMessage::system("sys"), ChatMessage::user("Role: r\n\nTask: t\n\nModule Data:\nx\n")])
    }

    fn gateway(t: Arc<dyn Transport>) -> (Gateway, Arc<RecordingSleeper>) {
        let sleeper = Arc::new(RecordingSleeper::default());
        (Gateway::with_options(t, sleeper.clone(), 4), sleeper)
    }

    fn empty_index() -> DenyIndex {
        DenyIndex::new([], [])
    }

    #[test]
    fn mock_is_deterministic() {
        let (g, _) = gateway(Arc::new(MockTransport::new()));
        let a = g.complete(&request()).unwrap();
        let b = g.complete(&request()).unwrap();
        assert_eq!(a.content, b.content);
        assert!(a.content.contains("Sections: Role, Task, Module Data."));
        assert_eq!((a.finish_reason, a.provider.as_str()), (FinishReason::Complete, "mock"));
    }

    #[test]
    fn failing_mock_surfaces_retryable_errors() {
        let (g, _) = gateway(Arc::new(MockTransport::failing(2, MockFailure::Timeout)));
        assert_eq!(g.complete(&request()), Err(GatewayError::Timeout));
        assert!(g.complete(&request()).unwrap_err().is_retryable());
        assert!(g.complete(&request()).is_ok());
    }

    #[test]
    fn empty_messages_rejected() {
        let (g, _) = gateway(Arc::new(MockTransport::new()));
        let req = CompletionRequest::new("m", vec![]);
        assert!(matches!(g.complete(&req), Err(GatewayError::InvalidRequest(_))));
        let only_system = CompletionRequest::new("m", vec![ChatMessage::system("s")]);
        assert!(only_system.validate().is_err());
        let mut hot = request();
        hot.temperature = 2.5;
        assert!(hot.validate().is_err());
    }

    #[test]
    fn exhausted_retries_are_not_available() {
        let mock = Arc::new(MockTransport::always_failing(MockFailure::RateLimited));
        let (g, sleeper) = gateway(mock.clone());
        let out = g.complete_with_retry(&request(), &RetryPolicy::default(), &empty_index()).unwrap();
        assert_eq!(out, CompletionOutcome::NotAvailable { attempts: 3, last_error: GatewayError::RateLimited });
        assert_eq!(mock.calls(), 3);
        assert_eq!(sleeper.delays(), vec![Duration::from_secs(1), Duration::from_secs(2)]);
    }

    #[test]
    fn two_failures_then_success() {
        let (g, _) = gateway(Arc::new(MockTransport::failing(2, MockFailure::EmptyContent)));
        let out = g.complete_with_retry(&request(), &RetryPolicy::default(), &empty_index()).unwrap();
        assert!(matches!(out, CompletionOutcome::Completed { attempts: 3, .. }));
    }

    #[test]
    fn fatal_errors_short_circuit() {
        let mock = Arc::new(MockTransport::always_failing(MockFailure::Auth));
        let (g, sleeper) = gateway(mock.clone());
        let out = g.complete_with_retry(&request(), &RetryPolicy::default(), &empty_index()).unwrap();
        assert!(matches!(out, CompletionOutcome::NotAvailable { attempts: 1, last_error: GatewayError::Auth(_) }));
        assert_eq!(mock.calls(), 1);
        assert!(sleeper.delays().is_empty());
    }

    #[test]
    fn guard_blocks_before_sending() {
        let rec = Arc::new(RecordingTransport::new(Arc::new(MockTransport::new())));
        let (g, _) = gateway(rec.clone());
        let deny = DenyIndex::new(["c2"], ["A"]);
        let req = CompletionRequest::new("m", vec![ChatMessage::user("what happened in case c2?")]);
        let Err(Rejected::Redaction(report)) = g.complete_with_retry(&req, &RetryPolicy::default(), &deny) else {
            panic!("expected a redaction rejection");
        };
        assert_eq!(report.match_count(), 1);
        assert_eq!(rec.calls(), 0);
        let ok = CompletionRequest::new("m", vec![ChatMessage::user("why is activity A frequent?")]);
        assert!(g.complete_with_retry(&ok, &RetryPolicy::default(), &deny).is_ok());
        assert_eq!(rec.calls(), 1);
    }

    #[test]
    fn backoff_sequence() {
        let p = RetryPolicy::new(5, Duration::from_millis(500), 3.0).unwrap();
        let delays: Vec<u128> = (1..5).map(|a| p.delay_after(a).as_millis()).collect();
        assert_eq!(delays, vec![500, 1500, 4500, 13500]);
        assert!(RetryPolicy::new(0, Duration::ZERO, 2.0).is_err());
    }

    #[test]
    fn wire_round_trip() {
        let body = request().to_wire();
        let v: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["temperature"], 0.2);
        assert_eq!(v["messages"][1]["role"], "user");
        let reply = wire_reply("hello", "length");
        assert_eq!(parse_wire_response(&reply).unwrap(), ("hello".into(), FinishReason::Truncated));
        assert_eq!(parse_wire_response(&wire_reply(" ", "stop")), Err(GatewayError::EmptyContent));
        assert!(matches!(parse_wire_response("{}"), Err(GatewayError::Protocol(_))));
    }

    #[test]
    fn concurrency_limit_holds() {
        struct Slow {
            now: AtomicUsize,
            peak: AtomicUsize,
        }
        impl Transport for Slow {
            fn provider(&self) -> &str {
                "slow"
            }
            fn send(&self, _body: &str) -> Result<String, GatewayError> {
                let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(n, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(20));
                self.now.fetch_sub(1, Ordering::SeqCst);
                Ok(wire_reply("ok", "stop"))
            }
        }
        let slow = Arc::new(Slow { now: AtomicUsize::new(0), peak: AtomicUsize::new(0) });
        let g = Arc::new(Gateway::with_options(slow.clone(), Arc::new(ThreadSleeper), 2));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let g = g.clone();
                std::thread::spawn(move || g.complete(&request()).unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(slow.peak.load(Ordering::SeqCst), 2);
    }
}
