//! Chat-completion clients.
//!
//! [`HttpClient`] talks to an OpenAI-style chat-completions endpoint with
//! bounded retries; [`ScriptedClient`] replays canned responses for
//! deterministic runs and tests. Both implement [`ChatClient`], and the
//! refinement loop is generic over that trait.
//!
//! The API credential is read from the environment variable named by
//! [`LlmConfig::api_key_env`] when the HTTP client is constructed. It is
//! held only in memory and is never written to logs or artifacts.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

/// Ordered conversation: one system message, then strictly alternating
/// user/assistant messages. The whole transcript is resent on every call,
/// so the model needs no memory between calls.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTranscript {
    messages: Vec<ChatMessage>,
}

impl ChatTranscript {
    pub fn new(system_text: impl Into<String>) -> Result<ChatTranscript, LlmError> {
        let content = system_text.into();
        if content.is_empty() {
            return Err(LlmError::Transcript("system message must be nonempty".into()));
        }
        Ok(ChatTranscript { messages: vec![ChatMessage::system(content)] })
    }

    pub fn push_user(&mut self, text: impl Into<String>) -> Result<(), LlmError> {
        self.push(ChatMessage::user(text))
    }

    pub fn push_assistant(&mut self, text: impl Into<String>) -> Result<(), LlmError> {
        self.push(ChatMessage::assistant(text))
    }

    fn push(&mut self, msg: ChatMessage) -> Result<(), LlmError> {
        if msg.content.is_empty() {
            return Err(LlmError::Transcript(format!("{} message must be nonempty", msg.role)));
        }
        let expected = match self.messages.last().map(|m| m.role) {
            Some(Role::System) | Some(Role::Assistant) => Role::User,
            Some(Role::User) => Role::Assistant,
            None => Role::System,
        };
        if msg.role != expected {
            return Err(LlmError::Transcript(format!(
                "expected a {expected} message next, got {}",
                msg.role
            )));
        }
        self.messages.push(msg);
        Ok(())
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub attempts: u32,
    pub backoff_ms: u64,
    pub backoff_factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> RetryPolicy {
        RetryPolicy { attempts: 3, backoff_ms: 500, backoff_factor: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for LlmConfig {
    fn default() -> LlmConfig {
        LlmConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            temperature: 0.5,
            top_p: 1.0,
            max_tokens: 1024,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
            api_key_env: "PHENOSYNTH_API_KEY".into(),
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.endpoint.is_empty() {
            return Err(LlmError::Config("endpoint must be nonempty".into()));
        }
        if self.model.is_empty() {
            return Err(LlmError::Config("model must be nonempty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::Config(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::Config(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("credential environment variable `{0}` is not set")]
    MissingCredential(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out after {0} s")]
    Timeout(u64),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response body: {0}")]
    MalformedResponse(String),
    #[error("response was cut off by the response token limit")]
    Truncated,
    #[error("scripted responses exhausted after {0} calls")]
    ScriptExhausted(usize),
    #[error("transcript violation: {0}")]
    Transcript(String),
    #[error("empty response")]
    EmptyResponse,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LlmError {
    /// Transient failures worth another attempt under the retry policy.
    fn retryable(&self) -> bool {
        matches!(
            self,
            LlmError::Transport(_)
                | LlmError::Timeout(_)
                | LlmError::Status { .. }
                | LlmError::MalformedResponse(_)
        )
    }
}

pub trait ChatClient {
    /// Sends the transcript and returns the assistant's reply. The
    /// transcript is not modified; the caller appends the reply.
    fn complete(&mut self, transcript: &ChatTranscript) -> Result<ChatMessage, LlmError>;
}

/// The JSON request body sent to the endpoint. Exposed so the wire shape
/// can be pinned in tests without a network.
pub fn build_request_body(transcript: &ChatTranscript, cfg: &LlmConfig) -> serde_json::Value {
    serde_json::json!({
        "model": cfg.model,
        "messages": transcript.messages(),
        "temperature": cfg.temperature,
        "top_p": cfg.top_p,
        "max_tokens": cfg.max_tokens,
    })
}

pub struct HttpClient {
    cfg: LlmConfig,
    api_key: String,
    agent: reqwest::blocking::Client,
    audit: Option<fs::File>,
}

// Hand-written so the credential can never leak through debug formatting.
impl fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpClient")
            .field("cfg", &self.cfg)
            .field("api_key", &"<redacted>")
            .finish_non_exhaustive()
    }
}

impl HttpClient {
    /// Validates config and resolves the credential up front, before any
    /// network traffic.
    pub fn new(cfg: LlmConfig) -> Result<HttpClient, LlmError> {
        cfg.validate()?;
        let api_key = std::env::var(&cfg.api_key_env)
            .map_err(|_| LlmError::MissingCredential(cfg.api_key_env.clone()))?;
        let agent = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpClient { cfg, api_key, agent, audit: None })
    }

    /// Appends every request/response pair to `path` as JSON lines. The
    /// credential travels in a header and never appears in the body, so
    /// the log stays free of secrets.
    pub fn with_audit(mut self, path: &Path) -> Result<HttpClient, LlmError> {
        let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
        self.audit = Some(file);
        Ok(self)
    }

    fn send_once(&self, body: &serde_json::Value) -> Result<(ChatMessage, serde_json::Value), LlmError> {
        let resp = self
            .agent
            .post(&self.cfg.endpoint)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    LlmError::Timeout(self.cfg.timeout_secs)
                } else {
                    LlmError::Transport(e.to_string())
                }
            })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            let mut body = text;
            body.truncate(500);
            return Err(LlmError::Status { status: status.as_u16(), body });
        }
        let parsed: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        let choice = parsed
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| LlmError::MalformedResponse("no choices in response".into()))?;
        if choice.get("finish_reason").and_then(|f| f.as_str()) == Some("length") {
            return Err(LlmError::Truncated);
        }
        let content = choice
            .get("message")
            .and_then(|m| m.get("content"))
            .and_then(|c| c.as_str())
            .ok_or_else(|| LlmError::MalformedResponse("missing message content".into()))?;
        if content.is_empty() {
            return Err(LlmError::MalformedResponse("empty message content".into()));
        }
        Ok((ChatMessage::assistant(content), parsed))
    }

    fn record(&mut self, request: &serde_json::Value, outcome: &Result<serde_json::Value, String>) {
        if let Some(file) = self.audit.as_mut() {
            let line = match outcome {
                Ok(response) => serde_json::json!({ "request": request, "response": response }),
                Err(message) => serde_json::json!({ "request": request, "error": message }),
            };
            let _ = writeln!(file, "{line}");
        }
    }
}

impl ChatClient for HttpClient {
    fn complete(&mut self, transcript: &ChatTranscript) -> Result<ChatMessage, LlmError> {
        let body = build_request_body(transcript, &self.cfg);
        let mut attempt = 0u32;
        let mut backoff = self.cfg.retry.backoff_ms;
        loop {
            attempt += 1;
            match self.send_once(&body) {
                Ok((msg, raw)) => {
                    self.record(&body, &Ok(raw));
                    return Ok(msg);
                }
                Err(e) => {
                    self.record(&body, &Err(e.to_string()));
                    if !e.retryable() || attempt >= self.cfg.retry.attempts {
                        return Err(e);
                    }
                    std::thread::sleep(Duration::from_millis(backoff));
                    backoff = (backoff as f64 * self.cfg.retry.backoff_factor) as u64;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExhaustionPolicy {
    /// Error once the response list runs out.
    #[default]
    Error,
    /// Keep returning the final response.
    RepeatLast,
}

/// Deterministic stand-in that replays a fixed response list, one per
/// call, with no network involved.
#[derive(Clone, Debug)]
pub struct ScriptedClient {
    responses: Vec<String>,
    policy: ExhaustionPolicy,
    cursor: usize,
    calls: usize,
}

impl ScriptedClient {
    pub fn new(responses: Vec<String>, policy: ExhaustionPolicy) -> ScriptedClient {
        ScriptedClient { responses, policy, cursor: 0, calls: 0 }
    }

    /// Loads a JSON array of response strings.
    pub fn from_file(path: &Path, policy: ExhaustionPolicy) -> Result<ScriptedClient, LlmError> {
        let text = fs::read_to_string(path)?;
        let responses: Vec<String> = serde_json::from_str(&text).map_err(|e| {
            LlmError::Config(format!("{}: expected a JSON array of strings: {e}", path.display()))
        })?;
        Ok(ScriptedClient::new(responses, policy))
    }

    /// Number of completions served so far.
    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&mut self, _transcript: &ChatTranscript) -> Result<ChatMessage, LlmError> {
        self.calls += 1;
        let text = if self.cursor < self.responses.len() {
            let t = self.responses[self.cursor].clone();
            self.cursor += 1;
            t
        } else {
            match self.policy {
                ExhaustionPolicy::RepeatLast if !self.responses.is_empty() => {
                    self.responses.last().unwrap().clone()
                }
                _ => return Err(LlmError::ScriptExhausted(self.calls)),
            }
        };
        Ok(ChatMessage::assistant(text))
    }
}

/// Pulls the candidate program text out of a model response: the first
/// fenced code block if one is present, else the substring starting at
/// the first `phenotype` keyword, else the whole trimmed response.
pub fn extract_program(response: &str) -> Result<String, LlmError> {
    let trimmed = response.trim();
    if trimmed.is_empty() {
        return Err(LlmError::EmptyResponse);
    }
    if let Some(open) = trimmed.find("```") {
        let after_fence = &trimmed[open + 3..];
        // Skip the info string (e.g. a language tag) on the fence line.
        if let Some(nl) = after_fence.find('\n') {
            let block = &after_fence[nl + 1..];
            if let Some(close) = block.find("```") {
                let inner = block[..close].trim();
                if !inner.is_empty() {
                    return Ok(inner.to_string());
                }
            }
        }
    }
    if let Some(kw) = trimmed.find("phenotype") {
        return Ok(trimmed[kw..].trim().to_string());
    }
    Ok(trimmed.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Read;
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn two_message_transcript() -> ChatTranscript {
        let mut t = ChatTranscript::new("You are a helpful assistant.").unwrap();
        t.push_user("Write a phenotype program.").unwrap();
        t
    }

    #[test]
    fn transcript_enforces_alternation() {
        let mut t = two_message_transcript();
        assert!(t.push_user("again").is_err());
        t.push_assistant("phenotype p { return 0.5; }").unwrap();
        assert!(t.push_assistant("again").is_err());
        t.push_user("refine").unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.push_user("").is_err());
        assert!(ChatTranscript::new("").is_err());
    }

    #[test]
    fn request_body_matches_wire_schema() {
        let cfg = LlmConfig::default();
        let body = build_request_body(&two_message_transcript(), &cfg);
        let expected = serde_json::json!({
            "model": "gpt-4o",
            "messages": [
                { "role": "system", "content": "You are a helpful assistant." },
                { "role": "user", "content": "Write a phenotype program." },
            ],
            "temperature": 0.5,
            "top_p": 1.0,
            "max_tokens": 1024,
        });
        assert_eq!(body, expected);
        assert_eq!(body["messages"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn config_validation_bounds() {
        let mut cfg = LlmConfig::default();
        cfg.validate().unwrap();
        cfg.temperature = -0.1;
        assert!(cfg.validate().is_err());
        cfg.temperature = 0.0;
        cfg.top_p = 0.0;
        assert!(cfg.validate().is_err());
        cfg.top_p = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_credential_is_raised_before_any_network_use() {
        let cfg = LlmConfig {
            // Port 9 on localhost: nothing listens there, so any network
            // attempt would fail with a different error.
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            api_key_env: "PHENOSYNTH_TEST_KEY_UNSET".into(),
            ..LlmConfig::default()
        };
        match HttpClient::new(cfg) {
            Err(LlmError::MissingCredential(var)) => {
                assert_eq!(var, "PHENOSYNTH_TEST_KEY_UNSET")
            }
            other => panic!("expected MissingCredential, got {other:?}"),
        }
    }

    #[test]
    fn scripted_client_replays_in_order() {
        let mut c = ScriptedClient::new(
            vec!["first".into(), "second".into()],
            ExhaustionPolicy::Error,
        );
        let t = two_message_transcript();
        assert_eq!(c.complete(&t).unwrap().content, "first");
        assert_eq!(c.complete(&t).unwrap().content, "second");
        assert!(matches!(c.complete(&t), Err(LlmError::ScriptExhausted(3))));
        assert_eq!(c.calls(), 3);

        let mut r = ScriptedClient::new(vec!["only".into()], ExhaustionPolicy::RepeatLast);
        assert_eq!(r.complete(&t).unwrap().content, "only");
        assert_eq!(r.complete(&t).unwrap().content, "only");
    }

    #[test]
    fn scripted_client_loads_json_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("responses.json");
        fs::write(&path, "[\"a\", \"b\"]").unwrap();
        let mut c = ScriptedClient::from_file(&path, ExhaustionPolicy::Error).unwrap();
        assert_eq!(c.complete(&two_message_transcript()).unwrap().content, "a");
        assert!(ScriptedClient::from_file(&dir.path().join("missing.json"), ExhaustionPolicy::Error).is_err());
        fs::write(&path, "{\"not\": \"an array\"}").unwrap();
        assert!(ScriptedClient::from_file(&path, ExhaustionPolicy::Error).is_err());
    }

    #[test]
    fn extraction_prefers_fenced_block() {
        let fenced = "Here you go:\n```\nphenotype p { return 0.1; }\n```\nHope that helps.";
        assert_eq!(extract_program(fenced).unwrap(), "phenotype p { return 0.1; }");
        let tagged = "```text\nphenotype p { return 0.2; }\n```";
        assert_eq!(extract_program(tagged).unwrap(), "phenotype p { return 0.2; }");
    }

    #[test]
    fn extraction_falls_back_to_keyword_then_whole_text() {
        let prose = "Sure. The program is phenotype q { return 1.0; } as requested";
        assert_eq!(
            extract_program(prose).unwrap(),
            "phenotype q { return 1.0; } as requested"
        );
        assert_eq!(extract_program("  just words  ").unwrap(), "just words");
        assert!(matches!(extract_program("   \n\t "), Err(LlmError::EmptyResponse)));
        // Unclosed fence: fall through to the keyword rule.
        let unclosed = "```\nphenotype r { return 0.3; }";
        assert_eq!(extract_program(unclosed).unwrap(), "phenotype r { return 0.3; }");
    }

    /// Minimal HTTP/1.1 responder: reads one full request, sends one
    /// canned response, closes.
    fn serve_one(listener: &TcpListener, status: &str, body: &str) {
        let (mut stream, _) = listener.accept().unwrap();
        let mut buf = Vec::new();
        let mut chunk = [0u8; 4096];
        let header_end = loop {
            let n = stream.read(&mut chunk).unwrap();
            assert!(n > 0, "client closed before sending a full request");
            buf.extend_from_slice(&chunk[..n]);
            if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                break pos + 4;
            }
        };
        let head = String::from_utf8_lossy(&buf[..header_end]).to_lowercase();
        let content_length: usize = head
            .lines()
            .find_map(|l| l.strip_prefix("content-length:"))
            .map(|v| v.trim().parse().unwrap())
            .unwrap_or(0);
        while buf.len() < header_end + content_length {
            let n = stream.read(&mut chunk).unwrap();
            assert!(n > 0);
            buf.extend_from_slice(&chunk[..n]);
        }
        let resp = format!(
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        stream.write_all(resp.as_bytes()).unwrap();
    }

    fn local_cfg(port: u16, key_var: &str) -> LlmConfig {
        std::env::set_var(key_var, "test-key");
        LlmConfig {
            endpoint: format!("http://127.0.0.1:{port}/v1/chat/completions"),
            retry: RetryPolicy { attempts: 3, backoff_ms: 10, backoff_factor: 2.0 },
            timeout_secs: 10,
            api_key_env: key_var.into(),
            ..LlmConfig::default()
        }
    }

    fn completion_body(content: &str, finish: &str) -> String {
        serde_json::json!({
            "choices": [{
                "message": { "role": "assistant", "content": content },
                "finish_reason": finish,
            }]
        })
        .to_string()
    }

    #[test]
    fn http_client_retries_through_server_errors() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let served = Arc::new(AtomicUsize::new(0));
        let served_in_thread = served.clone();
        let ok_body = completion_body("phenotype p { return 0.5; }", "stop");
        let handle = std::thread::spawn(move || {
            for status in ["500 Internal Server Error", "500 Internal Server Error", "200 OK"] {
                let body = if status.starts_with("200") { ok_body.clone() } else { String::new() };
                serve_one(&listener, status, &body);
                served_in_thread.fetch_add(1, Ordering::SeqCst);
            }
        });

        let dir = tempfile::tempdir().unwrap();
        let audit_path = dir.path().join("audit.jsonl");
        let mut client = HttpClient::new(local_cfg(port, "PHENOSYNTH_TEST_KEY_RETRY"))
            .unwrap()
            .with_audit(&audit_path)
            .unwrap();
        let msg = client.complete(&two_message_transcript()).unwrap();
        handle.join().unwrap();

        assert_eq!(msg.content, "phenotype p { return 0.5; }");
        assert_eq!(msg.role, Role::Assistant);
        assert_eq!(served.load(Ordering::SeqCst), 3);

        let audit = fs::read_to_string(&audit_path).unwrap();
        assert_eq!(audit.lines().count(), 3);
        assert!(!audit.contains("test-key"), "credential leaked into the audit log");
        let last: serde_json::Value = serde_json::from_str(audit.lines().last().unwrap()).unwrap();
        assert!(last.get("response").is_some());
    }

    #[test]
    fn truncation_is_not_retried() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let served = Arc::new(AtomicUsize::new(0));
        let served_in_thread = served.clone();
        let body = completion_body("phenotype p { return", "length");
        let handle = std::thread::spawn(move || {
            serve_one(&listener, "200 OK", &body);
            served_in_thread.fetch_add(1, Ordering::SeqCst);
        });

        let mut client = HttpClient::new(local_cfg(port, "PHENOSYNTH_TEST_KEY_TRUNC")).unwrap();
        match client.complete(&two_message_transcript()) {
            Err(LlmError::Truncated) => {}
            other => panic!("expected Truncated, got {other:?}"),
        }
        handle.join().unwrap();
        assert_eq!(served.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn exhausted_retries_return_the_status_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let handle = std::thread::spawn(move || {
            for _ in 0..2 {
                serve_one(&listener, "503 Service Unavailable", "overloaded");
            }
        });
        let mut cfg = local_cfg(port, "PHENOSYNTH_TEST_KEY_STATUS");
        cfg.retry.attempts = 2;
        let mut client = HttpClient::new(cfg).unwrap();
        match client.complete(&two_message_transcript()) {
            Err(LlmError::Status { status: 503, body }) => assert_eq!(body, "overloaded"),
            other => panic!("expected Status 503, got {other:?}"),
        }
        handle.join().unwrap();
    }
}
