//! Chat-completion wire types and the transports that carry them.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn text(role: &str, text: impl Into<String>) -> Self {
        ChatMessage {
            role: role.into(),
            content: vec![ContentPart::Text { text: text.into() }],
        }
    }
}

/// Request body of an OpenAI-style `/chat/completions` call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f32,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    /// Hex SHA-256 of the canonical JSON body; keys fixture replies.
    pub fn fingerprint(&self) -> String {
        let body = serde_json::to_vec(self).expect("request serialization cannot fail");
        hex::encode(Sha256::digest(&body))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("environment variable {0} is not set")]
    CredentialMissing(String),
    #[error("request failed: {0}")]
    Failed(String),
    #[error("no fixture for request {0}")]
    NoFixture(String),
}

/// Sends one request, returns the assistant text.
pub trait Transport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;

    /// Same request always yields the same reply.
    fn is_deterministic(&self) -> bool;
}

/// Spaces calls at least `60 / requests_per_minute` seconds apart across
/// every thread sharing it.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        RateLimiter {
            interval: Duration::from_secs(60) / requests.max(1),
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Blocking HTTPS transport with bearer authentication.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    credential_env: String,
    limiter: Option<RateLimiter>,
}

impl HttpTransport {
    pub fn new(
        endpoint: impl Into<String>,
        credential_env: impl Into<String>,
        timeout: Duration,
        requests_per_minute: Option<u32>,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTransport {
            agent,
            endpoint: endpoint.into(),
            credential_env: credential_env.into(),
            limiter: requests_per_minute.map(RateLimiter::per_minute),
        }
    }

    fn credential(&self) -> Result<String, TransportError> {
        std::env::var(&self.credential_env)
            .map_err(|_| TransportError::CredentialMissing(self.credential_env.clone()))
    }
}

/// Pulls `choices[0].message.content` out of a completion response.
pub fn extract_content(body: &serde_json::Value) -> Result<String, TransportError> {
    let content = &body["choices"][0]["message"]["content"];
    match content {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(TransportError::Failed(format!(
            "response has no assistant content: {body}"
        ))),
    }
}

impl Transport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let key = self.credential()?;
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(request)
            .map_err(|e| TransportError::Failed(e.to_string()))?;
        let body: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Failed(e.to_string()))?;
        extract_content(&body)
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Offline replay keyed by [`ChatRequest::fingerprint`].
///
/// File format: a JSON object `{ "<fingerprint>": "<assistant text>", … }`.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixtureTransport {
    replies: BTreeMap<String, String>,
}

impl FixtureTransport {
    pub fn load(path: &Path) -> Result<Self, TransportError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TransportError::Failed(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| TransportError::Failed(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }

    pub fn insert(&mut self, request: &ChatRequest, reply: impl Into<String>) {
        self.replies.insert(request.fingerprint(), reply.into());
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl Transport for FixtureTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let key = request.fingerprint();
        self.replies
            .get(&key)
            .cloned()
            .ok_or(TransportError::NoFixture(key))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Hands out canned replies in order regardless of the request, and keeps
/// every request it saw.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    replies: Mutex<VecDeque<Result<String, TransportError>>>,
    seen: Mutex<Vec<ChatRequest>>,
}

impl ScriptedTransport {
    pub fn new(replies: impl IntoIterator<Item = Result<String, TransportError>>) -> Self {
        ScriptedTransport {
            replies: Mutex::new(replies.into_iter().collect()),
            seen: Mutex::default(),
        }
    }

    pub fn texts<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(replies.into_iter().map(|s| Ok(s.into())))
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Transport for ScriptedTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        self.seen
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(request.clone());
        self.replies
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::Failed("script exhausted".into())))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(text: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            temperature: 0.0,
            messages: vec![ChatMessage::text("user", text)],
        }
    }

    #[test]
    fn wire_format_matches_chat_completions() {
        let mut r = req("hi");
        r.messages[0].content.push(ContentPart::ImageUrl {
            image_url: ImageUrl {
                url: "data:image/png;base64,AAAA".into(),
            },
        });
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["messages"][0]["content"][0]["type"], "text");
        assert_eq!(v["messages"][0]["content"][1]["type"], "image_url");
        assert_eq!(
            v["messages"][0]["content"][1]["image_url"]["url"],
            "data:image/png;base64,AAAA"
        );
    }

    #[test]
    fn fingerprint_tracks_content() {
        assert_eq!(req("a").fingerprint(), req("a").fingerprint());
        assert_ne!(req("a").fingerprint(), req("b").fingerprint());
        assert_eq!(req("a").fingerprint().len(), 64);
    }

    #[test]
    fn fixture_round_trip_and_miss() {
        let mut f = FixtureTransport::default();
        f.insert(&req("a"), "RANKING: A");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.json");
        f.save(&path).unwrap();
        let g = FixtureTransport::load(&path).unwrap();
        assert_eq!(g.complete(&req("a")).unwrap(), "RANKING: A");
        assert!(matches!(g.complete(&req("b")), Err(TransportError::NoFixture(_))));
    }

    #[test]
    fn extract_string_and_parts() {
        let v = serde_json::json!({"choices":[{"message":{"content":"hello"}}]});
        assert_eq!(extract_content(&v).unwrap(), "hello");
        let v = serde_json::json!({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]});
        assert_eq!(extract_content(&v).unwrap(), "ab");
        assert!(extract_content(&serde_json::json!({"error":"x"})).is_err());
    }

    #[test]
    fn missing_credential() {
        let t = HttpTransport::new(
            "http://127.0.0.1:9/v1/chat/completions",
            "GOALBENCH_TEST_UNSET_KEY",
            Duration::from_millis(200),
            None,
        );
        assert_eq!(
            t.complete(&req("a")),
            Err(TransportError::CredentialMissing("GOALBENCH_TEST_UNSET_KEY".into()))
        );
    }

    #[test]
    fn limiter_spaces_calls() {
        let l = RateLimiter::per_minute(1200); // 50 ms apart
        let start = Instant::now();
        for _ in 0..3 {
            l.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(100));
    }
}
