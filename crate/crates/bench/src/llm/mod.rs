//! Language-model decision-maker: prompt, call, parse, re-ask, fall back.

mod transport;

pub use transport::{
    extract_content, ChatMessage, ChatRequest, ContentPart, FixtureTransport, HttpTransport,
    ImageUrl, RateLimiter, ScriptedTransport, Transport, TransportError,
};

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::Engine as _;
use goalassign_core::agents::{
    build_prompt, parse_ranking, AgentError, Decision, DecisionMaker, DistanceRanker,
    PromptOptions,
};
use goalassign_core::assignment::AgentId;
use goalassign_core::protocol::Observation;
use serde::{Deserialize, Serialize};

use crate::render::{render_image, RenderStyle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub temperature: f32,
    /// Re-asks after a malformed reply, and resends after a transport error.
    pub max_retries: u32,
    pub timeout_secs: f64,
    pub include_distances: bool,
    pub include_image: bool,
    /// Name of the environment variable holding the API key.
    pub credential_env: String,
    pub requests_per_minute: Option<u32>,
    /// Replay file used instead of the network when set.
    pub fixture: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4.1".into(),
            temperature: 0.0,
            max_retries: 2,
            timeout_secs: 60.0,
            include_distances: true,
            include_image: false,
            credential_env: "OPENAI_API_KEY".into(),
            requests_per_minute: None,
            fixture: None,
        }
    }
}

impl LlmConfig {
    pub fn check(&self) -> Result<(), String> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err("llm.timeout_secs must be positive".into());
        }
        if self.requests_per_minute == Some(0) {
            return Err("llm.requests_per_minute must be positive".into());
        }
        Ok(())
    }

    /// Fixture replay if configured, otherwise HTTP.
    pub fn transport(&self) -> Result<Arc<dyn Transport>, TransportError> {
        Ok(match &self.fixture {
            Some(path) => Arc::new(FixtureTransport::load(path)?),
            None => Arc::new(HttpTransport::new(
                self.endpoint.clone(),
                self.credential_env.clone(),
                Duration::from_secs_f64(self.timeout_secs),
                self.requests_per_minute,
            )),
        })
    }
}

/// One request/response exchange, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub agent: u16,
    pub round: u32,
    pub request: ChatRequest,
    pub response: Result<String, String>,
}

pub type TranscriptSink = Arc<Mutex<Vec<TranscriptEntry>>>;

pub struct LlmAgent {
    transport: Arc<dyn Transport>,
    config: LlmConfig,
    style: RenderStyle,
    transcript: Option<TranscriptSink>,
}

impl LlmAgent {
    pub fn new(transport: Arc<dyn Transport>, config: LlmConfig) -> Self {
        LlmAgent {
            transport,
            config,
            style: RenderStyle::default(),
            transcript: None,
        }
    }

    pub fn with_style(mut self, style: RenderStyle) -> Self {
        self.style = style;
        self
    }

    pub fn with_transcript(mut self, sink: TranscriptSink) -> Self {
        self.transcript = Some(sink);
        self
    }

    /// System and user messages for `observation`, image attached when
    /// configured.
    pub fn initial_request(&self, observation: &Observation<'_>) -> ChatRequest {
        let mut bundle = build_prompt(
            observation,
            PromptOptions {
                include_distances: self.config.include_distances,
                include_image: self.config.include_image,
            },
        );
        if self.config.include_image {
            bundle.image = Some(render_image(
                observation.scenario,
                observation.positions,
                &self.style,
            ));
        }
        let mut user = ChatMessage::text("user", bundle.user_text);
        if let Some(png) = bundle.image {
            let data = base64::engine::general_purpose::STANDARD.encode(png);
            user.content.push(ContentPart::ImageUrl {
                image_url: ImageUrl {
                    url: format!("data:image/png;base64,{data}"),
                },
            });
        }
        ChatRequest {
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            messages: vec![ChatMessage::text("system", bundle.system_text), user],
        }
    }

    fn log(&self, agent: AgentId, round: u32, request: &ChatRequest, response: &Result<String, TransportError>) {
        if let Some(sink) = &self.transcript {
            sink.lock().unwrap_or_else(|e| e.into_inner()).push(TranscriptEntry {
                agent: agent.number(),
                round,
                request: request.clone(),
                response: response.clone().map_err(|e| e.to_string()),
            });
        }
    }

    fn send(&self, agent: AgentId, round: u32, request: &ChatRequest) -> Result<String, AgentError> {
        let mut attempt = 0;
        loop {
            let reply = self.transport.complete(request);
            self.log(agent, round, request, &reply);
            match reply {
                Ok(text) => return Ok(text),
                Err(TransportError::CredentialMissing(var)) => {
                    return Err(AgentError::Unavailable(format!(
                        "environment variable {var} is not set"
                    )))
                }
                Err(e) if attempt >= self.config.max_retries => {
                    return Err(AgentError::Unavailable(e.to_string()))
                }
                Err(e) => {
                    log::warn!("agent {agent}: transport error, retrying: {e}");
                    attempt += 1;
                }
            }
        }
    }
}

impl DecisionMaker for LlmAgent {
    fn decide(&mut self, observation: &Observation<'_>) -> Result<Decision, AgentError> {
        let me = observation.agent;
        let k = observation.scenario.k();
        let mut request = self.initial_request(observation);
        let mut retries = 0;
        loop {
            let reply = self.send(me, observation.round, &request)?;
            match parse_ranking(&reply, me, k) {
                Ok(ranking) => {
                    return Ok(Decision {
                        ranking,
                        retries,
                        fallback: false,
                    })
                }
                Err(e) if retries >= self.config.max_retries => {
                    log::warn!("agent {me}: falling back to distance ranking after: {e}");
                    return Ok(Decision {
                        ranking: DistanceRanker::rank(observation),
                        retries,
                        fallback: true,
                    });
                }
                Err(e) => {
                    retries += 1;
                    request.messages.push(ChatMessage::text("assistant", reply));
                    request.messages.push(ChatMessage::text(
                        "user",
                        format!(
                            "Your reply could not be used ({e}). Finish with exactly one line \
                             `RANKING: <label> > <label> > ...` naming each of the {k} goals once."
                        ),
                    ));
                }
            }
        }
    }

    fn is_deterministic(&self) -> bool {
        self.transport.is_deterministic()
    }

    fn name(&self) -> &str {
        "llm"
    }
}
