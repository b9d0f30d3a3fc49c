//! Model gateway: one trait, three backends.
//!
//! [`HttpGateway`] speaks the OpenAI-compatible chat JSON dialect.
//! [`ReplayGateway`] serves responses from a fixture directory keyed by a
//! content hash of the request, which keeps every pipeline test offline and
//! deterministic. [`RecordingGateway`] wraps any backend and writes the
//! fixture a replay run will later hit, because both compute the same key
//! from the same request builder.

mod live;
mod replay;
mod scripted;
mod transcript;

pub use live::HttpGateway;
pub use replay::{ReplayGateway, ReplayStore, RecordingGateway};
pub use scripted::ScriptedGateway;
pub use transcript::{
    compress_context, render_transcript, truncate_context, Entry, Transcript, TruncationPolicy,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no replay fixture for tag {tag} (hash {hash}); run in record mode first")]
    ReplayMiss { tag: String, hash: String },
    #[error("http: {0}")]
    Http(String),
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One part of a multimodal message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Content {
    Text(String),
    /// Raw image bytes; `media_type` is a MIME type such as `image/png`.
    Image { media_type: String, data: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Content>,
}

impl Message {
    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Message {
            role,
            parts: vec![Content::Text(text.into())],
        }
    }
}

/// A chat completion request. `tag` names the call site (for example
/// `extract:raw:case3`) and is part of the replay key, so two otherwise
/// identical requests from different stages never collide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub tag: String,
    pub messages: Vec<Message>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, tag: impl Into<String>) -> Self {
        ChatRequest {
            model: model.into(),
            tag: tag.into(),
            messages: Vec::new(),
        }
    }

    pub fn system(mut self, text: impl Into<String>) -> Self {
        self.messages.push(Message::text(Role::System, text));
        self
    }

    pub fn user(mut self, text: impl Into<String>) -> Self {
        self.messages.push(Message::text(Role::User, text));
        self
    }

    pub fn user_parts(mut self, parts: Vec<Content>) -> Self {
        self.messages.push(Message {
            role: Role::User,
            parts,
        });
        self
    }

    pub fn assistant(mut self, text: impl Into<String>) -> Self {
        self.messages.push(Message::text(Role::Assistant, text));
        self
    }
}

pub trait Gateway {
    /// Complete the chat, returning the assistant text.
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError>;
}

impl<G: Gateway + ?Sized> Gateway for &G {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        (**self).complete(req)
    }
}

impl<G: Gateway + ?Sized> Gateway for Box<G> {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        (**self).complete(req)
    }
}
