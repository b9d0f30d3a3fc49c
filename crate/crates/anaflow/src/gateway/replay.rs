//! Fixture-backed gateway. The replay key hashes the request's model, tag
//! and messages; image parts contribute the hash of their bytes rather than
//! the bytes themselves, so fixture files stay small and the key still
//! changes whenever a pixel does.

use super::{ChatRequest, Content, Gateway, GatewayError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Serialize)]
struct KeyMessage<'a> {
    role: &'static str,
    parts: Vec<KeyPart<'a>>,
}

#[derive(Serialize)]
enum KeyPart<'a> {
    Text(&'a str),
    ImageSha(String),
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Content hash identifying a request in the store.
pub fn request_hash(req: &ChatRequest) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        model: &'a str,
        tag: &'a str,
        messages: Vec<KeyMessage<'a>>,
    }
    let key = Key {
        model: &req.model,
        tag: &req.tag,
        messages: req
            .messages
            .iter()
            .map(|m| KeyMessage {
                role: m.role.as_str(),
                parts: m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Content::Text(t) => KeyPart::Text(t),
                        Content::Image { data, .. } => KeyPart::ImageSha(sha256_hex(data)),
                    })
                    .collect(),
            })
            .collect(),
    };
    let canonical = serde_json::to_string(&key).expect("key serializes");
    sha256_hex(canonical.as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
struct Fixture {
    tag: String,
    model: String,
    /// Text parts of the request, truncated, for human inspection only.
    request_preview: Vec<String>,
    response: String,
}

/// Directory of `{hash}.json` fixtures.
#[derive(Debug, Clone)]
pub struct ReplayStore {
    dir: PathBuf,
}

impl ReplayStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    pub fn lookup(&self, req: &ChatRequest) -> Result<Option<String>, GatewayError> {
        let path = self.path_for(&request_hash(req));
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        let fixture: Fixture = serde_json::from_str(&text)
            .map_err(|e| GatewayError::BadResponse(format!("fixture {}: {e}", path.display())))?;
        Ok(Some(fixture.response))
    }

    pub fn save(&self, req: &ChatRequest, response: &str) -> Result<(), GatewayError> {
        std::fs::create_dir_all(&self.dir)?;
        let preview = req
            .messages
            .iter()
            .flat_map(|m| m.parts.iter())
            .filter_map(|p| match p {
                Content::Text(t) => Some(t.chars().take(400).collect::<String>()),
                Content::Image { .. } => Some("<image>".to_string()),
            })
            .collect();
        let fixture = Fixture {
            tag: req.tag.clone(),
            model: req.model.clone(),
            request_preview: preview,
            response: response.to_string(),
        };
        let path = self.path_for(&request_hash(req));
        std::fs::write(&path, serde_json::to_string_pretty(&fixture).expect("fixture serializes"))?;
        Ok(())
    }
}

/// Strict replay: a missing fixture is an error, never a silent live call.
#[derive(Debug, Clone)]
pub struct ReplayGateway {
    store: ReplayStore,
}

impl ReplayGateway {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayGateway {
            store: ReplayStore::new(dir),
        }
    }
}

impl Gateway for ReplayGateway {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        match self.store.lookup(req)? {
            Some(response) => Ok(response),
            None => Err(GatewayError::ReplayMiss {
                tag: req.tag.clone(),
                hash: request_hash(req),
            }),
        }
    }
}

/// Pass-through that records every completion into the store.
pub struct RecordingGateway<G> {
    inner: G,
    store: ReplayStore,
}

impl<G: Gateway> RecordingGateway<G> {
    pub fn new(inner: G, dir: impl Into<PathBuf>) -> Self {
        RecordingGateway {
            inner,
            store: ReplayStore::new(dir),
        }
    }
}

impl<G: Gateway> Gateway for RecordingGateway<G> {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let response = self.inner.complete(req)?;
        self.store.save(req, &response)?;
        Ok(response)
    }
}
