//! Blocking HTTP backend for OpenAI-compatible chat endpoints.

use super::{ChatRequest, Content, Gateway, GatewayError};
use base64_engine::encode_base64;
use serde_json::{json, Value};
use std::time::Duration;

pub struct HttpGateway {
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpGateway {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(180))
            .build()
            .expect("client builds");
        HttpGateway {
            base_url: base_url.into(),
            api_key: api_key.into(),
            client,
        }
    }

    /// Reads `ANAFLOW_API_BASE` and `ANAFLOW_API_KEY`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let base = std::env::var("ANAFLOW_API_BASE")
            .map_err(|_| GatewayError::Http("ANAFLOW_API_BASE is not set".to_string()))?;
        let key = std::env::var("ANAFLOW_API_KEY").unwrap_or_default();
        Ok(HttpGateway::new(base, key))
    }
}

impl Gateway for HttpGateway {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let body = request_body(req);
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let mut call = self.client.post(&url).json(&body);
        if !self.api_key.is_empty() {
            call = call.bearer_auth(&self.api_key);
        }
        let resp = call.send().map_err(|e| GatewayError::Http(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Http(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Http(format!("{status}: {text}")));
        }
        parse_chat_response(&text)
    }
}

pub(crate) fn request_body(req: &ChatRequest) -> Value {
    let messages: Vec<Value> = req
        .messages
        .iter()
        .map(|m| {
            let simple_text = m.parts.len() == 1
                && matches!(m.parts[0], Content::Text(_));
            let content = if simple_text {
                match &m.parts[0] {
                    Content::Text(t) => json!(t),
                    Content::Image { .. } => unreachable!(),
                }
            } else {
                json!(m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Content::Text(t) => json!({ "type": "text", "text": t }),
                        Content::Image { media_type, data } => json!({
                            "type": "image_url",
                            "image_url": {
                                "url": format!("data:{media_type};base64,{}", encode_base64(data))
                            }
                        }),
                    })
                    .collect::<Vec<_>>())
            };
            json!({ "role": m.role.as_str(), "content": content })
        })
        .collect();
    json!({
        "model": req.model,
        "temperature": 0.0,
        "messages": messages,
    })
}

pub(crate) fn parse_chat_response(text: &str) -> Result<String, GatewayError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| GatewayError::BadResponse(format!("not json: {e}")))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => {
            let text: String = parts
                .iter()
                .filter_map(|p| p["text"].as_str())
                .collect::<Vec<_>>()
                .join("");
            if text.is_empty() {
                Err(GatewayError::BadResponse("empty content parts".to_string()))
            } else {
                Ok(text)
            }
        }
        _ => Err(GatewayError::BadResponse(format!(
            "missing choices[0].message.content in {}",
            text.chars().take(200).collect::<String>()
        ))),
    }
}

/// Minimal standard base64, enough for data URLs.
mod base64_engine {
    const ALPHABET: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

    pub fn encode_base64(data: &[u8]) -> String {
        let mut out = String::with_capacity(data.len().div_ceil(3) * 4);
        for chunk in data.chunks(3) {
            let b = [
                chunk[0],
                chunk.get(1).copied().unwrap_or(0),
                chunk.get(2).copied().unwrap_or(0),
            ];
            let n = ((b[0] as u32) << 16) | ((b[1] as u32) << 8) | b[2] as u32;
            out.push(ALPHABET[(n >> 18) as usize & 63] as char);
            out.push(ALPHABET[(n >> 12) as usize & 63] as char);
            out.push(if chunk.len() > 1 {
                ALPHABET[(n >> 6) as usize & 63] as char
            } else {
                '='
            });
            out.push(if chunk.len() > 2 {
                ALPHABET[n as usize & 63] as char
            } else {
                '='
            });
        }
        out
    }
}
