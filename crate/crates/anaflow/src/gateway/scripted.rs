//! Scripted gateway: canned responses handed out by request-tag prefix, in
//! order. Used to drive agent loops in tests and to generate replay
//! fixtures through the same builder code paths as live runs.

use super::{ChatRequest, Gateway, GatewayError};
use std::collections::VecDeque;
use std::sync::Mutex;

#[derive(Default)]
pub struct ScriptedGateway {
    scripts: Mutex<Vec<(String, VecDeque<String>)>>,
}

impl ScriptedGateway {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queue a response for requests whose tag starts with `prefix`.
    pub fn push(&self, prefix: impl Into<String>, response: impl Into<String>) {
        let prefix = prefix.into();
        let mut scripts = self.scripts.lock().unwrap();
        if let Some((_, queue)) = scripts.iter_mut().find(|(p, _)| *p == prefix) {
            queue.push_back(response.into());
        } else {
            scripts.push((prefix, VecDeque::from([response.into()])));
        }
    }

    pub fn with(self, prefix: impl Into<String>, response: impl Into<String>) -> Self {
        self.push(prefix, response);
        self
    }
}

impl Gateway for ScriptedGateway {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let mut scripts = self.scripts.lock().unwrap();
        for (prefix, queue) in scripts.iter_mut() {
            if req.tag.starts_with(prefix.as_str()) {
                if let Some(r) = queue.pop_front() {
                    return Ok(r);
                }
            }
        }
        Err(GatewayError::BadResponse(format!(
            "no scripted response for tag {}",
            req.tag
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn responses_pop_in_order_by_prefix() {
        let gw = ScriptedGateway::new()
            .with("a:", "first")
            .with("a:", "second")
            .with("b:", "other");
        let req = |tag: &str| ChatRequest::new("m", tag).user("x");
        assert_eq!(gw.complete(&req("a:1")).unwrap(), "first");
        assert_eq!(gw.complete(&req("b:1")).unwrap(), "other");
        assert_eq!(gw.complete(&req("a:2")).unwrap(), "second");
        assert!(gw.complete(&req("a:3")).is_err());
        assert!(gw.complete(&req("c:1")).is_err());
    }
}
