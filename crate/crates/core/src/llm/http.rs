//! OpenAI-compatible chat-completions adapter.

use std::fmt;
use std::time::Duration;

use serde_json::{json, Value as Json};

use super::{BackendConfig, BackendReply, CallError, ChatBackend, ChatRequest, LlmError, Role, TokenUsage};

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    secret: String,
}

impl fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("secret", &"<redacted>")
            .finish()
    }
}

impl HttpBackend {
    /// Reads the credential from the configured environment variable.
    pub fn new(config: &BackendConfig) -> Result<Self, LlmError> {
        config.check()?;
        let var = config.credential_env.clone().unwrap_or_default();
        let secret = std::env::var(&var)
            .ok()
            .filter(|s| !s.is_empty())
            .ok_or(LlmError::Credential { var })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s.max(1)))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: config.endpoint.clone().unwrap_or_default(),
            model: config.model.clone(),
            secret,
        })
    }

    fn body(&self, request: &ChatRequest) -> Json {
        let mut messages = vec![json!({"role": "system", "content": request.system_prompt})];
        messages.extend(request.messages.iter().map(|m| {
            let role = match m.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            json!({"role": role, "content": m.text})
        }));
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> &str {
        "http"
    }

    fn call(&self, request: &ChatRequest) -> Result<BackendReply, CallError> {
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.secret)
            .json(&self.body(request))
            .send()
            .map_err(|e| {
                if e.is_timeout() || e.is_connect() {
                    CallError::Retryable(e.to_string())
                } else {
                    CallError::Fatal(LlmError::Transport {
                        attempts: 1,
                        message: e.to_string(),
                    })
                }
            })?;
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(CallError::Retryable(format!("HTTP {status}")));
        }
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(CallError::Fatal(LlmError::Auth {
                status: status.as_u16(),
            }));
        }
        if !status.is_success() {
            return Err(CallError::Fatal(LlmError::Response(format!("HTTP {status}"))));
        }
        let doc: Json = response
            .json()
            .map_err(|e| CallError::Fatal(LlmError::Response(e.to_string())))?;
        parse_reply(&doc).map_err(CallError::Fatal)
    }
}

fn parse_reply(doc: &Json) -> Result<BackendReply, LlmError> {
    let text = doc
        .pointer("/choices/0/message/content")
        .and_then(Json::as_str)
        .ok_or_else(|| LlmError::Response("missing choices[0].message.content".into()))?;
    let token_usage = doc.get("usage").and_then(|u| {
        Some(TokenUsage {
            prompt: u.get("prompt_tokens")?.as_u64()?,
            completion: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Ok(BackendReply {
        text: text.to_string(),
        token_usage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{BackendKind, Gateway};

    #[test]
    fn missing_credential_fails_before_network() {
        let cfg = BackendConfig {
            kind: BackendKind::Http,
            endpoint: Some("http://127.0.0.1:9/v1/chat/completions".into()),
            credential_env: Some("TABPLAN_TEST_UNSET_CREDENTIAL".into()),
            ..BackendConfig::default()
        };
        std::env::remove_var("TABPLAN_TEST_UNSET_CREDENTIAL");
        let err = Gateway::from_config(&cfg).unwrap_err();
        assert!(matches!(err, LlmError::Credential { ref var } if var == "TABPLAN_TEST_UNSET_CREDENTIAL"));
    }

    #[test]
    fn reads_openai_reply() {
        let doc = json!({
            "choices": [{"message": {"role": "assistant", "content": "hi"}}],
            "usage": {"prompt_tokens": 3, "completion_tokens": 1}
        });
        let r = parse_reply(&doc).unwrap();
        assert_eq!(r.text, "hi");
        assert_eq!(
            r.token_usage,
            Some(TokenUsage {
                prompt: 3,
                completion: 1
            })
        );
    }
}
