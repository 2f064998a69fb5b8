//! OpenAI-style chat-completions over HTTP. Images travel as base64
//! data URLs in `image_url` content parts.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendId, CallError, ChatRequest, RawCompletion, Usage};

pub fn chat_completions_body(request: &ChatRequest) -> Value {
    let mut messages = Vec::new();
    if let Some(system) = &request.system_text {
        messages.push(json!({"role": "system", "content": system}));
    }
    let mut parts = vec![json!({"type": "text", "text": request.user_text})];
    for img in &request.images {
        parts.push(json!({"type": "image_url", "image_url": {"url": img.data_url()}}));
    }
    messages.push(json!({"role": "user", "content": parts}));

    let p = &request.params;
    let mut body = json!({
        "model": request.model,
        "messages": messages,
        "temperature": p.temperature,
        "top_p": p.top_p,
        "max_tokens": p.max_tokens,
    });
    if let Some(seed) = p.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Reads the first choice's assistant text and token usage.
pub fn parse_chat_response(body: &Value) -> Result<RawCompletion, String> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or("response has no choices[0].message.content")?;
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        Value::Null => return Err("assistant content is null".into()),
        other => return Err(format!("unexpected content type: {other}")),
    };
    let tokens = |k: &str| {
        body.pointer(&format!("/usage/{k}"))
            .and_then(Value::as_u64)
            .unwrap_or(0)
    };
    Ok(RawCompletion {
        text,
        usage: Usage {
            prompt_tokens: tokens("prompt_tokens"),
            completion_tokens: tokens("completion_tokens"),
        },
    })
}

pub struct HttpBackend {
    id: BackendId,
    url: String,
    http: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(id: BackendId, timeout: Duration) -> Result<Self, String> {
        id.validate()?;
        let trimmed = id.endpoint.trim_end_matches('/');
        let url = if trimmed.ends_with("/chat/completions") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/chat/completions")
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(HttpBackend { id, url, http })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn api_key(&self) -> Result<Option<String>, CallError> {
        match &self.id.auth_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| CallError::permanent(None, format!("environment variable {var} is not set"))),
        }
    }
}

impl Backend for HttpBackend {
    fn send(&self, request: &ChatRequest) -> Result<RawCompletion, CallError> {
        let mut builder = self.http.post(&self.url).json(&chat_completions_body(request));
        if let Some(key) = self.api_key()? {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            let transient = e.is_timeout() || e.is_connect() || e.is_request();
            CallError {
                transient,
                status: None,
                message: e.to_string(),
            }
        })?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| CallError::transient(Some(status), e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(CallError::from_status(status, &text));
        }
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| CallError::permanent(Some(status), format!("invalid JSON body: {e}")))?;
        parse_chat_response(&body).map_err(|m| CallError::permanent(Some(status), m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::GenParams;
    use crate::datastore::ImageBytes;

    #[test]
    fn body_shape() {
        let req = ChatRequest {
            model: "gpt-4-vision".into(),
            system_text: Some("sys".into()),
            user_text: "hi".into(),
            images: vec![ImageBytes {
                media_type: "image/png".into(),
                bytes: vec![0, 1],
            }],
            params: GenParams::default().with_seed(Some(7)),
        };
        let body = chat_completions_body(&req);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"][0]["text"], "hi");
        assert_eq!(
            body["messages"][1]["content"][1]["image_url"]["url"],
            "data:image/png;base64,AAE="
        );
        assert_eq!(body["top_p"], 0.9);
        assert_eq!(body["max_tokens"], 2048);
        assert_eq!(body["seed"], 7);
    }

    #[test]
    fn response_parsing() {
        let body = json!({"choices": [{"message": {"role": "assistant", "content": "ok"}}],
                          "usage": {"prompt_tokens": 5, "completion_tokens": 2}});
        let r = parse_chat_response(&body).unwrap();
        assert_eq!(r.text, "ok");
        assert_eq!(r.usage.total(), 7);
        let parts = json!({"choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]}}]});
        assert_eq!(parse_chat_response(&parts).unwrap().text, "ab");
        assert!(parse_chat_response(&json!({"choices": []})).is_err());
    }

    #[test]
    fn endpoint_normalization() {
        let b = HttpBackend::new(BackendId::new("a", "http://h:1/v1/", "m"), Duration::from_secs(1)).unwrap();
        assert_eq!(b.url(), "http://h:1/v1/chat/completions");
        let b = HttpBackend::new(
            BackendId::new("a", "http://h:1/v1/chat/completions", "m"),
            Duration::from_secs(1),
        )
        .unwrap();
        assert_eq!(b.url(), "http://h:1/v1/chat/completions");
    }
}
