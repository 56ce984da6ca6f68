//! HTTP adapters for hosted chat-completion APIs.

use std::time::Duration;

use serde_json::{json, Value};
use ureq::Agent;

use super::provider::{ChatProvider, ChatRequest, ProviderError, Role};

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn read_credential(env_var: &str) -> Result<String, ProviderError> {
    std::env::var(env_var).map_err(|_| ProviderError::MissingCredential(env_var.to_string()))
}

fn post(agent: &Agent, url: &str, headers: &[(&str, String)], body: &Value) -> Result<Value, ProviderError> {
    let mut req = agent.post(url);
    for (k, v) in headers {
        req = req.header(*k, v);
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| ProviderError::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| ProviderError::Transport(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(ProviderError::Status { status, body: text });
    }
    serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))
}

/// `POST {endpoint}` in the OpenAI chat-completions shape. Works for any
/// compatible server.
pub struct OpenAiCompatible {
    endpoint: String,
    api_key: Option<String>,
    send_top_k: bool,
    agent: Agent,
}

impl OpenAiCompatible {
    /// Reads the key from `api_key_env` when given. `send_top_k` is off for
    /// vendors that reject the parameter.
    pub fn new(endpoint: &str, api_key_env: Option<&str>, send_top_k: bool) -> Result<Self, ProviderError> {
        Ok(Self {
            endpoint: endpoint.to_string(),
            api_key: api_key_env.map(read_credential).transpose()?,
            send_top_k,
            agent: agent(Duration::from_secs(300)),
        })
    }

    pub fn body(&self, request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
        });
        if let (true, Some(k)) = (self.send_top_k, request.params.top_k) {
            body["top_k"] = json!(k);
        }
        body
    }
}

impl ChatProvider for OpenAiCompatible {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let headers: Vec<(&str, String)> = self
            .api_key
            .iter()
            .map(|k| ("Authorization", format!("Bearer {k}")))
            .collect();
        let value = post(&self.agent, &self.endpoint, &headers, &self.body(request))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Malformed("no choices[0].message.content".into()))
    }
}

/// Google Generative Language `generateContent`.
pub struct Gemini {
    base_url: String,
    api_key: String,
    agent: Agent,
}

impl Gemini {
    /// `base_url` is e.g. `https://generativelanguage.googleapis.com/v1beta`.
    pub fn new(base_url: &str, api_key_env: &str) -> Result<Self, ProviderError> {
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: read_credential(api_key_env)?,
            agent: agent(Duration::from_secs(300)),
        })
    }

    pub fn body(request: &ChatRequest) -> Value {
        let system: Vec<&str> = request
            .messages
            .iter()
            .filter(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
            .collect();
        let contents: Vec<Value> = request
            .messages
            .iter()
            .filter(|m| m.role != Role::System)
            .map(|m| {
                let role = if m.role == Role::Assistant { "model" } else { "user" };
                json!({"role": role, "parts": [{"text": m.content}]})
            })
            .collect();
        let mut generation = json!({
            "temperature": request.params.temperature,
            "topP": request.params.top_p,
        });
        if let Some(k) = request.params.top_k {
            generation["topK"] = json!(k);
        }
        let mut body = json!({"contents": contents, "generationConfig": generation});
        if !system.is_empty() {
            body["systemInstruction"] = json!({"parts": [{"text": system.join("\n")}]});
        }
        body
    }
}

impl ChatProvider for Gemini {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let url = format!("{}/models/{}:generateContent", self.base_url, request.model);
        let headers = [("x-goog-api-key", self.api_key.clone())];
        let value = post(&self.agent, &url, &headers, &Self::body(request))?;
        let parts = value["candidates"][0]["content"]["parts"]
            .as_array()
            .ok_or_else(|| ProviderError::Malformed("no candidates[0].content.parts".into()))?;
        Ok(parts.iter().filter_map(|p| p["text"].as_str()).collect())
    }
}
