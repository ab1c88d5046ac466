use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, ClientError, GenParams};

/// Chat-completion endpoint (`POST {endpoint}` with a `messages` array,
/// bearer-token auth).
pub struct LiveBackend {
    endpoint: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl LiveBackend {
    /// Reads the API key from `api_key_env`. A missing key is a
    /// configuration error raised before any request is made.
    pub fn from_env(endpoint: &str, model: &str, api_key_env: &str) -> Result<Self, ClientError> {
        let api_key = std::env::var(api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| {
                ClientError::Config(format!("environment variable {api_key_env} is not set"))
            })?;
        if endpoint.trim().is_empty() || model.trim().is_empty() {
            return Err(ClientError::Config("live backend needs an endpoint and a model".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(LiveBackend {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            agent,
        })
    }
}

fn request_body(model: &str, prompt: &str, params: &GenParams) -> Value {
    json!({
        "model": model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
        "n": 1,
    })
}

fn response_text(body: &Value) -> Option<String> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
}

impl Backend for LiveBackend {
    fn id(&self) -> String {
        format!("live:{}:{}", self.endpoint, self.model)
    }

    fn generate(&self, prompt: &str, params: &GenParams, _index: usize) -> Result<String, ClientError> {
        let transport = |message: String, transient: bool| ClientError::Transport { message, transient };
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request_body(&self.model, prompt, params))
            .map_err(|e| transport(e.to_string(), true))?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(ClientError::Config(format!("endpoint rejected credentials ({status})"))),
            429 | 500..=599 => return Err(transport(format!("HTTP {status}"), true)),
            _ => return Err(transport(format!("HTTP {status}"), false)),
        }
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| transport(format!("bad response body: {e}"), false))?;
        response_text(&body).ok_or_else(|| transport("response has no message content".into(), false))
    }
}
