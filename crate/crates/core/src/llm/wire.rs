//! HTTP backend speaking a minimal JSON protocol: POST
//! `{request_id, tier, model?, prompt_text}` and read `{text}` back.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendRequest, Tier};

pub const ENV_EXTRACT_ENDPOINT: &str = "CASEPIPE_EXTRACT_ENDPOINT";
pub const ENV_REPAIR_ENDPOINT: &str = "CASEPIPE_REPAIR_ENDPOINT";
pub const ENV_API_KEY: &str = "CASEPIPE_API_KEY";
pub const ENV_MODEL_EXTRACT: &str = "CASEPIPE_MODEL_EXTRACT";
pub const ENV_MODEL_REPAIR: &str = "CASEPIPE_MODEL_REPAIR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireConfig {
    pub extract_endpoint: String,
    pub repair_endpoint: String,
    pub api_key: Option<String>,
    pub model_extract: Option<String>,
    pub model_repair: Option<String>,
}

impl WireConfig {
    /// Reads endpoints and credentials from the environment. `None` when no
    /// extraction endpoint is configured.
    pub fn from_env() -> Option<Self> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let extract = var(ENV_EXTRACT_ENDPOINT)?;
        Some(WireConfig {
            repair_endpoint: var(ENV_REPAIR_ENDPOINT).unwrap_or_else(|| extract.clone()),
            extract_endpoint: extract,
            api_key: var(ENV_API_KEY),
            model_extract: var(ENV_MODEL_EXTRACT),
            model_repair: var(ENV_MODEL_REPAIR),
        })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    request_id: &'a str,
    tier: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    prompt_text: String,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

pub struct WireBackend {
    config: WireConfig,
}

impl WireBackend {
    pub fn new(config: WireConfig) -> Self {
        WireBackend { config }
    }
}

impl Backend for WireBackend {
    fn label(&self) -> &str {
        "wire"
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let (url, model) = match request.tier {
            Tier::Extract => (&self.config.extract_endpoint, &self.config.model_extract),
            Tier::Repair => (&self.config.repair_endpoint, &self.config.model_repair),
        };
        let body = serde_json::to_string(&WireRequest {
            request_id: &request.request_id,
            tier: request.tier.as_str(),
            model: model.as_deref(),
            prompt_text: request.prompt.render(),
        })
        .map_err(|e| BackendError::Transport(e.to_string()))?;
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(request.timeout_s.max(0.001))))
            .build();
        let agent = ureq::Agent::new_with_config(agent_config);
        let mut call = agent.post(url).header("content-type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.header("authorization", format!("Bearer {key}"));
        }
        let mut response = call.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout,
            other => BackendError::Transport(other.to_string()),
        })?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let parsed: WireResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Transport(format!("bad response body: {e}")))?;
        Ok(parsed.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ExtractionPrompt, Prompt};

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let b = WireBackend::new(WireConfig {
            extract_endpoint: "http://127.0.0.1:9/none".into(),
            repair_endpoint: "http://127.0.0.1:9/none".into(),
            api_key: Some("k".into()),
            model_extract: None,
            model_repair: None,
        });
        let req = BackendRequest {
            prompt: Prompt::Extract(ExtractionPrompt {
                instruction: "i".into(),
                schema_text: String::new(),
                document_text: "d".into(),
                max_output_hint: 10,
            }),
            tier: Tier::Extract,
            timeout_s: 2.0,
            request_id: "r".into(),
        };
        assert!(matches!(
            b.complete(&req),
            Err(BackendError::Transport(_)) | Err(BackendError::Timeout)
        ));
    }
}
