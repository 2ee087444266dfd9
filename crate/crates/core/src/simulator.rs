//! LLM-backed API simulation for calls that neither the cache nor the real
//! upstream can serve.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tracing::debug;

use crate::cache::Cache;
use crate::llm::{BridgeError, LlmBridge};
use crate::model::{parse_wire_response, ApiDocumentation, ApiResponse, CallRequest};
use crate::prompts::PromptSet;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimulatorError {
    #[error("simulator unavailable: {0}")]
    Unavailable(String),
    #[error("documentation for {doc} does not match request for {request}")]
    DocumentationMismatch { doc: String, request: String },
}

impl From<BridgeError> for SimulatorError {
    fn from(e: BridgeError) -> Self {
        SimulatorError::Unavailable(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorConfig {
    pub model_name: String,
    pub temperature: f64,
    pub max_examples: usize,
    /// Extra attempts after an unparseable completion.
    pub parse_retry_budget: u32,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            model_name: "gpt-4-turbo".into(),
            temperature: 0.1,
            max_examples: 5,
            parse_retry_budget: 2,
        }
    }
}

/// Renders example pairs as `Example input i: ...` / `Example response i: ...`
/// lines, numbered from 1, in the given order.
pub fn render_examples(examples: &[(CallRequest, ApiResponse)]) -> String {
    let mut out = String::new();
    for (i, (req, resp)) in examples.iter().enumerate() {
        let n = i + 1;
        out.push_str(&format!(
            "Example input {n}: {}\nExample response {n}: {}\n",
            serde_json::to_string(req).expect("request serialization is infallible"),
            resp.to_wire()
        ));
    }
    out
}

/// System and user prompt for one simulated call. Pure.
pub fn build_prompt(
    prompts: &PromptSet,
    doc: &ApiDocumentation,
    examples: &[(CallRequest, ApiResponse)],
    request: &CallRequest,
) -> (String, String) {
    let mut user = format!("API Documentation:\n{}\n", doc.to_json());
    if !examples.is_empty() {
        user.push_str("API Examples:\n");
        user.push_str(&render_examples(examples));
    }
    user.push_str("API input:\n");
    user.push_str(&serde_json::to_string(request).expect("request serialization is infallible"));
    user.push('\n');
    (prompts.api_simulation_system.clone(), user)
}

/// Pulls the JSON object out of a completion: strips code fences and any
/// prose around the outermost `{ ... }`.
pub fn extract_json_object(completion: &str) -> Option<String> {
    let mut text = completion.trim();
    if let Some(start) = text.find("```") {
        let after = &text[start + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
        let body = &after[body_start..];
        text = body.find("```").map(|end| &body[..end]).unwrap_or(body).trim();
    }
    let open = text.find('{')?;
    let close = text.rfind('}')?;
    (close > open).then(|| text[open..=close].to_string())
}

/// Parses a simulator completion into an envelope. A strict envelope is
/// preferred; an object whose `response` is structured JSON is accepted with
/// that value re-serialized as text.
pub fn parse_completion(completion: &str) -> Option<ApiResponse> {
    let candidate = extract_json_object(completion)?;
    if let Ok(env) = parse_wire_response(&candidate) {
        return Some(env);
    }
    let Value::Object(mut map) = serde_json::from_str::<Value>(&candidate).ok()? else {
        return None;
    };
    let response = map.remove("response")?;
    let as_text = |v: Value| match v {
        Value::String(s) => s,
        Value::Null => String::new(),
        other => other.to_string(),
    };
    Some(ApiResponse::new(
        as_text(map.remove("error").unwrap_or(Value::Null)),
        as_text(response),
    ))
}

pub struct Simulator {
    bridge: Arc<LlmBridge>,
    config: SimulatorConfig,
    prompts: Arc<PromptSet>,
}

impl Simulator {
    pub fn new(bridge: Arc<LlmBridge>, config: SimulatorConfig) -> Self {
        Self {
            bridge,
            config,
            prompts: Arc::new(PromptSet::default()),
        }
    }

    pub fn with_prompts(mut self, prompts: Arc<PromptSet>) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn config(&self) -> &SimulatorConfig {
        &self.config
    }

    pub fn bridge(&self) -> &Arc<LlmBridge> {
        &self.bridge
    }

    /// Simulates one call. Unparseable completions are retried with the same
    /// prompt; if every attempt fails the dead-API envelope is returned.
    pub async fn simulate(
        &self,
        request: &CallRequest,
        doc: &ApiDocumentation,
        cache: &Cache,
    ) -> Result<ApiResponse, SimulatorError> {
        if doc.id != request.id {
            return Err(SimulatorError::DocumentationMismatch {
                doc: doc.id.to_string(),
                request: request.id.to_string(),
            });
        }
        let examples = cache.examples_for(&request.id, self.config.max_examples);
        let (system, user) = build_prompt(&self.prompts, doc, &examples, request);
        for attempt in 0..=self.config.parse_retry_budget {
            let completion = self
                .bridge
                .complete(&system, &user, &self.config.model_name, self.config.temperature)
                .await?;
            if let Some(envelope) = parse_completion(&completion) {
                return Ok(envelope);
            }
            debug!(api = %request.id, attempt, "unparseable simulator completion");
        }
        Ok(ApiResponse::unavailable())
    }
}
