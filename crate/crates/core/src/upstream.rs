//! Client for the real tool-API hub. Every network outcome comes back as a
//! wire envelope whose text lands in the right classifier bucket; only
//! configuration problems are errors.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use url::Url;

use crate::model::{parse_wire_response, ApiResponse, CallRequest};

/// Header (and body field) carrying the hub's shared service key.
pub const SERVICE_KEY_HEADER: &str = "toolbench_key";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UpstreamError {
    #[error("upstream configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpstreamConfig {
    pub base_url: Url,
    pub service_key: String,
    pub timeout: Duration,
    pub retry_budget: u32,
    pub max_in_flight: usize,
}

impl UpstreamConfig {
    pub fn new(base_url: &str, service_key: impl Into<String>) -> Result<Self, UpstreamError> {
        let base_url =
            Url::parse(base_url).map_err(|e| UpstreamError::Config(format!("base_url: {e}")))?;
        let config = Self {
            base_url,
            service_key: service_key.into(),
            timeout: Duration::from_secs(15),
            retry_budget: 1,
            max_in_flight: 16,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), UpstreamError> {
        if self.service_key.trim().is_empty() {
            return Err(UpstreamError::Config("service key is empty".into()));
        }
        if self.timeout.is_zero() {
            return Err(UpstreamError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[async_trait]
pub trait Upstream: Send + Sync {
    async fn call(&self, request: &CallRequest) -> ApiResponse;
}

pub struct HttpUpstream {
    config: UpstreamConfig,
    client: reqwest::Client,
    in_flight: Arc<Semaphore>,
}

#[derive(Serialize)]
struct HubPayload<'a> {
    category: &'a str,
    tool_name: &'a str,
    api_name: &'a str,
    tool_input: &'a str,
    strip: &'a str,
    toolbench_key: &'a str,
}

enum Attempt {
    Done(ApiResponse),
    Transport(String),
}

impl HttpUpstream {
    pub fn new(config: UpstreamConfig) -> Result<Self, UpstreamError> {
        config.validate()?;
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| UpstreamError::Config(e.to_string()))?;
        Ok(Self {
            in_flight: Arc::new(Semaphore::new(config.max_in_flight.max(1))),
            config,
            client,
        })
    }

    async fn attempt(&self, request: &CallRequest) -> Attempt {
        let payload = HubPayload {
            category: &request.id.category,
            tool_name: &request.id.tool_name,
            api_name: &request.id.api_name,
            tool_input: &request.tool_input,
            strip: request.strip.as_deref().unwrap_or(""),
            toolbench_key: &self.config.service_key,
        };
        let sent = self
            .client
            .post(self.config.base_url.clone())
            .header(SERVICE_KEY_HEADER, &self.config.service_key)
            .json(&payload)
            .send()
            .await;
        let resp = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Transport(describe_transport(&e)),
        };
        let status = resp.status();
        let body = match resp.text().await {
            Ok(b) => b,
            Err(e) => return Attempt::Transport(describe_transport(&e)),
        };
        Attempt::Done(normalize(status.as_u16(), status.canonical_reason(), body))
    }
}

fn describe_transport(e: &reqwest::Error) -> String {
    if e.is_timeout() {
        format!("connection timed out: {e}")
    } else {
        format!("connection error: {e}")
    }
}

/// Maps an HTTP outcome onto the envelope. Status codes are embedded so the
/// classifier sees them: 401/403/404 as bare markers in the body, 429 as a
/// rate-limit message, and any other failure as an HTTP error.
fn normalize(code: u16, reason: Option<&str>, body: String) -> ApiResponse {
    let reason = reason.unwrap_or("");
    match code {
        200..=299 => parse_wire_response(&body).unwrap_or_else(|_| ApiResponse::ok(body)),
        401 | 403 | 404 => ApiResponse::ok(format!("{code} {reason}: {body}")),
        429 => ApiResponse::ok(format!("rate limit exceeded ({code} {reason}): {body}")),
        _ => ApiResponse::new(format!("HTTP error {code} {reason}"), body),
    }
}

#[async_trait]
impl Upstream for HttpUpstream {
    async fn call(&self, request: &CallRequest) -> ApiResponse {
        let _permit = self.in_flight.acquire().await.expect("semaphore never closed");
        let mut last = String::new();
        for attempt in 0..=self.config.retry_budget {
            if attempt > 0 {
                tokio::time::sleep(Duration::from_millis(50)).await;
            }
            match self.attempt(request).await {
                Attempt::Done(envelope) => return envelope,
                Attempt::Transport(detail) => last = detail,
            }
        }
        ApiResponse::new("HTTP request failed", last)
    }
}

/// Upstream that answers every call with the unavailable envelope, for
/// running fully offline.
pub struct OfflineUpstream;

#[async_trait]
impl Upstream for OfflineUpstream {
    async fn call(&self, _request: &CallRequest) -> ApiResponse {
        ApiResponse::new("HTTP request failed", "connection error: upstream disabled")
    }
}
