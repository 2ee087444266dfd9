#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::Json;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use serde_json::Value;

use toolgate::cache::Cache;
use toolgate::docs::DocIndex;
use toolgate::gateway::Gateway;
use toolgate::llm::stub::fn_bridge;
use toolgate::model::{ApiDocumentation, ApiIdentifier, ApiResponse, CallRequest};
use toolgate::simulator::{Simulator, SimulatorConfig};
use toolgate::upstream::Upstream;

pub fn id(category: &str, tool: &str, api: &str) -> ApiIdentifier {
    ApiIdentifier::new(category, tool, api).unwrap()
}

pub fn doc(id: ApiIdentifier) -> ApiDocumentation {
    ApiDocumentation {
        description: format!("{} endpoint", id.api_name),
        tool_description: format!("{} tool", id.tool_name),
        parameters: vec![],
        id,
    }
}

/// Serves `router` on an ephemeral local port.
pub async fn spawn(router: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router).await.unwrap();
    });
    addr
}

/// Mock tool hub. Behaviour is chosen by `api_name`:
/// `ok` → success envelope, `missing` → 404, `secret` → 401, `slow` → sleeps
/// past any test timeout, `broken` → 500, `bare` → non-envelope JSON.
pub fn mock_hub() -> Router {
    async fn handle(Json(body): Json<Value>) -> Response {
        let api = body["api_name"].as_str().unwrap_or_default().to_string();
        match api.as_str() {
            "ok" => Json(serde_json::json!({
                "error": "",
                "response": format!("result for {}", body["tool_input"].as_str().unwrap_or("")),
            }))
            .into_response(),
            "missing" => (StatusCode::NOT_FOUND, "no such endpoint").into_response(),
            "secret" => (StatusCode::UNAUTHORIZED, "bad key").into_response(),
            "slow" => {
                tokio::time::sleep(Duration::from_secs(30)).await;
                "late".into_response()
            }
            "broken" => (StatusCode::INTERNAL_SERVER_ERROR, "boom").into_response(),
            "bare" => Json(serde_json::json!({"temperature": 21})).into_response(),
            _ => (StatusCode::BAD_REQUEST, "unknown api").into_response(),
        }
    }
    Router::new().route("/", post(handle))
}

/// Upstream whose answer is a pure function of the request.
pub struct FnUpstream<F>(pub F);

#[async_trait::async_trait]
impl<F> Upstream for FnUpstream<F>
where
    F: Fn(&CallRequest) -> ApiResponse + Send + Sync,
{
    async fn call(&self, request: &CallRequest) -> ApiResponse {
        (self.0)(request)
    }
}

pub fn dead_upstream() -> Arc<dyn Upstream> {
    Arc::new(FnUpstream(|_: &CallRequest| {
        ApiResponse::new("HTTP request failed", "connection error: refused")
    }))
}

/// Simulator whose completion echoes the requested API and arguments, so
/// results are deterministic and distinguishable.
pub fn echo_simulator() -> Arc<Simulator> {
    let bridge = fn_bridge(|req| {
        let input = req.user.rsplit("API input:\n").next().unwrap_or("").trim().to_string();
        Ok(serde_json::json!({"error": "", "response": format!("simulated {input}")}).to_string())
    });
    Arc::new(Simulator::new(bridge, SimulatorConfig::default()))
}

pub fn gateway(cache: Arc<Cache>, upstream: Arc<dyn Upstream>, docs: Vec<ApiDocumentation>) -> Gateway {
    Gateway::new(cache, upstream, echo_simulator(), Arc::new(DocIndex::from_docs(docs)))
}
