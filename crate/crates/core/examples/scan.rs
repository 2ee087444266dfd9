//! Probes every documented API once and tabulates the status mix. A stub
//! model writes the probe arguments and a stub upstream plays the hub.

use std::sync::Arc;

use async_trait::async_trait;
use toolgate::classifier::StatusScanner;
use toolgate::llm::stub::fn_bridge;
use toolgate::llm::ChatModel;
use toolgate::model::{ApiDocumentation, ApiIdentifier, ApiResponse, CallRequest};
use toolgate::upstream::Upstream;

struct Hub;

#[async_trait]
impl Upstream for Hub {
    async fn call(&self, request: &CallRequest) -> ApiResponse {
        match request.id.api_name.as_str() {
            "search" | "lookup" => ApiResponse::ok("[{\"id\": \"a\"}]"),
            "legacy" => ApiResponse::ok("Endpoint not found"),
            "premium" => ApiResponse::ok("You are not subscribed. Unauthorized"),
            "renamed" => ApiResponse::ok("Missing required parameter 'term'"),
            _ => ApiResponse::new("HTTP request failed", "timed out"),
        }
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let docs: Vec<ApiDocumentation> = ["search", "lookup", "legacy", "premium", "renamed", "flaky"]
        .iter()
        .map(|api| ApiDocumentation {
            id: ApiIdentifier::new("Demo", "Catalog", *api).unwrap(),
            description: format!("{api} the catalog"),
            tool_description: "Catalog service".into(),
            parameters: vec![],
        })
        .collect();
    let writer = ChatModel::new(fn_bridge(|_| Ok(r#"{"term": "lamp"}"#.into())), "call-writer", 0.0);
    let report = StatusScanner::new(writer, Some(Arc::new(Hub))).scan(&docs).await?;
    println!("{}", report.render_table());
    Ok(())
}
