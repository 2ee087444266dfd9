//! Routes calls through cache, real API and simulator and prints which tier
//! served each one.

use std::sync::Arc;

use async_trait::async_trait;
use toolgate::cache::Cache;
use toolgate::docs::DocIndex;
use toolgate::gateway::Gateway;
use toolgate::llm::stub::fn_bridge;
use toolgate::model::{ApiDocumentation, ApiIdentifier, ApiResponse, CallRequest};
use toolgate::simulator::{Simulator, SimulatorConfig};
use toolgate::upstream::Upstream;

/// Only the `stable` tool answers; everything else is offline.
struct PartlyDown;

#[async_trait]
impl Upstream for PartlyDown {
    async fn call(&self, request: &CallRequest) -> ApiResponse {
        if request.id.tool_name == "stable" {
            ApiResponse::ok(format!("real answer to {}", request.tool_input))
        } else {
            ApiResponse::new("HTTP request failed", "connection refused")
        }
    }
}

fn doc(id: ApiIdentifier) -> ApiDocumentation {
    ApiDocumentation {
        description: format!("{} endpoint", id.api_name),
        tool_description: String::new(),
        parameters: vec![],
        id,
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stable = ApiIdentifier::new("Demo", "stable", "get")?;
    let flaky = ApiIdentifier::new("Demo", "flaky", "get")?;
    let sim = Simulator::new(
        fn_bridge(|_| Ok(r#"{"error": "", "response": "simulated answer"}"#.into())),
        SimulatorConfig::default(),
    );
    let gw = Gateway::new(
        Arc::new(Cache::in_memory()),
        Arc::new(PartlyDown),
        Arc::new(sim),
        Arc::new(DocIndex::from_docs([doc(stable.clone()), doc(flaky.clone())])),
    );

    for id in [&stable, &flaky, &stable, &flaky] {
        let req = CallRequest::new(id.clone(), r#"{"q": 1}"#);
        let (resp, trace) = gw.route(&req).await?;
        println!(
            "{:<16} served by {:<9?} attempted {:?} persisted={} -> {}",
            id.to_string(),
            trace.tier_served,
            trace.attempted,
            trace.persisted,
            resp.response
        );
    }
    Ok(())
}
