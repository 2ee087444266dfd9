//! Serves a gateway over HTTP on an ephemeral port and calls it with the
//! client, including a fault plan install.

use std::sync::Arc;

use async_trait::async_trait;
use toolgate::cache::Cache;
use toolgate::docs::DocIndex;
use toolgate::gateway::{router, FaultMode, FaultRequest, Gateway, GatewayClient, ToolService};
use toolgate::llm::stub::scripted_bridge;
use toolgate::model::{ApiDocumentation, ApiIdentifier, ApiResponse, CallRequest};
use toolgate::simulator::{Simulator, SimulatorConfig};
use toolgate::upstream::Upstream;

struct Echo;

#[async_trait]
impl Upstream for Echo {
    async fn call(&self, request: &CallRequest) -> ApiResponse {
        ApiResponse::ok(format!("echo {}", request.tool_input))
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let id = ApiIdentifier::new("Text", "Echo", "say")?;
    let docs = DocIndex::from_docs([ApiDocumentation {
        id: id.clone(),
        description: "Echoes input".into(),
        tool_description: String::new(),
        parameters: vec![],
    }]);
    let sim = Simulator::new(scripted_bridge([r#"{"error": "", "response": "unused"}"#]), SimulatorConfig::default());
    let gw = Arc::new(Gateway::new(Arc::new(Cache::in_memory()), Arc::new(Echo), Arc::new(sim), Arc::new(docs)));

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(async move { axum::serve(listener, router(gw)).await });

    let client = GatewayClient::new(format!("http://{addr}"));
    println!("health: {}", client.health().await?);
    let call = CallRequest::new(id, r#"{"text": "hello"}"#);
    println!("call: {:?}", client.call(&call).await?);
    let plan = client
        .install_fault(&FaultRequest { proportion: 1.0, seed: 1, mode: FaultMode::HardFail, universe: None })
        .await?;
    println!("fault installed on {} tool(s)", plan.sampled_tools.len());
    println!("call under fault: {:?}", client.call(&call).await?);
    client.clear_fault().await?;
    Ok(())
}
