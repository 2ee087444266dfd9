//! Takes a seeded share of tools offline and compares the two fault modes:
//! hard failure versus falling back to cache and simulator.

use std::sync::Arc;

use async_trait::async_trait;
use toolgate::cache::Cache;
use toolgate::docs::DocIndex;
use toolgate::gateway::{make_fault_plan, FaultMode, Gateway};
use toolgate::llm::stub::fn_bridge;
use toolgate::model::{ApiDocumentation, ApiIdentifier, ApiResponse, CallRequest};
use toolgate::simulator::{Simulator, SimulatorConfig};
use toolgate::upstream::Upstream;

struct AlwaysUp;

#[async_trait]
impl Upstream for AlwaysUp {
    async fn call(&self, request: &CallRequest) -> ApiResponse {
        ApiResponse::ok(format!("live data from {}", request.id.tool_name))
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let docs: Vec<ApiDocumentation> = (0..10)
        .map(|i| ApiDocumentation {
            id: ApiIdentifier::new("Demo", format!("tool{i}"), "get").unwrap(),
            description: "demo".into(),
            tool_description: String::new(),
            parameters: vec![],
        })
        .collect();
    let index = Arc::new(DocIndex::from_docs(docs.clone()));

    for mode in [FaultMode::HardFail, FaultMode::VirtualFallback] {
        let sim = Simulator::new(
            fn_bridge(|_| Ok(r#"{"error": "", "response": "simulated data"}"#.into())),
            SimulatorConfig::default(),
        );
        let gw = Gateway::new(Arc::new(Cache::in_memory()), Arc::new(AlwaysUp), Arc::new(sim), index.clone());
        let plan = make_fault_plan(&index.tools(), 0.3, 42, mode)?;
        println!("{mode:?}: down = {:?}", plan.sampled_tools.iter().map(|t| t.to_string()).collect::<Vec<_>>());
        gw.install_fault(plan);
        for d in &docs {
            let (resp, trace) = gw.route(&CallRequest::new(d.id.clone(), "{}")).await?;
            println!("  {:<14} {:<16?} {}", d.id.tool_name, trace.tier_served, resp.response);
        }
    }
    Ok(())
}
