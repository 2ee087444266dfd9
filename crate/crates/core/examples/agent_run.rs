//! Runs a scripted chain-of-thought agent over one task against an
//! in-process gateway and writes the answer file.

use std::sync::Arc;

use async_trait::async_trait;
use toolgate::agent::{run_experiment, ChainAgent, ExperimentSpec};
use toolgate::cache::Cache;
use toolgate::docs::DocIndex;
use toolgate::evaluation::{Task, TaskGroup};
use toolgate::gateway::Gateway;
use toolgate::llm::stub::scripted_bridge;
use toolgate::llm::ChatModel;
use toolgate::model::{ApiDocumentation, ApiIdentifier, ApiResponse, CallRequest};
use toolgate::simulator::{Simulator, SimulatorConfig};
use toolgate::upstream::Upstream;

struct Offline;

#[async_trait]
impl Upstream for Offline {
    async fn call(&self, _: &CallRequest) -> ApiResponse {
        ApiResponse::new("HTTP request failed", "connection refused")
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let id = ApiIdentifier::new("Weather", "Meteo", "now")?;
    let docs = DocIndex::from_docs([ApiDocumentation {
        id: id.clone(),
        description: "Current conditions".into(),
        tool_description: "Weather data".into(),
        parameters: vec![],
    }]);
    let simulator = Simulator::new(
        scripted_bridge([r#"{"error": "", "response": "{\"temp_c\": 4}"}"#]),
        SimulatorConfig::default(),
    );
    let gateway = Gateway::new(Arc::new(Cache::in_memory()), Arc::new(Offline), Arc::new(simulator), Arc::new(docs.clone()));

    let agent_model = scripted_bridge([
        r#"{"action": "call", "category": "Weather", "tool_name": "Meteo", "api_name": "now", "tool_input": {"city": "Oslo"}}"#,
        r#"{"action": "finish", "final_answer": "It is 4 degrees in Oslo."}"#,
    ]);
    let agent = ChainAgent::new(ChatModel::new(agent_model, "agent", 0.0), 6);
    let task = Task {
        task_id: "w1".into(),
        query: "How cold is it in Oslo?".into(),
        available_tools: vec![id],
        group: TaskGroup::I1Instruction,
    };
    let out = tempfile::tempdir()?;
    let spec = ExperimentSpec {
        method_label: "cot".into(),
        repeats: 1,
        output_dir: out.path().to_path_buf(),
        workers: 1,
    };
    let answers = run_experiment(&spec, &[task], &docs, &agent, &gateway).await?;
    println!("final answer: {}", answers[0][0].final_answer);
    println!("solution path: {}", answers[0][0].solution_path);
    println!("written: {}", std::fs::read_dir(out.path())?.count());
    Ok(())
}
