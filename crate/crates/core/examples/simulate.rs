//! Builds a simulator prompt with few-shot examples from the cache and parses
//! a chatty completion into an envelope. The language model is a stub, so
//! this runs offline.

use toolgate::cache::{Cache, CacheSource};
use toolgate::llm::stub::scripted_bridge;
use toolgate::model::{ApiDocumentation, ApiIdentifier, ApiParameter, ApiResponse, CallRequest};
use toolgate::simulator::{Simulator, SimulatorConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let id = ApiIdentifier::new("Weather", "Meteo", "now")?;
    let doc = ApiDocumentation {
        id: id.clone(),
        description: "Current conditions for a city".into(),
        tool_description: "Weather data".into(),
        parameters: vec![ApiParameter {
            name: "city".into(),
            type_label: "STRING".into(),
            description: "City name".into(),
            required: true,
        }],
    };
    let cache = Cache::in_memory();
    for (city, body) in [("Oslo", "3C, snow"), ("Lima", "19C, cloudy")] {
        let req = CallRequest::new(id.clone(), format!(r#"{{"city": "{city}"}}"#));
        cache.store(&req, &ApiResponse::ok(body), CacheSource::TrainSet)?;
    }

    let bridge = scripted_bridge([
        "I think the API would say it is warm.",
        "Sure! ```json\n{\"error\": \"\", \"response\": \"27C, clear\"}\n```",
    ]);
    let sim = Simulator::new(bridge.clone(), SimulatorConfig::default());
    let req = CallRequest::new(id, r#"{"city": "Cairo"}"#);
    let envelope = sim.simulate(&req, &doc, &cache).await?;

    let log = bridge.audit_log();
    println!("--- prompt ---\n{}\n--- {} completions requested ---", log[0].user, log.len());
    println!("envelope: {}", envelope.to_wire());
    Ok(())
}
