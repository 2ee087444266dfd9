mod common;

use std::sync::Arc;

use common::{dead_upstream, doc, gateway, id, spawn, FnUpstream};
use toolgate::cache::{Cache, CacheSource};
use toolgate::gateway::{router, FaultMode, FaultRequest, GatewayClient, Tier, ToolService};
use toolgate::model::{ApiResponse, CallRequest, ToolRef};

fn weather() -> CallRequest {
    CallRequest::new(id("Weather", "Meteo", "now"), r#"{"city":"Oslo","units":"c"}"#)
}

#[tokio::test]
async fn real_success_is_persisted_then_served_from_cache() {
    let up = Arc::new(FnUpstream(|_: &CallRequest| ApiResponse::ok("sunny")));
    let gw = gateway(Arc::new(Cache::in_memory()), up, vec![doc(weather().id)]);
    let (r, t) = gw.route(&weather()).await.unwrap();
    assert_eq!((r.response.as_str(), t.tier_served, t.persisted), ("sunny", Tier::Real, true));
    // same call with reordered arguments is the same key
    let reordered = CallRequest::new(weather().id, r#"{"units":"c","city":"Oslo"}"#);
    let (_, t) = gw.route(&reordered).await.unwrap();
    assert_eq!(t.tier_served, Tier::Cache);
    assert_eq!(t.attempted, vec![Tier::Cache]);
}

#[tokio::test]
async fn dead_real_api_falls_back_to_simulator() {
    let gw = gateway(Arc::new(Cache::in_memory()), dead_upstream(), vec![doc(weather().id)]);
    let (r, t) = gw.route(&weather()).await.unwrap();
    assert_eq!(t.tier_served, Tier::Simulator);
    assert_eq!(t.attempted, vec![Tier::Cache, Tier::Real, Tier::Simulator]);
    assert!(r.response.starts_with("simulated"));
    assert!(t.persisted);
}

#[tokio::test]
async fn undocumented_api_cannot_be_simulated() {
    let gw = gateway(Arc::new(Cache::in_memory()), dead_upstream(), vec![]);
    assert!(gw.route(&weather()).await.is_err());
}

#[tokio::test]
async fn cache_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    {
        let gw = gateway(Arc::new(Cache::open(dir.path()).unwrap()), dead_upstream(), vec![doc(weather().id)]);
        gw.route(&weather()).await.unwrap();
    }
    let reopened = Arc::new(Cache::open(dir.path()).unwrap());
    assert_eq!(reopened.len(), 1);
    let gw = gateway(reopened, dead_upstream(), vec![]);
    let (_, t) = gw.route(&weather()).await.unwrap();
    assert_eq!(t.tier_served, Tier::Cache);
}

#[tokio::test]
async fn http_surface_round_trip() {
    let cache = Arc::new(Cache::in_memory());
    cache
        .store(&weather(), &ApiResponse::ok("from train set"), CacheSource::TrainSet)
        .unwrap();
    let gw = Arc::new(gateway(cache, dead_upstream(), vec![doc(weather().id)]));
    let addr = spawn(router(gw.clone())).await;
    let client = GatewayClient::new(format!("http://{addr}"));

    assert_eq!(client.health().await.unwrap()["status"], "ok");
    assert_eq!(client.call(&weather()).await.unwrap(), ApiResponse::ok("from train set"));

    let http = reqwest::Client::new();
    let traced: serde_json::Value = http
        .post(format!("http://{addr}/call?debug=true"))
        .json(&weather())
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(traced["trace"]["tier_served"], "Cache");

    let plan = client
        .install_fault(&FaultRequest {
            proportion: 1.0,
            seed: 3,
            mode: FaultMode::HardFail,
            universe: None,
        })
        .await
        .unwrap();
    assert!(plan.is_down(&ToolRef::new("Weather", "Meteo")));
    let down = client.call(&weather()).await.unwrap();
    assert_eq!(down, ApiResponse::unavailable());
    client.clear_fault().await.unwrap();
    assert!(gw.fault().is_none());

    let stats: serde_json::Value = http.get(format!("http://{addr}/stats")).send().await.unwrap().json().await.unwrap();
    assert_eq!(stats["total"], 1);
}

#[tokio::test]
async fn bad_requests_get_error_bodies() {
    let gw = Arc::new(gateway(Arc::new(Cache::in_memory()), dead_upstream(), vec![]));
    let addr = spawn(router(gw)).await;
    let http = reqwest::Client::new();
    let resp = http
        .post(format!("http://{addr}/call"))
        .json(&serde_json::json!({"category": "A", "tool_name": "B", "api_name": "c", "tool_input": "{not json"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);
    let body: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(body["error_class"], "KeyDerivationError");

    let resp = http
        .post(format!("http://{addr}/fault"))
        .json(&serde_json::json!({"proportion": 2.0, "seed": 1, "mode": "HardFail"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);

    // no docs for the API, so the simulator tier refuses
    let resp = http
        .post(format!("http://{addr}/call"))
        .json(&weather())
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 502);
}

#[tokio::test]
async fn unreachable_gateway_client() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let client = GatewayClient::new(format!("http://{addr}"));
    let err = client.call(&weather()).await.unwrap_err();
    assert_eq!(err.class(), "GatewayUnreachable");
}
