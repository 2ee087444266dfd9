mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{doc, id, mock_hub, spawn};
use toolgate::classifier::{classify, ApiStatus, StatusScanner};
use toolgate::llm::stub::scripted_bridge;
use toolgate::llm::ChatModel;
use toolgate::model::{ApiResponse, CallRequest};
use toolgate::upstream::{HttpUpstream, Upstream, UpstreamConfig};

fn client(base: &str, timeout: Duration) -> HttpUpstream {
    let mut cfg = UpstreamConfig::new(base, "test-key").unwrap();
    cfg.timeout = timeout;
    cfg.retry_budget = 0;
    HttpUpstream::new(cfg).unwrap()
}

async fn hub_client(timeout: Duration) -> HttpUpstream {
    let addr = spawn(mock_hub()).await;
    client(&format!("http://{addr}/"), timeout)
}

fn call(api: &str) -> CallRequest {
    CallRequest::new(id("Data", "Hub", api), r#"{"q":"x"}"#)
}

#[tokio::test]
async fn success_envelope_passes_through() {
    let up = hub_client(Duration::from_secs(5)).await;
    let r = up.call(&call("ok")).await;
    assert_eq!(r, ApiResponse::ok(r#"result for {"q":"x"}"#));
    assert_eq!(classify(&r), ApiStatus::Success);
}

#[tokio::test]
async fn bare_json_body_is_wrapped() {
    let up = hub_client(Duration::from_secs(5)).await;
    let r = up.call(&call("bare")).await;
    assert_eq!(r.error, "");
    assert!(r.response.contains("temperature"));
}

#[tokio::test]
async fn http_statuses_classify() {
    let up = hub_client(Duration::from_secs(5)).await;
    assert_eq!(classify(&up.call(&call("secret")).await), ApiStatus::NotAuthorised);
    assert_eq!(classify(&up.call(&call("missing")).await), ApiStatus::NotFound);
    assert_eq!(classify(&up.call(&call("broken")).await), ApiStatus::NotConnected);
}

#[tokio::test]
async fn timeout_becomes_not_connected() {
    let up = hub_client(Duration::from_millis(200)).await;
    let r = up.call(&call("slow")).await;
    assert!(r.response.contains("timed out"), "{r:?}");
    assert_eq!(classify(&r), ApiStatus::NotConnected);
}

#[tokio::test]
async fn refused_connection_becomes_not_connected() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let up = client(&format!("http://{addr}/"), Duration::from_secs(2));
    assert_eq!(classify(&up.call(&call("ok")).await), ApiStatus::NotConnected);
}

#[tokio::test]
async fn scan_three_mock_apis() {
    let addr = spawn(mock_hub()).await;
    let up: Arc<dyn Upstream> = Arc::new(client(&format!("http://{addr}/"), Duration::from_millis(300)));
    let docs = vec![doc(id("Data", "Hub", "ok")), doc(id("Data", "Hub", "missing")), doc(id("Data", "Hub", "slow"))];
    let writer = ChatModel::new(scripted_bridge([r#"{"q": "probe"}"#; 3]), "writer", 0.0);
    let report = StatusScanner::new(writer, Some(up)).scan(&docs).await.unwrap();
    assert_eq!(report.total, 3);
    assert_eq!(report.count(ApiStatus::Success), 1);
    assert_eq!(report.count(ApiStatus::NotFound), 1);
    assert_eq!(report.count(ApiStatus::NotConnected), 1);
}

#[tokio::test]
async fn scan_unreachable_upstream() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let up: Arc<dyn Upstream> = Arc::new(client(&format!("http://{addr}/"), Duration::from_secs(1)));
    let docs = vec![doc(id("A", "B", "one")), doc(id("A", "B", "two"))];
    let writer = ChatModel::new(scripted_bridge(["{}", "{}"]), "writer", 0.0);
    let report = StatusScanner::new(writer, Some(up)).scan(&docs).await.unwrap();
    assert_eq!(report.count(ApiStatus::NotConnected), 2);
}

#[tokio::test]
async fn scan_without_upstream_is_a_config_error() {
    let writer = ChatModel::new(scripted_bridge(["{}"]), "writer", 0.0);
    assert!(StatusScanner::new(writer, None).scan(&[doc(id("A", "B", "c"))]).await.is_err());
}
