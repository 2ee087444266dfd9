//! The three-tier virtual API server (cache, then real upstream, then
//! simulator) with seeded, tool-granular fault injection, plus its HTTP
//! surface and a matching client.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::cache::{Cache, CacheError, CacheSource, StoreOutcome};
use crate::classifier::{classify, ApiStatus};
use crate::docs::DocIndex;
use crate::model::{ApiResponse, CallRequest, ToolRef};
use crate::simulator::{Simulator, SimulatorError};
use crate::upstream::Upstream;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("invalid fault plan: {0}")]
    InvalidFaultPlan(String),
    #[error("gateway unreachable: {0}")]
    Unreachable(String),
    #[error("gateway returned {status}: {body}")]
    Remote { status: u16, body: String },
}

impl GatewayError {
    pub fn class(&self) -> &'static str {
        match self {
            GatewayError::Simulator(_) => "SimulatorUnavailable",
            GatewayError::Cache(CacheError::Key(_)) => "KeyDerivationError",
            GatewayError::Cache(_) => "CacheIoError",
            GatewayError::InvalidFaultPlan(_) => "InvalidFaultPlan",
            GatewayError::Unreachable(_) => "GatewayUnreachable",
            GatewayError::Remote { .. } => "GatewayError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultMode {
    /// Downed tools answer with the dead-API envelope.
    HardFail,
    /// Downed tools skip the real tier and go to the simulator.
    VirtualFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub proportion: f64,
    pub seed: u64,
    pub mode: FaultMode,
    pub sampled_tools: BTreeSet<ToolRef>,
}

impl FaultPlan {
    pub fn is_down(&self, tool: &ToolRef) -> bool {
        self.sampled_tools.contains(tool)
    }
}

/// Number of tools a proportion selects: `floor(proportion * n)`, with a
/// small tolerance so products like `0.29 * 100` are not rounded down a whole
/// unit by float error.
pub fn sample_size(proportion: f64, n: usize) -> usize {
    ((proportion * n as f64) + 1e-9).floor() as usize
}

/// Samples `floor(proportion * |universe|)` tools uniformly without
/// replacement. Deterministic in (universe order, proportion, seed).
pub fn make_fault_plan(
    universe: &[ToolRef],
    proportion: f64,
    seed: u64,
    mode: FaultMode,
) -> Result<FaultPlan, GatewayError> {
    if !(0.0..=1.0).contains(&proportion) {
        return Err(GatewayError::InvalidFaultPlan(format!(
            "proportion {proportion} outside [0, 1]"
        )));
    }
    if universe.is_empty() && proportion > 0.0 {
        return Err(GatewayError::InvalidFaultPlan(
            "empty tool universe with non-zero proportion".into(),
        ));
    }
    let k = sample_size(proportion, universe.len()).min(universe.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled_tools = sample(&mut rng, universe.len(), k)
        .into_iter()
        .map(|i| universe[i].clone())
        .collect();
    Ok(FaultPlan {
        proportion,
        seed,
        mode,
        sampled_tools,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    Cache,
    Real,
    Simulator,
    InjectedFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteTrace {
    pub tier_served: Tier,
    pub persisted: bool,
    pub latency: Duration,
    /// Tiers consulted, in order.
    pub attempted: Vec<Tier>,
}

#[derive(Debug, Clone, Default)]
pub struct GatewayOptions {
    /// Downed tools in VirtualFallback mode also skip the cache tier.
    pub strict_fault: bool,
}

pub struct Gateway {
    cache: Arc<Cache>,
    upstream: Arc<dyn Upstream>,
    simulator: Arc<Simulator>,
    docs: Arc<DocIndex>,
    fault: RwLock<Option<Arc<FaultPlan>>>,
    options: GatewayOptions,
}

impl Gateway {
    pub fn new(
        cache: Arc<Cache>,
        upstream: Arc<dyn Upstream>,
        simulator: Arc<Simulator>,
        docs: Arc<DocIndex>,
    ) -> Self {
        Self {
            cache,
            upstream,
            simulator,
            docs,
            fault: RwLock::new(None),
            options: GatewayOptions::default(),
        }
    }

    pub fn with_options(mut self, options: GatewayOptions) -> Self {
        self.options = options;
        self
    }

    pub fn cache(&self) -> &Arc<Cache> {
        &self.cache
    }

    pub fn docs(&self) -> &Arc<DocIndex> {
        &self.docs
    }

    pub fn install_fault(&self, plan: FaultPlan) {
        *self.fault.write() = Some(Arc::new(plan));
    }

    pub fn clear_fault(&self) {
        *self.fault.write() = None;
    }

    pub fn fault(&self) -> Option<Arc<FaultPlan>> {
        self.fault.read().clone()
    }

    /// Routes with the currently installed fault plan, snapshotted once so a
    /// concurrent swap never affects a call mid-flight.
    pub async fn route(&self, request: &CallRequest) -> Result<(ApiResponse, RouteTrace), GatewayError> {
        let plan = self.fault();
        self.route_with(request, plan.as_deref()).await
    }

    pub async fn route_with(
        &self,
        request: &CallRequest,
        fault: Option<&FaultPlan>,
    ) -> Result<(ApiResponse, RouteTrace), GatewayError> {
        let started = Instant::now();
        let mut attempted = Vec::with_capacity(3);
        let finish = |response: ApiResponse, tier: Tier, persisted: bool, attempted: Vec<Tier>| {
            Ok((
                response,
                RouteTrace {
                    tier_served: tier,
                    persisted,
                    latency: started.elapsed(),
                    attempted,
                },
            ))
        };

        let tool = request.id.tool();
        let down_mode = fault.filter(|p| p.is_down(&tool)).map(|p| p.mode);
        if down_mode == Some(FaultMode::HardFail) {
            attempted.push(Tier::InjectedFailure);
            return finish(ApiResponse::unavailable(), Tier::InjectedFailure, false, attempted);
        }
        let downed = down_mode == Some(FaultMode::VirtualFallback);

        if !(downed && self.options.strict_fault) {
            attempted.push(Tier::Cache);
            if let Some(hit) = self.cache.lookup(request)? {
                return finish(hit, Tier::Cache, false, attempted);
            }
        }

        if !downed {
            attempted.push(Tier::Real);
            let real = self.upstream.call(request).await;
            let status = classify(&real);
            if status == ApiStatus::Success {
                return match self.cache.store(request, &real, CacheSource::NewExperiment)? {
                    StoreOutcome::AlreadyPresent(first) => finish(first, Tier::Cache, false, attempted),
                    outcome => finish(real, Tier::Real, outcome.stored(), attempted),
                };
            }
            debug!(api = %request.id, ?status, "real api unavailable, simulating");
        }

        attempted.push(Tier::Simulator);
        let doc = self.docs.get(&request.id).ok_or_else(|| {
            SimulatorError::Unavailable(format!("no documentation for {}", request.id))
        })?;
        let simulated = self.simulator.simulate(request, doc, &self.cache).await?;
        match self.cache.store(request, &simulated, CacheSource::NewExperiment)? {
            StoreOutcome::AlreadyPresent(first) => finish(first, Tier::Cache, false, attempted),
            outcome => finish(simulated, Tier::Simulator, outcome.stored(), attempted),
        }
    }
}

/// Anything that can execute a tool call: an in-process [`Gateway`] or a
/// remote one through [`GatewayClient`].
#[async_trait]
pub trait ToolService: Send + Sync {
    async fn call(&self, request: &CallRequest) -> Result<ApiResponse, GatewayError>;
}

#[async_trait]
impl ToolService for Gateway {
    async fn call(&self, request: &CallRequest) -> Result<ApiResponse, GatewayError> {
        self.route(request).await.map(|(r, _)| r)
    }
}

/// Admin request installing a fault plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultRequest {
    pub proportion: f64,
    pub seed: u64,
    pub mode: FaultMode,
    /// Tools to sample from; defaults to every documented tool.
    #[serde(default)]
    pub universe: Option<Vec<ToolRef>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error_class: String,
    pub message: String,
}

#[derive(Debug, Default, Deserialize)]
struct CallQuery {
    #[serde(default)]
    debug: bool,
}

#[derive(Serialize)]
struct TracedResponse {
    error: String,
    response: String,
    trace: RouteTrace,
}

fn error_response(status: StatusCode, class: &str, message: String) -> Response {
    (
        status,
        Json(ErrorBody {
            error_class: class.to_string(),
            message,
        }),
    )
        .into_response()
}

async fn handle_call(
    State(gw): State<Arc<Gateway>>,
    Query(q): Query<CallQuery>,
    Json(request): Json<CallRequest>,
) -> Response {
    if let Err(e) = request.id.validate() {
        return error_response(StatusCode::BAD_REQUEST, "InvalidRequest", e.to_string());
    }
    match gw.route(&request).await {
        Ok((resp, trace)) if q.debug => Json(TracedResponse {
            error: resp.error,
            response: resp.response,
            trace,
        })
        .into_response(),
        Ok((resp, _)) => Json(resp).into_response(),
        Err(e @ GatewayError::Simulator(_)) => {
            error_response(StatusCode::BAD_GATEWAY, e.class(), e.to_string())
        }
        Err(e @ GatewayError::Cache(CacheError::Key(_))) => {
            error_response(StatusCode::BAD_REQUEST, e.class(), e.to_string())
        }
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.class(), e.to_string()),
    }
}

async fn handle_health(State(gw): State<Arc<Gateway>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "cached_records": gw.cache().len(),
        "fault": gw.fault().map(|p| serde_json::json!({
            "proportion": p.proportion,
            "seed": p.seed,
            "mode": p.mode,
            "downed_tools": p.sampled_tools.len(),
        })),
    }))
}

async fn handle_fault_install(
    State(gw): State<Arc<Gateway>>,
    Json(req): Json<FaultRequest>,
) -> Response {
    let universe = req.universe.unwrap_or_else(|| gw.docs().tools());
    match make_fault_plan(&universe, req.proportion, req.seed, req.mode) {
        Ok(plan) => {
            gw.install_fault(plan.clone());
            Json(plan).into_response()
        }
        Err(e) => error_response(StatusCode::BAD_REQUEST, e.class(), e.to_string()),
    }
}

async fn handle_fault_clear(State(gw): State<Arc<Gateway>>) -> StatusCode {
    gw.clear_fault();
    StatusCode::NO_CONTENT
}

async fn handle_stats(State(gw): State<Arc<Gateway>>) -> Json<crate::cache::CacheStats> {
    Json(gw.cache().stats())
}

/// `POST /call`, `GET /health`, `GET /stats`, `POST /fault`, `DELETE /fault`.
pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/call", post(handle_call))
        .route("/health", get(handle_health))
        .route("/stats", get(handle_stats))
        .route("/fault", post(handle_fault_install).delete(handle_fault_clear))
        .with_state(gateway)
}

/// HTTP client for a running gateway.
pub struct GatewayClient {
    base: String,
    client: reqwest::Client,
}

impl GatewayClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base: base_url.into().trim_end_matches('/').to_string(),
            client: reqwest::Client::new(),
        }
    }

    pub async fn health(&self) -> Result<serde_json::Value, GatewayError> {
        let resp = self
            .client
            .get(format!("{}/health", self.base))
            .send()
            .await
            .map_err(|e| GatewayError::Unreachable(e.to_string()))?;
        resp.json()
            .await
            .map_err(|e| GatewayError::Unreachable(e.to_string()))
    }

    pub async fn install_fault(&self, req: &FaultRequest) -> Result<FaultPlan, GatewayError> {
        let resp = self
            .client
            .post(format!("{}/fault", self.base))
            .json(req)
            .send()
            .await
            .map_err(|e| GatewayError::Unreachable(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .await
            .map_err(|e| GatewayError::Unreachable(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Remote {
                status: status.as_u16(),
                body,
            });
        }
        serde_json::from_str(&body).map_err(|e| GatewayError::Remote {
            status: status.as_u16(),
            body: format!("{e}: {body}"),
        })
    }

    pub async fn clear_fault(&self) -> Result<(), GatewayError> {
        self.client
            .delete(format!("{}/fault", self.base))
            .send()
            .await
            .map_err(|e| GatewayError::Unreachable(e.to_string()))?;
        Ok(())
    }
}

#[async_trait]
impl ToolService for GatewayClient {
    async fn call(&self, request: &CallRequest) -> Result<ApiResponse, GatewayError> {
        let resp = self
            .client
            .post(format!("{}/call", self.base))
            .json(request)
            .send()
            .await
            .map_err(|e| GatewayError::Unreachable(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .await
            .map_err(|e| GatewayError::Unreachable(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Remote {
                status: status.as_u16(),
                body,
            });
        }
        crate::model::parse_wire_response(&body).map_err(|e| GatewayError::Remote {
            status: status.as_u16(),
            body: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn universe(n: usize) -> Vec<ToolRef> {
        (0..n).map(|i| ToolRef::new("cat", format!("tool{i:02}"))).collect()
    }

    #[test]
    fn zero_proportion_is_empty() {
        let plan = make_fault_plan(&universe(10), 0.0, 7, FaultMode::HardFail).unwrap();
        assert!(plan.sampled_tools.is_empty());
        assert!(make_fault_plan(&[], 0.0, 7, FaultMode::HardFail).is_ok());
        assert!(make_fault_plan(&[], 0.1, 7, FaultMode::HardFail).is_err());
        assert!(make_fault_plan(&universe(3), 1.5, 7, FaultMode::HardFail).is_err());
    }

    #[test]
    fn seeded_plans_repeat() {
        let u = universe(10);
        let a = make_fault_plan(&u, 0.5, 42, FaultMode::VirtualFallback).unwrap();
        let b = make_fault_plan(&u, 0.5, 42, FaultMode::VirtualFallback).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sampled_tools.len(), 5);
    }

    #[test]
    fn sample_size_uses_floor() {
        assert_eq!(sample_size(0.2, 10), 2);
        assert_eq!(sample_size(0.29, 100), 29);
        assert_eq!(sample_size(0.25, 10), 2);
        assert_eq!(sample_size(0.99, 10), 9);
        assert_eq!(sample_size(1.0, 10), 10);
    }

    /// Brute force over every 2-subset of a 10-tool universe: the sampler
    /// always picks exactly two distinct members and, across seeds, every one
    /// of the C(10,2) = 45 subsets occurs with roughly equal frequency.
    #[test]
    fn sampler_is_uniform_over_subsets() {
        use std::collections::HashMap;
        let u = universe(10);
        let mut all_pairs = BTreeSet::new();
        for i in 0..10 {
            for j in i + 1..10 {
                all_pairs.insert(BTreeSet::from([u[i].clone(), u[j].clone()]));
            }
        }
        assert_eq!(all_pairs.len(), 45);
        let trials = 45_000u64;
        let mut freq: HashMap<BTreeSet<ToolRef>, u64> = HashMap::new();
        for seed in 0..trials {
            let plan = make_fault_plan(&u, 0.2, seed, FaultMode::HardFail).unwrap();
            assert_eq!(plan.sampled_tools.len(), 2);
            assert!(all_pairs.contains(&plan.sampled_tools));
            *freq.entry(plan.sampled_tools).or_default() += 1;
        }
        assert_eq!(freq.len(), 45);
        // expected 1000 per subset; binomial sd ~31
        for (_, n) in freq {
            assert!((850..=1150).contains(&n), "subset frequency {n}");
        }
    }
}
