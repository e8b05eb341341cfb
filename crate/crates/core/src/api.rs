//! Northbound HTTP+JSON service over a controller and a paused simulator.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/topology` | | nodes, edges, comm_range |
//! | GET | `/plan` | | `SlicePlan` |
//! | PUT | `/plan` | `SlicePlan` | plan + reconfiguration outcome |
//! | POST | `/plan/delta` | `PlanDelta` | event + outcome |
//! | GET | `/density` | | node id → tier, degree, percentile |
//! | POST | `/codet/run?slice=A` | | list of reports (all slices without `slice`) |
//! | GET | `/codet/reports` | | reports, notifications, interval |
//! | PUT | `/codet/interval` | `{"seconds": 60}` | interval |
//! | GET | `/pdr` | | live `PdrReport` |
//! | GET | `/sim/status` | | status |
//! | POST | `/sim/start`, `/sim/pause`, `/sim/step` | step: `{"events": n}` or `{"seconds": s}` | status |
//!
//! Errors carry `{"reason": "...", "message": "..."}` with a 4xx status for
//! rejected input.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::codet::{ConnectivityReport, Notification};
use crate::controller::{Controller, ControllerError, ReconfigOutcome};
use crate::sim::{PdrReport, SimConfig, SimError, SimStatus, Simulator};
use crate::slicing::{DensityClass, PlanDelta, ReconfigurationEvent, SliceId, SlicePlan};
use crate::time::SimTime;
use crate::topology::{NodeId, NodeRecord};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    reason: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, reason: &str, message: impl ToString) -> Self {
        ApiError { status, reason: reason.to_string(), message: message.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "reason": self.reason, "message": self.message }))).into_response()
    }
}

impl From<ControllerError> for ApiError {
    fn from(e: ControllerError) -> Self {
        let status = match e {
            ControllerError::UnknownSlice(_) => StatusCode::NOT_FOUND,
            ControllerError::Flow(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.reason(), e)
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "simulator", e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(e.status(), "bad-request", e.body_text())
    }
}

impl From<DeploymentError> for ApiError {
    fn from(e: DeploymentError) -> Self {
        match e {
            DeploymentError::Controller(e) => e.into(),
            DeploymentError::Sim(e) => e.into(),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, thiserror::Error)]
pub enum DeploymentError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Controller plus the simulator it drives.
pub struct Deployment {
    controller: Controller,
    sim: Simulator,
    running: bool,
    driver: bool,
    /// Simulated time advanced per driver tick while running.
    pub tick: SimTime,
    pub tick_interval: Duration,
}

impl Deployment {
    pub fn new(controller: Controller, config: SimConfig) -> Result<Self, SimError> {
        let mut sim =
            Simulator::new(controller.nodes(), controller.graph(), controller.plan(), controller.flows(), config)?;
        sim.set_resolver(controller.routing_snapshot());
        Ok(Deployment {
            controller,
            sim,
            running: false,
            driver: false,
            tick: SimTime::from_secs(1),
            tick_interval: Duration::from_millis(20),
        })
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    /// Replaces the plan and pushes the new routes and channels to the simulator.
    pub fn set_plan(&mut self, plan: &SlicePlan) -> Result<ReconfigOutcome, DeploymentError> {
        let outcome = self.controller.set_plan(plan)?;
        self.push_routing(&outcome)?;
        Ok(outcome)
    }

    pub fn apply_delta(
        &mut self,
        delta: &PlanDelta,
    ) -> Result<(ReconfigurationEvent, ReconfigOutcome), DeploymentError> {
        let (event, outcome) = self.controller.apply_delta(delta)?;
        self.push_routing(&outcome)?;
        Ok((event, outcome))
    }

    fn push_routing(&mut self, outcome: &ReconfigOutcome) -> Result<(), SimError> {
        let c = &self.controller;
        self.sim.update_routing(c.plan(), c.flows(), Some(c.routing_snapshot()))?;
        for &directive in &outcome.retunes {
            self.sim.retune(directive)?;
        }
        Ok(())
    }

    /// Advances the simulation and runs any periodic connectivity checks due.
    pub fn advance(&mut self, until: SimTime) -> Result<(), ControllerError> {
        self.sim.run_until(until);
        self.controller.poll_codet(self.sim.now())?;
        Ok(())
    }

    fn status(&self) -> StatusBody {
        StatusBody { running: self.running, status: self.sim.status() }
    }
}

#[derive(Clone)]
pub struct ApiState(Arc<RwLock<Deployment>>);

impl ApiState {
    pub fn new(deployment: Deployment) -> Self {
        ApiState(Arc::new(RwLock::new(deployment)))
    }

    pub fn read(&self) -> std::sync::RwLockReadGuard<'_, Deployment> {
        self.0.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> std::sync::RwLockWriteGuard<'_, Deployment> {
        self.0.write().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyBody {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanBody {
    pub plan: SlicePlan,
    pub outcome: ReconfigOutcome,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaBody {
    pub event: ReconfigurationEvent,
    pub outcome: ReconfigOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportsBody {
    pub reports: Vec<ConnectivityReport>,
    pub notifications: Vec<Notification>,
    pub interval_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatusBody {
    pub running: bool,
    #[serde(flatten)]
    pub status: SimStatus,
}

#[derive(Debug, Deserialize)]
struct SliceQuery {
    slice: Option<String>,
}

#[derive(Debug, Deserialize)]
struct IntervalBody {
    seconds: f64,
}

#[derive(Debug, Default, Deserialize)]
struct StepBody {
    events: Option<u64>,
    seconds: Option<f64>,
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/topology", get(topology))
        .route("/plan", get(get_plan).put(put_plan))
        .route("/plan/delta", post(plan_delta))
        .route("/density", get(density))
        .route("/codet/run", post(codet_run))
        .route("/codet/reports", get(codet_reports))
        .route("/codet/interval", put(codet_interval))
        .route("/pdr", get(pdr))
        .route("/sim/status", get(sim_status))
        .route("/sim/start", post(sim_start))
        .route("/sim/pause", post(sim_pause))
        .route("/sim/step", post(sim_step))
        .with_state(state)
}

pub async fn serve(state: ApiState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("northbound API listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn topology(State(s): State<ApiState>) -> Json<TopologyBody> {
    let d = s.read();
    let c = d.controller();
    Json(TopologyBody { nodes: c.nodes().to_vec(), edges: c.graph().edges().collect() })
}

async fn get_plan(State(s): State<ApiState>) -> Json<SlicePlan> {
    Json(s.read().controller().plan().clone())
}

async fn put_plan(State(s): State<ApiState>, body: Result<Json<SlicePlan>, JsonRejection>) -> ApiResult<PlanBody> {
    let Json(plan) = body?;
    let mut d = s.write();
    let outcome = d.set_plan(&plan)?;
    Ok(Json(PlanBody { plan: d.controller.plan().clone(), outcome }))
}

async fn plan_delta(State(s): State<ApiState>, body: Result<Json<PlanDelta>, JsonRejection>) -> ApiResult<DeltaBody> {
    let Json(delta) = body?;
    let mut d = s.write();
    let (event, outcome) = d.apply_delta(&delta)?;
    Ok(Json(DeltaBody { event, outcome }))
}

async fn density(State(s): State<ApiState>) -> Json<BTreeMap<NodeId, DensityClass>> {
    Json(s.read().controller().density())
}

async fn codet_run(State(s): State<ApiState>, Query(q): Query<SliceQuery>) -> ApiResult<Vec<ConnectivityReport>> {
    let mut d = s.write();
    let now = d.sim.now();
    let slices: Vec<SliceId> = match q.slice {
        Some(id) => vec![SliceId::new(id)],
        None => d.controller.plan().slices.iter().map(|sl| sl.id.clone()).collect(),
    };
    let reports = slices.iter().map(|id| d.controller.run_codet(id, now)).collect::<Result<_, _>>()?;
    Ok(Json(reports))
}

async fn codet_reports(State(s): State<ApiState>) -> Json<ReportsBody> {
    let d = s.read();
    let codet = d.controller().codet();
    Json(ReportsBody {
        reports: codet.reports().cloned().collect(),
        notifications: codet.notifications().to_vec(),
        interval_seconds: codet.interval().as_secs_f64(),
    })
}

async fn codet_interval(
    State(s): State<ApiState>,
    body: Result<Json<IntervalBody>, JsonRejection>,
) -> ApiResult<serde_json::Value> {
    let Json(body) = body?;
    if !(body.seconds.is_finite() && body.seconds > 0.0) {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "interval", "interval must be positive"));
    }
    let mut d = s.write();
    d.controller.set_codet_interval(Duration::from_secs_f64(body.seconds))?;
    Ok(Json(json!({ "interval_seconds": body.seconds })))
}

async fn pdr(State(s): State<ApiState>) -> Json<PdrReport> {
    Json(s.read().sim.report())
}

async fn sim_status(State(s): State<ApiState>) -> Json<StatusBody> {
    Json(s.read().status())
}

async fn sim_start(State(s): State<ApiState>) -> Json<StatusBody> {
    let spawn = {
        let mut d = s.write();
        d.running = true;
        !std::mem::replace(&mut d.driver, true)
    };
    if spawn {
        tokio::spawn(drive(s.clone()));
    }
    Json(s.read().status())
}

async fn drive(s: ApiState) {
    loop {
        let pause = {
            let mut d = s.write();
            let finished = matches!(d.sim.status().state, crate::sim::SimState::Finished);
            if !d.running || finished {
                d.running = false;
                d.driver = false;
                return;
            }
            let until = d.sim.now() + d.tick;
            if let Err(e) = d.advance(until) {
                log::error!("simulation driver stopped: {e}");
                d.running = false;
                d.driver = false;
                return;
            }
            d.tick_interval
        };
        tokio::time::sleep(pause).await;
    }
}

async fn sim_pause(State(s): State<ApiState>) -> Json<StatusBody> {
    let mut d = s.write();
    d.running = false;
    Json(d.status())
}

async fn sim_step(State(s): State<ApiState>, body: Option<Json<StepBody>>) -> ApiResult<StatusBody> {
    let step = body.map(|Json(b)| b).unwrap_or_default();
    let mut d = s.write();
    if let Some(seconds) = step.seconds {
        if !(seconds.is_finite() && seconds > 0.0) {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "step", "seconds must be positive"));
        }
        let until = d.sim.now() + SimTime::from_duration(Duration::from_secs_f64(seconds));
        d.advance(until)?;
    } else {
        for _ in 0..step.events.unwrap_or(1) {
            if d.sim.step().is_none() {
                break;
            }
        }
        let now = d.sim.now();
        d.controller.poll_codet(now)?;
    }
    Ok(Json(d.status()))
}
