//! HTTP gateway for the operator console.
//!
//! The run loop is the only writer: it publishes a state snapshot and
//! stream events after every cycle, and drains operator actions queued by
//! the HTTP handlers before the next one.

use std::convert::Infallible;
use std::fs::File;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast;

use vsm_core::orchestrator::{CycleReport, OperatorAction};
use vsm_core::scenario::{Run, RunArtifacts, RunError};

/// Work the HTTP side hands to the run loop.
#[derive(Debug, Clone, PartialEq)]
pub enum GatewayAction {
    Inject(String),
    Operator(OperatorAction),
}

/// One server-sent event: `kind` becomes the SSE event name.
#[derive(Debug, Clone, Serialize)]
pub struct StreamEvent {
    pub kind: &'static str,
    pub data: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Approve,
    Hold,
}

#[derive(Debug, Deserialize)]
pub struct ApproveRequest {
    pub plan_id: String,
    pub decision: Decision,
}

#[derive(Debug, Deserialize)]
pub struct InjectRequest {
    pub fault_mode_id: String,
}

pub struct Shared {
    state: RwLock<Value>,
    metrics: RwLock<Value>,
    pending_plan: RwLock<Option<String>>,
    fault_modes: Vec<String>,
    events: broadcast::Sender<StreamEvent>,
    actions: Mutex<mpsc::Sender<GatewayAction>>,
    subscribers: AtomicUsize,
    access: Mutex<Vec<String>>,
    access_file: Option<Mutex<File>>,
}

impl Shared {
    /// Builds the shared state for `run` and the receiving end of its
    /// action queue. Access log lines are appended to `access_file` too.
    pub fn new(run: &Run, access_file: Option<File>) -> (Arc<Self>, mpsc::Receiver<GatewayAction>) {
        let (tx, rx) = mpsc::channel();
        let (events, _) = broadcast::channel(1024);
        let shared = Arc::new(Self {
            state: RwLock::new(Value::Null),
            metrics: RwLock::new(Value::Null),
            pending_plan: RwLock::new(None),
            fault_modes: run.sim().catalog().modes.keys().cloned().collect(),
            events,
            actions: Mutex::new(tx),
            subscribers: AtomicUsize::new(0),
            access: Mutex::new(Vec::new()),
            access_file: access_file.map(Mutex::new),
        });
        shared.publish_state(run);
        shared.publish_metrics(&run.metrics());
        (shared, rx)
    }

    /// `METHOD path status` for every request served so far.
    pub fn access_log(&self) -> Vec<String> {
        self.access.lock().expect("access log lock").clone()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamEvent> {
        self.events.subscribe()
    }

    pub fn subscribers(&self) -> usize {
        self.subscribers.load(Ordering::SeqCst)
    }

    fn send(&self, action: GatewayAction) {
        // The run loop may already have ended; actions after that are moot.
        let _ = self.actions.lock().expect("action queue lock").send(action);
    }

    fn emit(&self, kind: &'static str, data: Value) {
        let _ = self.events.send(StreamEvent { kind, data });
    }

    pub fn publish_state(&self, run: &Run) {
        let snap = run.snapshot();
        *self.pending_plan.write().expect("pending lock") =
            snap.pending_approval.as_ref().map(|p| p.plan_id.clone());
        let mut state = serde_json::to_value(&snap).expect("snapshot serializes");
        let frame = run.last_frame().map(|f| {
            let values: serde_json::Map<String, Value> = f.iter().map(|(id, v, _)| (id.to_string(), json!(v))).collect();
            let stale: Vec<&str> = f.iter().filter(|(_, _, s)| *s).map(|(id, _, _)| id).collect();
            json!({ "cycle": f.cycle, "sim_time_s": f.sim_time_s, "values": values, "stale": stale })
        });
        state["frame"] = frame.unwrap_or(Value::Null);
        state["fault_modes"] = json!(self.fault_modes);
        *self.state.write().expect("state lock") = state;
    }

    pub fn publish_metrics(&self, metrics: &impl Serialize) {
        *self.metrics.write().expect("metrics lock") =
            serde_json::to_value(metrics).expect("metrics serialize");
    }

    /// Fans one cycle report out as stream events.
    pub fn publish_cycle(&self, rep: &CycleReport, plan_id: Option<&str>) {
        self.emit(
            "frame",
            json!({
                "cycle": rep.cycle,
                "sim_time_s": rep.sim_time_s,
                "plan_id": plan_id,
                "failed_tests": rep.failed_tests,
                "anomaly": rep.anomaly,
                "commands": rep.commands,
                "transitions": rep.transitions,
                "degraded": rep.degraded,
            }),
        );
        if let Some(fault) = &rep.fault {
            let mut v = serde_json::to_value(fault).expect("fault serializes");
            v["impacts"] = serde_json::to_value(&rep.impacts).expect("impacts serialize");
            self.emit("fault", v);
        }
        if let Some(a) = &rep.anomaly_event {
            self.emit(
                "anomaly",
                serde_json::to_value(a).expect("anomaly serializes"),
            );
        }
        if let Some(e) = &rep.estimate {
            self.emit(
                "estimate",
                json!({ "estimate": e, "disagrees": rep.estimator_disagrees }),
            );
        }
        if let Some(p) = &rep.proposal {
            self.emit(
                "proposal",
                serde_json::to_value(p).expect("proposal serializes"),
            );
        }
        if rep.replan.is_some() || !rep.plan_decisions.is_empty() {
            self.emit(
                "plan",
                json!({
                    "cycle": rep.cycle,
                    "plan_id": plan_id,
                    "replan": rep.replan,
                    "decisions": rep.plan_decisions,
                }),
            );
        }
    }

    fn record_access(&self, line: String) {
        log::info!("{line}");
        if let Some(f) = &self.access_file {
            let _ = writeln!(f.lock().expect("access file lock"), "{line}");
        }
        self.access.lock().expect("access log lock").push(line);
    }
}

/// Steps `run` to completion, applying queued actions before each cycle.
/// `pace` is the wall time per simulated second; `None` runs flat out.
pub fn drive(
    mut run: Run,
    shared: &Shared,
    actions: &mpsc::Receiver<GatewayAction>,
    pace: Option<Duration>,
) -> Result<RunArtifacts, RunError> {
    let start = Instant::now();
    let t0 = run.sim().time_s();
    while !run.is_done() {
        for action in actions.try_iter() {
            match action {
                GatewayAction::Inject(id) => {
                    if let Err(e) = run.inject_now(&id) {
                        log::warn!("injection of `{id}` rejected: {e}");
                    }
                }
                GatewayAction::Operator(op) => run.operator(op),
            }
        }
        let rep = run.step()?;
        // State first so a client reacting to an event sees it reflected.
        shared.publish_state(&run);
        shared.publish_cycle(&rep, run.snapshot().plan_id.as_deref());
        if rep.cycle % 10 == 0 {
            shared.publish_metrics(&run.metrics());
        }
        if let Some(p) = pace {
            let due = p.mul_f64(run.sim().time_s() - t0);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
    }
    let artifacts = run.finish()?;
    shared.publish_metrics(&artifacts.metrics);
    shared.emit("end", json!({ "exit_code": artifacts.metrics.exit_code }));
    Ok(artifacts)
}

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/metrics", get(get_metrics))
        .route("/inject", post(post_inject))
        .route("/approve", post(post_approve))
        .route("/events", get(events))
        .layer(middleware::from_fn_with_state(shared.clone(), access_log))
        .with_state(shared)
}

async fn access_log(State(shared): State<Arc<Shared>>, req: Request, next: Next) -> Response {
    let line = format!("{} {}", req.method(), req.uri().path());
    let resp = next.run(req).await;
    shared.record_access(format!("{line} {}", resp.status().as_u16()));
    resp
}

async fn get_state(State(shared): State<Arc<Shared>>) -> Json<Value> {
    Json(shared.state.read().expect("state lock").clone())
}

async fn get_metrics(State(shared): State<Arc<Shared>>) -> Json<Value> {
    Json(shared.metrics.read().expect("metrics lock").clone())
}

fn error(status: StatusCode, message: String) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

async fn post_inject(
    State(shared): State<Arc<Shared>>,
    Json(req): Json<InjectRequest>,
) -> Response {
    if shared
        .fault_modes
        .binary_search(&req.fault_mode_id)
        .is_err()
    {
        return error(
            StatusCode::NOT_FOUND,
            format!("unknown fault mode `{}`", req.fault_mode_id),
        );
    }
    shared.send(GatewayAction::Inject(req.fault_mode_id.clone()));
    (
        StatusCode::ACCEPTED,
        Json(json!({ "queued": req.fault_mode_id })),
    )
        .into_response()
}

async fn post_approve(
    State(shared): State<Arc<Shared>>,
    Json(req): Json<ApproveRequest>,
) -> Response {
    let pending = shared.pending_plan.read().expect("pending lock").clone();
    if pending.as_deref() != Some(req.plan_id.as_str()) {
        let msg = match pending {
            Some(p) => format!("plan `{}` is not awaiting approval; `{p}` is", req.plan_id),
            None => format!("plan `{}` is not awaiting approval", req.plan_id),
        };
        return error(StatusCode::CONFLICT, msg);
    }
    let plan_id = req.plan_id.clone();
    let action = match req.decision {
        Decision::Approve => OperatorAction::Approve { plan_id },
        Decision::Hold => OperatorAction::Hold { plan_id },
    };
    shared.send(GatewayAction::Operator(action));
    (StatusCode::ACCEPTED, Json(json!({ "queued": req.plan_id }))).into_response()
}

/// Detaches the operator session when the last stream closes.
struct Subscription {
    shared: Arc<Shared>,
}

impl Subscription {
    fn attach(shared: Arc<Shared>) -> Self {
        if shared.subscribers.fetch_add(1, Ordering::SeqCst) == 0 {
            shared.send(GatewayAction::Operator(OperatorAction::Session {
                attached: true,
            }));
        }
        Self { shared }
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        if self.shared.subscribers.fetch_sub(1, Ordering::SeqCst) == 1 {
            self.shared
                .send(GatewayAction::Operator(OperatorAction::Session {
                    attached: false,
                }));
        }
    }
}

async fn events(
    State(shared): State<Arc<Shared>>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = shared.subscribe();
    let guard = Subscription::attach(shared);
    let s = stream::unfold((rx, guard), |(mut rx, guard)| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    let event = Event::default().event(ev.kind).data(ev.data.to_string());
                    return Some((Ok(event), (rx, guard)));
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("event stream subscriber lagged by {n} events");
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(s).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}
