//! HTTP and websocket front end.
//!
//! `GET /catalog` lists every scenario with its geometry, `GET /catalog/{name}`
//! returns one, `GET /sessions` lists live and parked sessions, and
//! `GET /ws` upgrades to a session socket speaking [`crate::protocol`].

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Serialize;
use tokio::time::{Instant, MissedTickBehavior};

use crate::catalog::{Catalog, ScenarioSummary};
use crate::error::{Result, TeleopError};
use crate::protocol::{ClientMessage, ServerMessage};
use crate::session::Session;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    /// A connection with no client message for this long is ended.
    pub idle_timeout: Duration,
    /// How long a disconnected session is kept before it is dropped.
    pub gc_timeout: Duration,
    /// Steps per second for every session; the scenario's own rate when `None`.
    pub steps_per_second: Option<f64>,
    /// Where replay logs of finished sessions are written, if anywhere.
    pub replay_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            idle_timeout: Duration::from_secs(300),
            gc_timeout: Duration::from_secs(60),
            steps_per_second: None,
            replay_dir: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SessionInfo {
    pub id: u64,
    pub scenario: String,
    pub step: usize,
    pub connected: bool,
}

struct Parked {
    session: Session,
    since: Instant,
}

#[derive(Default)]
struct Registry {
    live: HashMap<u64, SessionInfo>,
    parked: HashMap<u64, Parked>,
}

/// Shared by every connection.
#[derive(Clone)]
pub struct ServerState {
    catalog: Arc<Catalog>,
    config: ServerConfig,
    next_id: Arc<AtomicU64>,
    registry: Arc<Mutex<Registry>>,
}

impl ServerState {
    pub fn new(catalog: Catalog, config: ServerConfig) -> Self {
        Self {
            catalog: Arc::new(catalog),
            config,
            next_id: Arc::new(AtomicU64::new(1)),
            registry: Arc::new(Mutex::new(Registry::default())),
        }
    }

    pub fn sessions(&self) -> Vec<SessionInfo> {
        let reg = self.registry.lock().unwrap();
        let mut out: Vec<SessionInfo> = reg.live.values().cloned().collect();
        out.extend(reg.parked.values().map(|p| SessionInfo {
            id: p.session.id(),
            scenario: p.session.scenario().name.clone(),
            step: p.session.step_count(),
            connected: false,
        }));
        out.sort_by_key(|s| s.id);
        out
    }

    /// Drops parked sessions older than the GC timeout, writing their replay logs.
    pub fn collect_garbage(&self) -> usize {
        let expired: Vec<Parked> = {
            let mut reg = self.registry.lock().unwrap();
            let now = Instant::now();
            let ids: Vec<u64> = reg
                .parked
                .iter()
                .filter(|(_, p)| now.duration_since(p.since) >= self.config.gc_timeout)
                .map(|(id, _)| *id)
                .collect();
            ids.iter().filter_map(|id| reg.parked.remove(id)).collect()
        };
        for p in &expired {
            if let Err(e) = self.write_replay(&p.session) {
                log::warn!("could not write replay log of session {}: {e}", p.session.id());
            }
            log::info!("session {} collected", p.session.id());
        }
        expired.len()
    }

    fn write_replay(&self, session: &Session) -> Result<()> {
        let Some(dir) = &self.config.replay_dir else { return Ok(()) };
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("session_{}.json", session.id()));
        std::fs::write(path, serde_json::to_vec_pretty(&session.replay_log())?)?;
        Ok(())
    }

    fn update(&self, session: &Session) {
        let mut reg = self.registry.lock().unwrap();
        reg.live.insert(
            session.id(),
            SessionInfo {
                id: session.id(),
                scenario: session.scenario().name.clone(),
                step: session.step_count(),
                connected: true,
            },
        );
    }

    fn park(&self, session: Session) {
        let mut reg = self.registry.lock().unwrap();
        reg.live.remove(&session.id());
        reg.parked.insert(session.id(), Parked { session, since: Instant::now() });
    }

    fn step_period(&self, scenario_rate: f64) -> Duration {
        let rate = self.config.steps_per_second.unwrap_or(scenario_rate);
        Duration::from_secs_f64(1.0 / rate.max(1e-3))
    }
}

pub fn router(state: ServerState) -> Router {
    Router::new()
        .route("/catalog", get(catalog_all))
        .route("/catalog/{name}", get(catalog_one))
        .route("/sessions", get(sessions))
        .route("/ws", get(upgrade))
        .with_state(state)
}

/// Binds `addr` and serves until the process exits. Parked sessions are
/// collected in the background.
pub async fn serve(addr: SocketAddr, catalog: Catalog, config: ServerConfig) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    let state = ServerState::new(catalog, config);
    spawn_collector(state.clone());
    axum::serve(listener, router(state)).await?;
    Ok(())
}

pub fn spawn_collector(state: ServerState) -> tokio::task::JoinHandle<()> {
    let period = (state.config.gc_timeout / 4).max(Duration::from_millis(10));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            state.collect_garbage();
        }
    })
}

async fn catalog_all(State(state): State<ServerState>) -> Json<Vec<ScenarioSummary>> {
    Json(state.catalog.summaries())
}

async fn catalog_one(State(state): State<ServerState>, Path(name): Path<String>) -> Response {
    match state.catalog.get(&name) {
        Ok(s) => Json(ScenarioSummary::of(&s)).into_response(),
        Err(e) => (StatusCode::NOT_FOUND, e.to_string()).into_response(),
    }
}

async fn sessions(State(state): State<ServerState>) -> Json<Vec<SessionInfo>> {
    Json(state.sessions())
}

async fn upgrade(State(state): State<ServerState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| connection(state, socket))
}

/// Reply to one client message; the session is created on join.
fn handle(state: &ServerState, session: &mut Option<Session>, msg: ClientMessage) -> Result<Vec<ServerMessage>> {
    match msg {
        ClientMessage::Join { scenario, initial } => {
            if let Some(s) = session {
                return Err(TeleopError::AlreadyJoined(s.scenario().name.clone()));
            }
            let sc = state.catalog.get(&scenario)?;
            let id = state.next_id.fetch_add(1, Ordering::Relaxed);
            let s = Session::new(id, sc, initial)?;
            let x = s.state();
            let joined = ServerMessage::Joined {
                session: id,
                scenario: ScenarioSummary::of(s.scenario()),
                x: [x[0], x[1], x[2]],
            };
            state.update(&s);
            *session = Some(s);
            Ok(vec![joined])
        }
        ClientMessage::Input { u } => {
            let s = session.as_mut().ok_or(TeleopError::NotJoined)?;
            Ok(vec![s.set_input(u)?])
        }
        ClientMessage::Reset {} => {
            let s = session.as_mut().ok_or(TeleopError::NotJoined)?;
            s.reset();
            Ok(Vec::new())
        }
    }
}

async fn connection(state: ServerState, socket: WebSocket) {
    let (mut tx, mut rx) = socket.split();
    let mut session: Option<Session> = None;
    let mut last_seen = Instant::now();
    let mut ticker: Option<tokio::time::Interval> = None;

    let send = |m: ServerMessage| Message::Text(m.to_json().into());

    loop {
        let idle = tokio::time::sleep_until(last_seen + state.config.idle_timeout);
        let running = session.as_ref().is_some_and(|s| !s.is_ended());
        let tick = async {
            match ticker.as_mut() {
                Some(t) if running => t.tick().await,
                _ => std::future::pending().await,
            }
        };
        let outgoing: Vec<ServerMessage> = tokio::select! {
            incoming = rx.next() => {
                let Some(Ok(msg)) = incoming else { break };
                last_seen = Instant::now();
                let text = match msg {
                    Message::Text(t) => t.to_string(),
                    Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
                    Message::Close(_) => break,
                    _ => continue,
                };
                let reply = ClientMessage::parse(&text).and_then(|m| handle(&state, &mut session, m));
                match reply {
                    Ok(msgs) => {
                        if let (Some(s), None) = (&session, &ticker) {
                            let mut t = tokio::time::interval(state.step_period(s.scenario().steps_per_second));
                            t.set_missed_tick_behavior(MissedTickBehavior::Delay);
                            ticker = Some(t);
                        }
                        msgs
                    }
                    Err(e) => vec![ServerMessage::error(e)],
                }
            }
            _ = tick => {
                let s = session.as_mut().expect("ticking only with a session");
                let out = match s.step() {
                    Ok(ev) => ev.into_messages(),
                    Err(e) => vec![ServerMessage::error(&e), ServerMessage::Ended { reason: e.to_string() }],
                };
                state.update(s);
                out
            }
            _ = idle => {
                let _ = tx.send(send(ServerMessage::Ended { reason: "idle".into() })).await;
                break;
            }
        };
        let mut failed = false;
        for m in outgoing {
            if tx.send(send(m)).await.is_err() {
                failed = true;
                break;
            }
        }
        if failed {
            break;
        }
    }
    if let Some(s) = session {
        log::info!("session {} disconnected at step {}", s.id(), s.step_count());
        state.park(s);
    }
    let _ = tx.close().await;
}
