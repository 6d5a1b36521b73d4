//! WebSocket front end: one task per connection, one actor task per session.

use std::collections::HashMap;
use std::future::Future;
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use grounding_core::engine::Timing;
use grounding_core::rng;
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};
use tower_http::services::ServeDir;

use crate::clock::Clock;
use crate::matchmaker::{ConnId, Matchmaker, Pairing};
use crate::protocol::{ClientFrame, ServerFrame};
use crate::session::{Outbound, Session};
use crate::store::TranscriptStore;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub seed: u64,
    pub timing: Timing,
    /// Wall-clock interval between `tick` frames and timeout checks.
    pub tick_interval: Duration,
    pub store_dir: PathBuf,
    /// Static files served at `/` when set.
    pub ui_dir: Option<PathBuf>,
    /// Malformed frames tolerated before the connection is dropped.
    pub max_strikes: u32,
}

impl ServerConfig {
    pub fn new(store_dir: PathBuf, seed: u64) -> ServerConfig {
        ServerConfig {
            seed,
            timing: Timing::default(),
            tick_interval: Duration::from_secs(1),
            store_dir,
            ui_dir: None,
            max_strikes: 3,
        }
    }
}

enum ToConn {
    Frame(ServerFrame),
    Joined {
        session: UnboundedSender<SessionInput>,
        agent: usize,
    },
    Ended,
}

enum SessionInput {
    Frame(usize, ClientFrame),
    Left,
}

struct Lobby {
    matchmaker: Matchmaker,
    waiting: HashMap<ConnId, UnboundedSender<ToConn>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Status {
    pub queued: usize,
    pub live_sessions: usize,
    pub sessions_started: usize,
    pub transcripts_persisted: usize,
    pub persist_failures: usize,
}

struct Shared {
    config: ServerConfig,
    clock: Arc<dyn Clock>,
    store: Arc<TranscriptStore>,
    lobby: Mutex<Lobby>,
    next_conn: AtomicU64,
    live: AtomicUsize,
    started: AtomicUsize,
    persisted: AtomicUsize,
    failures: AtomicUsize,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// Opens the store; session numbering continues after what it holds.
    pub fn new(config: ServerConfig, clock: Arc<dyn Clock>) -> io::Result<AppState> {
        let store = TranscriptStore::open(&config.store_dir)?;
        let existing = store.load()?.transcripts.len() as u64;
        let matchmaker = Matchmaker::new(
            rng::derive_seed(config.seed, existing),
            format!("s{:x}", config.seed),
            existing,
        );
        Ok(AppState(Arc::new(Shared {
            config,
            clock,
            store: Arc::new(store),
            lobby: Mutex::new(Lobby {
                matchmaker,
                waiting: HashMap::new(),
            }),
            next_conn: AtomicU64::new(1),
            live: AtomicUsize::new(0),
            started: AtomicUsize::new(0),
            persisted: AtomicUsize::new(0),
            failures: AtomicUsize::new(0),
        })))
    }

    pub fn status(&self) -> Status {
        let s = &self.0;
        Status {
            queued: s
                .lobby
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .matchmaker
                .queued(),
            live_sessions: s.live.load(Ordering::SeqCst),
            sessions_started: s.started.load(Ordering::SeqCst),
            transcripts_persisted: s.persisted.load(Ordering::SeqCst),
            persist_failures: s.failures.load(Ordering::SeqCst),
        }
    }
}

pub fn router(state: AppState) -> Router {
    let ui = state.0.config.ui_dir.clone();
    let app = Router::new()
        .route("/ws", get(ws_handler))
        .route("/healthz", get(health))
        .with_state(state);
    match ui {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn health(State(state): State<AppState>) -> Json<Status> {
    Json(state.status())
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state))
}

async fn send(socket: &mut WebSocket, frame: &ServerFrame) -> bool {
    socket
        .send(Message::Text(frame.to_json().into()))
        .await
        .is_ok()
}

async fn connection(mut socket: WebSocket, state: AppState) {
    let shared = &state.0;
    let id = shared.next_conn.fetch_add(1, Ordering::SeqCst);
    let (tx, mut rx) = unbounded_channel::<ToConn>();
    let mut session: Option<(UnboundedSender<SessionInput>, usize)> = None;
    let mut strikes = 0;
    tracing::debug!(conn = id, "connected");
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t.as_str().to_owned(),
                    Some(Ok(Message::Binary(_))) => String::new(),
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => continue,
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                };
                let frame = match serde_json::from_str::<ClientFrame>(&text) {
                    Ok(f) => f,
                    Err(e) => {
                        strikes += 1;
                        let last = strikes >= shared.config.max_strikes;
                        let msg = if last { format!("{e}; closing after {strikes} malformed frames") } else { e.to_string() };
                        if !send(&mut socket, &ServerFrame::error("MalformedFrame", msg)).await || last {
                            break;
                        }
                        continue;
                    }
                };
                match (frame, &session) {
                    (ClientFrame::Join, Some(_)) => {
                        send(&mut socket, &ServerFrame::error("DuplicateJoin", "already in a session")).await;
                    }
                    (ClientFrame::Join, None) => {
                        if let Some(reply) = join(&state, id, tx.clone()) {
                            send(&mut socket, &reply).await;
                        }
                    }
                    (f, Some((s, agent))) => {
                        let _ = s.send(SessionInput::Frame(*agent, f));
                    }
                    (_, None) => {
                        send(&mut socket, &ServerFrame::error("NotInSession", "join and wait for a partner first")).await;
                    }
                }
            }
            Some(msg) = rx.recv() => match msg {
                ToConn::Frame(f) => {
                    if !send(&mut socket, &f).await {
                        break;
                    }
                }
                ToConn::Joined { session: s, agent } => session = Some((s, agent)),
                ToConn::Ended => session = None,
            }
        }
    }
    {
        let mut lobby = shared.lobby.lock().unwrap_or_else(|e| e.into_inner());
        lobby.matchmaker.leave(id);
        lobby.waiting.remove(&id);
    }
    // A pairing may have landed after the socket closed.
    rx.close();
    while let Ok(msg) = rx.try_recv() {
        if let ToConn::Joined { session: s, agent } = msg {
            session = Some((s, agent));
        }
    }
    if let Some((s, _)) = session {
        let _ = s.send(SessionInput::Left);
    }
    tracing::debug!(conn = id, "disconnected");
}

/// Queue a connection. Returns a frame for the caller to send itself.
fn join(state: &AppState, id: ConnId, tx: UnboundedSender<ToConn>) -> Option<ServerFrame> {
    let pairing = {
        let mut lobby = state.0.lobby.lock().unwrap_or_else(|e| e.into_inner());
        match lobby.matchmaker.join(id) {
            Err(_) => {
                return Some(ServerFrame::error(
                    "DuplicateJoin",
                    "already waiting for a partner",
                ))
            }
            Ok(None) => {
                lobby.waiting.insert(id, tx);
                return Some(ServerFrame::Queued);
            }
            Ok(Some(p)) => {
                let first = lobby
                    .waiting
                    .remove(&p.agents[0])
                    .expect("queued connection has a sender");
                (p, [first, tx])
            }
        }
    };
    tokio::spawn(run_session(state.clone(), pairing.0, pairing.1));
    None
}

fn dispatch(conns: &[UnboundedSender<ToConn>; 2], out: Vec<Outbound>) {
    for o in out {
        let _ = conns[o.to].send(ToConn::Frame(o.frame));
    }
}

async fn run_session(state: AppState, pairing: Pairing, conns: [UnboundedSender<ToConn>; 2]) {
    let shared = state.0.clone();
    shared.live.fetch_add(1, Ordering::SeqCst);
    shared.started.fetch_add(1, Ordering::SeqCst);
    let (tx, mut rx): (_, UnboundedReceiver<SessionInput>) = unbounded_channel();
    for (agent, c) in conns.iter().enumerate() {
        let _ = c.send(ToConn::Joined {
            session: tx.clone(),
            agent,
        });
    }
    drop(tx);
    let now = shared.clock.now_ms();
    let mut session = Session::new(
        pairing.session_id.clone(),
        pairing.world,
        now,
        pairing.first_speaker,
        shared.config.timing,
    );
    tracing::info!(session = %session.id, k = session.state().world.num_shared, "session started");
    dispatch(&conns, session.start_frames());
    dispatch(&conns, session.tick_frames(now));

    let mut ticker = tokio::time::interval(shared.config.tick_interval);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    ticker.tick().await;
    let outcome = loop {
        let out = tokio::select! {
            input = rx.recv() => {
                let now = shared.clock.now_ms();
                match input {
                    Some(SessionInput::Frame(agent, f)) => session.handle(agent, f, now),
                    Some(SessionInput::Left) | None => session.disconnect(now),
                }
            }
            _ = ticker.tick() => {
                let now = shared.clock.now_ms();
                let mut out = session.poll(now);
                if out.is_empty() {
                    out = session.tick_frames(now);
                }
                out
            }
        };
        if session.is_finished() {
            break out;
        }
        dispatch(&conns, out);
    };

    // Persist before reporting the outcome, so a client that sees the
    // outcome can rely on the transcript being on disk.
    let finished_at = session
        .state()
        .events
        .last()
        .map_or(shared.clock.now_ms(), |e| e.ts);
    let transcript = session.transcript(shared.clock.now_ms().max(finished_at));
    let store = shared.store.clone();
    let saved = tokio::task::spawn_blocking(move || {
        store.append_with_retry(&transcript, 5, Duration::from_millis(50))
    })
    .await
    .map_err(io::Error::other)
    .and_then(|r| r);
    match saved {
        Ok(()) => {
            shared.persisted.fetch_add(1, Ordering::SeqCst);
        }
        Err(e) => {
            shared.failures.fetch_add(1, Ordering::SeqCst);
            tracing::error!(session = %session.id, error = %e, "transcript not persisted");
        }
    }
    dispatch(&conns, outcome);
    for c in &conns {
        let _ = c.send(ToConn::Ended);
    }
    shared.live.fetch_sub(1, Ordering::SeqCst);
    tracing::info!(session = %session.id, "session ended");
}
