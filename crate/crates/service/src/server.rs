//! HTTP and websocket front end.
//!
//! One task owns the pacing loop and is the only writer of session state;
//! each websocket connection reads client messages into the session and
//! forwards broadcasts out. Broadcasts go through a bounded channel: a slow
//! client skips what it missed instead of holding the engine back.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::serve::ListenerExt;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, oneshot, Notify};
use tokio::task::JoinHandle;

use streamgraft_core::{Manifest, Scenario, ScenarioDoc};

use crate::protocol::{ClientMessage, ServerMessage};
use crate::session::{Audience, LiveSession, Outgoing, DEFAULT_TPS};

const BROADCAST_CAPACITY: usize = 256;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub tps: f64,
    /// Where the interaction log is written; rewritten whenever it grows
    /// and at shutdown.
    pub log_path: Option<PathBuf>,
    /// Start paused; ticks then only run on Step or Resume.
    pub start_paused: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            tps: DEFAULT_TPS,
            log_path: None,
            start_paused: false,
        }
    }
}

type Broadcast = (Audience, Arc<str>);

struct Shared {
    session: Mutex<LiveSession>,
    tx: broadcast::Sender<Broadcast>,
    wake: Notify,
    next_client: AtomicU64,
    clients: AtomicUsize,
    log_path: Option<PathBuf>,
}

impl Shared {
    fn publish(&self, out: Outgoing) {
        for (audience, m) in out {
            // no receivers is fine
            let _ = self.tx.send((audience, Arc::from(m.to_json())));
        }
    }

    fn write_log(&self, log: &ScenarioDoc) {
        if let Some(path) = &self.log_path {
            if let Err(e) = std::fs::write(path, log.to_json()) {
                eprintln!("writing interaction log {}: {e}", path.display());
            }
        }
    }
}

/// A running server.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shared: Arc<Shared>,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl ServerHandle {
    pub fn interaction_log(&self) -> ScenarioDoc {
        self.shared.session.lock().expect("session lock").interaction_log()
    }

    pub fn manifest(&self) -> Manifest {
        self.shared.session.lock().expect("session lock").manifest()
    }

    pub fn clock(&self) -> u64 {
        self.shared.session.lock().expect("session lock").clock()
    }

    /// Stops serving, writes the interaction log and returns it.
    pub async fn shutdown(mut self) -> ScenarioDoc {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let _ = (&mut self.task).await;
        let log = self.interaction_log();
        self.shared.write_log(&log);
        log
    }

    /// Runs until the server stops on its own (it does not).
    pub async fn wait(self) {
        let _ = self.task.await;
    }
}

/// Binds and starts serving in the background.
pub async fn start(scenario: &Scenario, config: ServerConfig) -> std::io::Result<ServerHandle> {
    let mut session =
        LiveSession::new(scenario, config.tps).map_err(|e| std::io::Error::other(e.to_string()))?;
    if config.start_paused {
        session.handle(0, ClientMessage::Pause);
    }
    let (tx, _) = broadcast::channel(BROADCAST_CAPACITY);
    let shared = Arc::new(Shared {
        session: Mutex::new(session),
        tx,
        wake: Notify::new(),
        next_client: AtomicU64::new(1),
        clients: AtomicUsize::new(0),
        log_path: config.log_path.clone(),
    });
    let listener = TcpListener::bind(config.bind).await?;
    let addr = listener.local_addr()?;
    // small frames (TickAdvanced, errors) otherwise wait on delayed ACKs
    let listener = listener.tap_io(|tcp| {
        if let Err(e) = tcp.set_nodelay(true) {
            eprintln!("set_nodelay: {e}");
        }
    });
    let app = router(shared.clone());
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let pacing = tokio::spawn(pace(shared.clone()));
    let task = tokio::spawn(async move {
        let server = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = stop_rx.await;
        });
        if let Err(e) = server.await {
            eprintln!("server error: {e}");
        }
        pacing.abort();
    });
    Ok(ServerHandle {
        addr,
        shared,
        stop: Some(stop_tx),
        task,
    })
}

/// Serves until Ctrl-C, then writes the interaction log.
pub async fn serve(scenario: &Scenario, config: ServerConfig) -> std::io::Result<()> {
    let handle = start(scenario, config).await?;
    eprintln!("listening on {}", handle.addr);
    tokio::signal::ctrl_c().await?;
    handle.shutdown().await;
    Ok(())
}

fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/session", get(ws_upgrade))
        .route("/health", get(health))
        .route("/scenario", get(scenario_doc))
        .with_state(shared)
}

async fn health(State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    let s = shared.session.lock().expect("session lock");
    Json(json!({
        "status": if s.failed().is_some() { "failed" } else { "ok" },
        "tick": s.clock(),
        "paused": s.paused(),
        "ticks_per_second": s.tps(),
        "clients": shared.clients.load(Ordering::Relaxed),
    }))
}

async fn scenario_doc(State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    let doc = shared.session.lock().expect("session lock").scenario_doc().clone();
    Json(doc)
}

async fn pace(shared: Arc<Shared>) {
    loop {
        let (run, period) = {
            let s = shared.session.lock().expect("session lock");
            (s.wants_tick(), Duration::from_secs_f64(1.0 / s.tps()))
        };
        if run {
            let (out, log) = {
                let mut s = shared.session.lock().expect("session lock");
                let before = s.interaction_log();
                let out = s.tick();
                let after = s.interaction_log();
                let grew = after.schedule.len() != before.schedule.len()
                    || after.control_script.len() != before.control_script.len();
                (out, grew.then_some(after))
            };
            shared.publish(out);
            if let Some(log) = log {
                shared.write_log(&log);
            }
            tokio::select! {
                _ = tokio::time::sleep(period) => {}
                _ = shared.wake.notified() => {}
            }
        } else {
            shared.wake.notified().await;
        }
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn client(socket: WebSocket, shared: Arc<Shared>) {
    let id = shared.next_client.fetch_add(1, Ordering::Relaxed);
    shared.clients.fetch_add(1, Ordering::Relaxed);
    // subscribe under the session lock so no tick falls between the join
    // messages and the first broadcast
    let (join, mut rx) = {
        let s = shared.session.lock().expect("session lock");
        (s.join_messages(), shared.tx.subscribe())
    };
    let (mut sink, mut stream) = socket.split();
    let (direct_tx, mut direct_rx) = tokio::sync::mpsc::unbounded_channel::<String>();

    let writer = tokio::spawn(async move {
        for m in join {
            if sink.send(Message::Text(m.to_json().into())).await.is_err() {
                return;
            }
        }
        loop {
            let text: String = tokio::select! {
                b = rx.recv() => match b {
                    Ok((Audience::All, t)) => t.to_string(),
                    Ok((Audience::Client(c), t)) if c == id => t.to_string(),
                    Ok(_) => continue,
                    // fell behind: skip to the newest messages
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => return,
                },
                d = direct_rx.recv() => match d {
                    Some(t) => t,
                    None => return,
                },
            };
            if sink.send(Message::Text(text.into())).await.is_err() {
                return;
            }
        }
    });

    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let out = match serde_json::from_str::<ClientMessage>(&text) {
            Ok(m) => {
                let wake = matches!(m, ClientMessage::Step | ClientMessage::Resume | ClientMessage::Pace { .. });
                let out = shared.session.lock().expect("session lock").handle(id, m);
                if wake {
                    shared.wake.notify_one();
                }
                out
            }
            Err(e) => vec![(Audience::Client(id), ServerMessage::error("bad_message", e.to_string()))],
        };
        for (audience, m) in out {
            match audience {
                Audience::Client(_) => {
                    let _ = direct_tx.send(m.to_json());
                }
                Audience::All => shared.publish(vec![(audience, m)]),
            }
        }
    }
    drop(direct_tx);
    writer.abort();
    shared.clients.fetch_sub(1, Ordering::Relaxed);
}
