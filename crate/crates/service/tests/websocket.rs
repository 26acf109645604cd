use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use streamgraft_core::parse_scenario;
use streamgraft_service::protocol::decode_pixels;
use streamgraft_service::{start, ServerConfig, ServerHandle, ServerMessage};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

const DOC: &str = r#"{
    "seed": 5,
    "grid": {"width": 24, "height": 16},
    "ticks": 100,
    "templates": [
        {"name": "main", "main": true, "vertices": [
            {"name": "img", "kind": "constant", "pattern": {"type": "ramp", "axis": "x", "from": -0.8, "to": 0.8}},
            {"name": "wave", "kind": "wave", "sources": ["img"]},
            {"name": "alpha", "kind": "numeric_control", "value": 0.5},
            {"name": "mix", "kind": "sum_of_2", "sources": ["wave", "img", "alpha"]}
        ]}
    ],
    "outputs": [{"vertex": "main.wave"}, {"vertex": "main.mix"}]
}"#;

async fn server(paused: bool, tps: f64) -> ServerHandle {
    let scenario = parse_scenario(DOC).unwrap();
    start(
        &scenario,
        ServerConfig {
            bind: "127.0.0.1:0".parse().unwrap(),
            tps,
            log_path: None,
            start_paused: paused,
        },
    )
    .await
    .unwrap()
}

async fn connect(h: &ServerHandle) -> Ws {
    let (ws, _) = connect_async(format!("ws://{}/session", h.addr)).await.unwrap();
    ws
}

async fn send(ws: &mut Ws, text: &str) {
    ws.send(Message::Text(text.into())).await.unwrap();
}

async fn next(ws: &mut Ws) -> Option<ServerMessage> {
    loop {
        match tokio::time::timeout(Duration::from_millis(400), ws.next()).await {
            Ok(Some(Ok(Message::Text(t)))) => return Some(serde_json::from_str(&t).unwrap()),
            Ok(Some(Ok(_))) => continue,
            _ => return None,
        }
    }
}

/// Everything that arrives until the connection goes quiet.
async fn drain(ws: &mut Ws) -> Vec<ServerMessage> {
    let mut out = Vec::new();
    while let Some(m) = next(ws).await {
        out.push(m);
    }
    out
}

/// Sends a message the server always rejects and waits for the answer, so
/// everything this client sent before has been handled.
async fn barrier(ws: &mut Ws) {
    send(ws, r#"{"type":"pace","ticks_per_second":-1}"#).await;
    loop {
        if let Some(ServerMessage::Error { code, .. }) = next(ws).await {
            assert_eq!(code, "invalid_value");
            return;
        }
    }
}

#[tokio::test]
async fn joining_mid_run_gets_snapshot_then_frames() {
    let h = server(false, 200.0).await;
    while h.clock() < 5 {
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    let mut ws = connect(&h).await;
    let first = next(&mut ws).await.unwrap();
    assert!(matches!(first, ServerMessage::GraphSnapshot { .. }), "{first:?}");
    for _ in 0..2 {
        match next(&mut ws).await.unwrap() {
            ServerMessage::Frame { width, height, pixels, .. } => {
                assert_eq!((width, height), (24, 16));
                assert_eq!(decode_pixels(&pixels).unwrap().len(), width * height);
            }
            other => panic!("expected a frame, got {other:?}"),
        }
    }
    h.shutdown().await;
}

#[tokio::test]
async fn pause_then_step_advances_exactly_once() {
    let h = server(false, 100.0).await;
    let mut ws = connect(&h).await;
    send(&mut ws, r#"{"type":"pause"}"#).await;
    barrier(&mut ws).await;
    drain(&mut ws).await;
    let before = h.clock();
    send(&mut ws, r#"{"type":"step"}"#).await;
    let msgs = drain(&mut ws).await;
    let advanced: Vec<_> = msgs.iter().filter(|m| matches!(m, ServerMessage::TickAdvanced { .. })).collect();
    assert_eq!(advanced.len(), 1, "{msgs:?}");
    assert_eq!(h.clock(), before + 1);
    h.shutdown().await;
}

#[tokio::test]
async fn conflicting_set_controls_apply_in_arrival_order() {
    let h = server(true, 30.0).await;
    let mut a = connect(&h).await;
    let mut b = connect(&h).await;
    drain(&mut a).await;
    drain(&mut b).await;
    send(&mut a, r#"{"type":"set_control","vertex":"main.alpha","value":0.1}"#).await;
    barrier(&mut a).await;
    send(&mut b, r#"{"type":"set_control","vertex":"main.mix","value":0.9}"#).await;
    barrier(&mut b).await;
    send(&mut a, r#"{"type":"step"}"#).await;
    let values: Vec<f64> = drain(&mut a)
        .await
        .into_iter()
        .filter_map(|m| match m {
            ServerMessage::ControlState { value, .. } => value,
            _ => None,
        })
        .collect();
    assert_eq!(values, vec![0.1, 0.9]);
    let log = h.shutdown().await;
    assert_eq!(log.control_script.len(), 2);
    assert!(log.control_script.iter().all(|c| c.tick == 0));
}

#[tokio::test]
async fn bad_requests_get_errors_and_the_engine_keeps_going() {
    let h = server(false, 200.0).await;
    let mut ws = connect(&h).await;
    send(&mut ws, r#"{"type":"click","vertex":"main.img","x":1,"y":1}"#).await;
    send(&mut ws, r#"{"type":"click","vertex":"main.wave","x":1,"y":99}"#).await;
    send(&mut ws, r#"not json"#).await;
    let mut codes = Vec::new();
    while codes.len() < 3 {
        if let Some(ServerMessage::Error { code, .. }) = next(&mut ws).await {
            codes.push(code);
        }
    }
    assert_eq!(codes, vec!["no_control", "out_of_bounds", "bad_message"]);
    let t = h.clock();
    tokio::time::sleep(Duration::from_millis(100)).await;
    assert!(h.clock() > t);
    h.shutdown().await;
}

#[tokio::test]
async fn slow_clients_do_not_stall_ticks() {
    let h = server(false, 1000.0).await;
    // connected but never read from
    let _idle = connect(&h).await;
    let t = h.clock();
    tokio::time::sleep(Duration::from_millis(600)).await;
    assert!(h.clock() > t + 100, "only {} ticks", h.clock() - t);
    h.shutdown().await;
}

#[tokio::test]
async fn http_endpoints() {
    let h = server(true, 30.0).await;
    let health: serde_json::Value = reqwest::get(format!("http://{}/health", h.addr)).await.unwrap().json().await.unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["paused"], true);
    assert_eq!(health["tick"], 0);
    let doc: serde_json::Value = reqwest::get(format!("http://{}/scenario", h.addr)).await.unwrap().json().await.unwrap();
    assert_eq!(doc["seed"], 5);
    assert_eq!(doc["outputs"].as_array().unwrap().len(), 2);
    h.shutdown().await;
}

#[tokio::test]
async fn click_restarts_the_wave_on_the_next_tick() {
    let h = server(true, 30.0).await;
    let mut ws = connect(&h).await;
    drain(&mut ws).await;
    send(&mut ws, r#"{"type":"step"}"#).await;
    send(&mut ws, r#"{"type":"step"}"#).await;
    drain(&mut ws).await;
    send(&mut ws, r#"{"type":"click","vertex":"main.wave","x":10,"y":12}"#).await;
    send(&mut ws, r#"{"type":"step"}"#).await;
    let msgs = drain(&mut ws).await;
    let state = msgs.iter().find_map(|m| match m {
        ServerMessage::ControlState { center, tick, .. } => Some((*center, *tick)),
        _ => None,
    });
    assert_eq!(state, Some((Some([10.0, 12.0]), 2)));
    let log = h.shutdown().await;
    assert_eq!(log.control_script[0].tick, 2);
    assert_eq!(log.ticks, 3);
}
