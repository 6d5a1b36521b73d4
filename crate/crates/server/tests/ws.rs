use std::collections::HashSet;
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use grounding_core::engine::Status;
use grounding_server::bot::{self, BotScript};
use grounding_server::protocol::mentioned_ids;
use grounding_server::store::{load_file, STORE_FILE};
use grounding_server::{serve, AppState, ScaledClock, ServerConfig, ServerFrame};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

const SPEED: f64 = 100.0;

struct Running {
    url: String,
    state: AppState,
    dir: tempfile::TempDir,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
}

async fn start_in(dir: tempfile::TempDir, seed: u64) -> Running {
    let mut config = ServerConfig::new(dir.path().to_path_buf(), seed);
    config.tick_interval = Duration::from_millis(20);
    let state = AppState::new(config, Arc::new(ScaledClock::new(1_000_000, SPEED))).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("ws://{}/ws", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel();
    tokio::spawn(serve(listener, state.clone(), async {
        rx.await.ok();
    }));
    Running {
        url,
        state,
        dir,
        stop: Some(tx),
    }
}

async fn start(seed: u64) -> Running {
    start_in(tempfile::tempdir().unwrap(), seed).await
}

type Ws =
    tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn connect(url: &str) -> Ws {
    tokio_tungstenite::connect_async(url).await.unwrap().0
}

async fn next_frame(ws: &mut Ws) -> Option<ServerFrame> {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .ok()??;
        match msg.ok()? {
            Message::Text(t) => return Some(serde_json::from_str(t.as_str()).unwrap()),
            Message::Close(_) => return None,
            _ => continue,
        }
    }
}

async fn send_text(ws: &mut Ws, text: &str) {
    ws.send(Message::Text(text.to_string().into()))
        .await
        .unwrap();
}

async fn wait_for<F: Fn(&ServerFrame) -> bool>(ws: &mut Ws, pred: F) -> ServerFrame {
    loop {
        let f = next_frame(ws).await.expect("connection stayed open");
        if pred(&f) {
            return f;
        }
    }
}

#[tokio::test]
async fn two_joins_pair_with_seven_dots_each() {
    let srv = start(1).await;
    let mut a = connect(&srv.url).await;
    let mut b = connect(&srv.url).await;
    send_text(&mut a, r#"{"type":"join"}"#).await;
    assert_eq!(next_frame(&mut a).await, Some(ServerFrame::Queued));
    send_text(&mut b, r#"{"type":"join"}"#).await;
    for ws in [&mut a, &mut b] {
        let f = wait_for(ws, |f| matches!(f, ServerFrame::Paired { .. })).await;
        let ServerFrame::Paired {
            dots, observation, ..
        } = f
        else {
            unreachable!()
        };
        assert_eq!(dots.len(), 7);
        assert_eq!(observation.rows.len(), 7);
    }
}

#[tokio::test]
async fn three_joins_make_one_session_and_one_waiting() {
    let srv = start(2).await;
    let mut socks = Vec::new();
    for _ in 0..3 {
        let mut ws = connect(&srv.url).await;
        send_text(&mut ws, r#"{"type":"join"}"#).await;
        socks.push(ws);
    }
    tokio::time::sleep(Duration::from_millis(100)).await;
    let s = srv.state.status();
    assert_eq!(s.sessions_started, 1);
    assert_eq!(s.queued, 1);
    let f = next_frame(&mut socks[2]).await;
    assert!(matches!(
        f,
        Some(ServerFrame::Queued) | Some(ServerFrame::Paired { .. })
    ));
}

#[tokio::test]
async fn duplicate_join_while_waiting_is_an_error() {
    let srv = start(3).await;
    let mut a = connect(&srv.url).await;
    send_text(&mut a, r#"{"type":"join"}"#).await;
    assert_eq!(next_frame(&mut a).await, Some(ServerFrame::Queued));
    send_text(&mut a, r#"{"type":"join"}"#).await;
    let f = next_frame(&mut a).await.unwrap();
    assert!(
        matches!(f, ServerFrame::Error { ref code, .. } if code == "DuplicateJoin"),
        "{f:?}"
    );
    assert_eq!(srv.state.status().queued, 1);
}

#[tokio::test]
async fn leaving_the_queue_dequeues() {
    let srv = start(4).await;
    let mut a = connect(&srv.url).await;
    send_text(&mut a, r#"{"type":"join"}"#).await;
    assert_eq!(next_frame(&mut a).await, Some(ServerFrame::Queued));
    a.close(None).await.unwrap();
    tokio::time::sleep(Duration::from_millis(100)).await;
    assert_eq!(srv.state.status().queued, 0);
}

#[tokio::test]
async fn three_malformed_frames_drop_the_connection() {
    let srv = start(5).await;
    let mut a = connect(&srv.url).await;
    for i in 0..3 {
        send_text(&mut a, "{not json").await;
        let f = next_frame(&mut a).await;
        assert!(
            matches!(f, Some(ServerFrame::Error { ref code, .. }) if code == "MalformedFrame"),
            "strike {i}: {f:?}"
        );
    }
    assert_eq!(next_frame(&mut a).await, None);
}

#[tokio::test]
async fn frames_before_pairing_are_rejected() {
    let srv = start(6).await;
    let mut a = connect(&srv.url).await;
    send_text(&mut a, r#"{"type":"message","text":"hello"}"#).await;
    let f = next_frame(&mut a).await.unwrap();
    assert!(matches!(f, ServerFrame::Error { ref code, .. } if code == "NotInSession"));
}

#[tokio::test]
async fn partner_disconnect_expires_and_persists_once() {
    let srv = start(7).await;
    let stay = {
        let u = srv.url.clone();
        tokio::spawn(async move { bot::play(&u, BotScript::default()).await })
    };
    let leave = bot::play(
        &srv.url,
        BotScript {
            leave_after_pairing: true,
            ..BotScript::default()
        },
    )
    .await
    .unwrap();
    let stayed = stay.await.unwrap().unwrap();
    assert!(leave.session_id.is_some());
    assert!(matches!(
        stayed.outcome(),
        Some(ServerFrame::Outcome {
            status: Status::Expired,
            ..
        })
    ));
    let loaded = load_file(&srv.dir.path().join(STORE_FILE)).unwrap();
    assert_eq!(loaded.transcripts.len(), 1);
    assert_eq!(loaded.transcripts[0].outcome.status, Status::Expired);
    loaded.transcripts[0].validate().unwrap();
}

#[tokio::test]
async fn engine_errors_reach_only_the_sender() {
    let srv = start(8).await;
    let mut a = connect(&srv.url).await;
    let mut b = connect(&srv.url).await;
    send_text(&mut a, r#"{"type":"join"}"#).await;
    send_text(&mut b, r#"{"type":"join"}"#).await;
    let pa = wait_for(&mut a, |f| matches!(f, ServerFrame::Paired { .. })).await;
    wait_for(&mut b, |f| matches!(f, ServerFrame::Paired { .. })).await;
    let ServerFrame::Paired { observation, .. } = pa else {
        unreachable!()
    };
    // still reading, and selection locked
    send_text(
        &mut a,
        &format!(
            r#"{{"type":"select","entity_id":{}}}"#,
            observation.entity_ids[0]
        ),
    )
    .await;
    let f = wait_for(&mut a, |f| matches!(f, ServerFrame::Error { .. })).await;
    assert!(
        matches!(f, ServerFrame::Error { ref code, .. } if code == "NotActiveYet" || code == "TooEarlyToSelect"),
        "{f:?}"
    );
    // b only ever gets ticks meanwhile
    let f = next_frame(&mut b).await.unwrap();
    assert!(matches!(f, ServerFrame::Tick { .. }), "{f:?}");
}

async fn run_sessions(srv: &Running, n: usize) -> Vec<bot::BotReport> {
    let mut handles = Vec::new();
    for i in 0..2 * n {
        let url = srv.url.clone();
        handles.push(tokio::spawn(async move {
            bot::play(
                &url,
                BotScript {
                    pick_last: i % 3 == 0,
                    ..BotScript::default()
                },
            )
            .await
            .unwrap()
        }));
    }
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_sessions_persist_once_and_agree_on_order() {
    let srv = start(9).await;
    let reports = run_sessions(&srv, 10).await;
    let mut by_session: std::collections::HashMap<String, Vec<&bot::BotReport>> =
        Default::default();
    for r in &reports {
        by_session
            .entry(r.session_id.clone().unwrap())
            .or_default()
            .push(r);
        let view: HashSet<u32> = r.visible_ids.iter().copied().collect();
        for f in &r.frames {
            assert!(mentioned_ids(f).iter().all(|id| view.contains(id)), "{f:?}");
        }
        assert!(r.outcome().is_some());
    }
    assert_eq!(by_session.len(), 10);
    for pair in by_session.values() {
        assert_eq!(pair.len(), 2);
        assert_eq!(pair[0].messages(), pair[1].messages());
        assert!(!pair[0].messages().is_empty());
    }
    let loaded = load_file(&srv.dir.path().join(STORE_FILE)).unwrap();
    assert_eq!(loaded.transcripts.len(), 10);
    assert_eq!(loaded.duplicates, 0);
    for t in &loaded.transcripts {
        t.validate().unwrap();
    }
}

#[tokio::test]
async fn restart_keeps_store_and_numbering() {
    let mut srv = start(10).await;
    run_sessions(&srv, 2).await;
    srv.stop.take().unwrap().send(()).ok();
    let dir = srv.dir;
    let before = load_file(&dir.path().join(STORE_FILE)).unwrap().transcripts;
    assert_eq!(before.len(), 2);
    let srv = start_in(dir, 10).await;
    run_sessions(&srv, 1).await;
    let after = load_file(&srv.dir.path().join(STORE_FILE))
        .unwrap()
        .transcripts;
    assert_eq!(after.len(), 3);
    let ids: HashSet<_> = after.iter().map(|t| t.dialogue_id.clone()).collect();
    assert_eq!(ids.len(), 3);
}

#[tokio::test]
async fn serves_static_ui_directory() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<p>ui</p>").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServerConfig::new(dir.path().to_path_buf(), 1);
    config.ui_dir = Some(ui.path().to_path_buf());
    let state = AppState::new(config, Arc::new(ScaledClock::new(0, 1.0))).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, state, std::future::pending()));
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /index.html HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut body = String::new();
    stream.read_to_string(&mut body).await.unwrap();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.contains("<p>ui</p>"));
}

#[tokio::test]
async fn socket_can_join_again_after_outcome() {
    let srv = start(11).await;
    let mut a = connect(&srv.url).await;
    let mut b = connect(&srv.url).await;
    send_text(&mut a, r#"{"type":"join"}"#).await;
    send_text(&mut b, r#"{"type":"join"}"#).await;
    wait_for(&mut a, |f| matches!(f, ServerFrame::Paired { .. })).await;
    b.close(None).await.unwrap();
    let f = wait_for(&mut a, |f| matches!(f, ServerFrame::Outcome { .. })).await;
    assert!(matches!(
        f,
        ServerFrame::Outcome {
            status: Status::Expired,
            ..
        }
    ));
    send_text(&mut a, r#"{"type":"join"}"#).await;
    wait_for(&mut a, |f| matches!(f, ServerFrame::Queued)).await;
}
