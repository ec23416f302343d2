//! Session service over a real socket: raw HTTP/1.1 for create/delete and a
//! scripted WebSocket client for the live loop.

use std::net::SocketAddr;
use std::time::Duration;

use aif_cli::server::{serve, ServeOptions};
use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(opts: ServeOptions) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, opts));
    addr
}

/// Minimal HTTP/1.1 exchange; returns status and body.
async fn http(addr: SocketAddr, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut stream = TcpStream::connect(addr).await.unwrap();
    let request = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(request.as_bytes()).await.unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).await.unwrap();
    let status = raw.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = raw
        .split_once("\r\n\r\n")
        .map(|(_, b)| b.to_string())
        .unwrap_or_default();
    (status, body)
}

async fn create(addr: SocketAddr, body: &str) -> Value {
    let (status, body) = http(addr, "POST", "/session", body).await;
    assert_eq!(status, 200, "{body}");
    serde_json::from_str(&body).unwrap()
}

async fn open(addr: SocketAddr, id: &str) -> Socket {
    let (ws, _) = connect_async(format!("ws://{addr}/session/{id}/ws")).await.unwrap();
    ws
}

async fn next_event(ws: &mut Socket) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("event within 10s")
            .expect("socket open")
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

/// Reads events until one of type `kind`, returning everything read.
async fn until(ws: &mut Socket, kind: &str) -> Vec<Value> {
    let mut seen = Vec::new();
    loop {
        let e = next_event(ws).await;
        let done = e["type"] == kind;
        seen.push(e);
        if done {
            return seen;
        }
    }
}

async fn send(ws: &mut Socket, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

fn check_belief(e: &Value, n: usize) {
    let dist = e["dist"].as_array().unwrap();
    assert_eq!(dist.len(), n);
    let total: f64 = dist.iter().map(|p| p.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() <= 1e-6, "belief sums to {total}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn truthful_play_for_eleven_bisects_and_commits() {
    let addr = start(ServeOptions::default()).await;
    let created = create(addr, r#"{"n": 16, "epsilon": 0}"#).await;
    assert_eq!(created["next"], json!({"type": "query", "cutpoint": 8}));
    let id = created["id"].as_str().unwrap();
    let mut ws = open(addr, id).await;

    let target = 11;
    let mut cutpoints = Vec::new();
    let mut events = until(&mut ws, "query").await;
    assert_eq!(events[0]["type"], "created");
    loop {
        let last = events.last().unwrap().clone();
        for e in events.iter().filter(|e| e["type"] == "belief") {
            check_belief(e, 16);
        }
        if last["type"] == "commit" {
            assert_eq!(last["n"], target);
            break;
        }
        let c = last["cutpoint"].as_u64().unwrap() as usize;
        cutpoints.push(c);
        let bit = if target >= c { "above" } else { "below" };
        send(&mut ws, json!({"type": "response", "bit": bit})).await;
        events = Vec::new();
        loop {
            let e = next_event(&mut ws).await;
            let stop = e["type"] == "query" || e["type"] == "commit";
            events.push(e);
            if stop {
                break;
            }
        }
        assert_eq!(events[0]["type"], "response");
        let efe = events
            .iter()
            .find(|e| e["type"] == "efe")
            .expect("efe summary per step");
        let entry = &efe["entries"][0];
        for key in ["action", "value", "info_gain", "pragmatic"] {
            assert!(entry.get(key).is_some(), "efe entry lacks {key}");
        }
    }
    assert_eq!(cutpoints, [8, 12, 10, 11]);

    // flips are disclosed only now, one per answer
    let mut flips = Vec::new();
    while flips.len() < 4 {
        let e = next_event(&mut ws).await;
        assert_eq!(e["type"], "flipped");
        flips.push(e["flipped"].as_bool().unwrap());
    }
    assert_eq!(flips, [false; 4]);

    send(&mut ws, json!({"type": "response", "bit": 1})).await;
    let err = next_event(&mut ws).await;
    assert_eq!(
        (err["type"].as_str(), err["code"].as_str()),
        (Some("error"), Some("wrong_phase"))
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn reconnect_replays_the_log() {
    let addr = start(ServeOptions::default()).await;
    let id = create(addr, "").await["id"].as_str().unwrap().to_string();
    let mut ws = open(addr, &id).await;
    let mut first = until(&mut ws, "query").await;
    send(&mut ws, json!({"type": "response", "bit": 0})).await;
    first.extend(until(&mut ws, "query").await);
    drop(ws);

    let mut again = open(addr, &id).await;
    let mut replay = Vec::new();
    while replay.len() < first.len() {
        replay.push(next_event(&mut again).await);
    }
    assert_eq!(replay, first);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn every_socket_on_a_session_sees_new_events() {
    let addr = start(ServeOptions::default()).await;
    let id = create(addr, "").await["id"].as_str().unwrap().to_string();
    let mut a = open(addr, &id).await;
    let mut b = open(addr, &id).await;
    until(&mut a, "query").await;
    until(&mut b, "query").await;
    send(&mut a, json!({"type": "response", "bit": 1})).await;
    let seen = until(&mut b, "query").await;
    assert_eq!(seen[0], json!({"type": "response", "bit": 1}));
    assert_eq!(seen.last().unwrap()["cutpoint"], 12);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_messages_get_error_events() {
    let addr = start(ServeOptions::default()).await;
    let id = create(addr, "").await["id"].as_str().unwrap().to_string();
    let mut ws = open(addr, &id).await;
    until(&mut ws, "query").await;
    for bad in [
        json!({"type": "response", "bit": 7}),
        json!({"type": "dance"}),
        json!("nope"),
    ] {
        send(&mut ws, bad).await;
        let e = next_event(&mut ws).await;
        assert_eq!(
            (e["type"].as_str(), e["code"].as_str()),
            (Some("error"), Some("bad_message"))
        );
    }
    send(&mut ws, json!({"type": "abort", "reason": "bored"})).await;
    let e = next_event(&mut ws).await;
    assert_eq!(e, json!({"type": "aborted", "reason": "bored"}));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn http_create_and_delete() {
    let addr = start(ServeOptions::default()).await;
    let a = create(addr, "{}").await;
    let b = create(addr, "{}").await;
    assert_ne!(a["id"], b["id"]);
    let belief = &a["belief"];
    check_belief(belief, 16);

    let two = create(addr, r#"{"n": 2}"#).await;
    assert_eq!(two["next"]["cutpoint"], 1);

    let (status, body) = http(addr, "POST", "/session", r#"{"horizn": 2}"#).await;
    assert_eq!(status, 400);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["code"], "invalid_config");

    let id = a["id"].as_str().unwrap();
    let (status, _) = http(addr, "DELETE", &format!("/session/{id}"), "").await;
    assert_eq!(status, 204);
    let (status, body) = http(addr, "DELETE", &format!("/session/{id}"), "").await;
    assert_eq!(status, 409, "{body}");

    let mut ws = open(addr, id).await;
    let log = until(&mut ws, "aborted").await;
    assert_eq!(log[0]["type"], "created");

    let (status, body) = http(addr, "DELETE", "/session/nope", "").await;
    assert_eq!(status, 404);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["code"], "unknown_session");
    assert!(connect_async(format!("ws://{addr}/session/nope/ws")).await.is_err());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn session_limit_is_enforced() {
    let opts = ServeOptions {
        store: aif_core::StoreConfig {
            ttl_secs: 600,
            max_sessions: 2,
        },
        static_dir: None,
    };
    let addr = start(opts).await;
    create(addr, "").await;
    create(addr, "").await;
    let (status, body) = http(addr, "POST", "/session", "").await;
    assert_eq!(status, 503);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["code"], "capacity");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn static_assets_are_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>client</h1>").unwrap();
    let addr = start(ServeOptions {
        static_dir: Some(dir.path().to_path_buf()),
        ..ServeOptions::default()
    })
    .await;
    let (status, body) = http(addr, "GET", "/index.html", "").await;
    assert_eq!((status, body.as_str()), (200, "<h1>client</h1>"));
    let (status, _) = http(addr, "GET", "/", "").await;
    assert_eq!(status, 200);

    let bare = start(ServeOptions::default()).await;
    let (status, body) = http(bare, "GET", "/", "").await;
    assert_eq!(status, 200);
    assert!(body.contains("--static-dir"));
}
