//! Fan-out to browsers, the telemetry log and the HTTP endpoints.

mod common;

use carl_server::LogRecord;
use tokio::time::{sleep, Duration};

use common::{start, Client};

async fn get(addr: std::net::SocketAddr, path: &str) -> (u16, String) {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
    s.write_all(req.as_bytes()).await.unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).await.unwrap();
    let status = raw[9..12].parse().unwrap();
    let body = raw.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

/// Undo chunked transfer encoding if the server used it.
fn dechunk(body: &str) -> String {
    if !body.contains("\r\n") {
        return body.to_string();
    }
    let mut out = String::new();
    let mut rest = body;
    while let Some((size, tail)) = rest.split_once("\r\n") {
        let n = usize::from_str_radix(size.trim(), 16).unwrap_or(0);
        if n == 0 {
            break;
        }
        out.push_str(&tail[..n]);
        rest = &tail[n + 2..];
    }
    out
}

#[tokio::test]
async fn three_clients_receive_subsequences_and_log_holds_every_frame() {
    let h = start(30.0).await;
    let mut clients = Vec::new();
    for _ in 0..3 {
        clients.push(Client::connect(&h).await);
    }
    for k in 1..=100 {
        h.bridge.telemetry(k);
        if k % 10 == 0 {
            sleep(Duration::from_millis(5)).await;
        }
    }
    for c in &mut clients {
        c.until(|c| c.telemetry.last() == Some(&100)).await;
        assert!(c.telemetry.windows(2).all(|w| w[1] > w[0]));
    }
    h.server.log().sync().await;
    let records = carl_server::query_log(h.server.log().path(), 0, 1000).unwrap();
    assert_eq!(records.len(), 100);
    assert!(records.windows(2).all(|w| w[1].ts >= w[0].ts));
}

#[tokio::test]
async fn log_is_written_without_viewers() {
    let h = start(30.0).await;
    for k in 1..=20 {
        h.bridge.telemetry(k);
    }
    sleep(Duration::from_millis(50)).await;
    h.server.log().sync().await;
    assert_eq!(h.server.log().appended(), 20);
}

#[tokio::test]
async fn log_endpoint_filters_and_limits() {
    let h = start(30.0).await;
    let (status, body) = get(h.server.http_addr, "/api/log?since=0").await;
    assert_eq!(status, 200);
    assert_eq!(dechunk(&body), "[]");

    for k in 1..=50 {
        h.bridge.telemetry(k);
    }
    sleep(Duration::from_millis(30)).await;
    let cut = carl_server::log::unix_ms() + 1;
    sleep(Duration::from_millis(5)).await;
    for k in 51..=100 {
        h.bridge.telemetry(k);
    }
    sleep(Duration::from_millis(30)).await;

    let (_, body) = get(h.server.http_addr, "/api/log?since=0&limit=10").await;
    let first: Vec<LogRecord> = serde_json::from_str(&dechunk(&body)).unwrap();
    assert_eq!(first.iter().map(|r| r.seq).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());

    let (_, body) = get(h.server.http_addr, &format!("/api/log?since={cut}")).await;
    let suffix: Vec<LogRecord> = serde_json::from_str(&dechunk(&body)).unwrap();
    assert_eq!(suffix.iter().map(|r| r.seq).collect::<Vec<_>>(), (51..=100).collect::<Vec<_>>());
}

#[tokio::test]
async fn robot_document_and_static_assets_are_served() {
    let h = start(30.0).await;
    let (status, body) = get(h.server.http_addr, "/api/robot").await;
    assert_eq!(status, 200);
    let v: serde_json::Value = serde_json::from_str(&dechunk(&body)).unwrap();
    assert_eq!(v["frames"][0], "right_palm");
    let (status, body) = get(h.server.http_addr, "/static/index.html").await;
    assert_eq!(status, 200);
    assert!(body.contains("panel"));
    let (status, _) = get(h.server.http_addr, "/").await;
    assert_eq!(status, 200);
    let (status, _) = get(h.server.http_addr, "/static/missing.js").await;
    assert_eq!(status, 404);
}
