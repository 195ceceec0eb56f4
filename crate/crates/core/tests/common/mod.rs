#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use ldp_audit::io::synthetic_embeddings;
use ldp_audit::{AuditData, Corpus, TextRecord};

/// A request seen by the mock judge.
#[derive(Debug, Clone)]
pub struct SeenRequest {
    pub path: String,
    pub authorization: Option<String>,
    pub body: serde_json::Value,
}

pub struct MockJudge {
    pub base_url: String,
    pub requests: Arc<AtomicUsize>,
    pub seen: Arc<std::sync::Mutex<Vec<SeenRequest>>>,
}

type Reply = dyn Fn(&SeenRequest, usize) -> (u16, String) + Send + Sync;

/// Wraps `content` in a chat-completions response body.
pub fn completion(content: &str) -> String {
    serde_json::json!({
        "id": "mock",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

fn handle(stream: TcpStream, reply: &Reply, counter: &AtomicUsize, seen: &std::sync::Mutex<Vec<SeenRequest>>) {
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut length = 0usize;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let value = value.trim();
            if name.eq_ignore_ascii_case("content-length") {
                length = value.parse().unwrap_or(0);
            } else if name.eq_ignore_ascii_case("authorization") {
                authorization = Some(value.to_string());
            }
        }
    }
    let mut body = vec![0u8; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let request = SeenRequest {
        path,
        authorization,
        body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
    };
    let index = counter.fetch_add(1, Ordering::SeqCst);
    let (status, payload) = reply(&request, index);
    seen.lock().unwrap().push(request);
    let reason = if status == 200 { "OK" } else { "Error" };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let mut stream = stream;
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}

/// Serves chat completions on a random local port. `reply` gets each request
/// and its arrival index and returns a status code and body.
pub fn spawn_mock_judge<F>(reply: F) -> MockJudge
where
    F: Fn(&SeenRequest, usize) -> (u16, String) + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock judge");
    let port = listener.local_addr().unwrap().port();
    let reply: Arc<Reply> = Arc::new(reply);
    let requests = Arc::new(AtomicUsize::new(0));
    let seen = Arc::new(std::sync::Mutex::new(Vec::new()));
    let (counter, log) = (requests.clone(), seen.clone());
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let (reply, counter, log) = (reply.clone(), counter.clone(), log.clone());
            thread::spawn(move || handle(stream, reply.as_ref(), &counter, &log));
        }
    });
    MockJudge {
        base_url: format!("http://127.0.0.1:{port}/v1"),
        requests,
        seen,
    }
}

/// Corpus of `n` single-token records over a random unit-vector table.
pub fn singleton_data(n: usize, dim: usize, seed: u64) -> AuditData {
    let records = (0..n)
        .map(|i| TextRecord::new(i as u64, vec![i as u32]).with_text(format!("record {i}")))
        .collect();
    AuditData::new(
        Corpus::new(records, "memory").unwrap(),
        synthetic_embeddings(n, dim, seed).unwrap(),
    )
    .unwrap()
}
