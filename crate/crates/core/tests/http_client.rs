mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{FakeServer, Reply};
use genrank::llm::{Backend, BackendConfig, ChatMessage, ChatRequest, HttpBackend, LlmError};

fn config(server: &FakeServer) -> BackendConfig {
    BackendConfig {
        base_url: server.url.clone(),
        retry_base_ms: 1,
        max_retries: 3,
        timeout_ms: 5_000,
        ..Default::default()
    }
}

fn request() -> ChatRequest {
    ChatRequest::new("gpt-4o-mini", vec![ChatMessage::system("You rank passages."), ChatMessage::user("Query: x")], 64)
        .unwrap()
}

#[test]
fn sends_openai_shaped_request() {
    let server = FakeServer::start(vec![Reply::ok("[2] > [1]")]);
    let backend = HttpBackend::with_api_key(config(&server), "sk-test").unwrap();
    let resp = backend.complete(&request()).unwrap();
    assert_eq!(resp.content, "[2] > [1]");
    assert_eq!((resp.prompt_tokens, resp.completion_tokens), (10, 2));

    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    let r = &reqs[0];
    assert_eq!(r.method, "POST");
    assert_eq!(r.path, "/v1/chat/completions");
    assert_eq!(r.header("authorization"), Some("Bearer sk-test"));
    assert!(r.header("content-type").unwrap().starts_with("application/json"));
    let body: serde_json::Value = serde_json::from_str(&r.body).unwrap();
    assert_eq!(
        body,
        serde_json::json!({
            "model": "gpt-4o-mini",
            "messages": [
                {"role": "system", "content": "You rank passages."},
                {"role": "user", "content": "Query: x"}
            ],
            "temperature": 0,
            "max_tokens": 64
        })
    );
}

#[test]
fn empty_key_sends_no_authorization() {
    let server = FakeServer::start(vec![Reply::ok("1")]);
    let backend = HttpBackend::with_api_key(config(&server), "").unwrap();
    backend.complete(&request()).unwrap();
    assert_eq!(server.requests()[0].header("authorization"), None);
}

#[test]
fn retries_429_then_succeeds() {
    let server = FakeServer::start(vec![Reply::new(429, r#"{"error":"slow down"}"#), Reply::ok("A")]);
    let backend = HttpBackend::with_api_key(config(&server), "k").unwrap();
    assert_eq!(backend.complete(&request()).unwrap().content, "A");
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn retries_server_errors() {
    let server = FakeServer::start(vec![Reply::new(500, "oops"), Reply::new(503, "busy"), Reply::ok("B")]);
    let backend = HttpBackend::with_api_key(config(&server), "k").unwrap();
    assert_eq!(backend.complete(&request()).unwrap().content, "B");
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn unauthorized_is_not_retried() {
    let server = FakeServer::start(vec![Reply::new(401, r#"{"error":"bad key"}"#), Reply::ok("never")]);
    let backend = HttpBackend::with_api_key(config(&server), "wrong").unwrap();
    match backend.complete(&request()) {
        Err(LlmError::Endpoint { status, body }) => {
            assert_eq!(status, 401);
            assert!(body.contains("bad key"));
        }
        other => panic!("expected endpoint error, got {other:?}"),
    }
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn retry_cap_is_respected() {
    let server = FakeServer::start(vec![Reply::new(429, "{}")]);
    let cfg = BackendConfig { max_retries: 2, ..config(&server) };
    let backend = HttpBackend::with_api_key(cfg, "k").unwrap();
    match backend.complete(&request()) {
        Err(LlmError::RetriesExhausted { attempts, last }) => {
            assert_eq!(attempts, 3);
            assert!(last.contains("429"), "{last}");
        }
        other => panic!("expected exhausted retries, got {other:?}"),
    }
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn zero_retries_means_one_attempt() {
    let server = FakeServer::start(vec![Reply::new(503, "{}")]);
    let cfg = BackendConfig { max_retries: 0, ..config(&server) };
    let backend = HttpBackend::with_api_key(cfg, "k").unwrap();
    assert!(matches!(backend.complete(&request()), Err(LlmError::RetriesExhausted { attempts: 1, .. })));
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn timeouts_are_retried() {
    let server = FakeServer::start(vec![Reply::ok("late").delayed(Duration::from_millis(800)), Reply::ok("on time")]);
    let cfg = BackendConfig { timeout_ms: 200, ..config(&server) };
    let backend = HttpBackend::with_api_key(cfg, "k").unwrap();
    assert_eq!(backend.complete(&request()).unwrap().content, "on time");
}

#[test]
fn connection_refused_exhausts_retries() {
    // Bind then drop to get a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = BackendConfig {
        base_url: format!("http://127.0.0.1:{port}"),
        retry_base_ms: 1,
        max_retries: 1,
        ..Default::default()
    };
    let backend = HttpBackend::with_api_key(cfg, "k").unwrap();
    assert!(matches!(backend.complete(&request()), Err(LlmError::RetriesExhausted { attempts: 2, .. })));
}

#[test]
fn malformed_success_body_is_a_protocol_error() {
    let server = FakeServer::start(vec![Reply::new(200, "not json")]);
    let backend = HttpBackend::with_api_key(config(&server), "k").unwrap();
    assert!(matches!(backend.complete(&request()), Err(LlmError::Protocol(_))));
}

#[test]
fn in_flight_limit_holds_under_concurrency() {
    let server = FakeServer::start(vec![Reply::ok("1").delayed(Duration::from_millis(40))]);
    let cfg = BackendConfig { max_in_flight: 2, ..config(&server) };
    let backend = Arc::new(HttpBackend::with_api_key(cfg, "k").unwrap());
    std::thread::scope(|s| {
        for _ in 0..8 {
            let b = backend.clone();
            s.spawn(move || b.complete(&request()).unwrap());
        }
    });
    assert_eq!(server.requests().len(), 8);
    assert!(server.max_in_flight() <= 2, "saw {}", server.max_in_flight());
}
