//! Exercises the HTTP backend against a minimal local chat-completion
//! server on a loopback socket.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::thread;

use skillbank_core::modelgw::{
    GatewayError, HttpBackend, HttpBackendConfig, ModelGateway, ModelRequest, Role,
};

/// Serves `responses` one connection at a time and captures request bodies.
fn spawn_server(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let addr = listener.local_addr().unwrap();
    let handle = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().expect("accept");
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let request = loop {
                let n = stream.read(&mut chunk).expect("read");
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf).into_owned();
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let content_length = text
                        .lines()
                        .find_map(|l| {
                            l.to_lowercase()
                                .strip_prefix("content-length:")
                                .map(str::trim)
                                .map(String::from)
                        })
                        .and_then(|v| v.parse::<usize>().ok())
                        .unwrap_or(0);
                    if buf.len() >= header_end + 4 + content_length {
                        break text[header_end + 4..].to_string();
                    }
                }
            };
            bodies.push(request);
            let reply = format!(
                "HTTP/1.1 {status} OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).expect("write");
        }
        bodies
    });
    (format!("http://{addr}/v1/chat/completions"), handle)
}

fn completion_json(text: &str) -> String {
    serde_json::json!({
        "id": "cmpl-1",
        "model": "stub-model",
        "choices": [{ "index": 0, "message": { "role": "assistant", "content": text } }]
    })
    .to_string()
}

#[test]
fn http_backend_round_trip() {
    let (url, server) = spawn_server(vec![(200, completion_json("1. close the drawer"))]);
    let mut cfg = HttpBackendConfig::new(url);
    cfg.token = Some("test-token".into());
    let backend = HttpBackend::new(cfg).unwrap();
    let request = ModelRequest::new(Role::Extractor, "vid/extract/0")
        .with_text("List the steps as a numbered list.");
    let response = backend.complete(&request).unwrap();
    assert_eq!(response.text, "1. close the drawer");
    assert_eq!(response.backend_id, "stub-model");

    let bodies = server.join().unwrap();
    let body: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"][0]["type"], "text");
    assert!(body["messages"][0]["content"][0]["text"]
        .as_str()
        .unwrap()
        .contains("numbered list"));
}

#[test]
fn http_backend_maps_error_statuses() {
    let (url, server) = spawn_server(vec![(500, "{}".into())]);
    let backend = HttpBackend::new(HttpBackendConfig::new(url)).unwrap();
    let request = ModelRequest::new(Role::Planner, "go").with_text("plan");
    match backend.complete(&request) {
        Err(GatewayError::BackendUnavailable(msg)) => assert!(msg.contains("500"), "{msg}"),
        other => panic!("expected BackendUnavailable, got {other:?}"),
    }
    server.join().unwrap();
}

#[test]
fn http_backend_rejects_malformed_payloads() {
    let (url, server) = spawn_server(vec![(200, r#"{"choices": []}"#.into())]);
    let backend = HttpBackend::new(HttpBackendConfig::new(url)).unwrap();
    let request = ModelRequest::new(Role::Planner, "go").with_text("plan");
    assert!(matches!(
        backend.complete(&request),
        Err(GatewayError::MalformedResponse(_))
    ));
    server.join().unwrap();

    let (url, server) = spawn_server(vec![(200, "not json at all".into())]);
    let backend = HttpBackend::new(HttpBackendConfig::new(url)).unwrap();
    assert!(matches!(
        backend.complete(&request),
        Err(GatewayError::MalformedResponse(_))
    ));
    server.join().unwrap();
}

#[test]
fn http_backend_refuses_unreachable_endpoint() {
    // Reserved TEST-NET address; the connection must fail fast.
    let mut cfg = HttpBackendConfig::new("http://127.0.0.1:1/v1/chat/completions");
    cfg.timeout = std::time::Duration::from_millis(500);
    let backend = HttpBackend::new(cfg).unwrap();
    let request = ModelRequest::new(Role::Planner, "go").with_text("plan");
    assert!(matches!(
        backend.complete(&request),
        Err(GatewayError::BackendUnavailable(_))
    ));
}
