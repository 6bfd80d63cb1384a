//! Wire-level tests for the HTTP chat and embedding clients against a
//! scripted loopback server.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread::JoinHandle;
use std::time::Duration;

use casetime::chat::{chat_once, ChatError, HttpChatTransport, LlmConfig};
use casetime::embed::{Embedder, HttpEmbedder};

struct ScriptedServer {
    url: String,
    handle: JoinHandle<Vec<String>>,
}

impl ScriptedServer {
    /// Serve the scripted `(status, body)` responses in order, one
    /// connection each, recording request bodies.
    fn start(script: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, response_body) in script {
                let (mut stream, _) = listener.accept().unwrap();
                bodies.push(read_request_body(&mut stream));
                let reason = match status {
                    200 => "OK",
                    400 => "Bad Request",
                    401 => "Unauthorized",
                    500 => "Internal Server Error",
                    _ => "Other",
                };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{response_body}",
                    response_body.len(),
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
            bodies
        });
        ScriptedServer { url, handle }
    }

    fn finish(self) -> Vec<String> {
        self.handle.join().unwrap()
    }
}

fn read_request_body(stream: &mut TcpStream) -> String {
    let mut raw = Vec::new();
    let mut buf = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut buf).unwrap();
        raw.extend_from_slice(&buf[..n]);
        if let Some(pos) = raw.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
        assert!(n > 0, "connection closed before headers completed");
    };
    let headers = String::from_utf8_lossy(&raw[..header_end]).to_lowercase();
    let content_length: usize = headers
        .lines()
        .find_map(|l| l.strip_prefix("content-length:"))
        .map(|v| v.trim().parse().unwrap())
        .unwrap_or(0);
    while raw.len() < header_end + content_length {
        let n = stream.read(&mut buf).unwrap();
        assert!(n > 0, "connection closed before body completed");
        raw.extend_from_slice(&buf[..n]);
    }
    String::from_utf8_lossy(&raw[header_end..header_end + content_length]).into_owned()
}

fn chat_response(content: &str) -> String {
    serde_json::json!({
        "choices": [{ "message": { "role": "assistant", "content": content } }]
    })
    .to_string()
}

fn config_for(url: &str) -> LlmConfig {
    LlmConfig {
        endpoint_url: url.to_string(),
        retry_backoff: Duration::from_millis(1),
        request_timeout: Duration::from_secs(5),
        ..LlmConfig::gpt4()
    }
}

#[test]
fn chat_round_trip_sends_single_user_message() {
    let server = ScriptedServer::start(vec![(200, chat_response("fever | -72"))]);
    let transport = HttpChatTransport::new(Duration::from_secs(5)).with_api_key("test-key");
    let out = chat_once("the prompt", &config_for(&server.url), &transport).unwrap();
    assert_eq!(out, "fever | -72");

    let bodies = server.finish();
    let request: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(request["model"], "gpt-4");
    assert_eq!(request["temperature"], 0.0);
    assert_eq!(request["messages"].as_array().unwrap().len(), 1);
    assert_eq!(request["messages"][0]["role"], "user");
    assert_eq!(request["messages"][0]["content"], "the prompt");
}

#[test]
fn auth_rejection_is_not_retried() {
    let server = ScriptedServer::start(vec![(401, "{\"error\":\"bad key\"}".into())]);
    let transport = HttpChatTransport::new(Duration::from_secs(5));
    let config = LlmConfig {
        max_retries: 5,
        ..config_for(&server.url)
    };
    let err = chat_once("p", &config, &transport).unwrap_err();
    assert!(matches!(err, ChatError::Auth(_)));
    // Exactly one request reached the server; a retry would hang on accept.
    assert_eq!(server.finish().len(), 1);
}

#[test]
fn temperature_rejection_retries_at_one() {
    let server = ScriptedServer::start(vec![
        (400, "{\"error\":{\"message\":\"Unsupported value: 'temperature' does not support 0\"}}".into()),
        (200, chat_response("ok | 0")),
    ]);
    let transport = HttpChatTransport::new(Duration::from_secs(5));
    let out = chat_once("p", &config_for(&server.url), &transport).unwrap();
    assert_eq!(out, "ok | 0");
    let bodies = server.finish();
    let first: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    let second: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
    assert_eq!(first["temperature"], 0.0);
    assert_eq!(second["temperature"], 1.0);
}

#[test]
fn server_errors_are_retried_until_success() {
    let server = ScriptedServer::start(vec![
        (500, "{\"error\":\"flaky\"}".into()),
        (500, "{\"error\":\"flaky\"}".into()),
        (200, chat_response("recovered | 0")),
    ]);
    let transport = HttpChatTransport::new(Duration::from_secs(5));
    let config = LlmConfig {
        max_retries: 3,
        ..config_for(&server.url)
    };
    let out = chat_once("p", &config, &transport).unwrap();
    assert_eq!(out, "recovered | 0");
    assert_eq!(server.finish().len(), 3);
}

#[test]
fn embeddings_round_trip_batch_and_cache() {
    let response = serde_json::json!({
        "data": [
            { "embedding": [1.0, 0.0, 0.25] },
            { "embedding": [0.0, 1.0, -0.5] },
        ]
    })
    .to_string();
    let server = ScriptedServer::start(vec![(200, response)]);
    let cache = tempfile::tempdir().unwrap();
    let embedder = HttpEmbedder::new(server.url.clone(), "test-embed-model")
        .with_api_key("k")
        .with_cache_dir(cache.path());

    let first = embedder.embed(&["alpha", "beta"]).unwrap();
    assert_eq!(first[0].components, vec![1.0, 0.0, 0.25]);
    assert_eq!(first[1].components, vec![0.0, 1.0, -0.5]);
    assert_eq!(first[0].backend_tag, "test-embed-model");

    let bodies = server.finish();
    let request: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(request["model"], "test-embed-model");
    assert_eq!(request["input"], serde_json::json!(["alpha", "beta"]));

    // The server is gone; a second call must be served from the cache.
    let second = embedder.embed(&["beta", "alpha", "beta"]).unwrap();
    assert_eq!(second[0].components, first[1].components);
    assert_eq!(second[1].components, first[0].components);
    assert_eq!(second[2].components, first[1].components);
}

#[test]
fn malformed_embedding_counts_are_rejected() {
    let response = serde_json::json!({ "data": [ { "embedding": [1.0] } ] }).to_string();
    let server = ScriptedServer::start(vec![(200, response)]);
    let embedder = HttpEmbedder::new(server.url.clone(), "m");
    let err = embedder.embed(&["a", "b"]).unwrap_err();
    assert!(err.to_string().contains("2 inputs"));
    server.finish();
}
