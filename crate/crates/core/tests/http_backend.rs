//! HttpTransport against a scripted in-process HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use cic::backends::{
    BackendError, Backends, ChatMessage, ChatParams, Endpoint, HttpConfig, HttpTransport, ImagePayload, ImageRef,
    Region, RetryPolicy,
};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    authorization: Option<String>,
    body: Value,
}

type Handler = Box<dyn Fn(&str, &Value, usize) -> (u16, Value) + Send>;

/// Serves one request per connection until the handle is dropped.
struct Server {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

impl Server {
    fn start(handler: Handler) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    continue;
                }
                let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
                let mut length = 0;
                let mut authorization = None;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    let h = h.trim_end();
                    if h.is_empty() {
                        break;
                    }
                    let (name, value) = h.split_once(':').unwrap();
                    match name.to_ascii_lowercase().as_str() {
                        "content-length" => length = value.trim().parse().unwrap(),
                        "authorization" => authorization = Some(value.trim().to_string()),
                        _ => {}
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                let n = {
                    let mut seen = log.lock().unwrap();
                    seen.push(Seen { path: path.clone(), authorization, body: body.clone() });
                    seen.len()
                };
                let (status, reply) = handler(&path, &body, n);
                let text = reply.to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
            }
        });
        Self { url, seen }
    }

    fn seen(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn config(url: &str) -> HttpConfig {
    let mut cfg = HttpConfig::new(url);
    cfg.retry = RetryPolicy { attempts: 3, base_delay: Duration::from_millis(1) };
    cfg.timeout = Duration::from_secs(5);
    cfg
}

fn backends(cfg: HttpConfig) -> Backends {
    Backends::new(Arc::new(HttpTransport::new(cfg)))
}

fn image() -> ImageRef {
    ImageRef::new("market", "images/market.jpg", Region::Africa)
}

/// Answers every endpoint of the protocol with well-formed bodies.
fn protocol_handler(path: &str, body: &Value, _: usize) -> (u16, Value) {
    let reply = match path {
        "/v1/caption" => json!({"caption": "A woman standing in front of a house.", "model": "cap"}),
        "/v1/vqa" => json!({"answer": format!("kenya style for {}", body["image_id"].as_str().unwrap()), "model": "vqa"}),
        "/v1/chat" => {
            let last = body["messages"].as_array().unwrap().last().unwrap()["content"].clone();
            json!({"text": last, "model": "llm"})
        }
        "/v1/embed_text" => {
            let n = body["texts"].as_array().unwrap().len();
            json!({"vectors": vec![vec![1.0, 0.0, 2.0]; n], "model": "emb"})
        }
        "/v1/embed_image" => json!({"vector": [0.5, 0.5, 0.0], "model": "clip"}),
        _ => return (404, json!({"error": {"code": "not_found", "message": path}})),
    };
    (200, reply)
}

#[test]
fn all_endpoints_round_trip() {
    let server = Server::start(Box::new(protocol_handler));
    let b = backends(config(&server.url));
    assert_eq!(b.caption(&image()).unwrap(), "A woman standing in front of a house.");
    assert_eq!(b.vqa(&image(), "What style?").unwrap(), "kenya style for market");
    let params = ChatParams::default();
    assert_eq!(b.chat(&[ChatMessage::user("hello")], params).unwrap(), "hello");
    let v = b.embed_text(&["a".into(), "b".into()]).unwrap();
    assert_eq!(v.len(), 2);
    assert_eq!(v[0].0, [1.0, 0.0, 2.0]);
    assert_eq!(b.embed_image(&image()).unwrap().0, [0.5, 0.5, 0.0]);

    let seen = server.seen();
    let paths: Vec<&str> = seen.iter().map(|s| s.path.as_str()).collect();
    assert_eq!(paths, ["/v1/caption", "/v1/vqa", "/v1/chat", "/v1/embed_text", "/v1/embed_image"]);
    assert_eq!(seen[0].body, json!({"image_id": "market", "image_uri": "images/market.jpg"}));
    assert_eq!(seen[1].body["question"], "What style?");
    assert_eq!(seen[2].body["temperature"], 0.6);
    assert_eq!(seen[2].body["max_tokens"], 100);
    assert_eq!(seen[2].body["messages"], json!([{"role": "user", "content": "hello"}]));
    assert!(seen.iter().all(|s| s.authorization.is_none()));
}

#[test]
fn retries_server_errors_then_succeeds() {
    let server = Server::start(Box::new(|_: &str, _: &Value, n: usize| {
        if n < 3 {
            (500, json!({"error": {"code": "overloaded", "message": "busy"}}))
        } else {
            (200, json!({"caption": "a house", "model": "m"}))
        }
    }));
    let mut cfg = config(&server.url);
    cfg.bearer_token = Some("secret".into());
    assert_eq!(backends(cfg).caption(&image()).unwrap(), "a house");
    let seen = server.seen();
    assert_eq!(seen.len(), 3);
    assert!(seen.iter().all(|s| s.authorization.as_deref() == Some("Bearer secret")));
}

#[test]
fn gives_up_after_three_attempts() {
    let server = Server::start(Box::new(|_: &str, _: &Value, _| (503, json!({"error": {"code": "down", "message": "later"}}))));
    let err = backends(config(&server.url)).caption(&image()).unwrap_err();
    match err {
        BackendError::Status { status, code, .. } => assert_eq!((status, code.as_str()), (503, "down")),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.seen().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = Server::start(Box::new(|_: &str, _: &Value, _| {
        (400, json!({"error": {"code": "bad_request", "message": "no image"}}))
    }));
    let err = backends(config(&server.url)).vqa(&image(), "q?").unwrap_err();
    assert!(!err.is_retryable());
    assert!(err.to_string().contains("no image"));
    assert_eq!(server.seen().len(), 1);
}

#[test]
fn refusal_is_typed() {
    let server = Server::start(Box::new(|_: &str, _: &Value, _| {
        (400, json!({"error": {"code": "refusal", "message": "cannot help"}}))
    }));
    let err = backends(config(&server.url)).chat(&[ChatMessage::user("x")], ChatParams::default()).unwrap_err();
    assert!(matches!(err, BackendError::Refusal { endpoint: Endpoint::Chat, .. }), "{err:?}");
}

#[test]
fn malformed_success_body_is_protocol_error() {
    let server = Server::start(Box::new(|_: &str, _: &Value, _| (200, json!({"vectors": [[1.0], [1.0, 2.0]], "model": "e"}))));
    let err = backends(config(&server.url)).embed_text(&["a".into(), "b".into()]).unwrap_err();
    assert!(matches!(err, BackendError::Protocol { .. }), "{err:?}");
}

#[test]
fn openai_chat_mode_and_endpoint_tokens() {
    let server = Server::start(Box::new(|path: &str, body: &Value, _| {
        assert_eq!(path, "/v1/chat/completions");
        assert_eq!(body["model"], "gpt-test");
        (200, json!({"choices": [{"message": {"role": "assistant", "content": "A kanga."}, "finish_reason": "stop"}]}))
    }));
    let mut cfg = config(&server.url);
    cfg.openai_chat_model = Some("gpt-test".into());
    cfg.bearer_token = Some("shared".into());
    cfg.endpoint_tokens.insert(Endpoint::Chat, "llm-key".into());
    let text = backends(cfg).chat(&[ChatMessage::system("s"), ChatMessage::user("u")], ChatParams::default()).unwrap();
    assert_eq!(text, "A kanga.");
    assert_eq!(server.seen()[0].authorization.as_deref(), Some("Bearer llm-key"));
}

#[test]
fn base64_payload_inlines_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img.bin");
    std::fs::write(&path, b"hello").unwrap();
    let server = Server::start(Box::new(protocol_handler));
    let b = backends(config(&server.url)).with_image_payload(ImagePayload::Base64);
    let img = ImageRef::new("x", path.to_str().unwrap(), Region::West);
    b.caption(&img).unwrap();
    assert_eq!(server.seen()[0].body["image_b64"], "aGVsbG8=");
}
