use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use eae_core::llm::{
    ChatRequest, CostCaps, CostLedger, FinishReason, HttpTransport, LlmClient, LlmError, ProviderConfig,
    ResponseCache, SimClock,
};

struct Seen {
    request_line: String,
    headers: Vec<(String, String)>,
    body: String,
}

/// Serves one canned `(status, body)` per connection and records what it got.
fn serve(replies: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
            }
            let len: usize = headers.iter().find(|(k, _)| k == "content-length").map_or(0, |(_, v)| v.parse().unwrap());
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen { request_line, headers, body: String::from_utf8(buf).unwrap() });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            stream.flush().unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"Final Answers:\nAgent: \"rebels\""},"finish_reason":"stop"}],"usage":{"prompt_tokens":12,"completion_tokens":7}}"#;

fn client(base_url: String) -> LlmClient {
    let mut provider = ProviderConfig::new(base_url, "test-model");
    provider.backoff_base_ms = 1;
    provider.timeout_secs = 10;
    LlmClient::new(
        provider.clone(),
        Arc::new(HttpTransport::for_provider(&provider)),
        Arc::new(ResponseCache::in_memory()),
        Arc::new(CostLedger::new(CostCaps::default())),
        Arc::new(SimClock::new()),
    )
    .unwrap()
    .with_api_key("secret-key")
}

fn req() -> ChatRequest {
    ChatRequest::single_turn("test-model", "sys", "extract", 0.0, 128)
}

#[test]
fn wire_format_and_retry() {
    let (url, seen) = serve(vec![(429, "{}"), (503, "{}"), (200, OK_BODY)]);
    let c = client(url);
    let out = c.complete_detailed(&req()).unwrap();
    assert_eq!(out.retries, 2);
    assert_eq!(out.response.content, "Final Answers:\nAgent: \"rebels\"");
    assert_eq!(out.response.finish_reason, FinishReason::Stop);
    assert_eq!(out.response.usage.prompt_tokens, 12);
    assert!(!out.response.usage.estimated);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    let last = &seen[2];
    assert!(last.request_line.starts_with("POST /v1/chat/completions "), "{}", last.request_line);
    assert!(last.headers.iter().any(|(k, v)| k == "authorization" && v == "Bearer secret-key"));
    let body: serde_json::Value = serde_json::from_str(&last.body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["max_tokens"], 128);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "extract");

    // Cached now: no further connections needed.
    assert_eq!(c.complete(&req()).unwrap(), out.response);
}

#[test]
fn unauthorized_stops_immediately() {
    let (url, seen) = serve(vec![(401, "{\"error\":\"bad key\"}")]);
    let err = client(url).complete(&req()).unwrap_err();
    assert!(matches!(err, LlmError::Auth { status: 401 }), "{err}");
    std::thread::sleep(Duration::from_millis(20));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn connection_refused_is_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let err = client(url).complete(&req()).unwrap_err();
    assert!(matches!(err, LlmError::Transport(_)), "{err}");
}
