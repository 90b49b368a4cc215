//! HTTP provider behavior against a local scripted server: retry/backoff,
//! auth failures, response extraction, the concurrency bound, and cache
//! behavior under load.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use faithcheck_core::gateway::{
    Decoding, Gateway, GatewayConfig, GatewayError, ModelSpec, ProviderKind, RetryPolicy,
};

/// Minimal HTTP/1.1 server: each connection gets the next status from the
/// script (the last entry repeats), 200s reply with an OpenAI-style body.
struct ScriptedServer {
    address: String,
    requests: Arc<AtomicUsize>,
}

impl ScriptedServer {
    fn start(script: Vec<u16>, delay: Duration) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind local listener");
        let address = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&requests);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let status = *script.get(n).or(script.last()).unwrap_or(&200);
                thread::spawn(move || handle(stream, status, delay));
            }
        });
        Self { address, requests }
    }

    fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

fn handle(mut stream: TcpStream, status: u16, delay: Duration) {
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("content-length:") {
            content_length = rest.trim().parse().unwrap_or(0);
        }
        if line == "\r\n" || line == "\n" {
            break;
        }
    }
    let mut body = vec![0u8; content_length];
    let _ = reader.read_exact(&mut body);
    if !delay.is_zero() {
        thread::sleep(delay);
    }
    // Echo the request body back so concurrent responses are attributable.
    let echoed = format!("reply:{}", String::from_utf8_lossy(&body));
    let payload = serde_json::json!({
        "choices": [{"message": {"content": echoed}}]
    })
    .to_string();
    let reason = match status {
        200 => "OK",
        401 => "Unauthorized",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Other",
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.write_all(response.as_bytes());
}

fn http_spec(endpoint: &str) -> ModelSpec {
    ModelSpec {
        provider: ProviderKind::HttpOpenaiStyle,
        model_name: "test-model".into(),
        endpoint_url: endpoint.into(),
        auth_env_var: None,
        decoding: Decoding::greedy(),
        request_template: None,
        response_path: None,
        mock_answers_path: None,
        mock_tables: None,
        replay_dir: None,
    }
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 4,
        base_delay_ms: 1,
        max_delay_ms: 4,
    }
}

#[test]
fn recovers_after_transient_failures() {
    let server = ScriptedServer::start(vec![429, 503, 200], Duration::ZERO);
    let dir = tempfile::tempdir().unwrap();
    let gateway = Gateway::new(GatewayConfig::new(dir.path(), 1).retry(fast_retry()));
    let spec = http_spec(&server.address).validated(false).unwrap();
    let reply = gateway.generate(&spec, "ping", 0).unwrap();
    assert!(reply.starts_with("reply:"));
    assert_eq!(server.request_count(), 3);
    assert_eq!(gateway.stats().network_calls, 3);
}

#[test]
fn gives_up_after_attempt_cap() {
    let server = ScriptedServer::start(vec![500], Duration::ZERO);
    let dir = tempfile::tempdir().unwrap();
    let gateway = Gateway::new(GatewayConfig::new(dir.path(), 1).retry(fast_retry()));
    let spec = http_spec(&server.address).validated(false).unwrap();
    let err = gateway.generate(&spec, "ping", 0).unwrap_err();
    match err {
        GatewayError::Transport {
            attempts, status, ..
        } => {
            assert_eq!(attempts, 4);
            assert_eq!(status, Some(500));
        }
        other => panic!("expected transport error, got {other}"),
    }
    // Total attempts never exceed the cap.
    assert_eq!(server.request_count(), 4);
}

#[test]
fn auth_failure_is_immediate() {
    let server = ScriptedServer::start(vec![401], Duration::ZERO);
    let dir = tempfile::tempdir().unwrap();
    let gateway = Gateway::new(GatewayConfig::new(dir.path(), 1).retry(fast_retry()));
    let spec = http_spec(&server.address).validated(false).unwrap();
    let err = gateway.generate(&spec, "ping", 0).unwrap_err();
    assert!(matches!(err, GatewayError::Auth { status: 401, .. }));
    assert_eq!(server.request_count(), 1, "auth failures must not retry");
}

#[test]
fn missing_auth_env_var_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let gateway = Gateway::new(GatewayConfig::new(dir.path(), 1));
    let mut spec = http_spec("http://127.0.0.1:9");
    spec.auth_env_var = Some("FAITHCHECK_TEST_UNSET_SECRET".into());
    let spec = spec.validated(false).unwrap();
    let err = gateway.generate(&spec, "ping", 0).unwrap_err();
    assert!(matches!(err, GatewayError::Config(_)));
}

#[test]
fn pool_bounds_in_flight_requests_and_loses_nothing() {
    let server = ScriptedServer::start(vec![200], Duration::from_millis(3));
    let dir = tempfile::tempdir().unwrap();
    let gateway = Arc::new(Gateway::new(
        GatewayConfig::new(dir.path(), 1)
            .pool_size(8)
            .retry(fast_retry()),
    ));
    let spec = Arc::new(http_spec(&server.address).validated(false).unwrap());

    let mut handles = Vec::new();
    for worker in 0..25 {
        let gateway = Arc::clone(&gateway);
        let spec = Arc::clone(&spec);
        handles.push(thread::spawn(move || {
            let mut replies = Vec::new();
            for i in 0..40 {
                let prompt = format!("prompt-{worker}-{i}");
                replies.push((prompt.clone(), gateway.generate(&spec, &prompt, 0).unwrap()));
            }
            replies
        }));
    }
    let mut total = 0usize;
    for handle in handles {
        for (prompt, reply) in handle.join().unwrap() {
            // Each unique request got its own (correct) response.
            assert!(reply.contains(&prompt), "cross-talk: {prompt} got {reply}");
            total += 1;
        }
    }
    assert_eq!(total, 1000);
    let stats = gateway.stats();
    assert_eq!(stats.provider_calls, 1000, "no request lost or duplicated");
    assert!(
        stats.max_in_flight <= 8,
        "pool bound violated: {} in flight",
        stats.max_in_flight
    );
    assert!(
        stats.max_in_flight >= 4,
        "expected real concurrency under load, saw {}",
        stats.max_in_flight
    );
}

#[test]
fn custom_template_and_response_path_override_the_style_defaults() {
    // A completion-style API shape: prompt at the top level, text under a
    // different path. The echo server returns the request body as the
    // content at the OpenAI path, so point the response path there.
    let server = ScriptedServer::start(vec![200], Duration::ZERO);
    let dir = tempfile::tempdir().unwrap();
    let gateway = Gateway::new(GatewayConfig::new(dir.path(), 1).retry(fast_retry()));
    let mut spec = http_spec(&server.address);
    spec.request_template =
        Some(r#"{"model":"{model}","prompt":"{prompt}","max_tokens":{max_tokens},"temperature":{temperature}}"#.into());
    spec.response_path = Some("choices.0.message.content".into());
    let spec = spec.validated(false).unwrap();
    let reply = gateway.generate(&spec, "custom shape", 0).unwrap();
    assert!(reply.contains(r#""prompt":"custom shape""#), "{reply}");
    assert!(!reply.contains("messages"), "template must replace the default: {reply}");
}

#[test]
fn templates_with_tool_features_are_rejected() {
    let mut spec = http_spec("https://example.invalid/api");
    spec.request_template =
        Some(r#"{"model":"{model}","prompt":"{prompt}","tools":[],"max_tokens":{max_tokens}}"#.into());
    assert!(matches!(
        spec.validated(false),
        Err(GatewayError::Config(_))
    ));
}

#[test]
fn cache_round_trip_is_byte_identical() {
    let server = ScriptedServer::start(vec![200], Duration::ZERO);
    let dir = tempfile::tempdir().unwrap();
    let gateway = Gateway::new(GatewayConfig::new(dir.path(), 1).retry(fast_retry()));
    let spec = http_spec(&server.address).validated(false).unwrap();
    let first = gateway.generate(&spec, "cache me", 3).unwrap();
    let second = gateway.generate(&spec, "cache me", 3).unwrap();
    assert_eq!(first, second);
    assert_eq!(server.request_count(), 1);
    let stats = gateway.stats();
    assert_eq!(stats.cache_hits, 1);
    assert_eq!(stats.cache_misses, 1);
}
