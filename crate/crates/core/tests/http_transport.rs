//! HTTP transport behavior against a local stub server: success, retry
//! after transient failures, and fatal auth rejection.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use modigen_core::genclient::{GenError, GenerationConfig, Sampler};

/// A one-shot HTTP stub: each element of `statuses` answers one request in
/// order. 200 responses carry a chat-completion body with `content`.
fn spawn_stub(statuses: Vec<u16>, content: &str) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let hits_clone = hits.clone();
    let content = content.to_string();
    std::thread::spawn(move || {
        for status in statuses {
            let (mut stream, _) = match listener.accept() {
                Ok(pair) => pair,
                Err(_) => return,
            };
            hits_clone.fetch_add(1, Ordering::SeqCst);
            // Drain the request: headers, then content-length body bytes.
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let lower = line.to_lowercase();
                if let Some(rest) = lower.strip_prefix("content-length:") {
                    content_length = rest.trim().parse().unwrap_or(0);
                }
                if line == "\r\n" || line == "\n" {
                    break;
                }
            }
            let mut body = vec![0u8; content_length];
            let _ = reader.read_exact(&mut body);

            let payload = serde_json::json!({
                "choices": [{"message": {"role": "assistant", "content": content}}]
            })
            .to_string();
            let (reason, body_out) = match status {
                200 => ("OK", payload),
                401 => ("Unauthorized", "{\"error\":\"bad key\"}".to_string()),
                _ => ("Internal Server Error", "{\"error\":\"boom\"}".to_string()),
            };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                body_out.len(),
                body_out
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (format!("http://{addr}/v1/chat/completions"), hits)
}

fn config(endpoint: String, n_samples: usize) -> GenerationConfig {
    GenerationConfig {
        endpoint_url: endpoint,
        model_name: "stub-model".into(),
        n_samples,
        max_concurrent_requests: 1,
        request_timeout: 5.0,
        ..Default::default()
    }
}

#[test]
fn single_sample_against_stub() {
    let (endpoint, hits) = spawn_stub(vec![200], "```modelica\nmodel A end A;\n```");
    let config = config(endpoint, 1);
    let sampler = Sampler::new(&config).unwrap();
    let candidates = sampler.sample("t1", "prompt").unwrap();
    assert_eq!(candidates.len(), 1);
    assert_eq!(candidates[0].code, "model A end A;");
    assert_eq!(candidates[0].round, 0);
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn retries_until_success() {
    let (endpoint, hits) = spawn_stub(vec![500, 500, 200], "model B end B;");
    let config = config(endpoint, 1);
    let sampler = Sampler::new(&config)
        .unwrap()
        .with_backoff(vec![Duration::from_millis(5); 3]);
    let candidates = sampler.sample("t1", "prompt").unwrap();
    assert_eq!(candidates.len(), 1);
    assert_eq!(candidates[0].code, "model B end B;");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn unauthorized_is_fatal() {
    let (endpoint, _) = spawn_stub(vec![401], "");
    let config = config(endpoint, 3);
    let sampler = Sampler::new(&config)
        .unwrap()
        .with_backoff(vec![Duration::from_millis(5); 3]);
    match sampler.sample("t1", "prompt") {
        Err(GenError::Auth(msg)) => assert!(msg.contains("401"), "{msg}"),
        other => panic!("expected auth error, got {other:?}"),
    }
}
