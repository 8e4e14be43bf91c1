//! Exercises the remote embedding client against a local stub service:
//! happy path with batching, retry-then-success, retry exhaustion, and
//! the fatal protocol violations that must not be retried.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use forgeval::Error;
use forgeval::embed::{Embedder, RemoteEmbedder, RemoteOptions};

/// What the stub answers for one request, given the hit index (0-based)
/// and the texts the client sent.
type Behavior = dyn Fn(usize, &[String]) -> StubReply + Send + Sync;

enum StubReply {
    /// 200 with this JSON body.
    Json(String),
    /// An error status with an empty body.
    Status(u16),
}

/// Per-text echo embedding the tests can predict: `[len, first_byte, 1]`.
fn echo_embedding(text: &str) -> Vec<f64> {
    let first = text.bytes().next().unwrap_or(0);
    vec![text.len() as f64, f64::from(first), 1.0]
}

fn echo_body(texts: &[String]) -> String {
    let embeddings: Vec<Vec<f64>> = texts.iter().map(|t| echo_embedding(t)).collect();
    serde_json::to_string(&serde_json::json!({ "embeddings": embeddings })).unwrap()
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack
        .windows(needle.len())
        .position(|window| window == needle)
}

/// Reads one HTTP request off the stream and returns the embedded texts.
fn read_request_texts(stream: &mut TcpStream) -> Option<Vec<String>> {
    let mut buf = Vec::new();
    let mut tmp = [0u8; 4096];
    let body_start = loop {
        match stream.read(&mut tmp) {
            Ok(0) => return None,
            Ok(n) => buf.extend_from_slice(&tmp[..n]),
            Err(_) => return None,
        }
        if let Some(pos) = find_subslice(&buf, b"\r\n\r\n") {
            break pos + 4;
        }
    };
    let headers = String::from_utf8_lossy(&buf[..body_start]);
    let content_length: usize = headers
        .lines()
        .find_map(|line| {
            let (key, value) = line.split_once(':')?;
            key.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse().ok())?
        })
        .unwrap_or(0);
    let mut body = buf[body_start..].to_vec();
    while body.len() < content_length {
        match stream.read(&mut tmp) {
            Ok(0) => break,
            Ok(n) => body.extend_from_slice(&tmp[..n]),
            Err(_) => return None,
        }
    }

    #[derive(serde::Deserialize)]
    struct Request {
        texts: Vec<String>,
    }
    let request: Request = serde_json::from_slice(&body).ok()?;
    Some(request.texts)
}

fn write_reply(stream: &mut TcpStream, reply: &StubReply) {
    let response = match reply {
        StubReply::Json(body) => format!(
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        ),
        StubReply::Status(code) => format!(
            "HTTP/1.1 {code} Error\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"
        ),
    };
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}

/// Starts a stub embedding service; returns its URL and a hit counter.
/// The listener thread is detached and dies with the test process.
fn spawn_stub(behavior: Arc<Behavior>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let hits_in_thread = Arc::clone(&hits);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some(texts) = read_request_texts(&mut stream) else {
                continue;
            };
            let hit = hits_in_thread.fetch_add(1, Ordering::SeqCst);
            let reply = behavior(hit, &texts);
            write_reply(&mut stream, &reply);
        }
    });
    (format!("http://{addr}/embed"), hits)
}

fn test_client(url: &str, batch_size: usize) -> RemoteEmbedder {
    let options = RemoteOptions {
        timeout: Duration::from_secs(5),
        batch_size,
        max_in_flight: 4,
    };
    RemoteEmbedder::new(url, options)
        .unwrap()
        .with_backoff_base(Duration::from_millis(1))
}

#[test]
fn embeds_in_order_across_batches() {
    let (url, hits) = spawn_stub(Arc::new(|_, texts: &[String]| {
        StubReply::Json(echo_body(texts))
    }));
    let embedder = test_client(&url, 2);
    let vectors = embedder.embed_batch(&["a", "bb", "ccc"]).unwrap();
    assert_eq!(vectors.len(), 3);
    for (vector, text) in vectors.iter().zip(["a", "bb", "ccc"]) {
        assert_eq!(vector.components(), echo_embedding(text).as_slice());
    }
    // Three texts at batch size two means exactly two requests.
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn recovers_after_transient_errors() {
    let (url, hits) = spawn_stub(Arc::new(|hit, texts: &[String]| {
        if hit < 2 {
            StubReply::Status(500)
        } else {
            StubReply::Json(echo_body(texts))
        }
    }));
    let embedder = test_client(&url, 8);
    let vectors = embedder.embed_batch(&["hello"]).unwrap();
    assert_eq!(vectors.len(), 1);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn reports_unavailable_after_exhausting_retries() {
    let (url, hits) = spawn_stub(Arc::new(|_, _: &[String]| StubReply::Status(503)));
    let embedder = test_client(&url, 8);
    let err = embedder.embed_batch(&["hello"]).unwrap_err();
    match err {
        Error::EmbeddingUnavailable { message } => {
            assert!(message.contains("503"), "{message}");
            assert!(message.contains("3 attempts"), "{message}");
        }
        other => panic!("expected EmbeddingUnavailable, got {other}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn unreachable_host_is_unavailable_not_a_panic() {
    // Port 9 (discard) on localhost is almost certainly closed; connection
    // refused is a retryable transport error that must surface cleanly.
    let embedder = test_client("http://127.0.0.1:9/embed", 8);
    let err = embedder.embed_batch(&["hello"]).unwrap_err();
    assert!(matches!(err, Error::EmbeddingUnavailable { .. }), "{err}");
}

#[test]
fn count_mismatch_is_fatal_and_not_retried() {
    let (url, hits) = spawn_stub(Arc::new(|_, _: &[String]| {
        StubReply::Json(r#"{"embeddings":[[1.0]]}"#.to_string())
    }));
    let embedder = test_client(&url, 8);
    let err = embedder.embed_batch(&["a", "b"]).unwrap_err();
    match err {
        Error::ProtocolViolation { message } => {
            assert!(message.contains("2 texts"), "{message}");
        }
        other => panic!("expected ProtocolViolation, got {other}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 1, "fatal errors must not retry");
}

#[test]
fn malformed_body_is_fatal_and_not_retried() {
    let (url, hits) = spawn_stub(Arc::new(|_, _: &[String]| {
        StubReply::Json(r#"{"embeddings":"not an array"}"#.to_string())
    }));
    let embedder = test_client(&url, 8);
    let err = embedder.embed_batch(&["a"]).unwrap_err();
    assert!(matches!(err, Error::ProtocolViolation { .. }), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn ragged_dimensions_are_a_protocol_violation() {
    let (url, _) = spawn_stub(Arc::new(|_, _: &[String]| {
        StubReply::Json(r#"{"embeddings":[[1.0],[1.0,2.0]]}"#.to_string())
    }));
    let embedder = test_client(&url, 8);
    let err = embedder.embed_batch(&["a", "b"]).unwrap_err();
    match err {
        Error::ProtocolViolation { message } => {
            assert!(message.contains("ragged"), "{message}");
        }
        other => panic!("expected ProtocolViolation, got {other}"),
    }
}

#[test]
fn non_finite_component_is_a_protocol_violation() {
    // 1e999 overflows f64 and parses as infinity, which the vector
    // constructor rejects.
    let (url, _) = spawn_stub(Arc::new(|_, _: &[String]| {
        StubReply::Json(r#"{"embeddings":[[1e999]]}"#.to_string())
    }));
    let embedder = test_client(&url, 8);
    let err = embedder.embed_batch(&["a"]).unwrap_err();
    assert!(matches!(err, Error::ProtocolViolation { .. }), "{err}");
}

#[test]
fn concurrent_embedding_stays_ordered_per_call() {
    let (url, _) = spawn_stub(Arc::new(|_, texts: &[String]| {
        StubReply::Json(echo_body(texts))
    }));
    let embedder = Arc::new(test_client(&url, 4));
    let mut handles = Vec::new();
    for thread_id in 0..8u8 {
        let embedder = Arc::clone(&embedder);
        handles.push(std::thread::spawn(move || {
            let texts: Vec<String> =
                (0..10).map(|i| format!("t{thread_id}-{i}")).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let vectors = embedder.embed_batch(&refs).unwrap();
            for (vector, text) in vectors.iter().zip(&texts) {
                assert_eq!(vector.components(), echo_embedding(text).as_slice());
            }
        }));
    }
    for handle in handles {
        handle.join().unwrap();
    }
}
