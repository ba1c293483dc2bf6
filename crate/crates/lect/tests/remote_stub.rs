//! Tests for the remote encoder and chat clients against a local HTTP stub.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

use lect::encode::RemoteEncoder;
use lect::oodgen::{ChatClient, ChatMessage, OodMode, RemoteLlmGenerator, TextGenerator};

struct Stub {
    endpoint: String,
    bodies: Arc<Mutex<Vec<String>>>,
}

fn read_http_body(stream: &mut TcpStream) -> Option<String> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    if line.is_empty() {
        return None;
    }
    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some(v) = header.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = v.trim().parse().ok()?;
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).ok()?;
    String::from_utf8(body).ok()
}

/// One accept loop on an ephemeral port; `handler(request_index, body)`
/// returns (status, response body). The thread leaks, which is fine for a
/// test process.
fn spawn_stub<F>(handler: F) -> Stub
where
    F: Fn(usize, &str) -> (u16, String) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&bodies);
    std::thread::spawn(move || {
        let mut i = 0usize;
        for stream in listener.incoming() {
            let mut stream = match stream {
                Ok(s) => s,
                Err(_) => break,
            };
            let Some(body) = read_http_body(&mut stream) else { continue };
            seen.lock().unwrap().push(body.clone());
            let (status, resp) = handler(i, &body);
            i += 1;
            let reason = if status == 200 { "OK" } else { "Internal Server Error" };
            let msg = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n\
                 Content-Length: {}\r\nConnection: close\r\n\r\n{resp}",
                resp.len()
            );
            let _ = stream.write_all(msg.as_bytes());
        }
    });
    Stub { endpoint, bodies }
}

fn embed_response(inputs: &[String], dim: usize) -> String {
    let data: Vec<serde_json::Value> = inputs
        .iter()
        .map(|t| {
            // embedding derived from the text length so order is checkable
            let v: Vec<f64> = (0..dim).map(|j| (t.len() * 10 + j) as f64).collect();
            serde_json::json!({ "embedding": v })
        })
        .collect();
    serde_json::json!({ "data": data }).to_string()
}

fn parse_inputs(body: &str) -> Vec<String> {
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    v["input"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

#[test]
fn encoder_batches_requests_and_preserves_order() {
    let stub = spawn_stub(|_, body| (200, embed_response(&parse_inputs(body), 3)));
    let enc = RemoteEncoder::new(stub.endpoint.clone(), 3, 2, 0, 1, None).unwrap();
    let texts: Vec<String> = vec!["a".into(), "bb".into(), "ccc".into(), "dddd".into(), "eeeee".into()];
    let m = enc.encode_batch(&texts).unwrap();

    let bodies = stub.bodies.lock().unwrap();
    assert_eq!(bodies.len(), 3, "5 texts at batch size 2 take exactly 3 requests");
    let sizes: Vec<usize> = bodies.iter().map(|b| parse_inputs(b).len()).collect();
    assert_eq!(sizes, vec![2, 2, 1]);

    assert_eq!(m.shape(), &[5, 3]);
    for (i, t) in texts.iter().enumerate() {
        assert_eq!(m[[i, 0]], (t.len() * 10) as f64);
        assert_eq!(m[[i, 2]], (t.len() * 10 + 2) as f64);
    }
}

#[test]
fn encoder_rejects_count_mismatch() {
    // 4 embeddings for 5 inputs
    let stub = spawn_stub(|_, body| {
        let mut inputs = parse_inputs(body);
        inputs.pop();
        (200, embed_response(&inputs, 3))
    });
    let enc = RemoteEncoder::new(stub.endpoint.clone(), 3, 8, 0, 1, None).unwrap();
    let texts: Vec<String> = (0..5).map(|i| format!("t{i}")).collect();
    let err = enc.encode_batch(&texts).unwrap_err();
    assert!(err.to_string().contains("count mismatch"), "{err}");
}

#[test]
fn encoder_gives_up_after_bounded_retries_on_server_error() {
    let stub = spawn_stub(|_, _| (500, "{}".to_string()));
    let enc = RemoteEncoder::new(stub.endpoint.clone(), 3, 8, 2, 1, None).unwrap();
    let err = enc.encode_batch(&["x".to_string()]).unwrap_err();
    assert!(err.to_string().contains("failed after 3 attempts"), "{err}");
    assert_eq!(stub.bodies.lock().unwrap().len(), 3);
}

#[test]
fn encoder_errors_on_unreachable_endpoint() {
    // bind then drop to get a port with no listener
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let enc =
        RemoteEncoder::new(format!("http://127.0.0.1:{port}"), 3, 8, 1, 1, None).unwrap();
    let err = enc.encode_batch(&["x".to_string()]).unwrap_err();
    assert!(err.to_string().contains("failed after 2 attempts"), "{err}");
}

fn chat_response(content: &str) -> String {
    serde_json::json!({ "choices": [{ "message": { "content": content } }] }).to_string()
}

#[test]
fn chat_client_round_trip_and_retry() {
    // first request fails once, then succeeds
    let stub = spawn_stub(|i, _| {
        if i == 0 {
            (500, "{}".to_string())
        } else {
            (200, chat_response("line one\nthe answer"))
        }
    });
    let client = ChatClient::new(stub.endpoint.clone(), "stub-model".into(), None, 2, 1).unwrap();
    let reply = client
        .complete(&[ChatMessage { role: "user".into(), content: "hello".into() }])
        .unwrap();
    assert_eq!(reply, "line one\nthe answer");
    assert_eq!(stub.bodies.lock().unwrap().len(), 2);
}

#[test]
fn remote_generator_runs_four_turns_and_parses_steps() {
    let stub = spawn_stub(|i, _| {
        let content = match i {
            0 => "the main domain is computing",
            1 => "robotics",
            2 => "thinking it over...\nrobotics",
            _ => "A short description of a robotics sample.",
        };
        (200, chat_response(content))
    });
    let client = ChatClient::new(stub.endpoint.clone(), "stub-model".into(), None, 0, 1).unwrap();
    let generator = RemoteLlmGenerator::new(client);
    let names = vec!["neural networks".to_string(), "databases".to_string()];
    let (text, category) = generator
        .generate(0, &names, &["databases".to_string()], OodMode::Near)
        .unwrap();
    assert_eq!(category, "robotics");
    assert_eq!(text, "A short description of a robotics sample.");
    assert_eq!(stub.bodies.lock().unwrap().len(), 4);

    // the transcript keeps the whole conversation: system + 4 user/assistant turns
    let transcripts = generator.transcripts.borrow();
    assert_eq!(transcripts.len(), 1);
    assert_eq!(transcripts[0].len(), 9);
    assert_eq!(transcripts[0][0].role, "system");
    // step 3 carries only the neighbor labels, not every class name
    assert!(transcripts[0][5].content.contains("databases"));
    assert!(!transcripts[0][5].content.contains("neural networks"));
}
