use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use ofi_probe::{run_probe, HttpBackend, Mode, ProbeConfig, Verdict};
use serde_json::{json, Value};

struct Seen {
    bodies: Vec<Value>,
    auth: Vec<Option<String>>,
}

/// Serves `count` requests; `reply` maps (request index, body) to (status, body).
fn stub<F>(count: usize, reply: F) -> (String, Arc<Mutex<Seen>>, thread::JoinHandle<()>)
where
    F: Fn(usize, &Value) -> (u16, String) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Seen { bodies: Vec::new(), auth: Vec::new() }));
    let log = seen.clone();
    let handle = thread::spawn(move || {
        for i in 0..count {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let body: Value = serde_json::from_slice(&body).unwrap();
            let (status, text) = reply(i, &body);
            {
                let mut s = log.lock().unwrap();
                s.bodies.push(body);
                s.auth.push(auth);
            }
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (url, seen, handle)
}

fn completion(text: &str, with_logprobs: bool) -> String {
    let first = text.split_whitespace().next().unwrap_or("");
    let mut choice = json!({"message": {"role": "assistant", "content": text}});
    if with_logprobs {
        choice["logprobs"] = json!({"content": [{
            "token": first, "logprob": -0.2,
            "top_logprobs": [{"token": first, "logprob": -0.2}, {"token": "Other", "logprob": -2.0}]
        }]});
    }
    json!({"choices": [choice]}).to_string()
}

fn config(url: &str) -> ProbeConfig {
    ProbeConfig {
        endpoint: url.to_string(),
        model: "tiny-model".into(),
        max_iters: 5,
        backoff_ms: 1,
        request_timeout_secs: 5,
        ..ProbeConfig::default()
    }
}

#[test]
fn sends_chat_completion_requests() {
    let (url, seen, h) = stub(2, |_, _| (200, completion("Paris is the capital.", true)));
    std::env::set_var("OFI_TEST_TOKEN_A", "sekrit");
    let cfg = ProbeConfig {
        api_key_env: Some("OFI_TEST_TOKEN_A".into()),
        ..config(&url)
    };
    let mut b = HttpBackend::new(&cfg).unwrap();
    let t = run_probe(&cfg, "capital", "Capital of France?", &mut b);
    h.join().unwrap();
    assert_eq!(t.verdict, Verdict::Converged { n: 1 });
    assert_eq!(t.mode, Mode::FirstTokenDistribution);
    let s = seen.lock().unwrap();
    let first = &s.bodies[0];
    assert_eq!(first["model"], "tiny-model");
    assert_eq!(first["messages"][0]["content"], "Capital of France?");
    assert_eq!(first["temperature"], 0.7);
    assert_eq!(first["logprobs"], true);
    assert_eq!(first["top_logprobs"], 20);
    assert_eq!(s.bodies[1]["temperature"], 0.5);
    assert_eq!(s.auth[0].as_deref(), Some("Bearer sekrit"));
}

#[test]
fn falls_back_when_logprobs_are_refused() {
    let (url, seen, h) = stub(3, |_, body| {
        if body.get("logprobs").is_some() {
            (400, r#"{"error": "logprobs unsupported"}"#.to_string())
        } else {
            (200, completion("stable answer", false))
        }
    });
    let cfg = config(&url);
    let mut b = HttpBackend::new(&cfg).unwrap();
    let t = run_probe(&cfg, "p", "q", &mut b);
    h.join().unwrap();
    assert_eq!(t.mode, Mode::TextEquality);
    assert!(t.fallback_reason.is_some());
    assert_eq!(t.verdict, Verdict::Converged { n: 1 });
    // one refused attempt, one retry without logprobs, then plain requests
    assert_eq!(seen.lock().unwrap().bodies.len(), 3);
}

#[test]
fn retries_server_errors() {
    let (url, _, h) = stub(3, |i, _| {
        if i == 0 {
            (503, "{}".to_string())
        } else {
            (200, completion("same", true))
        }
    });
    let cfg = config(&url);
    let mut b = HttpBackend::new(&cfg).unwrap();
    let t = run_probe(&cfg, "p", "q", &mut b);
    h.join().unwrap();
    assert_eq!(t.verdict, Verdict::Converged { n: 1 });
}

#[test]
fn unreachable_endpoint_aborts_with_partial_transcript() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = ProbeConfig {
        retries: 1,
        ..config(&format!("http://127.0.0.1:{port}/v1"))
    };
    let mut b = HttpBackend::new(&cfg).unwrap();
    let t = run_probe(&cfg, "p", "q", &mut b);
    assert!(matches!(t.verdict, Verdict::Aborted { ref reason } if reason.starts_with("network")));
    assert!(t.steps.is_empty());
}

#[test]
fn missing_token_variable_is_a_config_error() {
    let cfg = ProbeConfig {
        api_key_env: Some("OFI_TEST_TOKEN_SURELY_UNSET".into()),
        ..config("http://127.0.0.1:9/")
    };
    assert!(HttpBackend::new(&cfg).is_err());
    assert!(HttpBackend::new(&ProbeConfig::default()).is_err());
}
