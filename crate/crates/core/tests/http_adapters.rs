//! The HTTP adapters against a local stand-in server.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use charnet::storygen::http::{Gemini, OpenAiCompatible};
use charnet::storygen::provider::Sleeper;
use charnet::storygen::{ChatProvider, ChatRequest, Message, ProviderError, Retrying, RetryPolicy, Role, SamplingParams};

#[derive(Debug, Clone)]
struct Captured {
    path: String,
    headers: BTreeMap<String, String>,
    body: Value,
}

/// Serves one scripted `(status, body)` reply per connection, then stops.
fn serve(replies: Vec<(u16, Value)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, reply) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
            let mut headers = BTreeMap::new();
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                if let Some((k, v)) = h.split_once(':') {
                    headers.insert(k.trim().to_lowercase(), v.trim().to_string());
                }
            }
            let len: usize = headers["content-length"].parse().unwrap();
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Captured {
                path,
                headers,
                body: serde_json::from_slice(&body).unwrap(),
            });
            let text = reply.to_string();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            )
            .unwrap();
        }
    });
    (base, seen)
}

fn request() -> ChatRequest {
    ChatRequest {
        model: "test-model".into(),
        messages: vec![
            Message::new(Role::System, "be brief"),
            Message::new(Role::User, "plot please"),
            Message::new(Role::Assistant, "Chapter 1: x"),
            Message::new(Role::User, "next"),
        ],
        params: SamplingParams {
            temperature: 1.0,
            top_p: 0.95,
            top_k: Some(40),
        },
    }
}

fn openai_reply(text: &str) -> Value {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]})
}

fn no_sleep() -> (Sleeper, Arc<Mutex<Vec<Duration>>>) {
    let slept = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&slept);
    (Arc::new(move |d| log.lock().unwrap().push(d)), slept)
}

#[test]
fn openai_request_shape_and_auth() {
    std::env::set_var("CHARNET_TEST_OPENAI_KEY", "sk-local");
    let (base, seen) = serve(vec![(200, openai_reply("Once upon a time."))]);
    let url = format!("{base}/v1/chat/completions");
    let client = OpenAiCompatible::new(&url, Some("CHARNET_TEST_OPENAI_KEY"), false).unwrap();
    assert_eq!(client.complete(&request()).unwrap(), "Once upon a time.");

    let got = seen.lock().unwrap()[0].clone();
    assert_eq!(got.path, "/v1/chat/completions");
    assert_eq!(got.headers["authorization"], "Bearer sk-local");
    assert_eq!(got.body["model"], "test-model");
    assert_eq!(got.body["temperature"], 1.0);
    assert_eq!(got.body["top_p"], 0.95);
    assert!(got.body.get("top_k").is_none());
    let roles: Vec<&str> = got.body["messages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["role"].as_str().unwrap())
        .collect();
    assert_eq!(roles, ["system", "user", "assistant", "user"]);
    assert_eq!(got.body["messages"][3]["content"], "next");
}

#[test]
fn openai_top_k_is_opt_in() {
    let client = OpenAiCompatible::new("http://127.0.0.1:9", None, true).unwrap();
    assert_eq!(client.body(&request())["top_k"], 40);
}

#[test]
fn rate_limit_reply_is_retried_with_backoff() {
    let (base, seen) = serve(vec![
        (429, json!({"error": "slow down"})),
        (503, json!({"error": "busy"})),
        (200, openai_reply("done")),
    ]);
    let client = OpenAiCompatible::new(&base, None, false).unwrap();
    let (sleeper, slept) = no_sleep();
    let retrying = Retrying::with_sleeper(client, RetryPolicy::default(), sleeper);
    assert_eq!(retrying.complete(&request()).unwrap(), "done");
    assert_eq!(seen.lock().unwrap().len(), 3);
    let slept = slept.lock().unwrap().clone();
    assert_eq!(slept.len(), 2);
    assert!(slept[1] > slept[0]);
}

#[test]
fn client_errors_are_not_retried() {
    let (base, seen) = serve(vec![(400, json!({"error": "bad request"}))]);
    let client = OpenAiCompatible::new(&base, None, false).unwrap();
    let (sleeper, slept) = no_sleep();
    let err = Retrying::with_sleeper(client, RetryPolicy::default(), sleeper)
        .complete(&request())
        .unwrap_err();
    assert!(matches!(err, ProviderError::Status { status: 400, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
    assert!(slept.lock().unwrap().is_empty());
}

#[test]
fn missing_credential_is_reported_by_name() {
    std::env::remove_var("CHARNET_TEST_UNSET_KEY");
    let err = OpenAiCompatible::new("http://127.0.0.1:9", Some("CHARNET_TEST_UNSET_KEY"), false)
        .err()
        .unwrap();
    assert!(err.to_string().contains("CHARNET_TEST_UNSET_KEY"), "{err}");
    assert!(Gemini::new("http://127.0.0.1:9", "CHARNET_TEST_UNSET_KEY").is_err());
}

#[test]
fn gemini_request_shape_and_auth() {
    std::env::set_var("CHARNET_TEST_GEMINI_KEY", "g-local");
    let reply = json!({"candidates": [{"content": {"role": "model", "parts": [{"text": "Chapter "}, {"text": "two."}]}}]});
    let (base, seen) = serve(vec![(200, reply)]);
    let client = Gemini::new(&format!("{base}/v1beta/"), "CHARNET_TEST_GEMINI_KEY").unwrap();
    assert_eq!(client.complete(&request()).unwrap(), "Chapter two.");

    let got = seen.lock().unwrap()[0].clone();
    assert_eq!(got.path, "/v1beta/models/test-model:generateContent");
    assert_eq!(got.headers["x-goog-api-key"], "g-local");
    assert_eq!(got.body["systemInstruction"]["parts"][0]["text"], "be brief");
    let roles: Vec<&str> = got.body["contents"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["role"].as_str().unwrap())
        .collect();
    assert_eq!(roles, ["user", "model", "user"]);
    let cfg = &got.body["generationConfig"];
    assert_eq!((cfg["temperature"].as_f64(), cfg["topP"].as_f64(), cfg["topK"].as_u64()), (Some(1.0), Some(0.95), Some(40)));
}

#[test]
fn malformed_reply_is_an_error() {
    let (base, _) = serve(vec![(200, json!({"unexpected": true}))]);
    let client = OpenAiCompatible::new(&base, None, false).unwrap();
    assert!(matches!(client.complete(&request()), Err(ProviderError::Malformed(_))));
}
