//! Wire protocol of the model server, exercised against an in-process stub.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use claimrefine::remote::{
    Endpoint, GenerateResponse, HttpClient, NliRequest, NliResponse, RemoteGenerator, RemoteNli, RemoteSettings,
};
use claimrefine_core::data::{GenerateRequest, GeneratorBackend};
use claimrefine_core::factcheck::{lexical_oracle_score, FactCheckBackend, LexicalOracle};
use claimrefine_core::rng::rng_from_seed;
use claimrefine_core::{BackendError, Label};
use rand::Rng;
use serde_json::{json, Value};

#[derive(Clone, Debug)]
struct Request {
    method: String,
    path: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Request {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

type Handler = dyn Fn(&Request) -> (u16, Value) + Send + Sync;

/// Serves one request per connection on a background thread; returns the
/// base URL and the log of received requests.
fn stub(handler: Box<Handler>) -> (String, Arc<Mutex<Vec<Request>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = log.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            if reader.read_line(&mut line).is_err() || line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let method = parts.next().unwrap_or_default().to_string();
            let path = parts.next().unwrap_or_default().to_string();
            let mut headers = Vec::new();
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                if let Some((k, v)) = h.split_once(':') {
                    headers.push((k.trim().to_string(), v.trim().to_string()));
                }
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map_or(0, |(_, v)| v.parse().unwrap());
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let body = if body.is_empty() { Value::Null } else { serde_json::from_slice(&body).unwrap() };
            let req = Request { method, path, headers, body };
            let (status, reply) = handler(&req);
            seen.lock().unwrap().push(req);
            let text = reply.to_string();
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
        }
    });
    (url, log)
}

fn client(url: &str) -> HttpClient {
    HttpClient::new(Endpoint::new(url), RemoteSettings { timeout_secs: 5, retries: 2, backoff_ms: 1, max_in_flight: 2 })
}

fn golden(name: &str) -> Value {
    let path = format!("{}/tests/fixtures/wire/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Lexical-oracle model behind `/nli`, reading claim and evidence from the
/// fields the protocol names.
fn oracle_handler(req: &Request) -> (u16, Value) {
    match (req.method.as_str(), req.path.as_str()) {
        ("POST", "/nli") => {
            let claim = req.body["claim"].as_str().unwrap();
            let evidence = req.body["evidence"].as_str().unwrap();
            let v = LexicalOracle.check(claim, evidence).unwrap();
            let label = match v.label {
                Label::Supported => "SUPPORTED",
                Label::Refuted => "refuted",
                Label::Neutral => "Neutral",
            };
            (200, json!({"label": label, "probs": {"supported": v.probs.supported, "refuted": v.probs.refuted, "neutral": v.probs.neutral}}))
        }
        ("GET", "/health") => (200, golden("health_response.json")),
        _ => (404, json!({"error": "no such route", "retryable": false})),
    }
}

#[test]
fn golden_request_and_response_shapes() {
    let req = NliRequest { claim: "garlic does not cure covid".into(), evidence: "garlic may cure covid".into() };
    assert_eq!(serde_json::to_value(&req).unwrap(), golden("nli_request.json"));
    let resp: NliResponse = serde_json::from_value(golden("nli_response.json")).unwrap();
    assert_eq!(resp.label, "refuted");

    let gen = GenerateRequest {
        system: "You are a helpful assistant.".into(),
        prompt: "Here is the text: garlic cures covid #health".into(),
        temperature: 0.7,
        max_new_tokens: 128,
        seed: 42,
    };
    assert_eq!(serde_json::to_value(&gen).unwrap(), golden("generate_request.json"));
    let out: GenerateResponse = serde_json::from_value(golden("generate_response.json")).unwrap();
    assert_eq!(out.model_id, "stub");
}

#[test]
fn nli_golden_round_trip_through_stub() {
    let (url, log) = stub(Box::new(|_| (200, golden("nli_response.json"))));
    let nli = RemoteNli { client: client(&url) };
    let v = nli.check("garlic does not cure covid", "garlic may cure covid").unwrap();
    assert_eq!(v.label, Label::Refuted);
    assert!((v.probs.sum() - 1.0).abs() < 1e-12);
    let seen = log.lock().unwrap();
    assert_eq!(seen[0].path, "/nli");
    assert_eq!(seen[0].body, golden("nli_request.json"));
}

#[test]
fn claim_is_hypothesis_and_evidence_is_premise() {
    // Overlap is asymmetric: the short claim is fully covered by the
    // evidence, but not the other way round.
    let (url, log) = stub(Box::new(oracle_handler));
    let nli = RemoteNli { client: client(&url) };
    let claim = "garlic cures covid";
    let evidence = "a large trial found that garlic cures covid in adults within days";
    assert_eq!(nli.check(claim, evidence).unwrap().label, Label::Supported);
    assert_eq!(nli.check(evidence, claim).unwrap().label, Label::Neutral);
    let seen = log.lock().unwrap();
    assert_eq!(seen[0].body["claim"], claim);
    assert_eq!(seen[0].body["evidence"], evidence);
    assert!(lexical_oracle_score(claim, evidence).overlap > lexical_oracle_score(evidence, claim).overlap);
}

#[test]
fn hundred_stubbed_responses_keep_invariants() {
    let (url, _) = stub(Box::new(oracle_handler));
    let nli = RemoteNli { client: client(&url) };
    let words = ["garlic", "cures", "covid", "not", "vitamin", "prevents", "flu", "never", "tea", "helps", "fever"];
    let mut rng = rng_from_seed(9);
    let sentence = |rng: &mut claimrefine_core::rng::StreamRng| {
        (0..rng.random_range(2..8)).map(|_| words[rng.random_range(0..words.len())]).collect::<Vec<_>>().join(" ")
    };
    for _ in 0..100 {
        let (c, e) = (sentence(&mut rng), sentence(&mut rng));
        let remote = nli.check(&c, &e).unwrap();
        let local = LexicalOracle.check(&c, &e).unwrap();
        assert!((remote.probs.sum() - 1.0).abs() < 1e-9);
        assert_eq!(remote.label, remote.probs.argmax());
        assert_eq!(remote.label, local.label);
    }
}

#[test]
fn generate_reads_text_and_forwards_request() {
    let (url, log) = stub(Box::new(|_| (200, golden("generate_response.json"))));
    let g = RemoteGenerator { client: client(&url) };
    let req: GenerateRequest = serde_json::from_value(golden("generate_request.json")).unwrap();
    assert_eq!(g.generate(&req).unwrap(), "{\"post\": \"garlic cures covid\"}");
    let seen = log.lock().unwrap();
    assert_eq!(seen[0].method, "POST");
    assert_eq!(seen[0].path, "/generate");
    assert_eq!(seen[0].body, golden("generate_request.json"));
}

#[test]
fn empty_generation_is_a_protocol_error() {
    let (url, _) = stub(Box::new(|_| (200, json!({"text": "  ", "model_id": "stub"}))));
    let g = RemoteGenerator { client: client(&url) };
    let req: GenerateRequest = serde_json::from_value(golden("generate_request.json")).unwrap();
    assert!(matches!(g.generate(&req), Err(BackendError::Protocol(_))));
}

#[test]
fn retryable_errors_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let (url, _) = stub(Box::new(move |_| {
        if c.fetch_add(1, Ordering::SeqCst) < 2 {
            (503, golden("error_response.json"))
        } else {
            (200, golden("nli_response.json"))
        }
    }));
    let nli = RemoteNli { client: client(&url) };
    assert_eq!(nli.check("a", "b").unwrap().label, Label::Refuted);
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn non_retryable_errors_fail_fast() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let (url, _) = stub(Box::new(move |_| {
        c.fetch_add(1, Ordering::SeqCst);
        (400, json!({"error": "claim too long", "retryable": false}))
    }));
    let nli = RemoteNli { client: client(&url) };
    match nli.check("a", "b") {
        Err(BackendError::Transport { message, retryable }) => {
            assert!(!retryable);
            assert!(message.contains("claim too long"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

#[test]
fn exhausted_retries_surface_the_error() {
    let (url, log) = stub(Box::new(|_| (503, golden("error_response.json"))));
    let nli = RemoteNli { client: client(&url) };
    assert!(nli.check("a", "b").unwrap_err().is_retryable());
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn bad_probabilities_are_rejected() {
    let (url, _) =
        stub(Box::new(|_| (200, json!({"label": "neutral", "probs": {"supported": 0.5, "refuted": 0.3, "neutral": 0.5}}))));
    let nli = RemoteNli { client: client(&url) };
    assert!(matches!(nli.check("a", "b"), Err(BackendError::Protocol(_))));
}

#[test]
fn health_and_bearer_token() {
    let (url, log) = stub(Box::new(oracle_handler));
    let mut ep = Endpoint::new(format!("{url}/"));
    ep.api_key = Some("secret".into());
    let c = HttpClient::new(ep, RemoteSettings::default());
    assert_eq!(c.health().unwrap(), golden("health_response.json"));
    let seen = log.lock().unwrap();
    assert_eq!(seen[0].path, "/health");
    assert_eq!(seen[0].header("authorization"), Some("Bearer secret"));
}

#[test]
fn unreachable_server_is_a_retryable_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let c = HttpClient::new(
        Endpoint::new(format!("http://127.0.0.1:{port}")),
        RemoteSettings { timeout_secs: 1, retries: 0, backoff_ms: 1, max_in_flight: 1 },
    );
    assert!(c.health().unwrap_err().is_retryable());
}
