//! Wire-format tests against an in-process OpenAI-compatible server.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use recprompt::gateway::{
    ChatBackend, EmbedBackend, Gateway, HttpClient, MockEmbedder, ModelKind, ModelProfile,
    TokenSource,
};
use recprompt::promptgrid::{EmbeddingText, PromptText};
use recprompt::tokenize::TokenEstimator;

struct Request {
    path: String,
    auth: Option<String>,
    body: serde_json::Value,
}

/// Serve canned responses for `responses.len()` requests, capturing what
/// arrived. Entries are (status, body).
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Request>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let request = loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf);
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let headers = &text[..header_end];
                    let content_length: usize = headers
                        .lines()
                        .find(|l| l.to_ascii_lowercase().starts_with("content-length:"))
                        .and_then(|l| l.split(':').nth(1))
                        .and_then(|v| v.trim().parse().ok())
                        .unwrap_or(0);
                    if buf.len() >= header_end + 4 + content_length {
                        let path = headers
                            .lines()
                            .next()
                            .unwrap()
                            .split_whitespace()
                            .nth(1)
                            .unwrap()
                            .to_string();
                        let auth = headers
                            .lines()
                            .find(|l| l.to_ascii_lowercase().starts_with("authorization:"))
                            .map(|l| l.split_once(':').unwrap().1.trim().to_string());
                        let body_text = &text[header_end + 4..header_end + 4 + content_length];
                        break Request {
                            path,
                            auth,
                            body: serde_json::from_str(body_text).unwrap(),
                        };
                    }
                }
            };
            tx.send(request).unwrap();
            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), rx)
}

fn profile(base: &str, kind: ModelKind) -> ModelProfile {
    ModelProfile {
        name: "gpt-test".into(),
        endpoint_base: base.to_string(),
        kind,
        temperature: 0.3,
        price_in: 0.15,
        price_out: 0.60,
        context_limit: 16_384,
        requests_per_minute: 1_000_000,
    }
}

fn prompt(text: &str) -> PromptText {
    PromptText {
        text: text.into(),
        estimated_tokens: TokenEstimator::BytesPer4.estimate(text),
        spec: "R-10-T".parse().unwrap(),
        user_id: "u0".into(),
    }
}

fn http_gateway(api_key: Option<&str>) -> Gateway {
    Gateway::new(
        ChatBackend::Http {
            client: HttpClient::new(),
            api_key: api_key.map(String::from),
        },
        EmbedBackend::Mock(MockEmbedder::new(1, 8)),
        None,
    )
}

#[test]
fn chat_request_and_usage_follow_the_wire_format() {
    let body = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": "[1,2,3]"}}],
        "usage": {"prompt_tokens": 321, "completion_tokens": 9},
    })
    .to_string();
    let (base, rx) = serve(vec![(200, body)]);
    let gateway = http_gateway(Some("sk-test"));
    let chat = profile(&base, ModelKind::Chat);

    let (text, idx) = gateway
        .chat_complete(&chat, &prompt("rank these please"), 2, "music")
        .unwrap();
    assert_eq!(text, "[1,2,3]");

    let request = rx.recv().unwrap();
    assert_eq!(request.path, "/chat/completions");
    assert_eq!(request.auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(request.body["model"], "gpt-test");
    assert_eq!(request.body["temperature"], 0.3);
    assert_eq!(request.body["messages"][0]["role"], "user");
    assert_eq!(request.body["messages"][0]["content"], "rank these please");

    let record = &gateway.records()[idx];
    assert_eq!(record.tokens_in, 321);
    assert_eq!(record.tokens_out, 9);
    assert_eq!(record.token_source, TokenSource::Endpoint);
    let expected = 321.0 * 0.15 / 1e6 + 9.0 * 0.60 / 1e6;
    assert!((record.cost_usd - expected).abs() < 1e-12);
}

#[test]
fn embeddings_are_reordered_by_index() {
    let body = serde_json::json!({
        "data": [
            {"index": 1, "embedding": [0.5, 0.5]},
            {"index": 0, "embedding": [1.0, 0.0]},
        ],
    })
    .to_string();
    let (base, rx) = serve(vec![(200, body)]);
    let gateway = Gateway::new(
        ChatBackend::Http {
            client: HttpClient::new(),
            api_key: None,
        },
        EmbedBackend::Http {
            client: HttpClient::new(),
            api_key: None,
        },
        None,
    );
    let embed = profile(&base, ModelKind::Embedding);
    let texts = vec![
        EmbeddingText {
            item_id: "a".into(),
            text: "first".into(),
        },
        EmbeddingText {
            item_id: "b".into(),
            text: "second".into(),
        },
    ];
    let vectors = gateway.embed(&embed, &texts).unwrap();
    assert_eq!(vectors, vec![vec![1.0, 0.0], vec![0.5, 0.5]]);

    let request = rx.recv().unwrap();
    assert_eq!(request.path, "/embeddings");
    assert_eq!(request.body["model"], "gpt-test");
    assert_eq!(request.body["input"][0], "first");
    assert_eq!(request.body["input"][1], "second");
}

#[test]
fn transport_retries_recover_from_5xx() {
    let ok = serde_json::json!({
        "choices": [{"message": {"content": "ok"}}],
        "usage": {"prompt_tokens": 1, "completion_tokens": 1},
    })
    .to_string();
    let (base, _rx) = serve(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        (200, ok),
    ]);
    let gateway = http_gateway(None);
    let chat = profile(&base, ModelKind::Chat);
    let (text, _) = gateway.chat_complete(&chat, &prompt("x"), 1, "d").unwrap();
    assert_eq!(text, "ok");
    // One upstream call from the gateway's perspective despite the retries.
    assert_eq!(gateway.upstream_call_count(), 1);
}

#[test]
fn exhausted_retries_surface_as_transport_errors() {
    let (base, _rx) = serve(vec![
        (500, "{}".into()),
        (500, "{}".into()),
        (500, "{}".into()),
    ]);
    let gateway = http_gateway(None);
    let chat = profile(&base, ModelKind::Chat);
    let err = gateway.chat_complete(&chat, &prompt("x"), 1, "d").unwrap_err();
    assert!(matches!(err, recprompt::Error::Transport(_)), "{err}");
    let records = gateway.records();
    assert_eq!(records.len(), 1);
    assert_eq!(
        records[0].outcome,
        recprompt::gateway::CallOutcome::TransportError
    );
}

#[test]
fn transport_failures_consume_protocol_attempts_then_fall_back() {
    use recprompt::catalog::{Catalog, EvalInstance, Item, UserHistory};
    use recprompt::metrics::{evaluate_prompt, EvalSetup};
    use recprompt::promptgrid::{PromptRenderer, PromptTemplates};

    // Every upstream call 500s: each protocol attempt burns its 3 transport
    // retries, so 2 attempts x 3 retries = 6 canned responses.
    let (base, _rx) = serve(vec![(500, "{}".into()); 6]);
    let gateway = http_gateway(None);
    let chat = profile(&base, ModelKind::Chat);
    let embed = profile(&base, ModelKind::Embedding);

    let mut catalog = Catalog::new();
    let mut candidates = Vec::new();
    let mut mask = Vec::new();
    for i in 0..20 {
        let id = format!("c{i}");
        catalog.insert(Item {
            item_id: id.clone(),
            title: format!("thing {i}"),
            categories: vec![],
            description: String::new(),
        });
        candidates.push(id);
        mask.push(i < 2);
    }
    catalog.insert(Item {
        item_id: "h0".into(),
        title: "past thing".into(),
        categories: vec![],
        description: String::new(),
    });
    let instance = EvalInstance {
        user_id: "u0".into(),
        candidates,
        positive_mask: mask,
        history: UserHistory {
            user_id: "u0".into(),
            events: vec![recprompt::catalog::Interaction {
                user_id: "u0".into(),
                item_id: "h0".into(),
                timestamp: 1,
                rating: 5.0,
                seq: 1,
            }],
        },
        candidate_seed: 0,
    };

    let templates = PromptTemplates::builtin();
    let setup = EvalSetup {
        gateway: &gateway,
        chat_profile: &chat,
        embed_profile: &embed,
        catalog: &catalog,
        renderer: PromptRenderer::new(&templates, "music", 16_384),
        run_seed: 1,
        max_attempts: 2,
        ndcg_k: 10,
    };
    let result = evaluate_prompt(
        &setup,
        "d",
        &"L-5-T".parse().unwrap(),
        std::slice::from_ref(&instance),
        &mut |_| Ok(()),
    )
    .unwrap();
    assert_eq!(result.results.len(), 1);
    assert!(result.results[0].fell_back_random);
    assert_eq!(result.results[0].attempts_used, 2);
    let records = gateway.records();
    assert_eq!(records.len(), 2, "one transport-error record per protocol attempt");
    assert!(records
        .iter()
        .all(|r| r.outcome == recprompt::gateway::CallOutcome::TransportError));
}

#[test]
fn non_retryable_status_fails_fast() {
    let (base, _rx) = serve(vec![(401, "{}".into())]);
    let gateway = http_gateway(None);
    let chat = profile(&base, ModelKind::Chat);
    let err = gateway.chat_complete(&chat, &prompt("x"), 1, "d").unwrap_err();
    match err {
        recprompt::Error::Transport(msg) => assert!(msg.contains("401"), "{msg}"),
        other => panic!("unexpected: {other}"),
    }
}
