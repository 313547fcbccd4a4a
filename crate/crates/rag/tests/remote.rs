mod common;

use std::time::Duration;

use common::{chat_reply, dead_url, Stub};
use conformal_rag::answer;
use conformal_rag::http::RetryPolicy;
use conformal_rag::llm::{LlmJudge, LlmQuestionGenerator, Templates};
use conformal_rag::remote::RemoteChat;
use conformal_rag::remote::RemoteEmbedder;
use conformal_rag_core::calibration::{QuestionGenerator, RelevanceJudge};
use conformal_rag_core::corpus::{Chunk, TokenSpan};
use conformal_rag_core::generation::AssembledPrompt;
use conformal_rag_core::{EmbeddingProvider, ProviderError};
use serde_json::{json, Value};

fn fast(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        base_delay: Duration::from_millis(1),
        max_delay: Duration::from_millis(5),
        timeout: Duration::from_secs(10),
        seed: 1,
    }
}

/// The embedding of text "t<k>" is [k, -k].
fn embed_reply(req: &Value, reverse: bool) -> String {
    let inputs = req["input"].as_array().unwrap();
    let mut data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let k: f64 = t.as_str().unwrap()[1..].parse().unwrap();
            json!({"index": i, "embedding": [k, -k]})
        })
        .collect();
    if reverse {
        data.reverse();
    }
    json!({ "data": data }).to_string()
}

#[test]
fn embeddings_keep_input_order_across_concurrent_batches() {
    let stub = Stub::start(|req, n| {
        // Vary latency so batches finish out of order.
        std::thread::sleep(Duration::from_millis(((n * 7) % 5) as u64 * 3));
        (200, embed_reply(&req.body, n % 2 == 0))
    });
    let e = RemoteEmbedder::new(stub.url(), "m", 2, None, fast(1)).with_batching(3, 4);
    assert_eq!(e.embedder_id(), "remote:m:2");
    let texts: Vec<String> = (0..20).map(|k| format!("t{k}")).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let out = e.embed_batch(&refs).unwrap();
    assert_eq!(out.len(), 20);
    for (k, v) in out.iter().enumerate() {
        assert_eq!(v, &vec![k as f64, -(k as f64)]);
    }
    assert_eq!(stub.hits(), 7);
    assert_eq!(e.requests_sent(), 7);
}

#[test]
fn server_errors_are_retried() {
    let stub = Stub::start(|req, n| {
        if n < 2 {
            (500, "{}".into())
        } else {
            (200, embed_reply(&req.body, false))
        }
    });
    let e = RemoteEmbedder::new(stub.url(), "m", 2, None, fast(5));
    assert_eq!(e.embed_batch(&["t4"]).unwrap(), vec![vec![4.0, -4.0]]);
    assert_eq!(stub.hits(), 3);
}

#[test]
fn rate_limits_are_retried_until_attempts_run_out() {
    let stub = Stub::start(|_, _| (429, "{}".into()));
    let e = RemoteEmbedder::new(stub.url(), "m", 2, None, fast(3));
    match e.embed_batch(&["t1"]) {
        Err(ProviderError::Transport { attempts, message }) => {
            assert_eq!(attempts, 3);
            assert!(message.contains("429"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(stub.hits(), 3);
}

#[test]
fn unreachable_endpoint_gives_transport_error() {
    let e = RemoteEmbedder::new(dead_url(), "m", 2, None, fast(2));
    assert!(matches!(
        e.embed_batch(&["t1"]),
        Err(ProviderError::Transport { attempts: 2, .. })
    ));
}

#[test]
fn client_errors_are_not_retried() {
    let stub = Stub::start(|_, _| (401, "{\"error\":\"bad key\"}".into()));
    let e = RemoteEmbedder::new(stub.url(), "m", 2, None, fast(5));
    assert!(matches!(
        e.embed_batch(&["t1"]),
        Err(ProviderError::Transport { attempts: 1, .. })
    ));
    assert_eq!(stub.hits(), 1);
}

#[test]
fn malformed_payloads_are_reported() {
    let stub = Stub::start(|req, _| {
        let text = req.body["input"][0].as_str().unwrap().to_string();
        let body = match text.as_str() {
            "garbage" => "not json".to_string(),
            "dup" => json!({"data": [{"index": 0, "embedding": [1, 1]}, {"index": 0, "embedding": [1, 1]}]}).to_string(),
            "range" => json!({"data": [{"index": 5, "embedding": [1, 1]}]}).to_string(),
            _ => json!({"data": []}).to_string(),
        };
        (200, body)
    });
    let e = RemoteEmbedder::new(stub.url(), "m", 2, None, fast(5));
    for t in ["garbage", "dup", "range"] {
        assert!(
            matches!(e.embed_batch(&[t]), Err(ProviderError::Malformed(_))),
            "{t}"
        );
    }
    assert!(matches!(
        e.embed_batch(&["missing"]),
        Err(ProviderError::Contract(_))
    ));
    // Malformed answers are not retried.
    assert_eq!(stub.hits(), 4);
}

#[test]
fn api_key_is_sent_as_bearer_token() {
    let stub = Stub::start(|req, _| {
        let ok = req.header("authorization") == Some("Bearer sekrit");
        (if ok { 200 } else { 401 }, chat_reply("hi"))
    });
    let chat = RemoteChat::new(stub.url(), "gpt", Some("sekrit".into()), fast(1));
    assert!(!format!("{chat:?}").contains("sekrit"));
    let reply = conformal_rag_core::ChatProvider::complete(&chat, &[]).unwrap();
    assert_eq!(reply, "hi");
    let anon = RemoteChat::new(stub.url(), "gpt", None, fast(1));
    assert!(conformal_rag_core::ChatProvider::complete(&anon, &[]).is_err());
}

#[test]
fn chat_without_choices_is_malformed() {
    let stub = Stub::start(|_, _| (200, "{\"choices\": []}".into()));
    let chat = RemoteChat::new(stub.url(), "gpt", None, fast(1));
    assert!(matches!(
        conformal_rag_core::ChatProvider::complete(&chat, &[]),
        Err(ProviderError::Malformed(_))
    ));
}

fn judge_with(replies: &'static [&'static str]) -> (Stub, LlmJudge<RemoteChat>) {
    let stub = Stub::start(move |_, n| (200, chat_reply(replies[n.min(replies.len() - 1)])));
    let chat = RemoteChat::new(stub.url(), "judge-model", None, fast(1));
    (stub, LlmJudge::new(chat, Templates::default().judge))
}

#[test]
fn judge_reads_yes_and_no() {
    let (stub, j) = judge_with(&["Yes."]);
    assert_eq!(j.judge_id(), "llm:judge-model");
    assert!(j.accepts("q", "a", "passage").unwrap());
    assert_eq!(stub.hits(), 1);
    let (_, j) = judge_with(&["NO"]);
    assert!(!j.accepts("q", "a", "passage").unwrap());
}

#[test]
fn judge_reprompts_once_then_defaults_to_no() {
    let (stub, j) = judge_with(&["well, perhaps", "yes"]);
    assert!(j.accepts("q", "a", "p").unwrap());
    assert_eq!(stub.hits(), 2);
    let (stub, j) = judge_with(&["hmm", "still unsure"]);
    assert!(!j.accepts("q", "a", "p").unwrap());
    assert_eq!(stub.hits(), 2);
}

#[test]
fn judge_prompt_carries_question_answer_and_passage() {
    let stub = Stub::start(|req, _| {
        let content = req.body["messages"][0]["content"].as_str().unwrap();
        let ok = content.contains("QQQ") && content.contains("AAA") && content.contains("PPP");
        (200, chat_reply(if ok { "yes" } else { "no" }))
    });
    let j = LlmJudge::new(
        RemoteChat::new(stub.url(), "m", None, fast(1)),
        Templates::default().judge,
    );
    assert!(j.accepts("QQQ", "AAA", "PPP").unwrap());
}

#[test]
fn generator_parses_pairs_and_flags_junk() {
    let chunk = Chunk {
        chunk_id: "d#0".into(),
        doc_id: "d".into(),
        ordinal: 0,
        text: "Insulin must be kept cold.".into(),
        token_span: TokenSpan(0, 5),
    };
    let stub = Stub::start(|req, n| {
        assert!(req.body["messages"][0]["content"]
            .as_str()
            .unwrap()
            .contains("kept cold"));
        let reply = if n == 0 {
            "Sure! {\"question\": \"How is insulin stored?\", \"answer\": \"cold\"}"
        } else {
            "I cannot do that."
        };
        (200, chat_reply(reply))
    });
    let g = LlmQuestionGenerator::new(
        RemoteChat::new(stub.url(), "m", None, fast(1)),
        Templates::default().generator,
    );
    let p = g.generate(&chunk).unwrap();
    assert_eq!(p.question, "How is insulin stored?");
    assert_eq!(p.answer, "cold");
    assert!(matches!(
        g.generate(&chunk),
        Err(ProviderError::Malformed(_))
    ));
}

fn prompt() -> AssembledPrompt {
    AssembledPrompt {
        system_text: "sys".into(),
        context_blocks: vec![],
        question: "q?".into(),
        user_text: "ctx q?".into(),
        total_chars: 9,
        abstains: false,
    }
}

#[test]
fn answer_returns_raw_text_and_metadata() {
    let stub = Stub::start(|req, _| {
        let roles: Vec<&str> = req.body["messages"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m["role"].as_str().unwrap())
            .collect();
        assert_eq!(roles, ["system", "user"]);
        let user = req.body["messages"][1]["content"]
            .as_str()
            .unwrap()
            .to_string();
        (200, chat_reply(&format!("echo: {user}")))
    });
    let chat = RemoteChat::new(stub.url(), "model-x", None, fast(1));
    let r = answer(&prompt(), &chat).unwrap();
    assert_eq!(r.text, "echo: ctx q?");
    assert_eq!(r.model_id, "model-x");
    assert_eq!(r.prompt_chars, 9);
    let v = serde_json::to_value(&r).unwrap();
    assert!(v["timing_ms"].is_u64());
}

#[test]
fn answer_failure_returns_the_prompt() {
    let chat = RemoteChat::new(dead_url(), "m", None, fast(1));
    let e = answer(&prompt(), &chat).unwrap_err();
    assert_eq!(e.prompt, prompt());
    assert!(e.source.is_retryable());
}
