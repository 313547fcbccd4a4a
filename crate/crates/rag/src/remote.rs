//! Remote embedding and chat-completion providers.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use conformal_rag_core::{ChatMessage, ChatProvider, EmbeddingProvider, ProviderError};
use serde::{Deserialize, Serialize};

use crate::http::{JsonClient, RetryPolicy};

type BatchResult = Result<Vec<Vec<f64>>, ProviderError>;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    index: usize,
    embedding: Vec<f64>,
}

/// Embeddings from an HTTP endpoint. Large inputs are split into requests
/// of at most `batch` texts, with up to `in_flight` requests outstanding;
/// results are reassembled in input order.
#[derive(Debug)]
pub struct RemoteEmbedder {
    client: JsonClient,
    model: String,
    dim: usize,
    batch: usize,
    in_flight: usize,
    id: String,
}

impl RemoteEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        dim: usize,
        api_key: Option<String>,
        retry: RetryPolicy,
    ) -> Self {
        let model = model.into();
        RemoteEmbedder {
            client: JsonClient::new(endpoint, api_key, retry),
            id: remote_embedder_id(&model, dim),
            model,
            dim,
            batch: 64,
            in_flight: 4,
        }
    }

    pub fn with_batching(mut self, batch: usize, in_flight: usize) -> Self {
        self.batch = batch.max(1);
        self.in_flight = in_flight.max(1);
        self
    }

    pub fn requests_sent(&self) -> u64 {
        self.client.requests_sent()
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let resp: EmbedResponse = self.client.post(&EmbedRequest {
            model: &self.model,
            input: texts,
        })?;
        let mut out: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for item in resp.data {
            let slot = out.get_mut(item.index).ok_or_else(|| {
                ProviderError::Malformed(format!(
                    "embedding index {} out of range for {} inputs",
                    item.index,
                    texts.len()
                ))
            })?;
            if slot.replace(item.embedding).is_some() {
                return Err(ProviderError::Malformed(format!(
                    "embedding index {} returned twice",
                    item.index
                )));
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    ProviderError::Contract(format!("no embedding returned for input {i}"))
                })
            })
            .collect()
    }
}

pub fn remote_embedder_id(model: &str, dim: usize) -> String {
    format!("remote:{model}:{dim}")
}

impl EmbeddingProvider for RemoteEmbedder {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let batches: Vec<&[&str]> = texts.chunks(self.batch).collect();
        if batches.len() <= 1 || self.in_flight == 1 {
            let mut out = Vec::with_capacity(texts.len());
            for b in batches {
                out.extend(self.request(b)?);
            }
            return Ok(out);
        }
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<BatchResult>>> =
            Mutex::new((0..batches.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..self.in_flight.min(batches.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(b) = batches.get(i) else { break };
                    let r = self.request(b);
                    let failed = r.is_err();
                    results.lock().expect("result slots poisoned")[i] = Some(r);
                    if failed {
                        // Stop handing out further batches.
                        next.store(batches.len(), Ordering::Relaxed);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for r in results.into_inner().expect("result slots poisoned") {
            match r {
                Some(r) => out.extend(r?),
                None => break,
            }
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

#[derive(Debug)]
pub struct RemoteChat {
    client: JsonClient,
    model: String,
}

impl RemoteChat {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        retry: RetryPolicy,
    ) -> Self {
        RemoteChat {
            client: JsonClient::new(endpoint, api_key, retry),
            model: model.into(),
        }
    }

    pub fn requests_sent(&self) -> u64 {
        self.client.requests_sent()
    }
}

impl ChatProvider for RemoteChat {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        let resp: ChatResponse = self.client.post(&ChatRequest {
            model: &self.model,
            messages,
        })?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::Malformed("response has no choices".into()))
    }
}
