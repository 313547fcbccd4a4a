//! Builds providers from a [`Config`].

use conformal_rag_core::embedding::reference_embedder_id;
use conformal_rag_core::{
    EmbeddingProvider, ProviderError, ReferenceEmbedder, RelevanceJudge, SubstringJudge,
    VectorStore,
};

use crate::config::{Config, EmbeddingKind, JudgeKind};
use crate::error::Result;
use crate::http::api_key_from_env;
use crate::llm::{LlmJudge, Templates};
use crate::remote::{RemoteChat, RemoteEmbedder};
use crate::store_file::embedder_warning;

#[derive(Debug)]
pub enum Embedder {
    Reference(ReferenceEmbedder),
    Remote(Box<RemoteEmbedder>),
}

impl EmbeddingProvider for Embedder {
    fn embedder_id(&self) -> &str {
        match self {
            Embedder::Reference(e) => e.embedder_id(),
            Embedder::Remote(e) => e.embedder_id(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Embedder::Reference(e) => e.dim(),
            Embedder::Remote(e) => e.dim(),
        }
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        match self {
            Embedder::Reference(e) => e.embed_batch(texts),
            Embedder::Remote(e) => e.embed_batch(texts),
        }
    }
}

pub fn configured_embedder(cfg: &Config) -> Result<Embedder> {
    let e = &cfg.embedding;
    Ok(match e.provider {
        EmbeddingKind::Reference => Embedder::Reference(ReferenceEmbedder::new(e.dim)?),
        EmbeddingKind::Remote => Embedder::Remote(Box::new(
            RemoteEmbedder::new(
                e.endpoint.clone().unwrap_or_default(),
                e.model.clone().unwrap_or_default(),
                e.dim,
                api_key_from_env(),
                cfg.retry_policy(),
            )
            .with_batching(e.batch, e.in_flight),
        )),
    })
}

/// The embedder queries against `store` must use. A store built by the
/// reference embedder is always queryable with it (its id fixes the
/// dimension); otherwise the configured provider is used, with a warning
/// when its id differs from the store's.
pub fn embedder_for_store(cfg: &Config, store: &VectorStore) -> Result<(Embedder, Vec<String>)> {
    let mut warnings = Vec::new();
    let configured_id = match cfg.embedding.provider {
        EmbeddingKind::Reference => reference_embedder_id(cfg.embedding.dim),
        EmbeddingKind::Remote => crate::remote::remote_embedder_id(
            cfg.embedding.model.as_deref().unwrap_or(""),
            cfg.embedding.dim,
        ),
    };
    warnings.extend(embedder_warning(store, &configured_id));
    let dim = store.meta().dim;
    if store.embedder_id() == reference_embedder_id(dim) {
        return Ok((Embedder::Reference(ReferenceEmbedder::new(dim)?), warnings));
    }
    Ok((configured_embedder(cfg)?, warnings))
}

pub fn chat(cfg: &Config) -> Result<RemoteChat> {
    let (endpoint, model) = cfg.llm_settings()?;
    Ok(RemoteChat::new(
        endpoint,
        model,
        api_key_from_env(),
        cfg.retry_policy(),
    ))
}

pub enum Judge {
    Substring(SubstringJudge),
    Llm(Box<LlmJudge<RemoteChat>>),
}

impl RelevanceJudge for Judge {
    fn judge_id(&self) -> String {
        match self {
            Judge::Substring(j) => j.judge_id(),
            Judge::Llm(j) => j.judge_id(),
        }
    }

    fn accepts(&self, q: &str, answer: &str, chunk: &str) -> Result<bool, ProviderError> {
        match self {
            Judge::Substring(j) => j.accepts(q, answer, chunk),
            Judge::Llm(j) => j.accepts(q, answer, chunk),
        }
    }
}

pub fn judge(cfg: &Config, templates: &Templates) -> Result<Judge> {
    Ok(match cfg.calibration.judge {
        JudgeKind::Substring => Judge::Substring(SubstringJudge),
        JudgeKind::Llm => Judge::Llm(Box::new(LlmJudge::new(chat(cfg)?, templates.judge.clone()))),
    })
}
