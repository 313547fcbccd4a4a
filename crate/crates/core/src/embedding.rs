use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Dot,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Dot => "dot",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "dot" => Ok(Metric::Dot),
            other => Err(Error::config(
                "similarity.metric",
                format!("expected `cosine` or `dot`, got `{other}`"),
            )),
        }
    }
}

/// A finite vector tagged with the embedder that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    embedder_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, embedder_id: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(EmbeddingVector {
            values,
            embedder_id: embedder_id.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        EmbeddingVector::new(
            self.values.iter().map(|v| v * factor).collect(),
            self.embedder_id.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub metric: Metric,
}

/// Source of embeddings. Implementations must return exactly one vector of
/// length `dim()` per input text, in input order.
pub trait EmbeddingProvider {
    fn embedder_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn embedder_id(&self) -> &str {
        (**self).embedder_id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        (**self).embed_batch(texts)
    }
}

pub fn embed_text<P: EmbeddingProvider + ?Sized>(
    text: &str,
    provider: &P,
) -> Result<EmbeddingVector> {
    let mut out = embed_texts(&[text], provider)?;
    Ok(out.remove(0))
}

/// Embeds `texts` and checks the provider's count and dimension contract.
pub fn embed_texts<P: EmbeddingProvider + ?Sized>(
    texts: &[&str],
    provider: &P,
) -> Result<Vec<EmbeddingVector>> {
    let raw = provider
        .embed_batch(texts)
        .map_err(|source| Error::Provider {
            stage: "embedding",
            source,
        })?;
    if raw.len() != texts.len() {
        return Err(Error::Provider {
            stage: "embedding",
            source: ProviderError::Contract(format!(
                "{} returned {} vectors for {} texts",
                provider.embedder_id(),
                raw.len(),
                texts.len()
            )),
        });
    }
    let dim = provider.dim();
    raw.into_iter()
        .map(|values| {
            if values.len() != dim {
                return Err(Error::Provider {
                    stage: "embedding",
                    source: ProviderError::Contract(format!(
                        "{} declared dim {dim} but returned {}",
                        provider.embedder_id(),
                        values.len()
                    )),
                });
            }
            EmbeddingVector::new(values, provider.embedder_id())
        })
        .collect()
}

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercased alphanumeric runs of `text`.
pub fn reference_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(ToString::to_string)
        .collect()
}

pub fn reference_embedder_id(dim: usize) -> String {
    format!("reference:fnv1a-bow:{dim}")
}

/// Hashed bag-of-words embedding: every token adds 1.0 to bucket
/// `fnv1a64(token) % dim`, then the vector is L2-normalized. Text without
/// tokens maps to the zero vector.
///
/// Panics if `dim < 2`.
pub fn reference_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 2, "reference embedder needs dim >= 2");
    let values = reference_values(text, dim);
    EmbeddingVector {
        values,
        embedder_id: reference_embedder_id(dim),
    }
}

fn reference_values(text: &str, dim: usize) -> Vec<f64> {
    let mut buckets = vec![0.0f64; dim];
    for token in reference_tokens(text) {
        buckets[(fnv1a64(token.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let n = norm(&buckets);
    if n > 0.0 {
        for b in &mut buckets {
            *b /= n;
        }
    }
    buckets
}

/// Deterministic offline embedder backed by [`reference_embed`].
#[derive(Debug, Clone)]
pub struct ReferenceEmbedder {
    dim: usize,
    id: String,
}

impl ReferenceEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::config(
                "embedding.dim",
                "reference embedder needs dim >= 2",
            ));
        }
        Ok(ReferenceEmbedder {
            dim,
            id: reference_embedder_id(dim),
        })
    }
}

impl EmbeddingProvider for ReferenceEmbedder {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts
            .iter()
            .map(|t| reference_values(t, self.dim))
            .collect())
    }
}

/// Left-to-right sum from `+0.0`, so an all-zero result is never `-0.0`
/// (which `total_cmp` would rank below an equal `0.0`).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Cosine similarity; zero when either side has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    cosine_with_norms(a, b, norm(a), norm(b))
}

/// [`cosine`] with precomputed norms; bit-identical to it.
pub(crate) fn cosine_with_norms(a: &[f64], b: &[f64], norm_a: f64, norm_b: f64) -> f64 {
    let denom = norm_a * norm_b;
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

pub(crate) fn raw_score(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Cosine => cosine(a, b),
        Metric::Dot => dot(a, b),
    }
}

pub fn similarity(
    a: &EmbeddingVector,
    b: &EmbeddingVector,
    metric: Metric,
) -> Result<SimilarityScore> {
    if a.embedder_id != b.embedder_id {
        return Err(Error::EmbedderMismatch {
            expected: a.embedder_id.clone(),
            found: b.embedder_id.clone(),
        });
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(SimilarityScore {
        value: raw_score(&a.values, &b.values, metric),
        metric,
    })
}
