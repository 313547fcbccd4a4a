//! Exact in-memory vector store.
//!
//! Queries scan every entry. Hits are ordered by descending score, ties by
//! ascending `chunk_id`, so results never depend on insertion order.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::corpus::{Chunk, ChunkingConfig};
use crate::embedding::{
    cosine_with_norms, dot, embed_texts, norm, EmbeddingProvider, EmbeddingVector, Metric,
    SimilarityScore,
};
use crate::error::{Error, Result};

/// Texts per provider call during [`VectorStore::build`].
pub const BUILD_BATCH: usize = 64;

/// Either the first `n` results or all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    Top(usize),
    All,
}

impl Limit {
    pub fn admits(&self, rank: usize) -> bool {
        match self {
            Limit::Top(n) => rank <= *n,
            Limit::All => true,
        }
    }
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Limit::Top(n) => write!(f, "{n}"),
            Limit::All => f.write_str("all"),
        }
    }
}

impl core::str::FromStr for Limit {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Limit::All);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(alloc::format!(
                "expected a positive integer or `all`, got `{s}`"
            )),
            Ok(n) => Ok(Limit::Top(n)),
        }
    }
}

impl Serialize for Limit {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            Limit::Top(n) => s.serialize_u64(*n as u64),
            Limit::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for Limit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(0) => Err(serde::de::Error::custom("limit must be positive")),
            Raw::N(n) => Ok(Limit::Top(n as usize)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedChunk {
    pub chunk: Chunk,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedHit {
    pub chunk_id: String,
    pub score: SimilarityScore,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub embedder_id: String,
    pub dim: usize,
    pub metric: Metric,
    pub chunking: ChunkingConfig,
    pub created_at: String,
}

/// Immutable once built.
#[derive(Debug, Clone)]
pub struct VectorStore {
    meta: StoreMeta,
    entries: Vec<EmbeddedChunk>,
    by_id: BTreeMap<String, usize>,
    /// L2 norm of each entry's vector, same order as `entries`.
    norms: Vec<f64>,
    fingerprint: String,
}

impl VectorStore {
    /// Embeds `chunks` with `provider`. Every batch is attempted; if any fail
    /// the error reports how many chunks could not be embedded.
    pub fn build<P: EmbeddingProvider + ?Sized>(
        chunks: Vec<Chunk>,
        provider: &P,
        chunking: ChunkingConfig,
        metric: Metric,
        created_at: impl Into<String>,
    ) -> Result<Self> {
        if chunks.is_empty() {
            return Err(Error::EmptyStore);
        }
        check_unique(chunks.iter().map(|c| c.chunk_id.as_str()))?;

        let mut vectors = Vec::with_capacity(chunks.len());
        let mut failed = 0;
        let mut first_failure = None;
        for batch in chunks.chunks(BUILD_BATCH) {
            let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
            match embed_texts(&texts, provider) {
                Ok(v) => vectors.extend(v),
                Err(Error::Provider { source, .. }) => {
                    failed += batch.len();
                    first_failure.get_or_insert(source);
                }
                Err(other) => return Err(other),
            }
        }
        if let Some(source) = first_failure {
            return Err(Error::EmbeddingFailed { failed, source });
        }

        let meta = StoreMeta {
            embedder_id: String::from(provider.embedder_id()),
            dim: provider.dim(),
            metric,
            chunking,
            created_at: created_at.into(),
        };
        let entries = chunks
            .into_iter()
            .zip(vectors)
            .map(|(chunk, vector)| EmbeddedChunk { chunk, vector })
            .collect();
        Self::from_entries(meta, entries)
    }

    /// Assembles a store from already-embedded entries (e.g. read from disk).
    pub fn from_entries(meta: StoreMeta, entries: Vec<EmbeddedChunk>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyStore);
        }
        let mut by_id = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.vector.embedder_id() != meta.embedder_id {
                return Err(Error::EmbedderMismatch {
                    expected: meta.embedder_id.clone(),
                    found: String::from(e.vector.embedder_id()),
                });
            }
            if e.vector.dim() != meta.dim {
                return Err(Error::DimensionMismatch {
                    expected: meta.dim,
                    found: e.vector.dim(),
                });
            }
            if by_id.insert(e.chunk.chunk_id.clone(), i).is_some() {
                return Err(Error::DuplicateChunk(e.chunk.chunk_id.clone()));
            }
        }
        let fingerprint = fingerprint(&meta, &entries);
        let norms = entries.iter().map(|e| norm(e.vector.values())).collect();
        Ok(VectorStore {
            meta,
            entries,
            by_id,
            norms,
            fingerprint,
        })
    }

    pub fn meta(&self) -> &StoreMeta {
        &self.meta
    }

    pub fn embedder_id(&self) -> &str {
        &self.meta.embedder_id
    }

    pub fn metric(&self) -> Metric {
        self.meta.metric
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[EmbeddedChunk] {
        &self.entries
    }

    pub fn get(&self, chunk_id: &str) -> Option<&EmbeddedChunk> {
        self.by_id.get(chunk_id).map(|&i| &self.entries[i])
    }

    pub fn check_vector(&self, v: &EmbeddingVector) -> Result<()> {
        if v.embedder_id() != self.meta.embedder_id {
            return Err(Error::EmbedderMismatch {
                expected: self.meta.embedder_id.clone(),
                found: String::from(v.embedder_id()),
            });
        }
        if v.dim() != self.meta.dim {
            return Err(Error::DimensionMismatch {
                expected: self.meta.dim,
                found: v.dim(),
            });
        }
        Ok(())
    }

    pub fn ranked_query(&self, question: &EmbeddingVector, limit: Limit) -> Result<Vec<RankedHit>> {
        self.check_vector(question)?;
        let metric = self.meta.metric;
        let q = question.values();
        let q_norm = norm(q);
        let mut scored: Vec<(f64, &str)> = self
            .entries
            .iter()
            .zip(&self.norms)
            .map(|(e, &e_norm)| {
                let v = e.vector.values();
                let score = match metric {
                    Metric::Cosine => cosine_with_norms(q, v, q_norm, e_norm),
                    Metric::Dot => dot(q, v),
                };
                (score, e.chunk.chunk_id.as_str())
            })
            .collect();
        let by_rank = |a: &(f64, &str), b: &(f64, &str)| -> Ordering {
            b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
        };
        if let Limit::Top(k) = limit {
            if k < scored.len() {
                scored.select_nth_unstable_by(k - 1, by_rank);
                scored.truncate(k);
            }
        }
        scored.sort_unstable_by(by_rank);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (value, id))| RankedHit {
                chunk_id: String::from(id),
                score: SimilarityScore { value, metric },
                rank: i + 1,
            })
            .collect())
    }

    /// SHA-256 over the header (minus `created_at`) and every entry, with
    /// vectors hashed by their exact bit patterns.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

fn fingerprint(meta: &StoreMeta, entries: &[EmbeddedChunk]) -> String {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(b"conformal-rag-store");
    field(meta.embedder_id.as_bytes());
    field(&(meta.dim as u64).to_le_bytes());
    field(meta.metric.as_str().as_bytes());
    field(&(meta.chunking.size as u64).to_le_bytes());
    field(&(meta.chunking.overlap as u64).to_le_bytes());
    for e in entries {
        let c = &e.chunk;
        field(c.chunk_id.as_bytes());
        field(c.doc_id.as_bytes());
        field(&(c.ordinal as u64).to_le_bytes());
        field(&(c.token_span.0 as u64).to_le_bytes());
        field(&(c.token_span.1 as u64).to_le_bytes());
        field(c.text.as_bytes());
        for x in e.vector.values() {
            field(&x.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = alloc::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateChunk(String::from(id)));
        }
    }
    Ok(())
}
