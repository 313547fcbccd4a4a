//! Versioned JSON Lines store file: one header line, then one line per chunk.

use std::io::Write;
use std::path::Path;

use conformal_rag_core::corpus::TokenSpan;
use conformal_rag_core::vectorstore::{EmbeddedChunk, StoreMeta};
use conformal_rag_core::{Chunk, ChunkingConfig, EmbeddingVector, Metric, VectorStore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{read_text, write_atomic};

pub const STORE_FORMAT: &str = "conformal-rag-store";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub format: String,
    pub version: u32,
    pub embedder_id: String,
    pub dim: usize,
    pub metric_default: Metric,
    pub chunking: ChunkingConfig,
    pub n_chunks: usize,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    chunk_id: String,
    doc_id: String,
    ordinal: usize,
    token_span: TokenSpan,
    text: String,
    vector: Vec<f64>,
}

pub fn header_of(store: &VectorStore) -> StoreHeader {
    let meta = store.meta();
    StoreHeader {
        format: STORE_FORMAT.to_string(),
        version: STORE_VERSION,
        embedder_id: meta.embedder_id.clone(),
        dim: meta.dim,
        metric_default: meta.metric,
        chunking: meta.chunking,
        n_chunks: store.len(),
        created_at: meta.created_at.clone(),
    }
}

/// Serializes `store` to its on-disk text. Floats use shortest round-trip
/// decimal, so reading the text back reproduces every bit.
pub fn write_store(store: &VectorStore, w: &mut dyn Write) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, &header_of(store))?;
    w.write_all(b"\n")?;
    for e in store.entries() {
        let c = &e.chunk;
        let r = Record {
            chunk_id: c.chunk_id.clone(),
            doc_id: c.doc_id.clone(),
            ordinal: c.ordinal,
            token_span: c.token_span,
            text: c.text.clone(),
            vector: e.vector.values().to_vec(),
        };
        serde_json::to_writer(&mut *w, &r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_store(store: &VectorStore, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_store(store, w))
}

pub fn load_store(path: &Path) -> Result<VectorStore> {
    let text = read_text(path)?;
    parse_store(&text, path)
}

pub fn parse_store(text: &str, path: &Path) -> Result<VectorStore> {
    let corrupt = |reason: String| Error::CorruptStore {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.split_terminator('\n');
    let first = lines
        .next()
        .ok_or_else(|| corrupt("file is empty".into()))?;
    let raw: serde_json::Value =
        serde_json::from_str(first).map_err(|e| corrupt(format!("unreadable header: {e}")))?;
    if raw.get("format").and_then(|f| f.as_str()) != Some(STORE_FORMAT) {
        return Err(corrupt(format!("header format is not `{STORE_FORMAT}`")));
    }
    if let Some(v) = raw.get("version").and_then(|v| v.as_u64()) {
        if v != u64::from(STORE_VERSION) {
            return Err(Error::StoreVersion {
                path: path.to_path_buf(),
                expected: STORE_VERSION,
                found: v.try_into().unwrap_or(u32::MAX),
            });
        }
    }
    let header: StoreHeader =
        serde_json::from_value(raw).map_err(|e| corrupt(format!("bad header: {e}")))?;

    let mut entries = Vec::with_capacity(header.n_chunks);
    for (i, line) in lines.enumerate() {
        let r: Record =
            serde_json::from_str(line).map_err(|e| corrupt(format!("line {}: {e}", i + 2)))?;
        let vector = EmbeddingVector::new(r.vector, header.embedder_id.clone())
            .map_err(|e| corrupt(format!("line {}: {e}", i + 2)))?;
        entries.push(EmbeddedChunk {
            chunk: Chunk {
                chunk_id: r.chunk_id,
                doc_id: r.doc_id,
                ordinal: r.ordinal,
                text: r.text,
                token_span: r.token_span,
            },
            vector,
        });
    }
    if !text.ends_with('\n') {
        return Err(corrupt("missing final newline (file truncated?)".into()));
    }
    if entries.len() != header.n_chunks {
        return Err(corrupt(format!(
            "header declares {} chunks but {} were found (file truncated?)",
            header.n_chunks,
            entries.len()
        )));
    }
    let meta = StoreMeta {
        embedder_id: header.embedder_id,
        dim: header.dim,
        metric: header.metric_default,
        chunking: header.chunking,
        created_at: header.created_at,
    };
    VectorStore::from_entries(meta, entries).map_err(|e| corrupt(e.to_string()))
}

/// Warning text when the store was built by a different embedder than the
/// one currently configured.
pub fn embedder_warning(store: &VectorStore, configured: &str) -> Option<String> {
    (store.embedder_id() != configured).then(|| {
        format!(
            "store was built with embedder `{}` but the configuration selects `{configured}`; \
             queries must use vectors from `{}`",
            store.embedder_id(),
            store.embedder_id()
        )
    })
}
