//! Documents and fixed-size overlapping chunks.
//!
//! Tokens are maximal runs of non-whitespace characters. A chunk keeps the
//! original text between the first byte of its first token and the last byte
//! of its last token, so whitespace inside a chunk is preserved verbatim.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CHUNK_SIZE: usize = 256;
pub const DEFAULT_CHUNK_OVERLAP: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source_path: String,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    /// Rejects documents whose text is blank.
    pub fn new(
        doc_id: impl Into<String>,
        source_path: impl Into<String>,
        text: impl Into<String>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::EmptyDocument(doc_id));
        }
        Ok(Document {
            doc_id,
            source_path: source_path.into(),
            text,
            metadata: BTreeMap::new(),
        })
    }
}

/// Half-open `[start, end)` token offsets within a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenSpan(pub usize, pub usize);

impl TokenSpan {
    pub fn start(&self) -> usize {
        self.0
    }

    pub fn end(&self) -> usize {
        self.1
    }

    pub fn len(&self) -> usize {
        self.1 - self.0
    }

    pub fn is_empty(&self) -> bool {
        self.1 == self.0
    }

    pub fn contains(&self, token: usize) -> bool {
        self.0 <= token && token < self.1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub token_span: TokenSpan,
}

pub fn chunk_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal:06}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub size: usize,
    pub overlap: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            size: DEFAULT_CHUNK_SIZE,
            overlap: DEFAULT_CHUNK_OVERLAP,
        }
    }
}

impl ChunkingConfig {
    pub fn new(size: usize, overlap: usize) -> Result<Self> {
        let config = ChunkingConfig { size, overlap };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::config("chunking.size", "must be at least 1"));
        }
        if self.overlap >= self.size {
            return Err(Error::config(
                "chunking.overlap",
                format!(
                    "overlap ({}) must be smaller than chunk size ({})",
                    self.overlap, self.size
                ),
            ));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.size - self.overlap
    }
}

/// Byte ranges of the whitespace-separated tokens of `text`.
pub fn token_offsets(text: &str) -> Vec<(usize, usize)> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push((s, text.len()));
    }
    tokens
}

pub fn chunk_document(doc: &Document, config: &ChunkingConfig) -> Result<Vec<Chunk>> {
    config.validate()?;
    let tokens = token_offsets(&doc.text);
    let n = tokens.len();
    let mut chunks = Vec::with_capacity(n / config.stride() + 1);
    if n == 0 {
        return Ok(chunks);
    }
    let mut start = 0;
    loop {
        let end = usize::min(start + config.size, n);
        let ordinal = chunks.len();
        chunks.push(Chunk {
            chunk_id: chunk_id(&doc.doc_id, ordinal),
            doc_id: doc.doc_id.clone(),
            ordinal,
            text: String::from(&doc.text[tokens[start].0..tokens[end - 1].1]),
            token_span: TokenSpan(start, end),
        });
        if end == n {
            break;
        }
        start += config.stride();
    }
    Ok(chunks)
}

/// Chunks every document in order; document ids must be unique.
pub fn chunk_corpus(docs: &[Document], config: &ChunkingConfig) -> Result<Vec<Chunk>> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for doc in docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(Error::DuplicateDocument(doc.doc_id.clone()));
        }
        out.extend(chunk_document(doc, config)?);
    }
    Ok(out)
}
