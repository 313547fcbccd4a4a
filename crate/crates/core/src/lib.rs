//! Conformal-calibrated retrieval for retrieval-augmented generation.
//!
//! The pipeline chunks documents, embeds chunks into an exact vector store,
//! labels a set of calibration questions with the similarity of their first
//! answer-bearing chunk, and turns those similarities into a cutoff. At
//! query time every chunk scoring at or above the cutoff is returned, so the
//! answer-bearing chunk is in the context with probability at least
//! `1 - alpha` for questions exchangeable with the calibration set.
//!
//! This crate is `no_std` (with `alloc`). File formats, remote providers and
//! the command line live in the `conformal-rag` crate.

#![no_std]

extern crate alloc;

pub mod calibration;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod generation;
pub mod retrieval;
pub mod synthetic;
pub mod vectorstore;

pub use calibration::{
    compute_threshold, generate_calibration_set, label_question, run_calibration,
    CalibrationQuestion, CalibrationRecord, CalibrationReport, CalibrationSettings, ErrorRate,
    QuantileMode, RelevanceJudge, SubstringJudge, Threshold,
};
pub use corpus::{chunk_document, Chunk, ChunkingConfig, Document};
pub use embedding::{
    embed_text, reference_embed, similarity, EmbeddingProvider, EmbeddingVector, Metric,
    ReferenceEmbedder, SimilarityScore,
};
pub use error::{Error, ErrorKind, ProviderError, Result};
pub use evaluation::{evaluate_coverage, sweep_alpha, CoverageResult};
pub use generation::{
    assemble_context, AssembledPrompt, ChatMessage, ChatProvider, PromptTemplate,
};
pub use retrieval::{conformal_retrieve, top_k_retrieve, Comparison, RetrievedContext};
pub use vectorstore::{Limit, RankedHit, VectorStore};
