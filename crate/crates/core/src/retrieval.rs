//! Inference-time retrieval against a calibrated cutoff.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationReport, ErrorRate, Threshold};
use crate::embedding::{embed_text, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::vectorstore::{Limit, RankedHit, VectorStore};

/// How a score is compared with the cutoff. `Geq` keeps a chunk whose score
/// equals the cutoff; `StrictGt` drops it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    #[default]
    Geq,
    StrictGt,
}

impl Comparison {
    pub fn as_str(&self) -> &'static str {
        match self {
            Comparison::Geq => "geq",
            Comparison::StrictGt => "strict-gt",
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Comparison {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geq" => Ok(Comparison::Geq),
            "strict-gt" => Ok(Comparison::StrictGt),
            other => Err(Error::config(
                "retrieval.comparison",
                format!("expected `geq` or `strict-gt`, got `{other}`"),
            )),
        }
    }
}

pub const TRUNCATED_BY_BUDGET: &str = "budget";
pub const TRUNCATED_BY_CHARS: &str = "char-budget";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub question: String,
    /// Descending score.
    pub hits: Vec<RankedHit>,
    /// `None` for the top-k baseline.
    pub threshold_used: Option<Threshold>,
    pub comparison: Option<Comparison>,
    pub truncated: bool,
    pub truncation_reason: Option<String>,
    pub alpha: Option<ErrorRate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RetrievedContext {
    pub fn contains(&self, chunk_id: &str) -> bool {
        self.hits.iter().any(|h| h.chunk_id == chunk_id)
    }

    pub(crate) fn mark_truncated(&mut self, reason: &str) {
        self.truncated = true;
        match &mut self.truncation_reason {
            Some(r) if !r.split(',').any(|x| x == reason) => {
                r.push(',');
                r.push_str(reason);
            }
            Some(_) => {}
            None => self.truncation_reason = Some(reason.to_string()),
        }
    }
}

/// Preconditions shared by every conformal query against `store`.
pub fn check_report(store: &VectorStore, report: &CalibrationReport) -> Result<Vec<String>> {
    if report.embedder_id != store.embedder_id() {
        return Err(Error::EmbedderMismatch {
            expected: store.embedder_id().to_string(),
            found: report.embedder_id.clone(),
        });
    }
    if report.metric != store.metric() {
        return Err(Error::MetricMismatch {
            expected: store.metric().to_string(),
            found: report.metric.to_string(),
        });
    }
    report.verify()?;
    let mut warnings = Vec::new();
    if report.store_fingerprint != store.fingerprint() {
        warnings.push(String::from(
            "calibration report was computed against a different store with the same embedder",
        ));
    }
    Ok(warnings)
}

/// Keeps every chunk that clears `threshold`. With `max_chunks` set, only
/// the best `max_chunks` are kept and the context is flagged as truncated.
pub fn filter_hits(
    ranked: Vec<RankedHit>,
    threshold: Threshold,
    comparison: Comparison,
    max_chunks: Option<usize>,
) -> (Vec<RankedHit>, bool) {
    let mut hits: Vec<RankedHit> = ranked
        .into_iter()
        .filter(|h| threshold.admits(h.score.value, comparison))
        .collect();
    let truncated = match max_chunks {
        Some(budget) if hits.len() > budget => {
            hits.truncate(budget);
            true
        }
        _ => false,
    };
    (hits, truncated)
}

pub fn conformal_retrieve_vector(
    question: &str,
    question_vector: &EmbeddingVector,
    store: &VectorStore,
    report: &CalibrationReport,
    max_chunks: Option<usize>,
    comparison: Comparison,
) -> Result<RetrievedContext> {
    let mut warnings = check_report(store, report)?;
    let ranked = store.ranked_query(question_vector, Limit::All)?;
    let (hits, truncated) = filter_hits(ranked, report.threshold, comparison, max_chunks);
    let mut ctx = RetrievedContext {
        question: question.to_string(),
        hits,
        threshold_used: Some(report.threshold),
        comparison: Some(comparison),
        truncated: false,
        truncation_reason: None,
        alpha: Some(report.alpha),
        warnings: Vec::new(),
    };
    if truncated {
        ctx.mark_truncated(TRUNCATED_BY_BUDGET);
        warnings.push(format!(
            "retrieved set truncated to {} chunk(s) by budget; the {} coverage guarantee does not hold for this query",
            ctx.hits.len(),
            report.alpha.confidence()
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    ctx.warnings = warnings;
    Ok(ctx)
}

/// Returns every chunk whose similarity to `question` clears the calibrated
/// cutoff, best first.
pub fn conformal_retrieve<P: EmbeddingProvider + ?Sized>(
    question: &str,
    provider: &P,
    store: &VectorStore,
    report: &CalibrationReport,
    max_chunks: Option<usize>,
    comparison: Comparison,
) -> Result<RetrievedContext> {
    let v = embed_text(question, provider)?;
    conformal_retrieve_vector(question, &v, store, report, max_chunks, comparison)
}

pub fn top_k_retrieve_vector(
    question: &str,
    question_vector: &EmbeddingVector,
    store: &VectorStore,
    k: usize,
) -> Result<RetrievedContext> {
    if k == 0 {
        return Err(Error::config("retrieval.k", "k must be at least 1"));
    }
    Ok(RetrievedContext {
        question: question.to_string(),
        hits: store.ranked_query(question_vector, Limit::Top(k))?,
        threshold_used: None,
        comparison: None,
        truncated: false,
        truncation_reason: None,
        alpha: None,
        warnings: Vec::new(),
    })
}

/// Conventional fixed-k retrieval, used as a baseline.
pub fn top_k_retrieve<P: EmbeddingProvider + ?Sized>(
    question: &str,
    provider: &P,
    store: &VectorStore,
    k: usize,
) -> Result<RetrievedContext> {
    let v = embed_text(question, provider)?;
    top_k_retrieve_vector(question, &v, store, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Metric, SimilarityScore};
    use alloc::vec;

    fn hit(id: &str, score: f64, rank: usize) -> RankedHit {
        RankedHit {
            chunk_id: id.into(),
            score: SimilarityScore {
                value: score,
                metric: Metric::Cosine,
            },
            rank,
        }
    }

    fn ids(h: &[RankedHit]) -> Vec<&str> {
        h.iter().map(|h| h.chunk_id.as_str()).collect()
    }

    #[test]
    fn geq_and_strict_filters() {
        let ranked = vec![hit("A", 0.92, 1), hit("B", 0.30, 2), hit("C", 0.29, 3)];
        let (geq, t) = filter_hits(
            ranked.clone(),
            Threshold::Score(0.30),
            Comparison::Geq,
            None,
        );
        assert_eq!(ids(&geq), vec!["A", "B"]);
        assert!(!t);
        let (gt, _) = filter_hits(ranked, Threshold::Score(0.30), Comparison::StrictGt, None);
        assert_eq!(ids(&gt), vec!["A"]);
    }

    #[test]
    fn budget_truncates_loudly() {
        let ranked = vec![hit("A", 0.9, 1), hit("B", 0.8, 2), hit("C", 0.7, 3)];
        let (h, t) = filter_hits(
            ranked.clone(),
            Threshold::RetrieveAll,
            Comparison::Geq,
            Some(2),
        );
        assert_eq!(ids(&h), vec!["A", "B"]);
        assert!(t);
        let (h, t) = filter_hits(ranked, Threshold::RetrieveAll, Comparison::Geq, Some(3));
        assert_eq!(h.len(), 3);
        assert!(!t);
    }

    #[test]
    fn comparison_parsing() {
        assert_eq!(
            "strict-gt".parse::<Comparison>().unwrap(),
            Comparison::StrictGt
        );
        assert!("gt".parse::<Comparison>().is_err());
    }
}
