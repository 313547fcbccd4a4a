//! Held-out coverage of the calibrated retriever.
//!
//! A test question counts as covered when the chunk its labeling accepted
//! (same judge, same first-accept walk as calibration) is in the conformal
//! hit set. Test questions without an answer-bearing chunk are excluded and
//! reported, never scored.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::{
    label_questions, report_from_labels, CalibrationQuestion, CalibrationReport, CalibrationRun,
    CalibrationSettings, ErrorRate, Label, LabeledSet, QuantileMode, RelevanceJudge, Threshold,
};
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::retrieval::{check_report, filter_hits, Comparison};
use crate::vectorstore::{Limit, VectorStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionCoverage {
    pub question_id: String,
    pub covered: bool,
    pub set_size: usize,
    pub answer_chunk_id: String,
    pub answer_rank: usize,
    pub answer_rank_if_missed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub alpha: ErrorRate,
    pub mode: QuantileMode,
    pub comparison: Comparison,
    pub threshold: Threshold,
    pub n_test: usize,
    pub n_covered: usize,
    pub empirical_coverage: f64,
    pub mean_set_size: f64,
    pub median_set_size: f64,
    pub max_set_size: usize,
    pub n_excluded: usize,
    pub excluded_question_ids: Vec<String>,
    pub per_question: Vec<QuestionCoverage>,
}

impl CoverageResult {
    /// `(1 - alpha) - 3 * sqrt(alpha * (1 - alpha) / n_test)`.
    pub fn three_sigma_floor(&self) -> f64 {
        let a = self.alpha.alpha();
        (1.0 - a) - 3.0 * libm::sqrt(a * (1.0 - a) / self.n_test as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub k: usize,
    pub n_test: usize,
    pub n_covered: usize,
    pub coverage: f64,
}

/// Rejects empty splits and question ids shared between them.
pub fn check_splits(
    calibration: &[CalibrationQuestion],
    test: &[CalibrationQuestion],
) -> Result<()> {
    if calibration.is_empty() {
        return Err(Error::EmptySplit("calibration"));
    }
    if test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let ids: BTreeSet<&str> = calibration.iter().map(|q| q.question_id.as_str()).collect();
    if let Some(q) = test.iter().find(|q| ids.contains(q.question_id.as_str())) {
        return Err(Error::OverlappingSplits(q.question_id.clone()));
    }
    Ok(())
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

/// Scores already-labeled test questions against `report`.
pub fn coverage_on_labeled(
    test: &LabeledSet,
    store: &VectorStore,
    report: &CalibrationReport,
    comparison: Comparison,
) -> Result<CoverageResult> {
    check_report(store, report)?;
    let mut per_question = Vec::new();
    let mut excluded = Vec::new();
    for ((q, v), label) in test.questions.iter().zip(&test.vectors).zip(&test.labels) {
        let Label::Found(record) = label else {
            excluded.push(q.question_id.clone());
            continue;
        };
        let (hits, _) = filter_hits(
            store.ranked_query(v, Limit::All)?,
            report.threshold,
            comparison,
            None,
        );
        let covered = hits.iter().any(|h| h.chunk_id == record.answer_chunk_id);
        per_question.push(QuestionCoverage {
            question_id: q.question_id.clone(),
            covered,
            set_size: hits.len(),
            answer_chunk_id: record.answer_chunk_id.clone(),
            answer_rank: record.answer_rank,
            answer_rank_if_missed: (!covered).then_some(record.answer_rank),
        });
    }
    if per_question.is_empty() {
        return Err(Error::EmptySplit("labelable test"));
    }
    let n_test = per_question.len();
    let n_covered = per_question.iter().filter(|p| p.covered).count();
    let mut sizes: Vec<usize> = per_question.iter().map(|p| p.set_size).collect();
    sizes.sort_unstable();
    Ok(CoverageResult {
        alpha: report.alpha,
        mode: report.quantile_mode,
        comparison,
        threshold: report.threshold,
        n_test,
        n_covered,
        empirical_coverage: n_covered as f64 / n_test as f64,
        mean_set_size: sizes.iter().sum::<usize>() as f64 / n_test as f64,
        median_set_size: median(&sizes),
        max_set_size: *sizes.last().unwrap_or(&0),
        n_excluded: excluded.len(),
        excluded_question_ids: excluded,
        per_question,
    })
}

/// Coverage of plain top-k retrieval on the same labels.
pub fn top_k_coverage(test: &LabeledSet, store: &VectorStore, k: usize) -> Result<BaselineResult> {
    if k == 0 {
        return Err(Error::config("retrieval.k", "k must be at least 1"));
    }
    let mut n_test = 0;
    let mut n_covered = 0;
    for (v, label) in test.vectors.iter().zip(&test.labels) {
        let Label::Found(record) = label else {
            continue;
        };
        n_test += 1;
        let hits = store.ranked_query(v, Limit::Top(k))?;
        if hits.iter().any(|h| h.chunk_id == record.answer_chunk_id) {
            n_covered += 1;
        }
    }
    if n_test == 0 {
        return Err(Error::EmptySplit("labelable test"));
    }
    Ok(BaselineResult {
        k,
        n_test,
        n_covered,
        coverage: n_covered as f64 / n_test as f64,
    })
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub calibration: CalibrationRun,
    pub coverage: CoverageResult,
    pub test_labels: LabeledSet,
}

/// Calibrates on `calibration` and measures coverage on `test`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_coverage<P, J>(
    store: &VectorStore,
    provider: &P,
    calibration: &[CalibrationQuestion],
    test: &[CalibrationQuestion],
    judge: &J,
    settings: &CalibrationSettings,
    comparison: Comparison,
    created_at: &str,
) -> Result<Evaluation>
where
    P: EmbeddingProvider + ?Sized,
    J: RelevanceJudge + ?Sized,
{
    let mut sweep = sweep_alpha(
        store,
        provider,
        calibration,
        test,
        judge,
        &[settings.alpha],
        settings,
        comparison,
        created_at,
    )?;
    Ok(Evaluation {
        calibration: sweep.runs.remove(0),
        coverage: sweep.results.remove(0),
        test_labels: sweep.test_labels,
    })
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub runs: Vec<CalibrationRun>,
    pub results: Vec<CoverageResult>,
    pub test_labels: LabeledSet,
    pub warnings: Vec<String>,
}

/// One calibration + coverage per alpha; both splits are labeled once.
/// `settings.alpha` is ignored in favour of `alphas`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_alpha<P, J>(
    store: &VectorStore,
    provider: &P,
    calibration: &[CalibrationQuestion],
    test: &[CalibrationQuestion],
    judge: &J,
    alphas: &[ErrorRate],
    settings: &CalibrationSettings,
    comparison: Comparison,
    created_at: &str,
) -> Result<Sweep>
where
    P: EmbeddingProvider + ?Sized,
    J: RelevanceJudge + ?Sized,
{
    if alphas.is_empty() {
        return Err(Error::config(
            "calibration.alpha",
            "at least one alpha is required",
        ));
    }
    check_splits(calibration, test)?;
    let calib_labels = label_questions(calibration, store, provider, judge, settings.max_rank)?;
    let test_labels = label_questions(test, store, provider, judge, settings.max_rank)?;

    let mut runs = Vec::with_capacity(alphas.len());
    let mut results = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let run = report_from_labels(
            &calib_labels,
            store,
            &CalibrationSettings { alpha, ..*settings },
            created_at,
        )?;
        results.push(coverage_on_labeled(
            &test_labels,
            store,
            &run.report,
            comparison,
        )?);
        runs.push(run);
    }

    let mut warnings = Vec::new();
    let excluded = results[0].n_excluded;
    if excluded > 0 {
        warnings.push(format!(
            "{excluded} test question(s) had no answer-bearing chunk and were excluded"
        ));
    }
    let mut order: Vec<&CoverageResult> = results.iter().collect();
    order.sort_by(|a, b| a.alpha.alpha().total_cmp(&b.alpha.alpha()));
    for w in order.windows(2) {
        if w[1].mean_set_size > w[0].mean_set_size {
            warnings.push(format!(
                "mean set size grew from {} (alpha={}) to {} (alpha={})",
                w[0].mean_set_size, w[0].alpha, w[1].mean_set_size, w[1].alpha
            ));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Sweep {
        runs,
        results,
        test_labels,
        warnings,
    })
}

pub const SWEEP_CSV_HEADER: &str =
    "alpha,threshold,coverage,mean_set_size,median_set_size,max_set_size";

pub fn sweep_csv(results: &[CoverageResult]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.alpha,
            r.threshold,
            r.empirical_coverage,
            r.mean_set_size,
            r.median_set_size,
            r.max_set_size
        );
    }
    out
}

/// One-line human summary.
pub fn describe(r: &CoverageResult) -> String {
    let floor = r.three_sigma_floor();
    format!(
        "alpha={} target={} coverage={:.4} ({}/{}) 3-sigma floor={:.4} {} threshold={} mean_set={:.2} median_set={} max_set={}{}",
        r.alpha,
        r.alpha.confidence(),
        r.empirical_coverage,
        r.n_covered,
        r.n_test,
        floor,
        if r.empirical_coverage >= floor { "ok" } else { "BELOW" },
        r.threshold,
        r.mean_set_size,
        r.median_set_size,
        r.max_set_size,
        if r.n_excluded > 0 { format!(" excluded={}", r.n_excluded) } else { String::new() },
    )
    .to_string()
}
