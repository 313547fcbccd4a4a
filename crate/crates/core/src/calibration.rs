//! Calibration of the similarity cutoff.
//!
//! Each calibration question is labeled with the score of the first chunk,
//! in rank order, that a [`RelevanceJudge`] accepts as answer-bearing. The
//! cutoff is an order statistic of those scores: the k-th highest, with
//! `k = ceil((1 - alpha) * n)` (`paper-percentile`) or
//! `k = ceil((1 - alpha) * (n + 1))` (`finite-sample`). When `k > n` no score
//! qualifies and the threshold is [`Threshold::RetrieveAll`].

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::Chunk;
use crate::embedding::{embed_texts, EmbeddingProvider, EmbeddingVector, Metric, SimilarityScore};
use crate::error::{Error, ProviderError, Result};
use crate::retrieval::Comparison;
use crate::vectorstore::{Limit, VectorStore, BUILD_BATCH};

pub const REPORT_FORMAT: &str = "conformal-rag-calibration";
pub const REPORT_VERSION: u32 = 1;
pub const DEFAULT_MAX_RANK: usize = 50;
/// Drop fraction above which the report carries a guarantee-validity warning.
pub const DROP_WARNING_FRACTION: f64 = 0.2;
/// Name of the generator used to sample chunks for question generation.
pub const SAMPLER_RNG: &str = "pcg64 (Lcg128Xsl64), Fisher-Yates shuffle";

/// Slack when comparing `(1 - alpha) * m` against an integer rank, so that
/// e.g. `alpha = 0.7, n = 10` gives `k = 3` rather than `k = 4` because of
/// `1.0 - 0.7 = 0.30000000000000004`.
pub const RANK_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Generated,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationQuestion {
    pub question_id: String,
    pub question: String,
    #[serde(default)]
    pub reference_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_doc_id: Option<String>,
    pub origin: Origin,
}

impl CalibrationQuestion {
    pub fn new(
        question_id: impl Into<String>,
        question: impl Into<String>,
        reference_answer: impl Into<String>,
        origin: Origin,
    ) -> Result<Self> {
        let question = question.into();
        let question_id = question_id.into();
        if question.trim().is_empty() {
            return Err(Error::config(
                "question",
                format!("question `{question_id}` is empty"),
            ));
        }
        Ok(CalibrationQuestion {
            question_id,
            question,
            reference_answer: reference_answer.into(),
            source_doc_id: None,
            origin,
        })
    }
}

/// Error level alpha, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct ErrorRate(f64);

impl ErrorRate {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(ErrorRate(alpha))
        } else {
            Err(Error::config(
                "calibration.alpha",
                format!("must lie strictly between 0 and 1, got {alpha}"),
            ))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.0
    }

    pub fn confidence(&self) -> f64 {
        1.0 - self.0
    }
}

impl<'de> Deserialize<'de> for ErrorRate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let alpha = f64::deserialize(d)?;
        ErrorRate::new(alpha).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for ErrorRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileMode {
    /// k-th highest with `k = ceil((1 - alpha) * n)`.
    PaperPercentile,
    /// k-th highest with `k = ceil((1 - alpha) * (n + 1))`.
    #[default]
    FiniteSample,
}

impl QuantileMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            QuantileMode::PaperPercentile => "paper-percentile",
            QuantileMode::FiniteSample => "finite-sample",
        }
    }
}

impl fmt::Display for QuantileMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuantileMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-percentile" => Ok(QuantileMode::PaperPercentile),
            "finite-sample" => Ok(QuantileMode::FiniteSample),
            other => Err(Error::config(
                "calibration.mode",
                format!("expected `paper-percentile` or `finite-sample`, got `{other}`"),
            )),
        }
    }
}

/// Similarity cutoff, or the sentinel that sits below every possible score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Score(f64),
    RetrieveAll,
}

impl Threshold {
    pub const RETRIEVE_ALL: &'static str = "RETRIEVE_ALL";

    /// Position on the score line; the sentinel maps to negative infinity.
    pub fn as_f64(&self) -> f64 {
        match self {
            Threshold::Score(s) => *s,
            Threshold::RetrieveAll => f64::NEG_INFINITY,
        }
    }

    pub fn admits(&self, score: f64, comparison: Comparison) -> bool {
        match (self, comparison) {
            (Threshold::RetrieveAll, _) => true,
            (Threshold::Score(t), Comparison::Geq) => score >= *t,
            (Threshold::Score(t), Comparison::StrictGt) => score > *t,
        }
    }

    pub fn bit_eq(&self, other: &Threshold) -> bool {
        match (self, other) {
            (Threshold::Score(a), Threshold::Score(b)) => a.to_bits() == b.to_bits(),
            (Threshold::RetrieveAll, Threshold::RetrieveAll) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Score(s) => write!(f, "{s}"),
            Threshold::RetrieveAll => f.write_str(Self::RETRIEVE_ALL),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::Score(v) => s.serialize_f64(*v),
            Threshold::RetrieveAll => s.serialize_str(Self::RETRIEVE_ALL),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Score(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Score(v) if v.is_finite() => Ok(Threshold::Score(v)),
            Raw::Score(v) => Err(serde::de::Error::custom(format!(
                "non-finite threshold {v}"
            ))),
            Raw::Tag(t) if t == Self::RETRIEVE_ALL => Ok(Threshold::RetrieveAll),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("unknown threshold `{t}`"))),
        }
    }
}

/// 1-based rank of the order statistic used as cutoff, or `None` when it
/// falls past the last score.
pub fn required_rank(alpha: ErrorRate, n: usize, mode: QuantileMode) -> Option<usize> {
    let m = match mode {
        QuantileMode::PaperPercentile => n,
        QuantileMode::FiniteSample => n + 1,
    };
    let target = alpha.confidence() * m as f64;
    let k = (libm::ceil(target - RANK_EPSILON) as usize).max(1);
    (k <= n).then_some(k)
}

pub fn compute_threshold(
    scores: &[f64],
    alpha: ErrorRate,
    mode: QuantileMode,
) -> Result<Threshold> {
    if scores.is_empty() {
        return Err(Error::NoLabeledRecords);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let Some(k) = required_rank(alpha, scores.len(), mode) else {
        return Ok(Threshold::RetrieveAll);
    };
    let mut sorted = scores.to_vec();
    sort_descending(&mut sorted);
    Ok(Threshold::Score(sorted[k - 1]))
}

pub fn sort_descending(scores: &mut [f64]) {
    scores.sort_unstable_by(|a, b| b.total_cmp(a));
}

/// Decides whether a chunk answers a question.
pub trait RelevanceJudge {
    fn judge_id(&self) -> String;
    fn accepts(
        &self,
        question: &str,
        reference_answer: &str,
        chunk_text: &str,
    ) -> Result<bool, ProviderError>;
}

impl<J: RelevanceJudge + ?Sized> RelevanceJudge for &J {
    fn judge_id(&self) -> String {
        (**self).judge_id()
    }
    fn accepts(
        &self,
        question: &str,
        reference_answer: &str,
        chunk_text: &str,
    ) -> Result<bool, ProviderError> {
        (**self).accepts(question, reference_answer, chunk_text)
    }
}

/// Accepts a chunk when it contains the reference answer after lowercasing
/// and collapsing whitespace. An empty reference answer is never accepted.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubstringJudge;

pub fn normalize_for_match(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for word in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

impl RelevanceJudge for SubstringJudge {
    fn judge_id(&self) -> String {
        "substring".to_string()
    }

    fn accepts(
        &self,
        _question: &str,
        reference_answer: &str,
        chunk_text: &str,
    ) -> Result<bool, ProviderError> {
        let needle = normalize_for_match(reference_answer);
        if needle.is_empty() {
            return Ok(false);
        }
        Ok(normalize_for_match(chunk_text).contains(&needle))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub question_id: String,
    pub answer_chunk_id: String,
    pub answer_rank: usize,
    pub score: SimilarityScore,
    pub judge_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Found(CalibrationRecord),
    NoAnswerFound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub label: Label,
    /// Chunks whose judgement failed and were counted as "no".
    pub judge_failures: Vec<String>,
}

/// Walks the ranking of `question` and returns the first hit the judge
/// accepts. Judge errors count as rejections.
pub fn label_question<J: RelevanceJudge + ?Sized>(
    q: &CalibrationQuestion,
    question_vector: &EmbeddingVector,
    store: &VectorStore,
    judge: &J,
    max_rank: Limit,
) -> Result<Labeling> {
    let hits = store.ranked_query(question_vector, max_rank)?;
    let judge_id = judge.judge_id();
    let mut judge_failures = Vec::new();
    for hit in hits {
        let chunk = &store
            .get(&hit.chunk_id)
            .ok_or_else(|| Error::UnknownChunk(hit.chunk_id.clone()))?
            .chunk;
        let accepted = match judge.accepts(&q.question, &q.reference_answer, &chunk.text) {
            Ok(a) => a,
            Err(e) => {
                log::warn!(
                    "judge failed on {} for {}: {e}; counted as no",
                    hit.chunk_id,
                    q.question_id
                );
                judge_failures.push(hit.chunk_id.clone());
                false
            }
        };
        if accepted {
            return Ok(Labeling {
                label: Label::Found(CalibrationRecord {
                    question_id: q.question_id.clone(),
                    answer_chunk_id: hit.chunk_id,
                    answer_rank: hit.rank,
                    score: hit.score,
                    judge_id,
                }),
                judge_failures,
            });
        }
    }
    Ok(Labeling {
        label: Label::NoAnswerFound,
        judge_failures,
    })
}

/// Embeds questions in batches, preserving order.
pub fn embed_questions<P: EmbeddingProvider + ?Sized>(
    questions: &[CalibrationQuestion],
    provider: &P,
) -> Result<Vec<EmbeddingVector>> {
    let mut out = Vec::with_capacity(questions.len());
    for batch in questions.chunks(BUILD_BATCH) {
        let texts: Vec<&str> = batch.iter().map(|q| q.question.as_str()).collect();
        out.extend(embed_texts(&texts, provider)?);
    }
    Ok(out)
}

/// Labels of a whole question set, in question order.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub questions: Vec<CalibrationQuestion>,
    pub vectors: Vec<EmbeddingVector>,
    pub labels: Vec<Label>,
    pub judge_id: String,
    pub max_rank: Limit,
    pub judge_failures: usize,
}

impl LabeledSet {
    pub fn records(&self) -> impl Iterator<Item = &CalibrationRecord> {
        self.labels.iter().filter_map(|l| match l {
            Label::Found(r) => Some(r),
            Label::NoAnswerFound => None,
        })
    }

    pub fn dropped_ids(&self) -> Vec<String> {
        self.questions
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| matches!(l, Label::NoAnswerFound))
            .map(|(q, _)| q.question_id.clone())
            .collect()
    }
}

pub fn label_questions<P, J>(
    questions: &[CalibrationQuestion],
    store: &VectorStore,
    provider: &P,
    judge: &J,
    max_rank: Limit,
) -> Result<LabeledSet>
where
    P: EmbeddingProvider + ?Sized,
    J: RelevanceJudge + ?Sized,
{
    let vectors = embed_questions(questions, provider)?;
    let mut labels = Vec::with_capacity(questions.len());
    let mut judge_failures = 0;
    for (q, v) in questions.iter().zip(&vectors) {
        let l = label_question(q, v, store, judge, max_rank)?;
        judge_failures += l.judge_failures.len();
        labels.push(l.label);
    }
    Ok(LabeledSet {
        questions: questions.to_vec(),
        vectors,
        labels,
        judge_id: judge.judge_id(),
        max_rank,
        judge_failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSettings {
    pub alpha: ErrorRate,
    pub mode: QuantileMode,
    pub max_rank: Limit,
    /// Any unanswerable question becomes a fatal error.
    pub strict: bool,
}

impl CalibrationSettings {
    pub fn new(alpha: ErrorRate) -> Self {
        CalibrationSettings {
            alpha,
            mode: QuantileMode::default(),
            max_rank: Limit::Top(DEFAULT_MAX_RANK),
            strict: false,
        }
    }
}

/// How generated questions were sampled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationProvenance {
    pub rng: String,
    pub seed: u64,
    pub requested: usize,
    pub malformed: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub format: String,
    pub version: u32,
    pub alpha: ErrorRate,
    pub quantile_mode: QuantileMode,
    pub threshold: Threshold,
    pub n_questions: usize,
    pub n_labeled: usize,
    pub n_dropped: usize,
    /// Labeled scores, sorted descending.
    pub scores: Vec<f64>,
    pub embedder_id: String,
    pub metric: Metric,
    pub created_at: String,
    pub store_fingerprint: String,
    pub judge_id: String,
    pub max_rank: Limit,
    pub dropped_question_ids: Vec<String>,
    pub duplicate_questions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationProvenance>,
    /// Per-question labels, in question order.
    pub records: Vec<CalibrationRecord>,
}

impl CalibrationReport {
    /// Checks internal consistency, including that the threshold is the one
    /// `compute_threshold` derives from the stored scores.
    pub fn verify(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::CorruptReport(msg));
        if self.format != REPORT_FORMAT {
            return bad(format!("format `{}` is not `{REPORT_FORMAT}`", self.format));
        }
        if self.version != REPORT_VERSION {
            return bad(format!(
                "version {} (expected {REPORT_VERSION})",
                self.version
            ));
        }
        if self.n_labeled != self.scores.len() {
            return bad(format!(
                "n_labeled {} but {} scores",
                self.n_labeled,
                self.scores.len()
            ));
        }
        if self.n_labeled + self.n_dropped != self.n_questions {
            return bad(format!(
                "n_labeled {} + n_dropped {} != n_questions {}",
                self.n_labeled, self.n_dropped, self.n_questions
            ));
        }
        if self.dropped_question_ids.len() != self.n_dropped {
            return bad("dropped_question_ids does not match n_dropped".into());
        }
        if self.records.len() != self.n_labeled {
            return bad("records do not match n_labeled".into());
        }
        if self.scores.windows(2).any(|w| w[0] < w[1]) {
            return bad("scores are not sorted descending".into());
        }
        let mut from_records: Vec<f64> = self.records.iter().map(|r| r.score.value).collect();
        sort_descending(&mut from_records);
        let same = from_records
            .iter()
            .zip(&self.scores)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return bad("scores differ from record scores".into());
        }
        let derived = compute_threshold(&self.scores, self.alpha, self.quantile_mode)
            .map_err(|e| Error::CorruptReport(e.to_string()))?;
        if !derived.bit_eq(&self.threshold) {
            return bad(format!(
                "threshold {} does not match re-derived {derived} for alpha={} mode={}",
                self.threshold, self.alpha, self.quantile_mode
            ));
        }
        Ok(())
    }

    pub fn drop_fraction(&self) -> f64 {
        self.n_dropped as f64 / self.n_questions as f64
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationRun {
    pub report: CalibrationReport,
    pub warnings: Vec<String>,
}

pub fn duplicate_question_count(questions: &[CalibrationQuestion]) -> usize {
    let mut seen = BTreeSet::new();
    questions
        .iter()
        .filter(|q| !seen.insert(q.question.as_str()))
        .count()
}

/// Builds a report from already-labeled questions.
pub fn report_from_labels(
    labeled: &LabeledSet,
    store: &VectorStore,
    settings: &CalibrationSettings,
    created_at: &str,
) -> Result<CalibrationRun> {
    let n_questions = labeled.questions.len();
    if n_questions == 0 {
        return Err(Error::EmptyCalibrationSet);
    }
    let records: Vec<CalibrationRecord> = labeled.records().cloned().collect();
    let dropped = labeled.dropped_ids();
    if records.is_empty() {
        return Err(Error::AllDropped(n_questions));
    }
    if settings.strict && !dropped.is_empty() {
        return Err(Error::StrictDrop(dropped));
    }

    let mut scores: Vec<f64> = records.iter().map(|r| r.score.value).collect();
    sort_descending(&mut scores);
    let threshold = compute_threshold(&scores, settings.alpha, settings.mode)?;

    let mut warnings = Vec::new();
    if !dropped.is_empty() {
        warnings.push(format!(
            "{} question(s) had no answer-bearing chunk within rank {} and were dropped: {}",
            dropped.len(),
            labeled.max_rank,
            dropped.join(", ")
        ));
    }
    let drop_fraction = dropped.len() as f64 / n_questions as f64;
    if drop_fraction > DROP_WARNING_FRACTION {
        warnings.push(format!(
            "GUARANTEE VALIDITY WARNING: {:.1}% of calibration questions were dropped (> {:.0}%); \
             the calibration set may not represent inference-time questions and the 1-alpha coverage \
             guarantee is questionable",
            drop_fraction * 100.0,
            DROP_WARNING_FRACTION * 100.0
        ));
    }
    if labeled.judge_failures > 0 {
        warnings.push(format!(
            "{} judge call(s) failed and were counted as rejections",
            labeled.judge_failures
        ));
    }
    let duplicate_questions = duplicate_question_count(&labeled.questions);
    if duplicate_questions > 0 {
        warnings.push(format!(
            "{duplicate_questions} duplicate question text(s) in calibration set"
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let report = CalibrationReport {
        format: REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        alpha: settings.alpha,
        quantile_mode: settings.mode,
        threshold,
        n_questions,
        n_labeled: records.len(),
        n_dropped: dropped.len(),
        scores,
        embedder_id: store.embedder_id().to_string(),
        metric: store.metric(),
        created_at: created_at.to_string(),
        store_fingerprint: store.fingerprint().to_string(),
        judge_id: labeled.judge_id.clone(),
        max_rank: labeled.max_rank,
        dropped_question_ids: dropped,
        duplicate_questions,
        generation: None,
        records,
    };
    Ok(CalibrationRun { report, warnings })
}

/// Labels `questions` against `store` and computes the cutoff.
pub fn run_calibration<P, J>(
    store: &VectorStore,
    questions: &[CalibrationQuestion],
    provider: &P,
    judge: &J,
    settings: &CalibrationSettings,
    created_at: &str,
) -> Result<CalibrationRun>
where
    P: EmbeddingProvider + ?Sized,
    J: RelevanceJudge + ?Sized,
{
    if questions.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    let labeled = label_questions(questions, store, provider, judge, settings.max_rank)?;
    report_from_labels(&labeled, store, settings, created_at)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedPair {
    pub question: String,
    pub answer: String,
}

/// Produces one question/answer pair grounded in a chunk.
/// [`ProviderError::Malformed`] drops the chunk; other errors abort.
pub trait QuestionGenerator {
    fn generate(&self, chunk: &Chunk) -> Result<GeneratedPair, ProviderError>;
}

#[derive(Debug, Clone)]
pub struct GeneratedSet {
    pub questions: Vec<CalibrationQuestion>,
    pub provenance: GenerationProvenance,
    pub warnings: Vec<String>,
}

/// Samples chunks without replacement from a seeded permutation and asks
/// `generator` for one question each. Malformed outputs and repeated
/// question texts are replaced by the next chunk in the permutation until
/// `n` distinct questions exist or the pool runs out.
pub fn generate_calibration_set<G: QuestionGenerator + ?Sized>(
    store: &VectorStore,
    generator: &G,
    n: usize,
    seed: u64,
) -> Result<GeneratedSet> {
    if n == 0 {
        return Err(Error::config(
            "calibration.generate",
            "n must be at least 1",
        ));
    }
    if n > store.len() {
        return Err(Error::config(
            "calibration.generate",
            format!(
                "requested {n} questions but the store holds only {} chunks",
                store.len()
            ),
        ));
    }
    let mut order: Vec<usize> = (0..store.len()).collect();
    let mut rng = Pcg64::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut questions = Vec::with_capacity(n);
    let mut seen = BTreeSet::new();
    let (mut malformed, mut duplicates) = (0, 0);
    let mut warnings = Vec::new();
    for idx in order {
        if questions.len() == n {
            break;
        }
        let chunk = &store.entries()[idx].chunk;
        let pair = match generator.generate(chunk) {
            Ok(p) => p,
            Err(ProviderError::Malformed(msg)) => {
                malformed += 1;
                log::warn!("generator output for {} malformed: {msg}", chunk.chunk_id);
                continue;
            }
            Err(source) => {
                return Err(Error::Provider {
                    stage: "question generation",
                    source,
                })
            }
        };
        if pair.question.trim().is_empty() || pair.answer.trim().is_empty() {
            malformed += 1;
            log::warn!("generator output for {} has an empty field", chunk.chunk_id);
            continue;
        }
        if !seen.insert(pair.question.clone()) {
            duplicates += 1;
            continue;
        }
        let mut q = CalibrationQuestion::new(
            format!("gen-{:05}", questions.len()),
            pair.question,
            pair.answer,
            Origin::Generated,
        )?;
        q.source_doc_id = Some(chunk.doc_id.clone());
        questions.push(q);
    }
    if malformed > 0 {
        warnings.push(format!("{malformed} malformed generator output(s) dropped"));
    }
    if questions.len() < n {
        warnings.push(format!(
            "chunk pool exhausted: generated {} of {n} requested questions",
            questions.len()
        ));
    }
    Ok(GeneratedSet {
        questions,
        provenance: GenerationProvenance {
            rng: SAMPLER_RNG.to_string(),
            seed,
            requested: n,
            malformed,
            duplicates,
        },
        warnings,
    })
}
