//! The `conformal-rag` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};
use conformal_rag_core::calibration::generate_calibration_set;
use conformal_rag_core::corpus::chunk_corpus;
use conformal_rag_core::evaluation::{describe, sweep_csv, top_k_coverage};
use conformal_rag_core::synthetic::{self, SyntheticConfig};
use conformal_rag_core::{
    assemble_context, conformal_retrieve, run_calibration, sweep_alpha, CalibrationSettings,
    Comparison, ErrorRate, Limit, Metric, QuantileMode, RetrievedContext, VectorStore,
};
use serde::Serialize;

use crate::answer::{answer, AnswerResult};
use crate::config::{Config, JudgeKind};
use crate::corpus_io::{load_corpus, CorpusFormat};
use crate::error::{Error, Result, EXIT_OK};
use crate::fsutil::write_atomic;
use crate::http::{api_key_from_env, API_KEY_ENV};
use crate::llm::{LlmQuestionGenerator, Templates};
use crate::providers::{self, configured_embedder, embedder_for_store};
use crate::questions::{import_calibration_set, save_questions};
use crate::report_file::{load_report, report_filename, save_report};
use crate::store_file::{load_store, save_store};

#[derive(Debug, Parser)]
#[command(
    name = "conformal-rag",
    version,
    about = "Conformal-calibrated retrieval for RAG"
)]
struct Cli {
    /// TOML configuration file. Flags override it; it overrides defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk and embed a corpus into a store file.
    Ingest(IngestArgs),
    /// Label calibration questions and compute the similarity cutoff.
    Calibrate(CalibrateArgs),
    /// Retrieve every chunk above the cutoff and answer a question.
    Query(QueryArgs),
    /// Measure held-out coverage for one or more alphas.
    Evaluate(EvaluateArgs),
    /// Write a seeded synthetic corpus with calibration and test questions.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    /// Store file to write (default: paths.store).
    #[arg(long, value_name = "STORE")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "TOKENS")]
    chunk_size: Option<usize>,
    #[arg(long, value_name = "TOKENS")]
    overlap: Option<usize>,
    /// Reference embedder dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// cosine or dot.
    #[arg(long)]
    metric: Option<String>,
    /// one-doc-per-file or plain-text (one document per line).
    #[arg(long, default_value = "one-doc-per-file")]
    format: String,
}

#[derive(Debug, Args)]
struct CalibrationFlags {
    /// paper-percentile or finite-sample.
    #[arg(long)]
    mode: Option<String>,
    /// substring or llm.
    #[arg(long)]
    judge: Option<String>,
    /// Deepest rank the judge inspects per question, or `all`.
    #[arg(long)]
    max_rank: Option<String>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long, value_name = "STORE")]
    store: Option<PathBuf>,
    /// JSON Lines question file.
    #[arg(long, value_name = "FILE")]
    questions: Option<PathBuf>,
    /// Generate N questions from sampled chunks with the chat model.
    #[arg(long, value_name = "N")]
    generate: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the generated questions here.
    #[arg(long, value_name = "FILE")]
    questions_out: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    calib: CalibrationFlags,
    /// Drop no question: any question without an answer-bearing chunk is fatal.
    #[arg(long)]
    strict: bool,
    /// Report path, or a directory to place `calibration-<alpha>-<mode>.json` in.
    #[arg(long, value_name = "REPORT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long, value_name = "STORE")]
    store: Option<PathBuf>,
    #[arg(long, value_name = "REPORT")]
    calibration: Option<PathBuf>,
    question: String,
    /// Print the result as JSON.
    #[arg(long)]
    json: bool,
    /// Stop before calling the chat model.
    #[arg(long)]
    dry_run: bool,
    /// geq or strict-gt.
    #[arg(long)]
    comparison: Option<String>,
    #[arg(long)]
    max_chunks: Option<usize>,
    #[arg(long)]
    max_context_chars: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "STORE")]
    store: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    calib: PathBuf,
    #[arg(long, value_name = "FILE")]
    test: PathBuf,
    /// Comma-separated list, e.g. 0.05,0.1,0.2.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[command(flatten)]
    calib_flags: CalibrationFlags,
    #[arg(long)]
    comparison: Option<String>,
    /// Sweep CSV to write.
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
    /// Per-question detail as JSON Lines.
    #[arg(long, value_name = "JSONL")]
    detail_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn parse<T: std::str::FromStr<Err = conformal_rag_core::Error>>(s: &str) -> Result<T> {
    Ok(s.parse()?)
}

fn apply_calibration_flags(cfg: &mut Config, f: &CalibrationFlags) -> Result<()> {
    if let Some(m) = &f.mode {
        cfg.calibration.mode = parse::<QuantileMode>(m)?;
    }
    if let Some(j) = &f.judge {
        cfg.calibration.judge = match j.as_str() {
            "substring" => JudgeKind::Substring,
            "llm" => JudgeKind::Llm,
            other => {
                return Err(conformal_rag_core::Error::config(
                    "calibration.judge",
                    format!("expected `substring` or `llm`, got `{other}`"),
                )
                .into())
            }
        };
    }
    if let Some(r) = &f.max_rank {
        cfg.calibration.max_rank = r
            .parse::<Limit>()
            .map_err(|e| conformal_rag_core::Error::config("calibration.max_rank", e))?;
    }
    Ok(())
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Usage(format!("{what} is required")))
}

fn settings(cfg: &Config) -> Result<CalibrationSettings> {
    Ok(CalibrationSettings {
        alpha: cfg.alpha()?,
        mode: cfg.calibration.mode,
        max_rank: cfg.calibration.max_rank,
        strict: cfg.calibration.strict,
    })
}

fn log_config(cfg: &Config) {
    let key = if api_key_from_env().is_some() {
        "set (redacted)"
    } else {
        "unset"
    };
    log::info!("effective configuration:\n{}", cfg.to_toml());
    log::info!("{API_KEY_ENV}: {key}");
}

fn ingest(mut cfg: Config, a: IngestArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    if let Some(s) = a.chunk_size {
        cfg.chunking.size = s;
    }
    if let Some(o) = a.overlap {
        cfg.chunking.overlap = o;
    }
    if let Some(d) = a.dim {
        cfg.embedding.dim = d;
    }
    if let Some(m) = &a.metric {
        cfg.similarity.metric = parse::<Metric>(m)?;
    }
    let format: CorpusFormat = a.format.parse()?;
    let store_path = required(a.out, &cfg.paths.store, "--out (or paths.store)")?;
    cfg.validate()?;
    log_config(&cfg);

    let chunking = cfg.chunking()?;
    let corpus = load_corpus(&a.corpus, format)?;
    for r in &corpus.rejected {
        writeln!(out, "warning: rejected {}: {}", r.path.display(), r.reason)?;
    }
    let chunks = chunk_corpus(&corpus.documents, &chunking).map_err(Error::from)?;
    let embedder = configured_embedder(&cfg)?;
    let store = VectorStore::build(chunks, &embedder, chunking, cfg.similarity.metric, now())
        .map_err(Error::from)?;
    save_store(&store, &store_path)?;
    writeln!(
        out,
        "ingested {} document(s) into {} chunk(s)\nembedder_id: {}\nstore: {}",
        corpus.documents.len(),
        store.len(),
        store.embedder_id(),
        store_path.display()
    )?;
    Ok(())
}

fn calibrate(mut cfg: Config, a: CalibrateArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    if a.questions.is_some() && a.generate.is_some() {
        return Err(
            Error::Usage("--questions and --generate are mutually exclusive".into()).into(),
        );
    }
    if a.questions.is_none() && a.generate.is_none() {
        return Err(Error::Usage("one of --questions or --generate is required".into()).into());
    }
    if let Some(x) = a.alpha {
        cfg.calibration.alpha = x;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.strict {
        cfg.calibration.strict = true;
    }
    apply_calibration_flags(&mut cfg, &a.calib)?;
    cfg.validate()?;
    log_config(&cfg);
    let settings = settings(&cfg)?;
    let store_path = required(a.store, &cfg.paths.store, "--store (or paths.store)")?;
    let templates = Templates::load(cfg.paths.templates.as_deref())?;

    let store = load_store(&store_path)?;
    let (embedder, warnings) = embedder_for_store(&cfg, &store)?;
    for w in warnings {
        writeln!(out, "warning: {w}")?;
    }

    let (questions, generation) = match (a.questions, a.generate) {
        (Some(path), _) => (import_calibration_set(&path)?, None),
        (None, Some(n)) => {
            let generator =
                LlmQuestionGenerator::new(providers::chat(&cfg)?, templates.generator.clone());
            let set =
                generate_calibration_set(&store, &generator, n, cfg.seed).map_err(Error::from)?;
            for w in &set.warnings {
                writeln!(out, "warning: {w}")?;
            }
            if let Some(p) = &a.questions_out {
                save_questions(p, &set.questions)?;
                writeln!(out, "questions: {}", p.display())?;
            }
            (set.questions, Some(set.provenance))
        }
        (None, None) => unreachable!(),
    };

    let judge = providers::judge(&cfg, &templates)?;
    let mut run = run_calibration(&store, &questions, &embedder, &judge, &settings, &now())
        .map_err(Error::from)?;
    run.report.generation = generation;

    let default_name = report_filename(settings.alpha, settings.mode);
    let report_path = match a.out.or_else(|| cfg.paths.report.clone()) {
        Some(p) if p.is_dir() => p.join(default_name),
        Some(p) => p,
        None => PathBuf::from(default_name),
    };
    save_report(&run.report, &report_path)?;

    let r = &run.report;
    writeln!(
        out,
        "questions: {}\nlabeled: {}\ndropped: {}\nthreshold: {} (alpha={}, {})\nreport: {}",
        r.n_questions,
        r.n_labeled,
        r.n_dropped,
        r.threshold,
        r.alpha,
        r.quantile_mode,
        report_path.display()
    )?;
    for w in &run.warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct QueryOutput<'a> {
    #[serde(flatten)]
    context: &'a RetrievedContext,
    prompt_chars: usize,
    abstains: bool,
    answer: Option<&'a AnswerResult>,
}

fn query(mut cfg: Config, a: QueryArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    if let Some(c) = &a.comparison {
        cfg.retrieval.comparison = parse::<Comparison>(c)?;
    }
    if a.max_chunks.is_some() {
        cfg.retrieval.max_chunks = a.max_chunks;
    }
    if a.max_context_chars.is_some() {
        cfg.retrieval.max_context_chars = a.max_context_chars;
    }
    cfg.validate()?;
    log_config(&cfg);
    let store_path = required(a.store, &cfg.paths.store, "--store (or paths.store)")?;
    let report_path = required(
        a.calibration,
        &cfg.paths.report,
        "--calibration (or paths.report)",
    )?;
    let templates = Templates::load(cfg.paths.templates.as_deref())?;

    let store = load_store(&store_path)?;
    let report = load_report(&report_path)?;
    let (embedder, warnings) = embedder_for_store(&cfg, &store)?;
    for w in warnings {
        log::warn!("{w}");
    }
    let mut ctx = conformal_retrieve(
        &a.question,
        &embedder,
        &store,
        &report,
        cfg.retrieval.max_chunks,
        cfg.retrieval.comparison,
    )
    .map_err(Error::from)?;
    let prompt = assemble_context(
        &mut ctx,
        &store,
        &templates.answer,
        cfg.retrieval.max_context_chars,
        &cfg.llm.abstention,
    )
    .map_err(Error::from)?;

    let result = if a.dry_run {
        None
    } else {
        let chat = providers::chat(&cfg)?;
        match answer(&prompt, &chat) {
            Ok(r) => Some(r),
            Err(e) => {
                log::error!(
                    "the assembled prompt ({} chars) was not answered; rerun with --dry-run --json to obtain it",
                    e.prompt.total_chars
                );
                return Err(Error::Provider {
                    stage: "answer generation",
                    source: e.source,
                }
                .into());
            }
        }
    };

    if a.json {
        let o = QueryOutput {
            context: &ctx,
            prompt_chars: prompt.total_chars,
            abstains: prompt.abstains,
            answer: result.as_ref(),
        };
        serde_json::to_writer_pretty(&mut *out, &o)?;
        writeln!(out)?;
        return Ok(());
    }

    let mut s = String::new();
    writeln!(
        s,
        "threshold: {} (alpha={}, {}, {})",
        report.threshold, report.alpha, report.quantile_mode, cfg.retrieval.comparison
    )?;
    writeln!(s, "hits: {}", ctx.hits.len())?;
    writeln!(s, "{:>5}  {:>12}  chunk_id", "rank", "score")?;
    for h in &ctx.hits {
        writeln!(s, "{:>5}  {:>12.6}  {}", h.rank, h.score.value, h.chunk_id)?;
    }
    writeln!(
        s,
        "truncated: {}{}",
        ctx.truncated,
        ctx.truncation_reason
            .as_deref()
            .map(|r| format!(" ({r})"))
            .unwrap_or_default()
    )?;
    for w in &ctx.warnings {
        writeln!(s, "warning: {w}")?;
    }
    match &result {
        None => writeln!(
            s,
            "dry run: prompt of {} chars not sent",
            prompt.total_chars
        )?,
        Some(r) => writeln!(
            s,
            "\nanswer ({}, {} ms):\n{}",
            r.model_id,
            r.timing.as_millis(),
            r.text
        )?,
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct DetailLine<'a> {
    alpha: ErrorRate,
    #[serde(flatten)]
    question: &'a conformal_rag_core::evaluation::QuestionCoverage,
}

fn evaluate(mut cfg: Config, a: EvaluateArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    if let Some(c) = &a.comparison {
        cfg.retrieval.comparison = parse::<Comparison>(c)?;
    }
    apply_calibration_flags(&mut cfg, &a.calib_flags)?;
    let alphas: Vec<ErrorRate> = if a.alpha.is_empty() {
        vec![cfg.alpha()?]
    } else {
        a.alpha
            .iter()
            .map(|&x| ErrorRate::new(x))
            .collect::<std::result::Result<_, _>>()
            .map_err(Error::from)?
    };
    cfg.calibration.alpha = alphas[0].alpha();
    cfg.validate()?;
    log_config(&cfg);
    let store_path = required(a.store, &cfg.paths.store, "--store (or paths.store)")?;
    let templates = Templates::load(cfg.paths.templates.as_deref())?;

    let store = load_store(&store_path)?;
    let (embedder, warnings) = embedder_for_store(&cfg, &store)?;
    for w in warnings {
        writeln!(out, "warning: {w}")?;
    }
    let calib = import_calibration_set(&a.calib)?;
    let test = import_calibration_set(&a.test)?;
    let judge = providers::judge(&cfg, &templates)?;
    let sweep = sweep_alpha(
        &store,
        &embedder,
        &calib,
        &test,
        &judge,
        &alphas,
        &settings(&cfg)?,
        cfg.retrieval.comparison,
        &now(),
    )
    .map_err(Error::from)?;

    for (run, r) in sweep.runs.iter().zip(&sweep.results) {
        writeln!(out, "{}", describe(r))?;
        let k = (r.mean_set_size.round() as usize).max(1);
        for k in [1, k] {
            let b = top_k_coverage(&sweep.test_labels, &store, k).map_err(Error::from)?;
            writeln!(
                out,
                "  top-{k} baseline coverage={:.4} ({}/{})",
                b.coverage, b.n_covered, b.n_test
            )?;
            if k == 1 && r.mean_set_size.round() as usize <= 1 {
                break;
            }
        }
        for w in &run.warnings {
            writeln!(out, "  warning: {w}")?;
        }
    }
    for w in &sweep.warnings {
        writeln!(out, "warning: {w}")?;
    }
    let csv = sweep_csv(&sweep.results);
    match &a.out {
        Some(p) => {
            write_atomic(p, |w| w.write_all(csv.as_bytes()))?;
            writeln!(out, "csv: {}", p.display())?;
        }
        None => out.write_all(csv.as_bytes())?,
    }
    if let Some(p) = &a.detail_out {
        write_atomic(p, |w| {
            for r in &sweep.results {
                for q in &r.per_question {
                    serde_json::to_writer(
                        &mut *w,
                        &DetailLine {
                            alpha: r.alpha,
                            question: q,
                        },
                    )?;
                    w.write_all(b"\n")?;
                }
            }
            Ok(())
        })?;
        writeln!(out, "detail: {}", p.display())?;
    }
    Ok(())
}

fn synth(cfg: Config, a: SynthArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let seed = a.seed.unwrap_or(cfg.seed);
    let w = synthetic::generate(&SyntheticConfig::default(), seed).map_err(Error::from)?;
    let corpus = a.out_dir.join("corpus");
    crate::corpus_io::write_corpus(&corpus, &w.documents)?;
    let calib = a.out_dir.join("calibration.jsonl");
    let test = a.out_dir.join("test.jsonl");
    save_questions(&calib, &w.calibration)?;
    save_questions(&test, &w.test)?;
    let c = SyntheticConfig::default().chunking;
    writeln!(
        out,
        "wrote {} documents to {}\ncalibration questions: {} ({})\ntest questions: {} ({})\n\
         suggested chunking: --chunk-size {} --overlap {}",
        w.documents.len(),
        corpus.display(),
        w.calibration.len(),
        calib.display(),
        w.test.len(),
        test.display(),
        c.size,
        c.overlap
    )?;
    Ok(())
}

/// Maps any error to its documented exit code.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    e.chain()
        .find_map(|c| c.downcast_ref::<Error>().map(Error::exit_code))
        .or_else(|| {
            e.chain()
                .find_map(|c| c.downcast_ref::<conformal_rag_core::Error>())
                .map(|c| Error::Core(c.clone()).exit_code())
        })
        .unwrap_or(crate::error::EXIT_DATA)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn,conformal_rag_core=error",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    let result = Config::load(cli.config.as_deref())
        .context("loading configuration")
        .and_then(|cfg| match cli.command {
            Command::Ingest(a) => ingest(cfg, a, out),
            Command::Calibrate(a) => calibrate(cfg, a, out),
            Command::Query(a) => query(cfg, a, out),
            Command::Evaluate(a) => evaluate(cfg, a, out),
            Command::Synth(a) => synth(cfg, a, out),
        });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
