mod common;

use std::path::Path;

use common::{
    chat_reply, dead_url, questions_jsonl, run, run_bin, s, toy_corpus, write, Stub, TOY_QUESTIONS,
};
use serde_json::Value;

fn header(store: &Path) -> Value {
    let text = std::fs::read_to_string(store).unwrap();
    serde_json::from_str(text.lines().next().unwrap()).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Ingests the toy corpus with one chunk per document.
fn toy_store(dir: &Path, dim: usize) -> std::path::PathBuf {
    let corpus = toy_corpus(dir);
    let store = dir.join(format!("store-{dim}.jsonl"));
    let (code, out) = run(&[
        "ingest",
        "--corpus",
        s(&corpus),
        "--out",
        s(&store),
        "--chunk-size",
        "64",
        "--overlap",
        "0",
        "--dim",
        &dim.to_string(),
    ]);
    assert_eq!(code, 0, "{out}");
    store
}

// Independent re-implementation of the reference embedder and cosine.
fn oracle_embed(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for tok in text
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in tok.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        v[(h % dim as u64) as usize] += 1.0;
    }
    v
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        d / (na * nb)
    }
}

#[test]
fn ingest_writes_a_store_with_a_header() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c/a.txt", "alpha beta gamma");
    write(dir.path(), "c/b.txt", "delta epsilon");
    let store = dir.path().join("s.jsonl");
    let (code, out) = run(&[
        "ingest",
        "--corpus",
        s(&dir.path().join("c")),
        "--out",
        s(&store),
    ]);
    assert_eq!(code, 0);
    assert!(
        out.contains("ingested 2 document(s) into 2 chunk(s)"),
        "{out}"
    );
    let h = header(&store);
    assert_eq!(h["embedder_id"], "reference:fnv1a-bow:256");
    assert_eq!(h["n_chunks"], 2);
    assert_eq!(h["chunking"]["size"], 256);
    assert_eq!(h["chunking"]["overlap"], 32);
}

#[test]
fn ingest_reports_missing_corpus_and_bad_chunking() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-dir");
    let (code, _, err) = run_bin(
        &[
            "ingest",
            "--corpus",
            s(&missing),
            "--out",
            s(&dir.path().join("s")),
        ],
        &[],
    );
    assert_eq!(code, 2);
    assert!(err.contains("no-such-dir"), "{err}");

    let corpus = toy_corpus(dir.path());
    let (code, _, err) = run_bin(
        &[
            "ingest",
            "--corpus",
            s(&corpus),
            "--out",
            s(&dir.path().join("s")),
            "--chunk-size",
            "4",
            "--overlap",
            "4",
        ],
        &[],
    );
    assert_eq!(code, 2);
    assert!(err.contains("chunking.overlap"), "{err}");
    assert!(!dir.path().join("s").exists());
}

#[test]
fn calibrate_matches_an_independent_threshold_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let store = toy_store(dir.path(), 64);
    let qs = write(dir.path(), "q.jsonl", &questions_jsonl(TOY_QUESTIONS));
    let report = dir.path().join("r.json");
    let (code, out) = run(&[
        "calibrate",
        "--store",
        s(&store),
        "--questions",
        s(&qs),
        "--alpha",
        "0.2",
        "--max-rank",
        "all",
        "--out",
        s(&report),
    ]);
    assert_eq!(code, 0, "{out}");

    // One chunk per document, so each question's answer chunk is its document.
    let mut scores: Vec<f64> = TOY_QUESTIONS
        .iter()
        .map(|(_, q, a)| {
            let doc = common::TOY_DOCS
                .iter()
                .find(|(_, t)| t.contains(a))
                .unwrap()
                .1;
            oracle_cosine(&oracle_embed(q, 64), &oracle_embed(doc, 64))
        })
        .collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    // finite-sample: k = ceil(0.8 * 11) = 9
    let expected = scores[8];
    let r = json(&report);
    assert_eq!(r["n_labeled"], 10);
    let got = r["threshold"].as_f64().unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");

    // paper-percentile: k = ceil(0.8 * 10) = 8
    let (code, _) = run(&[
        "calibrate",
        "--store",
        s(&store),
        "--questions",
        s(&qs),
        "--alpha",
        "0.2",
        "--mode",
        "paper-percentile",
        "--max-rank",
        "all",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code, 0);
    let r = json(&dir.path().join("calibration-0.2-paper-percentile.json"));
    assert!((r["threshold"].as_f64().unwrap() - scores[7]).abs() < 1e-12);
}

#[test]
fn calibrate_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let store = toy_store(dir.path(), 64);
    let qs = write(dir.path(), "q.jsonl", &questions_jsonl(TOY_QUESTIONS));
    let (code, _, err) = run_bin(
        &[
            "calibrate",
            "--store",
            s(&store),
            "--questions",
            s(&qs),
            "--generate",
            "5",
        ],
        &[],
    );
    assert_eq!(code, 2);
    assert!(err.contains("mutually exclusive"), "{err}");
    let (code, _, err) = run_bin(
        &[
            "calibrate",
            "--store",
            s(&store),
            "--questions",
            s(&qs),
            "--alpha",
            "1.5",
        ],
        &[],
    );
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("alpha"), "{err}");
    let (code, _) = run(&[
        "calibrate",
        "--store",
        s(&store),
        "--questions",
        s(&qs),
        "--mode",
        "median",
    ]);
    assert_eq!(code, 2);
}

/// One calibration question reused verbatim as the query: with
/// paper-percentile and alpha = 0.5 the cutoff is exactly that question's
/// answer-chunk score.
fn boundary_setup(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let store = toy_store(dir, 64);
    let qs = write(dir, "q.jsonl", &questions_jsonl(&TOY_QUESTIONS[4..5]));
    let report = dir.join("r.json");
    let (code, out) = run(&[
        "calibrate",
        "--store",
        s(&store),
        "--questions",
        s(&qs),
        "--alpha",
        "0.5",
        "--mode",
        "paper-percentile",
        "--max-rank",
        "all",
        "--out",
        s(&report),
    ]);
    assert_eq!(code, 0, "{out}");
    (store, report)
}

#[test]
fn query_includes_the_boundary_chunk_only_under_geq() {
    let dir = tempfile::tempdir().unwrap();
    let (store, report) = boundary_setup(dir.path());
    let threshold = json(&report)["threshold"].as_f64().unwrap();
    let q = TOY_QUESTIONS[4].1;
    let query = |cmp: &str| {
        let (code, out) = run(&[
            "query",
            "--store",
            s(&store),
            "--calibration",
            s(&report),
            "--dry-run",
            "--json",
            "--comparison",
            cmp,
            q,
        ]);
        assert_eq!(code, 0, "{out}");
        serde_json::from_str::<Value>(&out).unwrap()
    };
    let geq = query("geq");
    let ids: Vec<&str> = geq["hits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["chunk_id"].as_str().unwrap())
        .collect();
    assert!(
        ids.iter().any(|id| id.starts_with("warfarin.txt")),
        "{ids:?}"
    );
    let boundary = geq["hits"]
        .as_array()
        .unwrap()
        .iter()
        .find(|h| h["chunk_id"].as_str().unwrap().starts_with("warfarin"))
        .unwrap();
    assert_eq!(
        boundary["score"]["value"].as_f64().unwrap().to_bits(),
        threshold.to_bits()
    );
    assert_eq!(geq["answer"], Value::Null);

    let gt = query("strict-gt");
    assert!(gt["hits"]
        .as_array()
        .unwrap()
        .iter()
        .all(|h| !h["chunk_id"].as_str().unwrap().starts_with("warfarin")));
}

#[test]
fn dry_run_never_contacts_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let (store, report) = boundary_setup(dir.path());
    let stub = Stub::start(|req, _| {
        let user = req.body["messages"][1]["content"].as_str().unwrap_or("");
        (
            200,
            chat_reply(if user.contains("[source: warfarin.txt") {
                "INR, see warfarin.txt"
            } else {
                "?"
            }),
        )
    });
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("[llm]\nendpoint = \"{}\"\nmodel = \"stub\"\n", stub.url()),
    );
    let base = [
        "--config",
        s(&cfg),
        "query",
        "--store",
        s(&store),
        "--calibration",
        s(&report),
    ];

    let mut args = base.to_vec();
    args.extend(["--dry-run", "which test monitors warfarin?"]);
    let (code, out) = run(&args);
    assert_eq!(code, 0);
    assert!(out.contains("dry run"), "{out}");
    assert_eq!(stub.hits(), 0);

    let mut args = base.to_vec();
    args.push("which test monitors warfarin?");
    let (code, out) = run(&args);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("INR, see warfarin.txt"), "{out}");
    assert_eq!(stub.hits(), 1);
}

#[test]
fn unreachable_model_exits_with_provider_code() {
    let dir = tempfile::tempdir().unwrap();
    let (store, report) = boundary_setup(dir.path());
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("[llm]\nendpoint = \"{}\"\nmodel = \"m\"\n\n[http]\nmax_attempts = 2\nbase_delay_ms = 1\n", dead_url()),
    );
    let (code, _, err) = run_bin(
        &[
            "--config",
            s(&cfg),
            "query",
            "--store",
            s(&store),
            "--calibration",
            s(&report),
            "anything",
        ],
        &[],
    );
    assert_eq!(code, 4, "{err}");
    assert!(err.contains("2 attempt"), "{err}");
}

#[test]
fn report_from_another_embedder_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report) = boundary_setup(dir.path());
    let other = toy_store(dir.path(), 32);
    let (code, _, err) = run_bin(
        &[
            "query",
            "--store",
            s(&other),
            "--calibration",
            s(&report),
            "--dry-run",
            "x",
        ],
        &[],
    );
    assert_eq!(code, 3, "{err}");
    assert!(
        err.contains("reference:fnv1a-bow:32") && err.contains("reference:fnv1a-bow:64"),
        "{err}"
    );
}

#[test]
fn evaluate_sweeps_alphas_and_guards_splits() {
    let dir = tempfile::tempdir().unwrap();
    let store = toy_store(dir.path(), 64);
    let calib = write(
        dir.path(),
        "calib.jsonl",
        &questions_jsonl(&TOY_QUESTIONS[..6]),
    );
    let test = write(
        dir.path(),
        "test.jsonl",
        &questions_jsonl(&TOY_QUESTIONS[6..]),
    );
    let overlap = write(
        dir.path(),
        "overlap.jsonl",
        &questions_jsonl(&TOY_QUESTIONS[5..]),
    );

    let (code, _, err) = run_bin(
        &[
            "evaluate",
            "--store",
            s(&store),
            "--calib",
            s(&calib),
            "--test",
            s(&overlap),
        ],
        &[],
    );
    assert_eq!(code, 2);
    assert!(err.contains("q5"), "{err}");

    let csv = dir.path().join("sweep.csv");
    let detail = dir.path().join("detail.jsonl");
    let (code, out) = run(&[
        "evaluate",
        "--store",
        s(&store),
        "--calib",
        s(&calib),
        "--test",
        s(&test),
        "--alpha",
        "0.05,0.2",
        "--max-rank",
        "all",
        "--mode",
        "paper-percentile",
        "--out",
        s(&csv),
        "--detail-out",
        s(&detail),
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("top-1 baseline"), "{out}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "0.05");
    let t0: f64 = rows[0][1].parse().unwrap();
    let t1: f64 = rows[1][1].parse().unwrap();
    assert!(t0 <= t1);
    let m0: f64 = rows[0][3].parse().unwrap();
    let m1: f64 = rows[1][3].parse().unwrap();
    assert!(m0 >= m1);
    assert_eq!(std::fs::read_to_string(&detail).unwrap().lines().count(), 8);
}

#[test]
fn config_precedence_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = toy_corpus(dir.path());
    let bad = write(dir.path(), "bad.toml", "[chunking]\nsize = 3\nsizee = 4\n");
    let (code, _, err) = run_bin(
        &[
            "--config",
            s(&bad),
            "ingest",
            "--corpus",
            s(&corpus),
            "--out",
            "x",
        ],
        &[],
    );
    assert_eq!(code, 2);
    assert!(err.contains("sizee"), "{err}");

    let cfg = write(
        dir.path(),
        "c.toml",
        "[chunking]\nsize = 3\noverlap = 1\n\n[embedding]\ndim = 48\n",
    );
    let store = dir.path().join("s.jsonl");
    let (code, out) = run(&[
        "--config",
        s(&cfg),
        "ingest",
        "--corpus",
        s(&corpus),
        "--out",
        s(&store),
        "--chunk-size",
        "5",
    ]);
    assert_eq!(code, 0, "{out}");
    let h = header(&store);
    assert_eq!(h["chunking"]["size"], 5); // flag
    assert_eq!(h["chunking"]["overlap"], 1); // file
    assert_eq!(h["dim"], 48); // file
    assert_eq!(h["metric_default"], "cosine"); // default
}

#[test]
fn synth_writes_a_workload() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run(&["synth", "--out-dir", s(dir.path()), "--seed", "3"]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(
        std::fs::read_dir(dir.path().join("corpus"))
            .unwrap()
            .count(),
        200
    );
    let n = |f: &str| {
        std::fs::read_to_string(dir.path().join(f))
            .unwrap()
            .lines()
            .count()
    };
    assert_eq!(n("calibration.jsonl"), 400);
    assert_eq!(n("test.jsonl"), 200);
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let (code, _, _) = run_bin(&["ingest"], &[]);
    assert_eq!(code, 2);
    let (code, _, _) = run_bin(&["frobnicate"], &[]);
    assert_eq!(code, 2);
}
