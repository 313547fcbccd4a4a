#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct Request {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: serde_json::Value,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

type Handler = dyn Fn(&Request, usize) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server answering each request with `handler(req, n)`,
/// where `n` counts requests from zero.
pub struct Stub {
    pub addr: SocketAddr,
    hits: Arc<AtomicUsize>,
}

impl Stub {
    pub fn start<F>(handler: F) -> Stub
    where
        F: Fn(&Request, usize) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let h = hits.clone();
        let handler: Arc<Handler> = Arc::new(handler);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let h = h.clone();
                let handler = handler.clone();
                std::thread::spawn(move || serve(stream, &h, &*handler));
            }
        });
        Stub { addr, hits }
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, hits: &AtomicUsize, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut headers = Vec::new();
    loop {
        let mut l = String::new();
        reader.read_line(&mut l).unwrap();
        let l = l.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let get = |name: &str| {
        headers
            .iter()
            .find(|(k, _): &&(String, String)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.clone())
    };
    let mut body = Vec::new();
    if let Some(n) = get("content-length") {
        body.resize(n.parse().unwrap(), 0);
        reader.read_exact(&mut body).unwrap();
    } else if get("transfer-encoding").is_some_and(|v| v.contains("chunked")) {
        loop {
            let mut size = String::new();
            reader.read_line(&mut size).unwrap();
            let n = usize::from_str_radix(size.trim(), 16).unwrap();
            let mut part = vec![0; n + 2];
            reader.read_exact(&mut part).unwrap();
            if n == 0 {
                break;
            }
            body.extend_from_slice(&part[..n]);
        }
    }
    let n = hits.fetch_add(1, Ordering::SeqCst);
    let req = Request {
        path,
        headers,
        body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
    };
    let (status, text) = handler(&req, n);
    let mut out = stream;
    let _ = write!(
        out,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = out.flush();
}

/// A URL nothing listens on.
pub fn dead_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}/v1")
}

pub fn chat_reply(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
        .to_string()
}

/// Runs the CLI in-process, returning (exit code, stdout).
pub fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["conformal-rag"];
    argv.extend_from_slice(args);
    let code = conformal_rag::cli::run(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

/// Runs the built binary, returning (exit code, stdout, stderr).
pub fn run_bin(args: &[&str], env: &[(&str, &str)]) -> (i32, String, String) {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_conformal-rag"));
    cmd.args(args).env_remove("CONFORMAL_RAG_API_KEY");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    if let Some(parent) = p.parent() {
        std::fs::create_dir_all(parent).unwrap();
    }
    std::fs::write(&p, text).unwrap();
    p
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Toy knowledge base: one fact per file.
pub const TOY_DOCS: &[(&str, &str)] = &[
    (
        "aspirin.txt",
        "The usual adult dose of aspirin is 325 mg every four hours.",
    ),
    (
        "insulin.txt",
        "Insulin must be kept refrigerated before the vial is opened.",
    ),
    (
        "warfarin.txt",
        "Warfarin dosing is monitored with the INR blood test weekly.",
    ),
    (
        "metformin.txt",
        "Metformin is the first line drug for type two diabetes.",
    ),
    (
        "heparin.txt",
        "Heparin is given by injection and acts within minutes.",
    ),
];

/// Ten questions over [`TOY_DOCS`], two per document.
pub const TOY_QUESTIONS: &[(&str, &str, &str)] = &[
    ("q0", "what is the adult dose of aspirin?", "325 mg"),
    ("q1", "how often is aspirin taken?", "every four hours"),
    ("q2", "how is insulin stored?", "kept refrigerated"),
    (
        "q3",
        "when must insulin be refrigerated?",
        "before the vial is opened",
    ),
    ("q4", "which test monitors warfarin?", "INR blood test"),
    ("q5", "how often is warfarin checked?", "weekly"),
    ("q6", "what is metformin used for?", "type two diabetes"),
    ("q7", "is metformin first line?", "first line drug"),
    ("q8", "how is heparin given?", "by injection"),
    ("q9", "how fast does heparin act?", "within minutes"),
];

pub fn toy_corpus(dir: &Path) -> PathBuf {
    let c = dir.join("corpus");
    for (name, text) in TOY_DOCS {
        write(&c, name, text);
    }
    c
}

pub fn questions_jsonl(qs: &[(&str, &str, &str)]) -> String {
    qs.iter()
        .map(|(id, q, a)| {
            serde_json::json!({"question_id": id, "question": q, "reference_answer": a}).to_string()
                + "\n"
        })
        .collect()
}
