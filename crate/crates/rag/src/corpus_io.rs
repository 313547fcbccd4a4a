//! Loading plain-text corpora from disk.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use conformal_rag_core::Document;
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::fsutil::read_text;

/// How files map to documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    /// Each file is one document.
    #[default]
    OneDocPerFile,
    /// Each non-blank line of each file is one document, id `path:line`.
    PlainText,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-doc-per-file" => Ok(CorpusFormat::OneDocPerFile),
            "plain-text" => Ok(CorpusFormat::PlainText),
            other => Err(Error::Usage(format!(
                "unknown corpus format `{other}` (expected `one-doc-per-file` or `plain-text`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejected {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub documents: Vec<Document>,
    /// Files that were readable but held no text.
    pub rejected: Vec<Rejected>,
}

/// Lists the regular files under `root` (or `root` itself if it is a file),
/// skipping dot-files, as (relative id, path) pairs sorted by id.
fn enumerate(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    if !root.exists() {
        return Err(Error::Missing(root.to_path_buf()));
    }
    if root.is_file() {
        let name = root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(vec![(name, root.to_path_buf())]);
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        if rel
            .components()
            .any(|c| c.as_os_str().to_string_lossy().starts_with('.'))
        {
            continue;
        }
        let id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        files.push((id, entry.path().to_path_buf()));
    }
    files.sort();
    Ok(files)
}

/// Loads every file under `root`. Undecodable or unreadable files are fatal;
/// whitespace-only files are rejected and reported while the rest load.
pub fn load_corpus(root: &Path, format: CorpusFormat) -> Result<LoadedCorpus> {
    load_files(enumerate(root)?, format)
}

/// Like [`load_corpus`] for an explicit list; ids are the paths as given.
pub fn load_file_list(paths: &[PathBuf], format: CorpusFormat) -> Result<LoadedCorpus> {
    let mut files: Vec<(String, PathBuf)> = paths
        .iter()
        .map(|p| (p.to_string_lossy().replace('\\', "/"), p.clone()))
        .collect();
    files.sort();
    load_files(files, format)
}

fn load_files(files: Vec<(String, PathBuf)>, format: CorpusFormat) -> Result<LoadedCorpus> {
    let mut documents = Vec::new();
    let mut rejected = Vec::new();
    for (id, path) in files {
        let text = read_text(&path)?;
        match format {
            CorpusFormat::OneDocPerFile => {
                match Document::new(id.clone(), path.to_string_lossy(), text) {
                    Ok(d) => documents.push(d),
                    Err(e) => {
                        log::warn!("rejected {}: {e}", path.display());
                        rejected.push(Rejected {
                            path,
                            reason: e.to_string(),
                        });
                    }
                }
            }
            CorpusFormat::PlainText => {
                let before = documents.len();
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    documents.push(Document::new(
                        format!("{id}:{}", i + 1),
                        path.to_string_lossy(),
                        line,
                    )?);
                }
                if documents.len() == before {
                    log::warn!("rejected {}: no non-blank lines", path.display());
                    rejected.push(Rejected {
                        path,
                        reason: "no non-blank lines".into(),
                    });
                }
            }
        }
    }
    if documents.is_empty() {
        return Err(conformal_rag_core::Error::EmptyCorpus.into());
    }
    Ok(LoadedCorpus {
        documents,
        rejected,
    })
}

/// Writes `documents` under `dir`, one file per document id.
pub fn write_corpus(dir: &Path, documents: &[Document]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for d in documents {
        let path = dir.join(&d.doc_id);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, &d.text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
