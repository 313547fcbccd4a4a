//! Question files: JSON Lines, one question per line.

use std::io::Write;
use std::path::Path;

use conformal_rag_core::calibration::Origin;
use conformal_rag_core::CalibrationQuestion;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{read_text, write_atomic};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    question_id: String,
    question: String,
    #[serde(default)]
    reference_answer: String,
    #[serde(default)]
    source_doc_id: Option<String>,
    #[serde(default)]
    origin: Option<Origin>,
}

#[derive(Serialize)]
struct OutLine<'a> {
    question_id: &'a str,
    question: &'a str,
    reference_answer: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_doc_id: Option<&'a str>,
}

/// Reads a question file. Any unparsable line is fatal and named by its
/// 1-based line number; blank lines are skipped.
pub fn import_calibration_set(path: &Path) -> Result<Vec<CalibrationQuestion>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::BadLine {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let l: Line = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let mut q = CalibrationQuestion::new(
            l.question_id,
            l.question,
            l.reference_answer,
            l.origin.unwrap_or(Origin::Imported),
        )
        .map_err(|e| bad(e.to_string()))?;
        q.source_doc_id = l.source_doc_id;
        out.push(q);
    }
    if out.is_empty() {
        return Err(conformal_rag_core::Error::EmptyCalibrationSet.into());
    }
    Ok(out)
}

pub fn write_questions(
    w: &mut dyn Write,
    questions: &[CalibrationQuestion],
) -> std::io::Result<()> {
    for q in questions {
        let line = OutLine {
            question_id: &q.question_id,
            question: &q.question,
            reference_answer: &q.reference_answer,
            source_doc_id: q.source_doc_id.as_deref(),
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_questions(path: &Path, questions: &[CalibrationQuestion]) -> Result<()> {
    write_atomic(path, |w| write_questions(w, questions))
}
