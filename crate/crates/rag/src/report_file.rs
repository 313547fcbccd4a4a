//! Calibration reports on disk: one pretty-printed JSON document.

use std::io::Write;
use std::path::Path;

use conformal_rag_core::{CalibrationReport, ErrorRate, QuantileMode};

use crate::error::{Error, Result};
use crate::fsutil::{read_text, write_atomic};

/// `calibration-<alpha>-<mode>.json`.
pub fn report_filename(alpha: ErrorRate, mode: QuantileMode) -> String {
    format!("calibration-{alpha}-{}.json", mode.as_str())
}

pub fn write_report(report: &CalibrationReport, w: &mut dyn Write) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, report)?;
    w.write_all(b"\n")
}

pub fn save_report(report: &CalibrationReport, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_report(report, w))
}

/// Parses and verifies a report; any inconsistency is an error.
pub fn load_report(path: &Path) -> Result<CalibrationReport> {
    let text = read_text(path)?;
    let report: CalibrationReport = serde_json::from_str(&text).map_err(|e| Error::BadFile {
        path: path.to_path_buf(),
        reason: format!("corrupt calibration report: {e}"),
    })?;
    report.verify()?;
    Ok(report)
}
