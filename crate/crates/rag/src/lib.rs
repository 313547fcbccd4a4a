//! File formats, remote providers, configuration and the command line for
//! [`conformal_rag_core`].

pub mod answer;
pub mod cli;
pub mod config;
pub mod corpus_io;
pub mod error;
pub mod fsutil;
pub mod http;
pub mod llm;
pub mod providers;
pub mod questions;
pub mod remote;
pub mod report_file;
pub mod store_file;

pub use answer::{answer, AnswerError, AnswerResult};
pub use config::Config;
pub use corpus_io::{load_corpus, CorpusFormat, LoadedCorpus};
pub use error::{Error, Result};
pub use questions::import_calibration_set;
pub use report_file::{load_report, report_filename, save_report};
pub use store_file::{load_store, save_store};
