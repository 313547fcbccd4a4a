//! Run configuration: built-in defaults, overridden by a TOML file,
//! overridden by command-line flags. Unknown keys are errors.

use std::path::{Path, PathBuf};
use std::time::Duration;

use conformal_rag_core::calibration::DEFAULT_MAX_RANK;
use conformal_rag_core::generation::DEFAULT_ABSTENTION;
use conformal_rag_core::{
    ChunkingConfig, Comparison, Error as CoreError, ErrorRate, Limit, Metric, QuantileMode,
};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fsutil::read_text;
use crate::http::RetryPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    #[default]
    Reference,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    #[default]
    Substring,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingSection {
    pub size: usize,
    pub overlap: usize,
}

impl Default for ChunkingSection {
    fn default() -> Self {
        let c = ChunkingConfig::default();
        ChunkingSection {
            size: c.size,
            overlap: c.overlap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub provider: EmbeddingKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub dim: usize,
    /// Texts per remote request.
    pub batch: usize,
    /// Concurrent remote requests.
    pub in_flight: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            provider: EmbeddingKind::Reference,
            endpoint: None,
            model: None,
            dim: 256,
            batch: 64,
            in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilaritySection {
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub alpha: f64,
    pub mode: QuantileMode,
    pub max_rank: Limit,
    pub judge: JudgeKind,
    pub strict: bool,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            alpha: 0.1,
            mode: QuantileMode::default(),
            max_rank: Limit::Top(DEFAULT_MAX_RANK),
            judge: JudgeKind::default(),
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub comparison: Comparison,
    pub max_chunks: Option<usize>,
    pub max_context_chars: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub abstention: String,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            endpoint: None,
            model: None,
            abstention: DEFAULT_ABSTENTION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSection {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub timeout_secs: u64,
}

impl Default for HttpSection {
    fn default() -> Self {
        let r = RetryPolicy::default();
        HttpSection {
            max_attempts: r.max_attempts,
            base_delay_ms: r.base_delay.as_millis() as u64,
            max_delay_ms: r.max_delay.as_millis() as u64,
            timeout_secs: r.timeout.as_secs(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub store: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seeds question sampling and retry jitter.
    pub seed: u64,
    pub chunking: ChunkingSection,
    pub embedding: EmbeddingSection,
    pub similarity: SimilaritySection,
    pub calibration: CalibrationSection,
    pub retrieval: RetrievalSection,
    pub llm: LlmSection,
    pub http: HttpSection,
    pub paths: PathsSection,
}

fn bad(field: &str, reason: impl Into<String>) -> CoreError {
    CoreError::config(field, reason)
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            bad("config", msg).into()
        })
    }

    /// Defaults, overlaid with `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Config::default()),
            Some(p) => Config::from_toml(&read_text(p)?).map_err(|e| match e {
                crate::Error::Core(CoreError::Config { field, reason }) => {
                    CoreError::config(field, format!("{}: {reason}", p.display())).into()
                }
                other => other,
            }),
        }
    }

    pub fn chunking(&self) -> Result<ChunkingConfig> {
        Ok(ChunkingConfig::new(
            self.chunking.size,
            self.chunking.overlap,
        )?)
    }

    pub fn alpha(&self) -> Result<ErrorRate> {
        Ok(ErrorRate::new(self.calibration.alpha)?)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.http.max_attempts,
            base_delay: Duration::from_millis(self.http.base_delay_ms),
            max_delay: Duration::from_millis(self.http.max_delay_ms),
            timeout: Duration::from_secs(self.http.timeout_secs),
            seed: self.seed,
        }
    }

    /// Checks every value; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        self.chunking()?;
        self.alpha()?;
        let e = &self.embedding;
        match e.provider {
            EmbeddingKind::Reference if e.dim < 2 => {
                return Err(bad("embedding.dim", "reference embedder needs dim >= 2").into())
            }
            EmbeddingKind::Remote => {
                if e.dim == 0 {
                    return Err(bad("embedding.dim", "must be positive").into());
                }
                if e.endpoint.as_deref().unwrap_or("").is_empty() {
                    return Err(
                        bad("embedding.endpoint", "required for the remote provider").into(),
                    );
                }
                if e.model.as_deref().unwrap_or("").is_empty() {
                    return Err(bad("embedding.model", "required for the remote provider").into());
                }
            }
            _ => {}
        }
        if e.batch == 0 {
            return Err(bad("embedding.batch", "must be at least 1").into());
        }
        if e.in_flight == 0 {
            return Err(bad("embedding.in_flight", "must be at least 1").into());
        }
        if self.retrieval.max_chunks == Some(0) {
            return Err(bad("retrieval.max_chunks", "must be at least 1 when set").into());
        }
        if self.llm.abstention.trim().is_empty() {
            return Err(bad("llm.abstention", "must not be empty").into());
        }
        if self.http.max_attempts == 0 {
            return Err(bad("http.max_attempts", "must be at least 1").into());
        }
        if self.http.timeout_secs == 0 {
            return Err(bad("http.timeout_secs", "must be positive").into());
        }
        if self.calibration.judge == JudgeKind::Llm {
            self.llm_settings()?;
        }
        Ok(())
    }

    /// Endpoint and model of the chat provider, which must both be set.
    pub fn llm_settings(&self) -> Result<(&str, &str)> {
        let endpoint = self.llm.endpoint.as_deref().unwrap_or("");
        let model = self.llm.model.as_deref().unwrap_or("");
        if endpoint.is_empty() {
            return Err(bad("llm.endpoint", "required for chat-model features").into());
        }
        if model.is_empty() {
            return Err(bad("llm.model", "required for chat-model features").into());
        }
        Ok((endpoint, model))
    }

    /// The effective configuration as TOML. It holds no secrets: the API key
    /// lives only in the environment.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("<unprintable: {e}>"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let e = Config::from_toml("[chunking]\nsize = 10\nsizee = 3\n").unwrap_err();
        assert!(e.to_string().contains("sizee"), "{e}");
        assert!(Config::from_toml("colour = 1\n").is_err());
    }

    #[test]
    fn file_overrides_defaults() {
        let c = Config::from_toml(
            "[chunking]\noverlap = 4\n[calibration]\nmax_rank = \"all\"\nmode = \"paper-percentile\"\n",
        )
        .unwrap();
        assert_eq!(c.chunking.size, 256);
        assert_eq!(c.chunking.overlap, 4);
        assert_eq!(c.calibration.max_rank, Limit::All);
        assert_eq!(c.calibration.mode, QuantileMode::PaperPercentile);
        c.validate().unwrap();
    }

    #[test]
    fn validation_names_fields() {
        let mut c = Config::default();
        c.chunking.overlap = 300;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("chunking.overlap"));
        let mut c = Config::default();
        c.calibration.alpha = 1.5;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("calibration.alpha"));
        let mut c = Config::default();
        c.embedding.provider = EmbeddingKind::Remote;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("embedding.endpoint"));
        let mut c = Config::default();
        c.calibration.judge = JudgeKind::Llm;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("llm.endpoint"));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = Config::default();
        c.retrieval.max_chunks = Some(7);
        c.paths.store = Some("s.jsonl".into());
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }
}
