use std::time::{Duration, Instant};

use conformal_rag_core::{AssembledPrompt, ChatProvider, ProviderError};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerResult {
    /// Raw model output, unvalidated.
    pub text: String,
    pub model_id: String,
    pub prompt_chars: usize,
    #[serde(rename = "timing_ms", serialize_with = "millis")]
    pub timing: Duration,
}

fn millis<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u128(d.as_millis())
}

/// Carries the prompt so the caller can retry it elsewhere.
#[derive(Debug, thiserror::Error)]
#[error("answer generation failed: {source}")]
pub struct AnswerError {
    #[source]
    pub source: ProviderError,
    pub prompt: AssembledPrompt,
}

pub fn answer<C: ChatProvider + ?Sized>(
    prompt: &AssembledPrompt,
    llm: &C,
) -> Result<AnswerResult, Box<AnswerError>> {
    let start = Instant::now();
    match llm.complete(&prompt.messages()) {
        Ok(text) => Ok(AnswerResult {
            text,
            model_id: llm.model_id().to_string(),
            prompt_chars: prompt.total_chars,
            timing: start.elapsed(),
        }),
        Err(source) => Err(Box::new(AnswerError {
            source,
            prompt: prompt.clone(),
        })),
    }
}
