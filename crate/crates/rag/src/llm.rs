//! LLM-backed judge and question generator, and the editable templates.

use std::path::Path;

use conformal_rag_core::calibration::{GeneratedPair, QuestionGenerator};
use conformal_rag_core::generation::{render, Role};
use conformal_rag_core::{
    ChatMessage, ChatProvider, Chunk, PromptTemplate, ProviderError, RelevanceJudge,
};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fsutil::read_text;

const BUILTIN_SYSTEM: &str = include_str!("../templates/system.txt");
const BUILTIN_USER: &str = include_str!("../templates/user.txt");
const BUILTIN_JUDGE: &str = include_str!("../templates/judge.txt");
const BUILTIN_GENERATOR: &str = include_str!("../templates/generator.txt");

pub const SYSTEM_FILE: &str = "system.txt";
pub const USER_FILE: &str = "user.txt";
pub const JUDGE_FILE: &str = "judge.txt";
pub const GENERATOR_FILE: &str = "generator.txt";

/// All prompt templates. A template directory may override any subset of
/// `system.txt`, `user.txt`, `judge.txt` and `generator.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub answer: PromptTemplate,
    pub judge: String,
    pub generator: String,
}

fn strip(s: &str) -> String {
    s.strip_suffix('\n').unwrap_or(s).to_string()
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            answer: PromptTemplate {
                system: strip(BUILTIN_SYSTEM),
                user: strip(BUILTIN_USER),
            },
            judge: strip(BUILTIN_JUDGE),
            generator: strip(BUILTIN_GENERATOR),
        }
    }
}

impl Templates {
    pub fn load(dir: Option<&Path>) -> Result<Self> {
        let mut t = Templates::default();
        if let Some(dir) = dir {
            if !dir.is_dir() {
                return Err(Error::Missing(dir.to_path_buf()));
            }
            let read = |name: &str| -> Result<Option<String>> {
                let p = dir.join(name);
                if p.is_file() {
                    Ok(Some(strip(&read_text(&p)?)))
                } else {
                    Ok(None)
                }
            };
            if let Some(s) = read(SYSTEM_FILE)? {
                t.answer.system = s;
            }
            if let Some(s) = read(USER_FILE)? {
                t.answer.user = s;
            }
            if let Some(s) = read(JUDGE_FILE)? {
                t.judge = s;
            }
            if let Some(s) = read(GENERATOR_FILE)? {
                t.generator = s;
            }
        }
        t.answer.validate()?;
        for (name, body) in [(JUDGE_FILE, &t.judge), (GENERATOR_FILE, &t.generator)] {
            if !body.contains("{{passage}}") {
                return Err(conformal_rag_core::Error::config(
                    "paths.templates",
                    format!("{name} lacks {{{{passage}}}}"),
                )
                .into());
            }
        }
        Ok(t)
    }
}

fn user(content: String) -> ChatMessage {
    ChatMessage {
        role: Role::User,
        content,
    }
}

fn parse_verdict(reply: &str) -> Option<bool> {
    let word: String = reply
        .trim()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    match word.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

const REPROMPT: &str = "Reply with exactly one word: yes or no.";

/// Asks a chat model whether a passage answers the question. The reply
/// must be exactly "yes" or "no" (case and surrounding punctuation aside);
/// anything else gets one corrective reprompt and is then treated as "no".
pub struct LlmJudge<C> {
    chat: C,
    template: String,
}

impl<C: ChatProvider> LlmJudge<C> {
    pub fn new(chat: C, template: impl Into<String>) -> Self {
        LlmJudge {
            chat,
            template: template.into(),
        }
    }
}

impl<C: ChatProvider> RelevanceJudge for LlmJudge<C> {
    fn judge_id(&self) -> String {
        format!("llm:{}", self.chat.model_id())
    }

    fn accepts(
        &self,
        question: &str,
        reference_answer: &str,
        chunk_text: &str,
    ) -> Result<bool, ProviderError> {
        let prompt = render(
            &self.template,
            &[
                ("{{question}}", question),
                ("{{reference_answer}}", reference_answer),
                ("{{passage}}", chunk_text),
            ],
        );
        let mut messages = vec![user(prompt)];
        let first = self.chat.complete(&messages)?;
        if let Some(v) = parse_verdict(&first) {
            return Ok(v);
        }
        messages.push(ChatMessage {
            role: Role::Assistant,
            content: first,
        });
        messages.push(user(REPROMPT.to_string()));
        let second = self.chat.complete(&messages)?;
        Ok(parse_verdict(&second).unwrap_or_else(|| {
            log::warn!("judge gave no yes/no verdict twice; counting as no");
            false
        }))
    }
}

#[derive(Deserialize)]
struct Pair {
    question: String,
    answer: String,
}

/// Pulls the first `{...}` object out of a reply that may carry code fences
/// or chatter around it.
fn extract_pair(reply: &str) -> Result<GeneratedPair, ProviderError> {
    let start = reply.find('{');
    let end = reply.rfind('}');
    let (Some(s), Some(e)) = (start, end) else {
        return Err(ProviderError::Malformed(
            "no JSON object in generator reply".into(),
        ));
    };
    if e < s {
        return Err(ProviderError::Malformed(
            "no JSON object in generator reply".into(),
        ));
    }
    let p: Pair = serde_json::from_str(&reply[s..=e])
        .map_err(|err| ProviderError::Malformed(format!("generator reply: {err}")))?;
    Ok(GeneratedPair {
        question: p.question,
        answer: p.answer,
    })
}

pub struct LlmQuestionGenerator<C> {
    chat: C,
    template: String,
}

impl<C: ChatProvider> LlmQuestionGenerator<C> {
    pub fn new(chat: C, template: impl Into<String>) -> Self {
        LlmQuestionGenerator {
            chat,
            template: template.into(),
        }
    }
}

impl<C: ChatProvider> QuestionGenerator for LlmQuestionGenerator<C> {
    fn generate(&self, chunk: &Chunk) -> Result<GeneratedPair, ProviderError> {
        let prompt = render(&self.template, &[("{{passage}}", &chunk.text)]);
        extract_pair(&self.chat.complete(&[user(prompt)])?)
    }
}
