//! Grounded prompt assembly and the chat provider interface.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};
use crate::retrieval::{RetrievedContext, TRUNCATED_BY_CHARS};
use crate::vectorstore::VectorStore;

pub const CONTEXT_PLACEHOLDER: &str = "{{context}}";
pub const QUESTION_PLACEHOLDER: &str = "{{question}}";
pub const BLOCK_SEPARATOR: &str = "\n\n";

pub const DEFAULT_ABSTENTION: &str = "I cannot answer this question from the provided context.";

pub const DEFAULT_SYSTEM_TEMPLATE: &str = "\
You answer questions using only the context passages supplied by the user.
Rules:
- Use no knowledge beyond the context.
- Cite the [source: ...] id of every passage you rely on.
- If passages disagree, say so explicitly and present each position with its source instead of picking one.
- If the context does not contain the answer, reply exactly with: {{abstention}}";

pub const DEFAULT_USER_TEMPLATE: &str = "\
Context:
{{context}}

Question: {{question}}";

const ABSTENTION_PLACEHOLDER: &str = "{{abstention}}";
const EMPTY_CONTEXT: &str = "(no passages cleared the retrieval threshold)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            system: DEFAULT_SYSTEM_TEMPLATE.to_string(),
            user: DEFAULT_USER_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Result<Self> {
        let t = PromptTemplate {
            system: system.into(),
            user: user.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [CONTEXT_PLACEHOLDER, QUESTION_PLACEHOLDER] {
            if !self.user.contains(p) {
                return Err(Error::config(
                    "paths.templates",
                    format!("user template lacks {p}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

pub trait ChatProvider {
    fn model_id(&self) -> &str;
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ProviderError>;
}

impl<C: ChatProvider + ?Sized> ChatProvider for &C {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        (**self).complete(messages)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub chunk_id: String,
    pub text: String,
}

impl ContextBlock {
    pub fn render(&self) -> String {
        format!("[source: {}]\n{}", self.chunk_id, self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub system_text: String,
    /// Same order as the retrieved hits.
    pub context_blocks: Vec<ContextBlock>,
    pub question: String,
    pub user_text: String,
    /// Characters in `system_text` plus `user_text`.
    pub total_chars: usize,
    /// No block survived; the prompt asks for the abstention sentence.
    pub abstains: bool,
}

impl AssembledPrompt {
    pub fn messages(&self) -> Vec<ChatMessage> {
        alloc::vec![
            ChatMessage {
                role: Role::System,
                content: self.system_text.clone(),
            },
            ChatMessage {
                role: Role::User,
                content: self.user_text.clone(),
            },
        ]
    }
}

/// Substitutes placeholders in one left-to-right pass, so placeholder-like
/// text inside substituted values is left alone.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while !rest.is_empty() {
        if rest.starts_with("{{") {
            for (key, value) in values {
                if let Some(tail) = rest.strip_prefix(key) {
                    out.push_str(value);
                    rest = tail;
                    continue 'outer;
                }
            }
        }
        let c = rest.chars().next().unwrap();
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

/// Renders the retrieved chunks, best first, each tagged with its chunk id.
/// When the joined blocks exceed `char_budget` characters, blocks are
/// dropped from the low-score end and `ctx` is marked truncated. With no
/// block left the prompt demands `abstention` verbatim.
pub fn assemble_context(
    ctx: &mut RetrievedContext,
    store: &VectorStore,
    template: &PromptTemplate,
    char_budget: Option<usize>,
    abstention: &str,
) -> Result<AssembledPrompt> {
    template.validate()?;
    let mut blocks = ctx
        .hits
        .iter()
        .map(|h| {
            store
                .get(&h.chunk_id)
                .map(|e| ContextBlock {
                    chunk_id: h.chunk_id.clone(),
                    text: e.chunk.text.clone(),
                })
                .ok_or_else(|| Error::UnknownChunk(h.chunk_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    if let Some(budget) = char_budget {
        let sep = BLOCK_SEPARATOR.chars().count();
        let mut lens: Vec<usize> = blocks.iter().map(|b| b.render().chars().count()).collect();
        let mut total: usize = lens.iter().sum::<usize>() + sep * lens.len().saturating_sub(1);
        let before = blocks.len();
        while total > budget {
            let Some(len) = lens.pop() else { break };
            blocks.pop();
            total -= len + if lens.is_empty() { 0 } else { sep };
        }
        if blocks.len() < before {
            ctx.mark_truncated(TRUNCATED_BY_CHARS);
            log::warn!(
                "context truncated from {before} to {} block(s) by the {budget}-character budget",
                blocks.len()
            );
        }
    }

    let abstains = blocks.is_empty();
    let context_text = if abstains {
        format!("{EMPTY_CONTEXT}\nReply exactly with: {abstention}")
    } else {
        blocks
            .iter()
            .map(ContextBlock::render)
            .collect::<Vec<_>>()
            .join(BLOCK_SEPARATOR)
    };
    let system_text = render(&template.system, &[(ABSTENTION_PLACEHOLDER, abstention)]);
    let user_text = render(
        &template.user,
        &[
            (CONTEXT_PLACEHOLDER, &context_text),
            (QUESTION_PLACEHOLDER, &ctx.question),
        ],
    );
    Ok(AssembledPrompt {
        total_chars: system_text.chars().count() + user_text.chars().count(),
        system_text,
        context_blocks: blocks,
        question: ctx.question.clone(),
        user_text,
        abstains,
    })
}
