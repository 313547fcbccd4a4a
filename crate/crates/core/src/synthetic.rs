//! Seeded synthetic question-answering workload.
//!
//! Documents are built from topic vocabularies and each carries a few
//! two-token answer phrases that occur nowhere else. Every phrase yields one
//! question: the phrase, a few words from the text surrounding it, and words
//! from a randomly chosen distractor topic. Questions are shuffled before the
//! calibration/test split, so the two splits are exchangeable.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;

use crate::calibration::{CalibrationQuestion, Origin};
use crate::corpus::{ChunkingConfig, Document};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub phrases_per_doc: usize,
    pub n_topics: usize,
    pub words_per_topic: usize,
    pub shared_words: usize,
    pub doc_tokens: usize,
    pub sentence_len: usize,
    /// Probability that a document token comes from the shared pool.
    pub shared_rate: f64,
    /// Words taken from within `context_window` tokens of the phrase.
    pub context_words: usize,
    pub context_window: usize,
    pub distractor_noise: usize,
    pub calibration_size: usize,
    pub chunking: ChunkingConfig,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_docs: 200,
            phrases_per_doc: 3,
            n_topics: 20,
            words_per_topic: 40,
            shared_words: 60,
            doc_tokens: 120,
            sentence_len: 12,
            shared_rate: 0.3,
            context_words: 4,
            context_window: 6,
            distractor_noise: 3,
            calibration_size: 400,
            chunking: ChunkingConfig {
                size: 40,
                overlap: 8,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorkload {
    pub documents: Vec<Document>,
    pub calibration: Vec<CalibrationQuestion>,
    pub test: Vec<CalibrationQuestion>,
}

fn topic_word(topic: usize, j: usize) -> String {
    format!("tp{topic:02}w{j:02}")
}

fn shared_word(j: usize) -> String {
    format!("cm{j:03}")
}

/// The two answer tokens of phrase `j` in document `doc`.
pub fn answer_phrase(doc: usize, j: usize) -> String {
    format!("ans{doc:04}k{j} val{doc:04}q{j}")
}

pub fn generate(config: &SyntheticConfig, seed: u64) -> Result<SyntheticWorkload> {
    config.chunking.validate()?;
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut documents = Vec::with_capacity(config.n_docs);
    let mut questions = Vec::with_capacity(config.n_docs * config.phrases_per_doc);

    for doc in 0..config.n_docs {
        let topic = rng.random_range(0..config.n_topics);
        let mut tokens: Vec<String> = (0..config.doc_tokens)
            .map(|_| {
                if rng.random_bool(config.shared_rate) {
                    shared_word(rng.random_range(0..config.shared_words))
                } else {
                    topic_word(topic, rng.random_range(0..config.words_per_topic))
                }
            })
            .collect();
        // Phrases go into distinct token slots, replacing one token each.
        let mut slots: Vec<usize> = (0..config.doc_tokens).collect();
        slots.shuffle(&mut rng);
        let mut slots = slots[..config.phrases_per_doc].to_vec();
        slots.sort_unstable();
        for (j, &slot) in slots.iter().enumerate().rev() {
            tokens[slot] = answer_phrase(doc, j);
        }

        let mut text = String::new();
        for (i, t) in tokens.iter().enumerate() {
            if i > 0 {
                text.push(' ');
            }
            text.push_str(t);
            if (i + 1) % config.sentence_len == 0 {
                text.push('.');
            }
        }
        let doc_id = format!("doc{doc:04}.txt");
        documents.push(Document::new(doc_id.clone(), doc_id.clone(), text)?);

        for j in 0..config.phrases_per_doc {
            let distractor = rng.random_range(0..config.n_topics);
            let slot = slots[j];
            let lo = slot.saturating_sub(config.context_window);
            let hi = usize::min(slot + config.context_window + 1, config.doc_tokens);
            let nearby: Vec<usize> = (lo..hi).filter(|p| !slots.contains(p)).collect();
            let mut words: Vec<String> = Vec::new();
            if !nearby.is_empty() {
                for _ in 0..config.context_words {
                    words.push(tokens[nearby[rng.random_range(0..nearby.len())]].clone());
                }
            }
            for _ in 0..config.distractor_noise {
                words.push(topic_word(
                    distractor,
                    rng.random_range(0..config.words_per_topic),
                ));
            }
            let phrase = answer_phrase(doc, j);
            words.push(phrase.clone());
            words.shuffle(&mut rng);
            let mut q = CalibrationQuestion::new(
                format!("syn-{doc:04}-{j}"),
                format!("what about {}?", words.join(" ")),
                phrase,
                Origin::Imported,
            )?;
            q.source_doc_id = Some(doc_id.clone());
            questions.push(q);
        }
    }

    questions.shuffle(&mut rng);
    let test = questions.split_off(config.calibration_size.min(questions.len()));
    Ok(SyntheticWorkload {
        documents,
        calibration: questions,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let c = SyntheticConfig::default();
        let a = generate(&c, 3).unwrap();
        let b = generate(&c, 3).unwrap();
        assert_eq!(a.documents.len(), 200);
        assert_eq!(a.calibration.len(), 400);
        assert_eq!(a.test.len(), 200);
        assert_eq!(a.documents, b.documents);
        assert_eq!(a.calibration, b.calibration);
        let other = generate(&c, 4).unwrap();
        assert_ne!(a.calibration, other.calibration);
    }

    #[test]
    fn phrases_appear_exactly_once_in_corpus() {
        let w = generate(&SyntheticConfig::default(), 11).unwrap();
        for q in w.calibration.iter().chain(&w.test) {
            let hits = w
                .documents
                .iter()
                .filter(|d| d.text.contains(&q.reference_answer))
                .count();
            assert_eq!(hits, 1, "{}", q.reference_answer);
            assert!(q.question.contains(&q.reference_answer));
        }
    }
}
