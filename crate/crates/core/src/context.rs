//! Discourse priming.
//!
//! Prior sentences are not parsed. Each content word they contain adds
//! activation to its meanings and, one level up, to their direct `isa` parents.
//! A meaning is contextually selected when its activation reaches the threshold
//! and strictly beats every competitor.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::knowledge::{KnowledgeBase, Symbol};
use crate::state::MeaningCandidateSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextConfig {
    pub direct_weight: u32,
    pub parent_weight: u32,
    pub threshold: u32,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            direct_weight: 2,
            parent_weight: 1,
            threshold: 2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextModel {
    pub activation: BTreeMap<Symbol, u32>,
    pub threshold: u32,
    /// Words skipped because the lexicon does not know them.
    pub warnings: Vec<String>,
}

impl ContextModel {
    /// No prior discourse.
    pub fn null() -> Self {
        ContextModel {
            threshold: ContextConfig::default().threshold,
            ..Default::default()
        }
    }

    pub fn is_null(&self) -> bool {
        self.activation.is_empty()
    }

    pub fn level(&self, concept: &Symbol) -> u32 {
        self.activation.get(concept).copied().unwrap_or(0)
    }
}

pub fn ingest<S: AsRef<str>>(kb: &KnowledgeBase, sentences: &[Vec<S>], config: ContextConfig) -> ContextModel {
    let mut model = ContextModel {
        threshold: config.threshold,
        ..Default::default()
    };
    for (si, sentence) in sentences.iter().enumerate() {
        for word in sentence {
            let word = word.as_ref();
            let entries = kb.lexical_access(word);
            if entries.is_empty() {
                model.warnings.push(format!("context sentence {si}: unknown word `{word}` skipped"));
                continue;
            }
            let mut meanings: Vec<&Symbol> = Vec::new();
            for e in entries.iter().filter(|e| e.is_content_word()) {
                if let Some(m) = &e.meaning {
                    if !meanings.contains(&m) {
                        meanings.push(m);
                    }
                }
            }
            for m in meanings {
                *model.activation.entry(m.clone()).or_insert(0) += config.direct_weight;
                if let Some(c) = kb.concept(m) {
                    for p in &c.isa {
                        *model.activation.entry(p.clone()).or_insert(0) += config.parent_weight;
                    }
                }
            }
        }
    }
    model
}

/// Splits context text into sentences (one per line) of lowercased tokens.
pub fn read_context(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(crate::tokenize)
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiasOutcome {
    pub ordered: Vec<Symbol>,
    pub selected: Option<Symbol>,
}

/// Orders candidates by activation (stable on ties) and reports a selection.
/// Never removes a candidate; suppressing the losers is the caller's job.
pub fn bias(context: &ContextModel, candidates: &MeaningCandidateSet) -> BiasOutcome {
    let mut ordered: Vec<Symbol> = candidates.candidates.iter().map(|c| c.concept.clone()).collect();
    ordered.sort_by_key(|c| std::cmp::Reverse(context.level(c)));
    let top = ordered.first().map(|c| context.level(c)).unwrap_or(0);
    let runner_up = ordered.get(1).map(|c| context.level(c)).unwrap_or(0);
    let selected = (!context.is_null() && top >= context.threshold && top > runner_up)
        .then(|| ordered[0].clone());
    BiasOutcome { ordered, selected }
}
