#![allow(dead_code)]

pub mod oracle;
pub mod sentences;

use std::path::PathBuf;

use tandem::interface::corpus::{self, CorpusItem};
use tandem::knowledge::{load_knowledge_base, KnowledgeBase};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn kb0() -> KnowledgeBase {
    load_knowledge_base(include_str!("../../data/kb0.json")).expect("fixture loads")
}

pub fn corpus_items() -> Vec<CorpusItem> {
    corpus::load_corpus(data("corpus.json")).expect("corpus loads")
}

pub fn context2() -> Vec<String> {
    include_str!("../../data/context2.txt").lines().map(str::to_string).collect()
}

pub const SENTENCE_1: &str = "the bugs moved into the new lounge were found quickly";

pub fn tokens(text: &str) -> Vec<String> {
    tandem::tokenize(text)
}
