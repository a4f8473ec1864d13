//! Incremental sentence processing with one control loop over separate
//! syntactic and semantic knowledge networks.

pub mod context;
pub mod interface;
pub mod knowledge;
pub mod process;
pub mod recovery;
pub mod state;

pub use context::{ContextConfig, ContextModel};
pub use interface::result::{ParseResult, ParseStatus};
pub use knowledge::{load_knowledge_base, load_knowledge_base_file, KnowledgeBase};
pub use process::{parse_sentence, FailCause, ParseConfig, PreferencePolicy, Session};

/// Whitespace tokenization, lowercased.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}
