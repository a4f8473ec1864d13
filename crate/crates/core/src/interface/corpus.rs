//! Batch runs over a JSON corpus of sentences with expected outcomes.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{self, ContextModel};
use crate::interface::render;
use crate::interface::result::{ParseResult, ParseStatus};
use crate::interface::trace::to_jsonl;
use crate::knowledge::KnowledgeBase;
use crate::process::{parse_sentence, FailCause, ParseConfig, PreferencePolicy};
use crate::tokenize;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<ParseStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<FailCause>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recoveries: Option<u32>,
    /// True iff the parse needed at least one recovery.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub garden_path: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure_label: Option<String>,
    /// `role(EVENT)=word` strings that must appear among the final roles.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub roles: Vec<String>,
    /// Word (or `word@token`) mapped to its exact active meanings.
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub meanings: std::collections::BTreeMap<String, Vec<String>>,
}

/// Either raw text (tokenized on whitespace) or pre-split tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sentence {
    Text(String),
    Tokens(Vec<String>),
}

impl Sentence {
    pub fn tokens(&self) -> Vec<String> {
        match self {
            Sentence::Text(t) => tokenize(t),
            Sentence::Tokens(ts) => ts.iter().map(|t| t.to_lowercase()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusItem {
    pub id: String,
    pub sentence: Sentence,
    /// Prior discourse, one sentence per entry.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PreferencePolicy>,
    #[serde(default)]
    pub expect: Expectation,
}

impl CorpusItem {
    pub fn config(&self, base: ParseConfig) -> ParseConfig {
        ParseConfig {
            capacity: self.capacity.unwrap_or(base.capacity),
            policy: self.policy.unwrap_or(base.policy),
            ..base
        }
    }

    pub fn context_model(&self, kb: &KnowledgeBase, base: ParseConfig) -> ContextModel {
        if self.context.is_empty() {
            return ContextModel::null();
        }
        let sentences: Vec<Vec<String>> = self.context.iter().map(|s| tokenize(s)).collect();
        context::ingest(kb, &sentences, base.context)
    }

    pub fn run(&self, kb: &KnowledgeBase, base: ParseConfig) -> ParseResult {
        let config = self.config(base);
        let model = self.context_model(kb, config);
        parse_sentence(kb, &self.sentence.tokens(), &model, config)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corpus {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
}

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusItem>, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusItem>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text).map_err(|source| CorpusError::Parse {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub id: String,
    pub result: ParseResult,
    pub checks: Vec<Check>,
}

impl ItemOutcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        pass,
        detail,
    }
}

pub fn evaluate(item: &CorpusItem, result: &ParseResult) -> Vec<Check> {
    let e = &item.expect;
    let mut out = Vec::new();
    if let Some(s) = e.status {
        out.push(check("status", result.status == s, format!("{:?}", result.status)));
    }
    if let Some(c) = e.cause {
        let got = result.failure.map(|f| f.cause);
        out.push(check("cause", got == Some(c), format!("{got:?}")));
    }
    if let Some(r) = e.recoveries {
        out.push(check("recoveries", result.counters.recoveries == r, result.counters.recoveries.to_string()));
    }
    if let Some(g) = e.garden_path {
        let got = result.counters.recoveries > 0;
        out.push(check("garden_path", got == g, got.to_string()));
    }
    if let Some(l) = &e.structure_label {
        out.push(check("structure_label", &result.structure_label == l, result.structure_label.clone()));
    }
    for spec in &e.roles {
        let found = result
            .roles
            .iter()
            .any(|r| format!("{}({})={}", r.role, r.event, r.filler) == *spec);
        out.push(check(&format!("role {spec}"), found, String::new()));
    }
    for (key, want) in &e.meanings {
        let token = match key.rsplit_once('@') {
            Some((_, t)) => t.parse::<usize>().ok(),
            None => result.tokens.iter().position(|w| w == key),
        };
        let got: Option<Vec<String>> = token
            .and_then(|t| result.meanings_of(t))
            .map(|m| m.iter().map(|s| s.to_string()).collect());
        out.push(check(&format!("meanings {key}"), got.as_ref() == Some(want), format!("{got:?}")));
    }
    out
}

/// Runs every item in parallel; outcomes keep corpus order.
pub fn run_corpus(kb: &KnowledgeBase, items: &[CorpusItem], base: ParseConfig) -> Vec<ItemOutcome> {
    items
        .par_iter()
        .map(|item| {
            let result = item.run(kb, base);
            ItemOutcome {
                id: item.id.clone(),
                checks: evaluate(item, &result),
                result,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    pub sentence: String,
    pub status: ParseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<crate::process::Failure>,
    pub structure_label: String,
    pub recoveries: u32,
    pub garden_path: bool,
    pub retains: u32,
    pub evictions: u32,
    pub pass: bool,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub passed: usize,
    pub failed: usize,
    pub items: Vec<ReportRow>,
}

pub fn report(outcomes: &[ItemOutcome]) -> Report {
    let items: Vec<ReportRow> = outcomes
        .iter()
        .map(|o| ReportRow {
            id: o.id.clone(),
            sentence: o.result.tokens.join(" "),
            status: o.result.status,
            failure: o.result.failure,
            structure_label: o.result.structure_label.clone(),
            recoveries: o.result.counters.recoveries,
            garden_path: o.result.counters.recoveries > 0,
            retains: o.result.counters.retains,
            evictions: o.result.counters.evictions,
            pass: o.pass(),
            checks: o.checks.clone(),
        })
        .collect();
    let passed = items.iter().filter(|r| r.pass).count();
    Report {
        failed: items.len() - passed,
        passed,
        items,
    }
}

pub fn human_summary(outcomes: &[ItemOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        let mark = if o.pass() { "PASS" } else { "MISMATCH" };
        out.push_str(&format!("{mark} {} {}\n", o.id, render::summary(&o.result)));
        for c in o.checks.iter().filter(|c| !c.pass) {
            out.push_str(&format!("    expected {} (got {})\n", c.name, c.detail));
        }
    }
    let passed = outcomes.iter().filter(|o| o.pass()).count();
    out.push_str(&format!("{passed}/{} items as expected\n", outcomes.len()));
    out
}

/// Writes `<id>.jsonl` per item.
pub fn write_traces(dir: &Path, outcomes: &[ItemOutcome]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for o in outcomes {
        fs::write(dir.join(format!("{}.jsonl", o.id)), to_jsonl(&o.result.trace))?;
    }
    Ok(())
}
