//! Serializable outcome of one parse.

use serde::{Deserialize, Serialize};

use crate::interface::trace::TraceEvent;
use crate::knowledge::{KnowledgeBase, Symbol};
use crate::process::Failure;
use crate::state::{Counters, InstanceId, ParseState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub category: Symbol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<Symbol>,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub meanings: Vec<Symbol>,
    /// `role(EVENT)` labels this leaf fills.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub roles: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    /// Shape only: categories, slots and spans.
    pub fn shape(&self) -> String {
        let mut s = String::new();
        self.write_shape(&mut s);
        s
    }

    fn write_shape(&self, out: &mut String) {
        if let Some(slot) = &self.slot {
            out.push_str(slot.as_str());
            out.push(':');
        }
        out.push_str(&format!("{}[{},{})", self.category, self.start, self.end));
        if !self.children.is_empty() {
            out.push('(');
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                c.write_shape(out);
            }
            out.push(')');
        }
    }

    /// `[S [NP the bugs] [VP slept]]`
    pub fn bracketed(&self) -> String {
        match &self.word {
            Some(w) => w.clone(),
            None => {
                let inner: Vec<String> = self.children.iter().map(TreeNode::bracketed).collect();
                format!("[{} {}]", self.category, inner.join(" "))
            }
        }
    }

    pub fn walk(&self) -> Vec<&TreeNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleEntry {
    pub event: Symbol,
    pub role: Symbol,
    pub filler: String,
    pub token: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeaningEntry {
    pub token: usize,
    pub word: String,
    pub active: Vec<Symbol>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<Symbol>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParseResult {
    pub tokens: Vec<String>,
    pub status: ParseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    pub structure_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeNode>,
    pub roles: Vec<RoleEntry>,
    pub meanings: Vec<MeaningEntry>,
    pub counters: Counters,
    pub trace: Vec<TraceEvent>,
}

/// Ordered structural tags; see [`structure_label`].
pub const STRUCTURE_TAGS: [&str; 5] = ["relative", "passive", "pp-argument", "pp-adjunct", "pp-modifier"];

/// Short name for the shape of a tree, e.g. `relative+passive`.
pub fn structure_label(tree: Option<&TreeNode>) -> String {
    let Some(tree) = tree else {
        return "none".into();
    };
    let nodes = tree.walk();
    let has = |cat: &str, slot: &str| {
        nodes
            .iter()
            .any(|n| n.category == cat && n.children.iter().any(|c| c.slot.as_ref().is_some_and(|s| s == slot)))
    };
    let found = [
        nodes.iter().any(|n| n.category == "RELCLAUSE"),
        has("VP", "participle"),
        has("VP", "goal"),
        has("VP", "adjunct"),
        has("NP", "postmodifier"),
    ];
    let tags: Vec<&str> = STRUCTURE_TAGS.iter().zip(found).filter(|(_, f)| *f).map(|(t, _)| *t).collect();
    if tags.is_empty() {
        "simple".into()
    } else {
        tags.join("+")
    }
}

fn tree_of(state: &ParseState, id: InstanceId, slot: Option<Symbol>) -> TreeNode {
    let node = state.node(id);
    let (word, meanings, roles) = match &node.lexical {
        Some(o) => {
            let roles = state
                .roles
                .iter()
                .filter(|a| a.filler == id)
                .map(|a| format!("{}({})", a.role, a.event))
                .collect();
            (Some(state.tokens[o.token].clone()), state.active_meanings(o.token), roles)
        }
        None => (None, Vec::new(), Vec::new()),
    };
    TreeNode {
        category: node.base.clone(),
        slot,
        start: node.span.start,
        end: node.span.end,
        word,
        meanings,
        roles,
        children: state
            .children(id)
            .iter()
            .map(|b| tree_of(state, b.child, Some(b.slot.clone())))
            .collect(),
    }
}

impl ParseResult {
    pub fn build(_kb: &KnowledgeBase, state: ParseState, failure: Option<Failure>) -> Self {
        let n = state.tokens.len();
        let tree = match failure {
            None => state.tops(n).first().map(|&t| tree_of(&state, t, None)),
            Some(_) => None,
        };
        let roles = state
            .roles
            .iter()
            .filter_map(|a| {
                let token = state.node(a.filler).lexical.as_ref()?.token;
                Some(RoleEntry {
                    event: a.event.clone(),
                    role: a.role.clone(),
                    filler: state.tokens[token].clone(),
                    token,
                })
            })
            .collect();
        let meanings = state
            .meaning_sets
            .values()
            .map(|s| MeaningEntry {
                token: s.token,
                word: state.tokens[s.token].clone(),
                active: s.active().cloned().collect(),
                selected: s.selected.clone(),
            })
            .collect();
        ParseResult {
            status: if failure.is_none() { ParseStatus::Complete } else { ParseStatus::Failed },
            structure_label: structure_label(tree.as_ref()),
            tokens: state.tokens.clone(),
            failure,
            tree,
            roles,
            meanings,
            counters: state.counters.clone(),
            trace: state.trace.into_events(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.status == ParseStatus::Complete
    }

    pub fn meanings_of(&self, token: usize) -> Option<&[Symbol]> {
        self.meanings.iter().find(|m| m.token == token).map(|m| m.active.as_slice())
    }

    pub fn has_role(&self, role: &str, event: &str, filler: &str) -> bool {
        self.roles.iter().any(|r| r.role == role && r.event == event && r.filler == filler)
    }

    pub fn recoveries(&self) -> u32 {
        self.counters.recoveries
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }
}
