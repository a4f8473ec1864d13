//! Runtime parse graph shared by both networks.
//!
//! Instances are never deleted. Undoing a binding flips its status and leaves
//! the child's subtree where it is, so recovery can hang the same subtree
//! somewhere else without touching the lexicon again.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::interface::trace::{EventKind, Trace};
use crate::knowledge::{KnowledgeBase, LexEntry, Network, RuleId, Symbol};

/// Base of a role instance before any role has been assigned to it.
pub const UNASSIGNED_ROLE: &str = "unassigned";
pub const HEAD_SLOT: &str = "head";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u32);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BindingId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn token(i: usize) -> Self {
        Span { start: i, end: i + 1 }
    }

    fn union(self, other: Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceStatus {
    Active,
    Retained,
    Detached,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexicalOrigin {
    pub token: usize,
    /// Indices into the word's lexical entries that share this instance.
    pub entries: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceNode {
    pub id: InstanceId,
    pub network: Network,
    pub base: Symbol,
    pub span: Span,
    pub features: BTreeMap<Symbol, Symbol>,
    pub status: InstanceStatus,
    pub lexical: Option<LexicalOrigin>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BindingStatus {
    Committed,
    Undone,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Binding {
    pub id: BindingId,
    pub network: Network,
    pub child: InstanceId,
    pub parent: InstanceId,
    pub slot: Symbol,
    pub rule: RuleId,
    pub status: BindingStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpectationState {
    Open,
    Satisfied(BindingId),
    Reopened,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpectationInstance {
    pub holder: InstanceId,
    pub expected: Symbol,
    pub required: bool,
    pub state: ExpectationState,
    /// Binding whose rule generated this expectation.
    pub origin: BindingId,
}

impl ExpectationInstance {
    pub fn is_open(&self) -> bool {
        matches!(self.state, ExpectationState::Open | ExpectationState::Reopened)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossLink {
    pub syntactic: InstanceId,
    pub meaning: InstanceId,
    pub role: Option<InstanceId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeaningStatus {
    Active,
    Suppressed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuppressionCause {
    Restriction,
    Context,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeaningCandidate {
    pub concept: Symbol,
    pub status: MeaningStatus,
    pub cause: Option<SuppressionCause>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeaningCandidateSet {
    pub token: usize,
    pub candidates: Vec<MeaningCandidate>,
    /// Concept picked by discourse context, if any.
    pub selected: Option<Symbol>,
}

impl MeaningCandidateSet {
    pub fn active(&self) -> impl Iterator<Item = &Symbol> {
        self.candidates
            .iter()
            .filter(|c| c.status == MeaningStatus::Active)
            .map(|c| &c.concept)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub verb: InstanceId,
    pub event: Symbol,
    pub role: Symbol,
    pub filler: InstanceId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub lex_accesses: Vec<u32>,
    pub retains: u32,
    pub evictions: u32,
    pub recoveries: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenCell {
    pub word: String,
    /// One syntactic instance per distinct (category, features) reading.
    pub candidates: Vec<InstanceId>,
    pub chosen: Option<InstanceId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instantiated {
    pub syntactic: InstanceId,
    pub meaning: Option<InstanceId>,
    pub role: Option<InstanceId>,
}

/// Where a binding's parent comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParentRef {
    Existing(InstanceId),
    Fresh(Symbol),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BindingRequest {
    pub child: InstanceId,
    pub parent: ParentRef,
    pub rule: RuleId,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StateError {
    #[error("instantiate at token {got} but cursor is {cursor}")]
    PositionMismatch { got: usize, cursor: usize },
    #[error("{0} already has a committed parent")]
    AlreadyAttached(InstanceId),
    #[error("slot `{slot}` of {parent} is already filled")]
    SlotOccupied { parent: InstanceId, slot: Symbol },
    #[error("{parent} holds no open expectation for `{expected}`")]
    NoOpenExpectation { parent: InstanceId, expected: Symbol },
    #[error("binding {0:?} is not committed")]
    NotCommitted(BindingId),
    #[error("{0} is not a known instance")]
    UnknownInstance(InstanceId),
    #[error("{child} and {parent} are in different networks")]
    CrossNetwork { child: InstanceId, parent: InstanceId },
    #[error("{0} already has a cross link")]
    DuplicateLink(InstanceId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseState {
    pub tokens: Vec<String>,
    pub cursor: usize,
    pub instances: Vec<InstanceNode>,
    pub bindings: Vec<Binding>,
    pub expectations: Vec<ExpectationInstance>,
    pub cross_links: Vec<CrossLink>,
    pub meaning_sets: BTreeMap<usize, MeaningCandidateSet>,
    pub cells: Vec<TokenCell>,
    pub roles: Vec<RoleAssignment>,
    pub event_root: Option<InstanceId>,
    pub counters: Counters,
    pub trace: Trace,
    parent_of: HashMap<InstanceId, BindingId>,
}

impl ParseState {
    pub fn new(tokens: Vec<String>) -> Self {
        let n = tokens.len();
        ParseState {
            cells: tokens
                .iter()
                .map(|w| TokenCell {
                    word: w.clone(),
                    candidates: Vec::new(),
                    chosen: None,
                })
                .collect(),
            tokens,
            cursor: 0,
            instances: Vec::new(),
            bindings: Vec::new(),
            expectations: Vec::new(),
            cross_links: Vec::new(),
            meaning_sets: BTreeMap::new(),
            roles: Vec::new(),
            event_root: None,
            counters: Counters {
                lex_accesses: vec![0; n],
                ..Counters::default()
            },
            trace: Trace::new(),
            parent_of: HashMap::new(),
        }
    }

    /// A copy for what-if evaluation; its events go nowhere.
    pub fn hypothetical(&self) -> Self {
        let mut copy = self.clone();
        copy.trace = Trace::muted();
        copy
    }

    // -- lookups ----------------------------------------------------------

    pub fn node(&self, id: InstanceId) -> &InstanceNode {
        &self.instances[id.0 as usize]
    }

    fn node_mut(&mut self, id: InstanceId) -> &mut InstanceNode {
        &mut self.instances[id.0 as usize]
    }

    pub fn binding(&self, id: BindingId) -> &Binding {
        &self.bindings[id.0 as usize]
    }

    fn exists(&self, id: InstanceId) -> bool {
        (id.0 as usize) < self.instances.len()
    }

    pub fn parent_binding(&self, id: InstanceId) -> Option<&Binding> {
        self.parent_of.get(&id).map(|&b| self.binding(b))
    }

    pub fn parent(&self, id: InstanceId) -> Option<InstanceId> {
        self.parent_binding(id).map(|b| b.parent)
    }

    /// Committed child bindings, left to right.
    pub fn children(&self, id: InstanceId) -> Vec<&Binding> {
        let mut kids: Vec<&Binding> = self
            .bindings
            .iter()
            .filter(|b| b.parent == id && b.status == BindingStatus::Committed)
            .collect();
        kids.sort_by_key(|b| (self.node(b.child).span.start, b.child));
        kids
    }

    pub fn child_in_slot(&self, id: InstanceId, slot: &str) -> Option<InstanceId> {
        self.bindings
            .iter()
            .find(|b| b.parent == id && b.status == BindingStatus::Committed && b.slot == slot)
            .map(|b| b.child)
    }

    pub fn depth(&self, id: InstanceId) -> usize {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            d += 1;
            cur = p;
        }
        d
    }

    pub fn root_of(&self, id: InstanceId) -> InstanceId {
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            cur = p;
        }
        cur
    }

    /// Larger is more recent: later start, then deeper.
    pub fn recency(&self, id: InstanceId) -> (usize, usize) {
        (self.node(id).span.start, self.depth(id))
    }

    /// Syntactic instances the next token can attach to: active, ending at
    /// `pos`, and built from earlier tokens.
    pub fn frontier(&self, pos: usize) -> Vec<InstanceId> {
        self.instances
            .iter()
            .filter(|n| {
                n.network == Network::Syntactic
                    && n.status == InstanceStatus::Active
                    && n.span.end == pos
                    && n.span.start < pos
            })
            .map(|n| n.id)
            .collect()
    }

    /// Unattached active syntactic instances built from tokens before `upto`.
    pub fn tops(&self, upto: usize) -> Vec<InstanceId> {
        self.instances
            .iter()
            .filter(|n| {
                n.network == Network::Syntactic
                    && n.status == InstanceStatus::Active
                    && !self.parent_of.contains_key(&n.id)
                    && n.span.end <= upto
                    && match &n.lexical {
                        Some(origin) => self.cells[origin.token].chosen == Some(n.id),
                        None => true,
                    }
            })
            .map(|n| n.id)
            .collect()
    }

    pub fn link_of(&self, id: InstanceId) -> Option<&CrossLink> {
        self.cross_links
            .iter()
            .find(|l| l.syntactic == id || l.meaning == id || l.role == Some(id))
    }

    /// Lexical leaf a nominal constituent is about: through PP objects and heads.
    pub fn filler_leaf(&self, id: InstanceId) -> Option<InstanceId> {
        let mut cur = id;
        for _ in 0..32 {
            if self.node(cur).lexical.is_some() {
                return Some(cur);
            }
            cur = self
                .child_in_slot(cur, "object")
                .or_else(|| self.child_in_slot(cur, HEAD_SLOT))?;
        }
        None
    }

    pub fn entries<'kb>(&self, kb: &'kb KnowledgeBase, id: InstanceId) -> Vec<&'kb LexEntry> {
        let Some(origin) = &self.node(id).lexical else {
            return Vec::new();
        };
        let all = kb.lexical_access(&self.tokens[origin.token]);
        origin.entries.iter().map(|&i| &all[i]).collect()
    }

    pub fn active_meanings(&self, token: usize) -> Vec<Symbol> {
        self.meaning_sets
            .get(&token)
            .map(|s| s.active().cloned().collect())
            .unwrap_or_default()
    }

    // -- mutation ---------------------------------------------------------

    fn new_instance(&mut self, network: Network, base: Symbol, span: Span, lexical: Option<LexicalOrigin>) -> InstanceId {
        let id = InstanceId(self.instances.len() as u32);
        self.instances.push(InstanceNode {
            id,
            network,
            base,
            span,
            features: BTreeMap::new(),
            status: InstanceStatus::Active,
            lexical,
        });
        id
    }

    /// Creates the syntactic instance for one reading of the word at `position`,
    /// plus meaning and role instances for content words.
    pub fn instantiate(&mut self, entries: &[(usize, &LexEntry)], position: usize) -> Result<Instantiated, StateError> {
        if position != self.cursor {
            return Err(StateError::PositionMismatch {
                got: position,
                cursor: self.cursor,
            });
        }
        let (_, first) = entries[0];
        let span = Span::token(position);
        let syn = self.new_instance(
            Network::Syntactic,
            first.category.clone(),
            span,
            Some(LexicalOrigin {
                token: position,
                entries: entries.iter().map(|(i, _)| *i).collect(),
            }),
        );
        self.node_mut(syn).features = first.features.clone();
        self.cells[position].candidates.push(syn);

        let meanings: Vec<Symbol> = entries.iter().filter_map(|(_, e)| e.meaning.clone()).collect();
        self.trace.emit(
            EventKind::Instantiate,
            Some(position),
            json!({
                "instance": syn.to_string(),
                "network": "syntactic",
                "base": first.category,
                "features": first.features,
                "meanings": meanings,
            }),
        );
        if !first.is_content_word() || meanings.is_empty() {
            return Ok(Instantiated {
                syntactic: syn,
                meaning: None,
                role: None,
            });
        }

        let set = self.meaning_sets.entry(position).or_insert_with(|| MeaningCandidateSet {
            token: position,
            candidates: Vec::new(),
            selected: None,
        });
        for m in &meanings {
            if !set.candidates.iter().any(|c| &c.concept == m) {
                set.candidates.push(MeaningCandidate {
                    concept: m.clone(),
                    status: MeaningStatus::Active,
                    cause: None,
                });
            }
        }
        let meaning = self.new_instance(Network::Semantic, meanings[0].clone(), span, None);
        let role = (first.category == "NOUN")
            .then(|| self.new_instance(Network::Role, Symbol::new(UNASSIGNED_ROLE), span, None));
        self.cross_link(syn, meaning, role)?;
        Ok(Instantiated {
            syntactic: syn,
            meaning: Some(meaning),
            role,
        })
    }

    pub fn cross_link(&mut self, syn: InstanceId, meaning: InstanceId, role: Option<InstanceId>) -> Result<(), StateError> {
        for id in [Some(syn), Some(meaning), role].into_iter().flatten() {
            if !self.exists(id) {
                return Err(StateError::UnknownInstance(id));
            }
        }
        if self.node(syn).network != Network::Syntactic || self.node(meaning).network != Network::Semantic {
            return Err(StateError::CrossNetwork {
                child: syn,
                parent: meaning,
            });
        }
        if let Some(r) = role {
            if self.node(r).network != Network::Role {
                return Err(StateError::CrossNetwork { child: syn, parent: r });
            }
        }
        if self.cross_links.iter().any(|l| l.syntactic == syn) {
            return Err(StateError::DuplicateLink(syn));
        }
        self.cross_links.push(CrossLink {
            syntactic: syn,
            meaning,
            role,
        });
        self.trace.emit(
            EventKind::CrossLink,
            self.node(syn).lexical.as_ref().map(|o| o.token),
            json!({
                "syntactic": syn.to_string(),
                "meaning": meaning.to_string(),
                "role": role.map(|r| r.to_string()),
            }),
        );
        Ok(())
    }

    /// Commits one binding, creating the parent when asked and opening the
    /// rule's expectations on it.
    pub fn apply_binding(&mut self, kb: &KnowledgeBase, req: &BindingRequest) -> Result<BindingId, StateError> {
        let rule = kb.rule(req.rule);
        if !self.exists(req.child) {
            return Err(StateError::UnknownInstance(req.child));
        }
        if self.parent_of.contains_key(&req.child) {
            return Err(StateError::AlreadyAttached(req.child));
        }
        let child_network = self.node(req.child).network;
        let parent = match &req.parent {
            ParentRef::Existing(p) => {
                let p = *p;
                if !self.exists(p) {
                    return Err(StateError::UnknownInstance(p));
                }
                if self.node(p).network != child_network {
                    return Err(StateError::CrossNetwork {
                        child: req.child,
                        parent: p,
                    });
                }
                if child_network == Network::Syntactic && self.child_in_slot(p, rule.slot.as_str()).is_some() {
                    return Err(StateError::SlotOccupied {
                        parent: p,
                        slot: rule.slot.clone(),
                    });
                }
                if rule.satisfies_required && self.open_expectation(p, &self.node(req.child).base).is_none() {
                    return Err(StateError::NoOpenExpectation {
                        parent: p,
                        expected: self.node(req.child).base.clone(),
                    });
                }
                p
            }
            ParentRef::Fresh(base) => {
                if rule.satisfies_required {
                    return Err(StateError::NoOpenExpectation {
                        parent: InstanceId(u32::MAX),
                        expected: self.node(req.child).base.clone(),
                    });
                }
                let span = self.node(req.child).span;
                self.new_instance(child_network, base.clone(), span, None)
            }
        };

        let id = BindingId(self.bindings.len() as u32);
        self.bindings.push(Binding {
            id,
            network: child_network,
            child: req.child,
            parent,
            slot: rule.slot.clone(),
            rule: req.rule,
            status: BindingStatus::Committed,
        });
        self.parent_of.insert(req.child, id);
        self.node_mut(req.child).status = InstanceStatus::Active;
        self.node_mut(parent).status = InstanceStatus::Active;
        if rule.slot == HEAD_SLOT {
            let features = self.node(req.child).features.clone();
            self.node_mut(parent).features = features;
        }
        let token = self.cursor;

        if rule.satisfies_required {
            let child_base = self.node(req.child).base.clone();
            let e = self.open_expectation(parent, &child_base).expect("checked above");
            self.expectations[e].state = ExpectationState::Satisfied(id);
            self.trace.emit(
                EventKind::ExpectSatisfied,
                Some(token),
                json!({"holder": parent.to_string(), "holder_base": self.node(parent).base, "expected": child_base}),
            );
        }
        for expected in &rule.expectations {
            let held = self.expectations.iter().position(|e| e.holder == parent && &e.expected == expected);
            match held {
                Some(i) if self.binding(self.expectations[i].origin).status == BindingStatus::Committed => {}
                Some(i) => self.expectations[i].origin = id,
                None => {
                    self.expectations.push(ExpectationInstance {
                        holder: parent,
                        expected: expected.clone(),
                        required: true,
                        state: ExpectationState::Open,
                        origin: id,
                    });
                    self.trace.emit(
                        EventKind::ExpectOpen,
                        Some(token),
                        json!({"holder": parent.to_string(), "holder_base": self.node(parent).base, "expected": expected}),
                    );
                }
            }
        }
        self.refresh_spans();
        Ok(id)
    }

    fn open_expectation(&self, holder: InstanceId, expected: &Symbol) -> Option<usize> {
        self.expectations.iter().position(|e| {
            e.holder == holder
                && &e.expected == expected
                && e.is_open()
                && self.binding(e.origin).status == BindingStatus::Committed
        })
    }

    /// Undoes a committed binding. The child keeps its subtree; a parent left
    /// with no children and no lexical origin is detached in turn.
    pub fn detach(&mut self, id: BindingId) -> Result<(), StateError> {
        if self.binding(id).status != BindingStatus::Committed {
            return Err(StateError::NotCommitted(id));
        }
        self.bindings[id.0 as usize].status = BindingStatus::Undone;
        let Binding { child, parent, .. } = self.binding(id).clone();
        self.parent_of.remove(&child);
        self.node_mut(child).status = InstanceStatus::Detached;
        let token = self.cursor;
        for i in 0..self.expectations.len() {
            if self.expectations[i].state == ExpectationState::Satisfied(id) {
                self.expectations[i].state = ExpectationState::Reopened;
                let e = &self.expectations[i];
                self.trace.emit(
                    EventKind::ExpectReopen,
                    Some(token),
                    json!({"holder": e.holder.to_string(), "holder_base": self.node(e.holder).base, "expected": e.expected}),
                );
            }
        }
        let orphaned = self.node(parent).lexical.is_none() && self.children(parent).is_empty();
        if orphaned {
            self.node_mut(parent).status = InstanceStatus::Detached;
            if let Some(&up) = self.parent_of.get(&parent) {
                self.detach(up)?;
            }
        }
        self.refresh_spans();
        Ok(())
    }

    /// Open or reopened expectations in `network`, most recent holder first.
    pub fn open_expectations(&self, network: Network) -> Vec<&ExpectationInstance> {
        let mut out: Vec<&ExpectationInstance> = self
            .expectations
            .iter()
            .filter(|e| {
                e.is_open()
                    && self.binding(e.origin).status == BindingStatus::Committed
                    && self.node(e.holder).network == network
                    && self.node(e.holder).status == InstanceStatus::Active
            })
            .collect();
        out.sort_by(|a, b| self.recency(b.holder).cmp(&self.recency(a.holder)).then(a.holder.cmp(&b.holder)));
        out
    }

    /// Whether `holder` has an open expectation for a constituent of category `expected`.
    pub fn expects(&self, holder: InstanceId, expected: &Symbol) -> bool {
        self.open_expectation(holder, expected).is_some()
    }

    pub fn has_open_expectation(&self, id: InstanceId) -> bool {
        self.expectations.iter().any(|e| {
            e.holder == id && e.is_open() && self.binding(e.origin).status == BindingStatus::Committed
        })
    }

    pub fn suppress(&mut self, token: usize, concept: &Symbol, cause: SuppressionCause) -> bool {
        let Some(set) = self.meaning_sets.get_mut(&token) else {
            return false;
        };
        match set.candidates.iter_mut().find(|c| &c.concept == concept) {
            Some(c) if c.status == MeaningStatus::Active => {
                c.status = MeaningStatus::Suppressed;
                c.cause = Some(cause);
                true
            }
            _ => false,
        }
    }

    pub fn reactivate(&mut self, token: usize, concept: &Symbol) -> bool {
        let Some(set) = self.meaning_sets.get_mut(&token) else {
            return false;
        };
        match set.candidates.iter_mut().find(|c| &c.concept == concept) {
            Some(c) if c.status == MeaningStatus::Suppressed => {
                c.status = MeaningStatus::Active;
                c.cause = None;
                true
            }
            _ => false,
        }
    }

    /// Recomputes phrasal spans from their committed children.
    pub fn refresh_spans(&mut self) {
        let mut memo: HashMap<InstanceId, Span> = HashMap::new();
        let ids: Vec<InstanceId> = self.instances.iter().map(|n| n.id).collect();
        for id in ids {
            let span = self.compute_span(id, &mut memo);
            self.node_mut(id).span = span;
        }
    }

    fn compute_span(&self, id: InstanceId, memo: &mut HashMap<InstanceId, Span>) -> Span {
        if let Some(s) = memo.get(&id) {
            return *s;
        }
        let node = self.node(id);
        let span = if node.lexical.is_some() || node.network != Network::Syntactic {
            node.span
        } else {
            let kids: Vec<InstanceId> = self.children(id).iter().map(|b| b.child).collect();
            kids.into_iter()
                .map(|k| self.compute_span(k, memo))
                .reduce(Span::union)
                .unwrap_or(node.span)
        };
        memo.insert(id, span);
        span
    }

    /// Committed bindings into a required slot that no live expectation of
    /// the parent accounts for. Happens when a head is swapped under its
    /// dependents and the new reading does not expect them.
    pub fn unlicensed(&self, kb: &KnowledgeBase) -> Vec<BindingId> {
        self.bindings
            .iter()
            .filter(|b| b.status == BindingStatus::Committed && kb.rule(b.rule).satisfies_required)
            .filter(|b| {
                !self.expectations.iter().any(|e| {
                    e.holder == b.parent
                        && e.state == ExpectationState::Satisfied(b.id)
                        && self.binding(e.origin).status == BindingStatus::Committed
                })
            })
            .map(|b| b.id)
            .collect()
    }

    /// Lexical leaves under `id`, left to right.
    pub fn leaves(&self, id: InstanceId) -> Vec<InstanceId> {
        if self.node(id).lexical.is_some() {
            return vec![id];
        }
        self.children(id).iter().flat_map(|b| self.leaves(b.child)).collect()
    }

    pub fn set_base(&mut self, id: InstanceId, base: Symbol) {
        self.node_mut(id).base = base;
    }

    pub fn set_status(&mut self, id: InstanceId, status: InstanceStatus) {
        self.node_mut(id).status = status;
    }

    pub fn new_semantic_instance(&mut self, base: Symbol, span: Span) -> InstanceId {
        self.new_instance(Network::Semantic, base, span, None)
    }
}
