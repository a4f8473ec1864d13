//! Retained alternatives and garden-path recovery.
//!
//! Unchosen candidates go into a bounded store. At a dead end the newest one
//! is popped, the binding chain it lost to is detached (subtrees stay intact),
//! and the alternative is committed in its place, reusing the displaced
//! phrases where categories line up. Nothing is looked up in the lexicon again.

use std::collections::VecDeque;

use serde_json::json;

use crate::interface::trace::EventKind;
use crate::knowledge::{KnowledgeBase, Symbol};
use crate::process::{self, CandidateBinding, FailCause, Failure};
use crate::state::{BindingId, BindingStatus, InstanceId, ParseState, SuppressionCause};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RetainedAlternative {
    pub choice_point: usize,
    pub alternative: CandidateBinding,
    /// Chain committed instead, bottom-up.
    pub displaced: Vec<BindingId>,
    /// Parents the displaced chain created, per step.
    pub displaced_created: Vec<Option<InstanceId>>,
    pub displaced_origin: InstanceId,
    pub suppressed_meanings: Vec<(usize, Symbol)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RetentionStore {
    items: VecDeque<RetainedAlternative>,
    capacity: usize,
}

impl RetentionStore {
    pub fn new(capacity: usize) -> Self {
        RetentionStore {
            items: VecDeque::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &RetainedAlternative> {
        self.items.iter()
    }

    /// Pushes newest-last and returns whatever fell off the old end.
    pub fn push(&mut self, alt: RetainedAlternative) -> Vec<RetainedAlternative> {
        self.items.push_back(alt);
        let mut evicted = Vec::new();
        while self.items.len() > self.capacity {
            evicted.extend(self.items.pop_front());
        }
        evicted
    }

    pub fn pop_newest(&mut self) -> Option<RetainedAlternative> {
        self.items.pop_back()
    }
}

/// Stores `alternatives` in order, tracing each push and eviction.
pub fn retain(state: &mut ParseState, kb: &KnowledgeBase, store: &mut RetentionStore, alternatives: Vec<RetainedAlternative>) -> Vec<RetainedAlternative> {
    let mut evicted_all = Vec::new();
    for alt in alternatives {
        let token = alt.choice_point;
        let desc = process::describe(state, kb, &alt.alternative);
        let evicted = store.push(alt);
        state.counters.retains += 1;
        state.trace.emit(
            EventKind::Retain,
            Some(token),
            json!({"choice_point": token, "alternative": desc, "size": store.len() + evicted.len()}),
        );
        for e in evicted {
            state.counters.evictions += 1;
            let desc = process::describe(state, kb, &e.alternative);
            state.trace.emit(
                EventKind::Evict,
                Some(token),
                json!({"choice_point": e.choice_point, "alternative": desc, "size": store.len()}),
            );
            evicted_all.push(e);
        }
    }
    evicted_all
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trigger {
    /// The word at this position has no viable candidate.
    Token(usize),
    /// All input consumed but the structure is not a finished parse.
    EndOfInput,
}

/// True when every candidate for the word at `pos` fails the hard filter.
pub fn detect_dead_end(state: &ParseState, kb: &KnowledgeBase, pos: usize) -> bool {
    process::token_candidates(state, kb, pos).iter().all(|c| c.hard_violation)
}

/// Pops alternatives newest-first until one makes the trigger satisfiable.
/// Returns the trigger's candidates (empty at end of input). A popped
/// alternative that does not help is rolled back.
pub fn recover(state: &mut ParseState, kb: &KnowledgeBase, store: &mut RetentionStore, trigger: Trigger) -> Result<Vec<CandidateBinding>, Failure> {
    let token = match trigger {
        Trigger::Token(p) => Some(p),
        Trigger::EndOfInput => None,
    };
    loop {
        let Some(alt) = store.pop_newest() else {
            return Err(match trigger {
                Trigger::Token(p) => Failure {
                    cause: FailCause::DeadEndNoAlternatives,
                    token: Some(p),
                },
                Trigger::EndOfInput => Failure {
                    cause: FailCause::Incomplete,
                    token: None,
                },
            });
        };
        let snapshot = state.clone();
        let desc = process::describe(state, kb, &alt.alternative);
        state.counters.recoveries += 1;
        state.trace.emit(
            EventKind::Recover,
            token,
            json!({"choice_point": alt.choice_point, "alternative": desc, "outcome": "applied", "store": store.len()}),
        );
        if try_alternative(state, kb, &alt) {
            match trigger {
                Trigger::Token(p) => {
                    let candidates = process::token_candidates(state, kb, p);
                    if candidates.iter().any(|c| !c.hard_violation) {
                        return Ok(candidates);
                    }
                }
                Trigger::EndOfInput => {
                    if process::is_complete(state, kb) {
                        return Ok(Vec::new());
                    }
                }
            }
        }
        *state = snapshot;
        state.counters.recoveries += 1;
        state.trace.emit(
            EventKind::Recover,
            token,
            json!({"choice_point": alt.choice_point, "alternative": desc, "outcome": "rejected", "store": store.len()}),
        );
    }
}

/// Swaps the displaced chain for the alternative. False if the result is not
/// a single well-formed structure over the tokens read so far.
fn try_alternative(state: &mut ParseState, kb: &KnowledgeBase, alt: &RetainedAlternative) -> bool {
    for &b in alt.displaced.iter().rev() {
        if state.binding(b).status != BindingStatus::Committed || state.detach(b).is_err() {
            return false;
        }
    }
    let token = state.cursor;
    let mut payload = process::describe(state, kb, &alt.alternative);
    state.trace.emit(
        EventKind::Feasible,
        Some(token),
        json!({"network": "syntactic", "phase": "recover", "candidates": [payload.clone()]}),
    );
    payload["network"] = json!("syntactic");
    payload["phase"] = json!("recover");
    state.trace.emit(EventKind::Commit, Some(token), payload);
    if process::commit_chain_reusing(state, kb, &alt.alternative, &alt.displaced_created).is_err() {
        return false;
    }
    if !repair_semantics(state, kb, alt) {
        return false;
    }
    process::percolate(state, kb, token);
    process::sync_semantics(state, kb);
    state.unlicensed(kb).is_empty() && process::coherent(state, token)
}

/// Lifts the displaced choice's meaning suppressions unless a restriction in
/// the new configuration still prunes them. False on a hard violation.
pub fn repair_semantics(state: &mut ParseState, kb: &KnowledgeBase, alt: &RetainedAlternative) -> bool {
    for (t, m) in &alt.suppressed_meanings {
        state.reactivate(*t, m);
    }
    let verdict = process::restriction_verdict(state, kb);
    if verdict.hard_violation {
        return false;
    }
    let token = state.cursor;
    for (t, m) in &alt.suppressed_meanings {
        if verdict.pruned.contains(&(*t, m.clone())) {
            state.suppress(*t, m, SuppressionCause::Restriction);
        } else {
            let word = state.tokens[*t].clone();
            state.trace.emit(
                EventKind::Unresolve,
                Some(token),
                json!({"token": t, "word": word, "concept": m, "active": state.active_meanings(*t)}),
            );
        }
    }
    for (t, m) in &verdict.pruned {
        state.suppress(*t, m, SuppressionCause::Restriction);
    }
    true
}
