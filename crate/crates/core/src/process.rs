//! The unified process: one loop that accesses a word, instantiates it in both
//! networks, computes feasible attachments, ranks them with syntactic and
//! semantic preferences, commits the best, keeps the rest, and percolates.
//!
//! A candidate is a short chain of attachments: zero or more fresh parents
//! projected from the word, ending in a slot of a node already on the right
//! frontier. Only at the first word, when there is nothing to attach to, does
//! a chain end in a fresh parent.

use std::cmp::Reverse;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::context::{self, ContextConfig, ContextModel};
use crate::interface::result::ParseResult;
use crate::interface::trace::EventKind;
use crate::knowledge::{KnowledgeBase, LexEntry, RoleSpec, RuleId, Symbol, EVENT_SLOT};
use crate::recovery::{self, RetainedAlternative, RetentionStore};
use crate::state::{
    BindingId, BindingRequest, InstanceId, InstanceStatus, ParentRef, ParseState, RoleAssignment, StateError,
    SuppressionCause,
};

/// Longest projection chain tried for one attachment.
pub const MAX_CHAIN: usize = 4;

// Process-level heuristics about clause structure. These are the only places
// the loop knows category or slot names beyond what the knowledge file says.
pub const SUBJECT_SLOT: &str = "subject";
pub const RELATIVE_SLOT: &str = "relative";
pub const CLAUSE_CATEGORIES: [&str; 2] = ["S", "RELCLAUSE"];
const RELATIVE_CLAUSE: &str = "RELCLAUSE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Existing(InstanceId),
    Fresh,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStep {
    pub rule: RuleId,
    pub target: Target,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateBinding {
    /// Instance being attached: a word reading, or a finished phrase during percolation.
    pub origin: InstanceId,
    pub chain: Vec<ChainStep>,
    pub syntactic_tier: u8,
    pub semantic_tier: u8,
    pub hard_violation: bool,
    pub pruned_meanings: Vec<(usize, Symbol)>,
    /// Recency of the final attachment target; larger is more recent.
    pub recency: (usize, usize),
    /// Position of the origin among its token's readings.
    pub variant: usize,
}

impl CandidateBinding {
    pub fn final_target(&self) -> Target {
        self.chain.last().map(|s| s.target).unwrap_or(Target::Fresh)
    }

    pub fn rule_ids(&self) -> Vec<usize> {
        self.chain.iter().map(|s| s.rule.0).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreferencePolicy {
    /// Hard semantic filter, then context tier, then Syntactic Default, then recency.
    #[default]
    Lexicographic,
    /// Same, but the syntactic tier outranks the context tier.
    SyntaxFirst,
}

pub type RankKey = (bool, u8, u8, Reverse<(usize, usize)>, usize, Vec<usize>);

impl PreferencePolicy {
    pub fn key(&self, c: &CandidateBinding) -> RankKey {
        let (first, second) = match self {
            PreferencePolicy::Lexicographic => (c.semantic_tier, c.syntactic_tier),
            PreferencePolicy::SyntaxFirst => (c.syntactic_tier, c.semantic_tier),
        };
        (c.hard_violation, first, second, Reverse(c.recency), c.variant, c.rule_ids())
    }

    /// Index of the most preferred candidate that passes the hard filter.
    pub fn select(&self, candidates: &[CandidateBinding]) -> Option<usize> {
        candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.hard_violation)
            .min_by_key(|(_, c)| self.key(c))
            .map(|(i, _)| i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseConfig {
    pub capacity: usize,
    pub policy: PreferencePolicy,
    pub context: ContextConfig,
}

impl Default for ParseConfig {
    fn default() -> Self {
        ParseConfig {
            capacity: 8,
            policy: PreferencePolicy::default(),
            context: ContextConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Error)]
#[serde(rename_all = "kebab-case")]
pub enum FailCause {
    #[error("unknown-word")]
    UnknownWord,
    #[error("dead-end-no-alternatives")]
    DeadEndNoAlternatives,
    #[error("incomplete")]
    Incomplete,
    #[error("empty-input")]
    EmptyInput,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{cause} at token {token:?}")]
pub struct Failure {
    pub cause: FailCause,
    pub token: Option<usize>,
}

// ---------------------------------------------------------------------------
// Feasibility

/// Attachment chains for `instance`, whose leftmost token is `pos`.
pub fn syntactic_chains(state: &ParseState, kb: &KnowledgeBase, instance: InstanceId) -> Vec<Vec<ChainStep>> {
    let node = state.node(instance);
    let pos = node.span.start;
    let mut out = Vec::new();
    extend_chain(state, kb, &node.base, &node.features, pos, pos == 0, &mut Vec::new(), &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn extend_chain(
    state: &ParseState,
    kb: &KnowledgeBase,
    base: &Symbol,
    features: &std::collections::BTreeMap<Symbol, Symbol>,
    pos: usize,
    nothing_to_attach_to: bool,
    prefix: &mut Vec<ChainStep>,
    out: &mut Vec<Vec<ChainStep>>,
) {
    let Ok(rules) = kb.attachment_rules(base) else {
        return;
    };
    let frontier = state.frontier(pos);
    for rule in rules.into_iter().filter(|r| r.conditions_hold(features)) {
        for &t in &frontier {
            let target = state.node(t);
            if target.base != rule.parent || state.child_in_slot(t, rule.slot.as_str()).is_some() {
                continue;
            }
            if rule.satisfies_required && !state.expects(t, base) {
                continue;
            }
            let mut chain = prefix.clone();
            chain.push(ChainStep {
                rule: rule.id,
                target: Target::Existing(t),
            });
            out.push(chain);
        }
        if !rule.may_project() {
            continue;
        }
        prefix.push(ChainStep {
            rule: rule.id,
            target: Target::Fresh,
        });
        if nothing_to_attach_to {
            out.push(prefix.clone());
        } else if prefix.len() < MAX_CHAIN {
            let inherited = if rule.slot == crate::state::HEAD_SLOT {
                features.clone()
            } else {
                Default::default()
            };
            extend_chain(state, kb, &rule.parent, &inherited, pos, false, prefix, out);
        }
        prefix.pop();
    }
}

/// Tier 0 when the chain ends by filling an open required expectation.
pub fn syntactic_preference(candidate: &CandidateBinding, kb: &KnowledgeBase) -> u8 {
    match candidate.chain.last() {
        Some(step) if matches!(step.target, Target::Existing(_)) && kb.rule(step.rule).satisfies_required => 0,
        _ => 1,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SemanticVerdict {
    pub hard_violation: bool,
    pub tier: u8,
    pub pruned: Vec<(usize, Symbol)>,
}

/// Evaluates selectional restrictions on the configuration the candidate
/// would produce, without touching `state`.
pub fn semantic_preference(candidate: &CandidateBinding, state: &ParseState, kb: &KnowledgeBase) -> SemanticVerdict {
    let mut hypo = state.hypothetical();
    if commit_chain(&mut hypo, kb, candidate).is_err() {
        return SemanticVerdict {
            hard_violation: true,
            tier: 1,
            pruned: Vec::new(),
        };
    }
    restriction_verdict(&hypo, kb)
}

/// Restriction check over every role currently resolvable in `state`.
pub fn restriction_verdict(state: &ParseState, kb: &KnowledgeBase) -> SemanticVerdict {
    let mut verdict = SemanticVerdict {
        hard_violation: false,
        tier: 1,
        pruned: Vec::new(),
    };
    for (assignment, spec) in compute_roles(state, kb) {
        let Some(token) = state.node(assignment.filler).lexical.as_ref().map(|o| o.token) else {
            continue;
        };
        let Some(set) = state.meaning_sets.get(&token) else {
            continue;
        };
        let active: Vec<&Symbol> = set.active().collect();
        let surviving: Vec<&Symbol> = active
            .iter()
            .copied()
            .filter(|m| kb.subsumes(&spec.restriction, m).unwrap_or(false))
            .collect();
        if surviving.is_empty() {
            if spec.required {
                verdict.hard_violation = true;
            }
            continue;
        }
        for m in active {
            if !surviving.contains(&m) && !verdict.pruned.contains(&(token, m.clone())) {
                verdict.pruned.push((token, m.clone()));
            }
        }
        if set.selected.as_ref().is_some_and(|s| surviving.contains(&s)) {
            verdict.tier = 0;
        }
    }
    verdict.pruned.sort();
    verdict
}

/// Scored candidates for one instance.
pub fn feasible_bindings(state: &ParseState, kb: &KnowledgeBase, instance: InstanceId) -> Vec<CandidateBinding> {
    let variant = state
        .node(instance)
        .lexical
        .as_ref()
        .and_then(|o| state.cells[o.token].candidates.iter().position(|&c| c == instance))
        .unwrap_or(0);
    syntactic_chains(state, kb, instance)
        .into_iter()
        .map(|chain| {
            let recency = match chain.last().map(|s| s.target) {
                Some(Target::Existing(t)) => state.recency(t),
                _ => (0, 0),
            };
            let mut c = CandidateBinding {
                origin: instance,
                chain,
                syntactic_tier: 1,
                semantic_tier: 1,
                hard_violation: false,
                pruned_meanings: Vec::new(),
                recency,
                variant,
            };
            c.syntactic_tier = syntactic_preference(&c, kb);
            let verdict = semantic_preference(&c, state, kb);
            c.semantic_tier = verdict.tier;
            c.hard_violation = verdict.hard_violation;
            c.pruned_meanings = verdict.pruned;
            c
        })
        .collect()
}

/// Candidates for every unattached reading of the word at `pos`.
pub fn token_candidates(state: &ParseState, kb: &KnowledgeBase, pos: usize) -> Vec<CandidateBinding> {
    state.cells[pos]
        .candidates
        .iter()
        .flat_map(|&i| feasible_bindings(state, kb, i))
        .collect()
}

// ---------------------------------------------------------------------------
// Commitment

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommittedChain {
    pub bindings: Vec<BindingId>,
    /// Parent created by each step, if the step projected a fresh node.
    pub created: Vec<Option<InstanceId>>,
}

/// Applies every step of `candidate` and marks its origin as the token's reading.
pub fn commit_chain(state: &mut ParseState, kb: &KnowledgeBase, candidate: &CandidateBinding) -> Result<CommittedChain, StateError> {
    commit_chain_reusing(state, kb, candidate, &[])
}

/// As [`commit_chain`], but a fresh step may reuse a detached phrase of the
/// right category from `reuse` (same step index) instead of building a new one.
pub fn commit_chain_reusing(
    state: &mut ParseState,
    kb: &KnowledgeBase,
    candidate: &CandidateBinding,
    reuse: &[Option<InstanceId>],
) -> Result<CommittedChain, StateError> {
    choose_reading(state, candidate.origin);
    let mut child = candidate.origin;
    let mut out = CommittedChain {
        bindings: Vec::new(),
        created: Vec::new(),
    };
    for (i, step) in candidate.chain.iter().enumerate() {
        let rule = kb.rule(step.rule);
        let parent = match step.target {
            Target::Existing(t) => {
                if state.node(t).status != InstanceStatus::Active {
                    return Err(StateError::UnknownInstance(t));
                }
                ParentRef::Existing(t)
            }
            Target::Fresh => match reuse.get(i).copied().flatten() {
                Some(n) if state.node(n).base == rule.parent && state.parent(n).is_none() && state.node(n).lexical.is_none() => {
                    ParentRef::Existing(n)
                }
                _ => ParentRef::Fresh(rule.parent.clone()),
            },
        };
        let fresh = matches!(step.target, Target::Fresh);
        let b = state.apply_binding(
            kb,
            &BindingRequest {
                child,
                parent,
                rule: step.rule,
            },
        )?;
        child = state.binding(b).parent;
        out.bindings.push(b);
        out.created.push(fresh.then_some(child));
    }
    Ok(out)
}

fn choose_reading(state: &mut ParseState, origin: InstanceId) {
    let Some(token) = state.node(origin).lexical.as_ref().map(|o| o.token) else {
        return;
    };
    let siblings = state.cells[token].candidates.clone();
    for s in siblings {
        if s != origin && state.parent(s).is_none() {
            state.set_status(s, InstanceStatus::Retained);
        }
    }
    state.set_status(origin, InstanceStatus::Active);
    state.cells[token].chosen = Some(origin);
}

pub fn describe(state: &ParseState, kb: &KnowledgeBase, c: &CandidateBinding) -> Value {
    let target = match c.final_target() {
        Target::Existing(t) => json!({"instance": t.to_string(), "base": state.node(t).base}),
        Target::Fresh => Value::Null,
    };
    json!({
        "origin": c.origin.to_string(),
        "origin_base": state.node(c.origin).base,
        "features": state.node(c.origin).features,
        "rule": c.chain.first().map(|s| kb.rule(s.rule).label()),
        "chain": c.chain.iter().map(|s| kb.rule(s.rule).label()).collect::<Vec<_>>(),
        "target": target,
        "syntactic_tier": c.syntactic_tier,
        "semantic_tier": c.semantic_tier,
        "hard_violation": c.hard_violation,
        "pruned": c.pruned_meanings,
    })
}

/// Commits the most preferred viable candidate and retains the others.
pub fn select_and_commit(
    state: &mut ParseState,
    kb: &KnowledgeBase,
    candidates: &[CandidateBinding],
    policy: PreferencePolicy,
    store: &mut RetentionStore,
) -> Result<CommittedChain, Failure> {
    let token = state.cursor;
    let Some(best) = policy.select(candidates) else {
        return Err(Failure {
            cause: FailCause::DeadEndNoAlternatives,
            token: Some(token),
        });
    };
    let chosen = &candidates[best];
    let mut payload = describe(state, kb, chosen);
    payload["network"] = json!("syntactic");
    payload["candidate"] = json!(best);
    state.trace.emit(EventKind::Commit, Some(token), payload);
    let committed = commit_chain(state, kb, chosen).map_err(|_| Failure {
        cause: FailCause::DeadEndNoAlternatives,
        token: Some(token),
    })?;
    let mut suppressed = Vec::new();
    for (t, m) in &chosen.pruned_meanings {
        if state.suppress(*t, m, SuppressionCause::Restriction) {
            suppressed.push((*t, m.clone()));
        }
    }

    let mut alternatives: Vec<(usize, &CandidateBinding)> = candidates
        .iter()
        .enumerate()
        .filter(|(i, c)| *i != best && !c.hard_violation)
        .collect();
    alternatives.sort_by_key(|(_, c)| Reverse(policy.key(c)));
    let retained: Vec<RetainedAlternative> = alternatives
        .into_iter()
        .map(|(_, c)| RetainedAlternative {
            choice_point: token,
            alternative: c.clone(),
            displaced: committed.bindings.clone(),
            displaced_created: committed.created.clone(),
            displaced_origin: chosen.origin,
            suppressed_meanings: suppressed.clone(),
        })
        .collect();
    recovery::retain(state, kb, store, retained);
    Ok(committed)
}

/// Binds finished unattached phrases upward while exactly one binding is possible.
pub fn percolate(state: &mut ParseState, kb: &KnowledgeBase, upto: usize) {
    loop {
        let tops = state.tops(upto);
        let [top] = tops.as_slice() else {
            break;
        };
        let top = *top;
        if kb.is_root_category(&state.node(top).base) || subtree_has_open(state, top) {
            break;
        }
        let Ok(rules) = kb.attachment_rules(&state.node(top).base) else {
            break;
        };
        let features = state.node(top).features.clone();
        let mut candidates: Vec<CandidateBinding> = rules
            .into_iter()
            .filter(|r| r.may_project() && r.conditions_hold(&features))
            .map(|r| CandidateBinding {
                origin: top,
                chain: vec![ChainStep {
                    rule: r.id,
                    target: Target::Fresh,
                }],
                syntactic_tier: 1,
                semantic_tier: 1,
                hard_violation: false,
                pruned_meanings: Vec::new(),
                recency: (0, 0),
                variant: 0,
            })
            .collect();
        for c in &mut candidates {
            let v = semantic_preference(c, state, kb);
            c.hard_violation = v.hard_violation;
            c.semantic_tier = v.tier;
            c.pruned_meanings = v.pruned;
        }
        let viable: Vec<&CandidateBinding> = candidates.iter().filter(|c| !c.hard_violation).collect();
        let [only] = viable.as_slice() else {
            break;
        };
        let only = (*only).clone();
        let token = state.cursor;
        let listed: Vec<Value> = candidates.iter().map(|c| describe(state, kb, c)).collect();
        state.trace.emit(
            EventKind::Feasible,
            Some(token),
            json!({"network": "syntactic", "phase": "percolate", "candidates": listed}),
        );
        let mut payload = describe(state, kb, &only);
        payload["network"] = json!("syntactic");
        payload["phase"] = json!("percolate");
        state.trace.emit(EventKind::Commit, Some(token), payload);
        if commit_chain(state, kb, &only).is_err() {
            break;
        }
        for (t, m) in &only.pruned_meanings {
            state.suppress(*t, m, SuppressionCause::Restriction);
        }
    }
}

fn subtree_has_open(state: &ParseState, id: InstanceId) -> bool {
    state.has_open_expectation(id) || state.children(id).iter().any(|b| subtree_has_open(state, b.child))
}

// ---------------------------------------------------------------------------
// Semantics

/// Finds the constituent that fills `slot` for the verb `verb`, walking up to
/// the nearest clause. A reduced relative's missing subject is its host noun phrase.
pub fn resolve_slot(state: &ParseState, verb: InstanceId, slot: &Symbol) -> Option<InstanceId> {
    let mut cur = verb;
    loop {
        let parent = state.parent(cur)?;
        if let Some(c) = state.child_in_slot(parent, slot.as_str()) {
            if c != cur {
                return state.filler_leaf(c);
            }
        }
        let base = state.node(parent).base.as_str();
        if CLAUSE_CATEGORIES.contains(&base) {
            if base == RELATIVE_CLAUSE && slot == SUBJECT_SLOT {
                let host = state.parent_binding(parent).filter(|b| b.slot == RELATIVE_SLOT)?;
                return state.filler_leaf(host.parent);
            }
            return None;
        }
        cur = parent;
    }
}

fn frame_entry<'kb>(state: &ParseState, kb: &'kb KnowledgeBase, id: InstanceId) -> Option<&'kb LexEntry> {
    state.entries(kb, id).into_iter().find(|e| kb.frame_of(e).is_some())
}

/// Role assignments implied by the current syntactic configuration.
pub fn compute_roles(state: &ParseState, kb: &KnowledgeBase) -> Vec<(RoleAssignment, RoleSpec)> {
    let mut out = Vec::new();
    for cell in &state.cells {
        let Some(verb) = cell.chosen else { continue };
        if state.parent(verb).is_none() {
            continue;
        }
        let Some(entry) = frame_entry(state, kb, verb) else { continue };
        let frame = kb.frame_of(entry).expect("frame_entry checked");
        for spec in &frame.roles {
            let Some(filler) = resolve_slot(state, verb, &spec.maps_slot) else {
                continue;
            };
            if state.link_of(filler).is_none() {
                continue;
            }
            out.push((
                RoleAssignment {
                    verb,
                    event: frame.event.clone(),
                    role: spec.role.clone(),
                    filler,
                },
                spec.clone(),
            ));
        }
    }
    out
}

/// Verbs whose frame has every required role filled.
fn saturated(state: &ParseState, kb: &KnowledgeBase, roles: &[(RoleAssignment, RoleSpec)], verb: InstanceId) -> bool {
    let Some(entry) = frame_entry(state, kb, verb) else {
        return true;
    };
    let frame = kb.frame_of(entry).expect("frame_entry checked");
    frame
        .roles
        .iter()
        .filter(|r| r.required)
        .all(|r| roles.iter().any(|(a, _)| a.verb == verb && a.role == r.role))
}

fn word_of(state: &ParseState, id: InstanceId) -> String {
    state
        .node(id)
        .lexical
        .as_ref()
        .map(|o| state.tokens[o.token].clone())
        .unwrap_or_default()
}

fn role_json(state: &ParseState, a: &RoleAssignment) -> Value {
    json!({"role": a.role, "event": a.event, "filler": word_of(state, a.filler), "filler_instance": a.filler.to_string()})
}

/// Brings role assignments and event-root bindings in line with the syntax.
pub fn sync_semantics(state: &mut ParseState, kb: &KnowledgeBase) {
    let token = state.cursor;
    let computed = compute_roles(state, kb);
    let new: Vec<RoleAssignment> = computed.iter().map(|(a, _)| a.clone()).collect();
    let key = |a: &RoleAssignment| (a.event.clone(), a.role.clone(), a.filler);
    let old_keys: BTreeSet<_> = state.roles.iter().map(key).collect();
    let new_keys: BTreeSet<_> = new.iter().map(key).collect();
    let removed: Vec<RoleAssignment> = state.roles.iter().filter(|a| !new_keys.contains(&key(a))).cloned().collect();
    let mut added: Vec<RoleAssignment> = new.iter().filter(|a| !old_keys.contains(&key(a))).cloned().collect();

    for r in &removed {
        let pair = added.iter().position(|a| a.event == r.event && a.filler == r.filler);
        let to = pair.map(|i| added.remove(i));
        let payload = json!({
            "from": role_json(state, r),
            "to": to.as_ref().map(|a| role_json(state, a)),
        });
        state.trace.emit(EventKind::RoleReassign, Some(token), payload);
    }
    for a in &added {
        let desc = role_json(state, a);
        state.trace.emit(
            EventKind::Feasible,
            Some(token),
            json!({"network": "role", "candidates": [desc.clone()]}),
        );
        let mut payload = desc;
        payload["network"] = json!("role");
        state.trace.emit(EventKind::Commit, Some(token), payload);
    }
    state.roles = new;

    // Primitive role instances show the role from the earliest clause.
    let mut by_filler: Vec<(InstanceId, Symbol)> = Vec::new();
    for a in &state.roles {
        if !by_filler.iter().any(|(f, _)| *f == a.filler) {
            by_filler.push((a.filler, a.role.clone()));
        }
    }
    for (filler, role) in by_filler {
        if let Some(r) = state.link_of(filler).and_then(|l| l.role) {
            state.set_base(r, role);
        }
    }

    // Event instances hang off the event root once their frame saturates.
    let Some(root_concept) = kb.event_root().map(|c| c.name.clone()) else {
        return;
    };
    let verbs: Vec<InstanceId> = state
        .cells
        .iter()
        .flat_map(|c| c.candidates.iter().copied())
        .filter(|&v| frame_entry(state, kb, v).is_some())
        .collect();
    for v in verbs {
        let Some(meaning) = state.link_of(v).map(|l| l.meaning) else {
            continue;
        };
        let chosen = state.node(v).lexical.as_ref().is_some_and(|o| state.cells[o.token].chosen == Some(v));
        let should_bind = chosen && state.parent(v).is_some() && saturated(state, kb, &computed, v);
        let bound = state.parent_binding(meaning).map(|b| b.id);
        match (should_bind, bound) {
            (true, None) => {
                let concept = state.node(meaning).base.clone();
                let Some(rule) = kb
                    .attachment_rules(&concept)
                    .ok()
                    .and_then(|rs| rs.into_iter().find(|r| r.slot == EVENT_SLOT).map(|r| r.id))
                else {
                    continue;
                };
                let parent = match state.event_root {
                    Some(root) => ParentRef::Existing(root),
                    None => ParentRef::Fresh(root_concept.clone()),
                };
                let desc = json!({"origin": meaning.to_string(), "origin_base": concept, "rule": kb.rule(rule).label()});
                state.trace.emit(
                    EventKind::Feasible,
                    Some(token),
                    json!({"network": "semantic", "candidates": [desc.clone()]}),
                );
                let mut payload = desc;
                payload["network"] = json!("semantic");
                state.trace.emit(EventKind::Commit, Some(token), payload);
                if let Ok(b) = state.apply_binding(kb, &BindingRequest { child: meaning, parent, rule }) {
                    state.event_root = Some(state.binding(b).parent);
                }
            }
            (false, Some(b)) => {
                let _ = state.detach(b);
                if let Some(root) = state.event_root {
                    // The root has no lexical origin; keep it even when emptied.
                    state.set_status(root, InstanceStatus::Active);
                }
            }
            _ => {}
        }
    }
}

// ---------------------------------------------------------------------------
// Structure checks

/// One tree spanning `[0, upto)` whose leaves are the chosen readings in order.
pub fn coherent(state: &ParseState, upto: usize) -> bool {
    let tops = state.tops(upto);
    let [top] = tops.as_slice() else {
        return upto == 0 && tops.is_empty();
    };
    let span = state.node(*top).span;
    if span.start != 0 || span.end != upto {
        return false;
    }
    let leaves = state.leaves(*top);
    let chosen: Vec<Option<InstanceId>> = state.cells[..upto].iter().map(|c| c.chosen).collect();
    if leaves.iter().map(|&l| Some(l)).collect::<Vec<_>>() != chosen {
        return false;
    }
    contiguous(state, *top)
}

fn contiguous(state: &ParseState, id: InstanceId) -> bool {
    let kids = state.children(id);
    kids.windows(2)
        .all(|w| state.node(w[0].child).span.end == state.node(w[1].child).span.start)
        && kids.iter().all(|b| contiguous(state, b.child))
}

/// A finished parse: one root-category tree over all tokens, nothing still
/// expected, and every event's required roles filled consistently.
pub fn is_complete(state: &ParseState, kb: &KnowledgeBase) -> bool {
    let n = state.tokens.len();
    if !coherent(state, n) {
        return false;
    }
    let top = state.tops(n)[0];
    if !kb.is_root_category(&state.node(top).base) || subtree_has_open(state, top) {
        return false;
    }
    let roles = compute_roles(state, kb);
    let verbs_ok = state
        .cells
        .iter()
        .filter_map(|c| c.chosen)
        .all(|v| saturated(state, kb, &roles, v));
    verbs_ok && !restriction_verdict(state, kb).hard_violation
}

// ---------------------------------------------------------------------------
// Driver

/// One sentence in progress. Feed tokens one at a time or call [`Session::run`].
pub struct Session<'kb> {
    pub kb: &'kb KnowledgeBase,
    pub state: ParseState,
    pub store: RetentionStore,
    pub context: ContextModel,
    pub config: ParseConfig,
    failure: Option<Failure>,
}

impl<'kb> Session<'kb> {
    pub fn new(kb: &'kb KnowledgeBase, tokens: Vec<String>, context: ContextModel, config: ParseConfig) -> Self {
        let mut state = ParseState::new(tokens);
        for w in &context.warnings {
            state.trace.emit(EventKind::Warn, None, json!({"message": w}));
        }
        Session {
            kb,
            state,
            store: RetentionStore::new(config.capacity),
            context,
            config,
            failure: None,
        }
    }

    pub fn failure(&self) -> Option<Failure> {
        self.failure
    }

    pub fn done(&self) -> bool {
        self.failure.is_some() || self.state.cursor >= self.state.tokens.len()
    }

    /// Processes the next token.
    pub fn step(&mut self) -> Result<(), Failure> {
        if let Some(f) = self.failure {
            return Err(f);
        }
        let result = parse_word(&mut self.state, self.kb, self.config.policy, &mut self.store, &self.context);
        if let Err(f) = result {
            self.fail(f);
        }
        result
    }

    fn fail(&mut self, f: Failure) {
        self.failure = Some(f);
        self.state.trace.emit(
            EventKind::Fail,
            f.token,
            json!({"cause": f.cause.to_string(), "token": f.token}),
        );
    }

    pub fn run(mut self) -> ParseResult {
        if self.state.tokens.is_empty() {
            self.fail(Failure {
                cause: FailCause::EmptyInput,
                token: None,
            });
        }
        while !self.done() {
            let _ = self.step();
        }
        self.finish()
    }

    /// Checks completeness at end of input (recovering if needed) and builds the result.
    pub fn finish(mut self) -> ParseResult {
        if self.failure.is_none() {
            if let Err(f) = finish_input(&mut self.state, self.kb, self.config.policy, &mut self.store) {
                self.fail(f);
            } else {
                let n = self.state.tokens.len();
                self.state.trace.emit(
                    EventKind::Complete,
                    None,
                    json!({"tokens": n, "recoveries": self.state.counters.recoveries}),
                );
            }
        }
        ParseResult::build(self.kb, self.state, self.failure)
    }
}

/// One iteration of the loop for the token under the cursor.
pub fn parse_word(
    state: &mut ParseState,
    kb: &KnowledgeBase,
    policy: PreferencePolicy,
    store: &mut RetentionStore,
    context: &ContextModel,
) -> Result<(), Failure> {
    let pos = state.cursor;
    let word = state.tokens[pos].clone();
    state.trace.emit(EventKind::Token, Some(pos), json!({"index": pos, "word": word}));

    let entries = kb.lexical_access(&word);
    state.counters.lex_accesses[pos] += 1;
    state.trace.emit(EventKind::LexAccess, Some(pos), json!({"word": word, "entries": entries.len()}));
    if entries.is_empty() {
        return Err(Failure {
            cause: FailCause::UnknownWord,
            token: Some(pos),
        });
    }

    let mut groups: Vec<Vec<(usize, &LexEntry)>> = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        match groups.iter_mut().find(|g| g[0].1.category == e.category && g[0].1.features == e.features) {
            Some(g) => g.push((i, e)),
            None => groups.push(vec![(i, e)]),
        }
    }
    for g in &groups {
        state.instantiate(g, pos).expect("cursor matches token");
    }
    apply_context(state, context, pos);

    let mut candidates = token_candidates(state, kb, pos);
    emit_feasible(state, kb, &candidates, pos);
    if candidates.iter().all(|c| c.hard_violation) {
        state.trace.emit(EventKind::DeadEnd, Some(pos), json!({"word": word, "store": store.len()}));
        candidates = recovery::recover(state, kb, store, recovery::Trigger::Token(pos))?;
        emit_feasible(state, kb, &candidates, pos);
    }
    select_and_commit(state, kb, &candidates, policy, store)?;
    percolate(state, kb, pos + 1);
    sync_semantics(state, kb);
    state.cursor = pos + 1;
    Ok(())
}

fn emit_feasible(state: &mut ParseState, kb: &KnowledgeBase, candidates: &[CandidateBinding], pos: usize) {
    let listed: Vec<Value> = candidates.iter().map(|c| describe(state, kb, c)).collect();
    state.trace.emit(
        EventKind::Feasible,
        Some(pos),
        json!({"network": "syntactic", "candidates": listed}),
    );
}

fn apply_context(state: &mut ParseState, context: &ContextModel, pos: usize) {
    let Some(set) = state.meaning_sets.get(&pos).cloned() else {
        return;
    };
    if set.candidates.len() < 2 {
        return;
    }
    let outcome = context::bias(context, &set);
    let Some(selected) = outcome.selected else {
        return;
    };
    let listed: Vec<Value> = outcome
        .ordered
        .iter()
        .map(|c| json!({"concept": c, "activation": context.level(c)}))
        .collect();
    state.trace.emit(
        EventKind::Feasible,
        Some(pos),
        json!({"network": "semantic", "phase": "context", "candidates": listed}),
    );
    let mut suppressed = Vec::new();
    for c in outcome.ordered.iter().skip(1) {
        if state.suppress(pos, c, SuppressionCause::Context) {
            suppressed.push(c.clone());
        }
    }
    state.meaning_sets.get_mut(&pos).expect("set exists").selected = Some(selected.clone());
    state.trace.emit(
        EventKind::Commit,
        Some(pos),
        json!({"network": "semantic", "phase": "context", "selected": selected, "suppressed": suppressed}),
    );
}

/// End-of-input check; an incomplete structure is a dead end like any other.
pub fn finish_input(state: &mut ParseState, kb: &KnowledgeBase, _policy: PreferencePolicy, store: &mut RetentionStore) -> Result<(), Failure> {
    if is_complete(state, kb) {
        return Ok(());
    }
    state.trace.emit(EventKind::DeadEnd, None, json!({"at": "end-of-input", "store": store.len()}));
    recovery::recover(state, kb, store, recovery::Trigger::EndOfInput).map(|_| ())
}

/// Parses a whole sentence. Failures are reported inside the result.
pub fn parse_sentence(kb: &KnowledgeBase, tokens: &[String], context: &ContextModel, config: ParseConfig) -> ParseResult {
    Session::new(kb, tokens.to_vec(), context.clone(), config).run()
}
