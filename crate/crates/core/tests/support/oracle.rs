//! Exhaustive reference parser.
//!
//! Enumerates every sequence of attachment decisions the incremental parser
//! could have made, in preference order, and returns the first complete one.
//! Shares only the knowledge base with the engine; trees, expectations, role
//! resolution and meaning bookkeeping are separate code.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use tandem::knowledge::{AttachmentRule, KnowledgeBase, Symbol};
use tandem::{ContextModel, PreferencePolicy};

const CHAIN_LIMIT: usize = 4;

#[derive(Clone, Debug)]
struct Node {
    cat: String,
    feats: BTreeMap<String, String>,
    start: usize,
    end: usize,
    token: Option<usize>,
    reading: usize,
    parent: Option<usize>,
    slot: Option<String>,
    children: Vec<usize>,
    open: Vec<String>,
    done: Vec<String>,
}

#[derive(Clone, Debug)]
struct Reading {
    cat: String,
    feats: BTreeMap<String, String>,
    frame: Option<Vec<FrameRole>>,
    event: Option<String>,
    content: bool,
    meanings: Vec<String>,
}

#[derive(Clone, Debug)]
struct FrameRole {
    role: String,
    restriction: String,
    slot: String,
    required: bool,
}

#[derive(Clone, Debug)]
struct World {
    nodes: Vec<Node>,
    /// Node of the chosen reading per token read so far.
    leaf: Vec<usize>,
    active: Vec<Vec<String>>,
    selected: Vec<Option<String>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Goal {
    Old(usize),
    New,
}

#[derive(Clone, Debug)]
struct Step {
    rule: usize,
    goal: Goal,
}

type Key = (bool, u8, u8, Reverse<(usize, usize)>, usize, Vec<usize>);

#[derive(Clone, Debug)]
struct Option_ {
    origin: usize,
    steps: Vec<Step>,
    key: Key,
    hard: bool,
    pruned: Vec<(usize, String)>,
}

/// What the oracle reports for a complete parse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleParse {
    pub shape: String,
    /// (role, event, filler token)
    pub roles: BTreeSet<(String, String, usize)>,
    pub meanings: BTreeMap<usize, Vec<String>>,
}

pub struct Oracle<'kb> {
    kb: &'kb KnowledgeBase,
    tokens: Vec<String>,
    readings: Vec<Vec<Reading>>,
    context: ContextModel,
    policy: PreferencePolicy,
    root: String,
}

fn s(x: &Symbol) -> String {
    x.as_str().to_string()
}

impl<'kb> Oracle<'kb> {
    pub fn new(kb: &'kb KnowledgeBase, tokens: &[String], context: &ContextModel, policy: PreferencePolicy) -> Self {
        let readings = tokens
            .iter()
            .map(|w| {
                let mut out: Vec<Reading> = Vec::new();
                for e in kb.lexical_access(w) {
                    let cat = s(&e.category);
                    let feats: BTreeMap<String, String> = e.features.iter().map(|(k, v)| (s(k), s(v))).collect();
                    let idx = match out.iter().position(|r| r.cat == cat && r.feats == feats) {
                        Some(i) => i,
                        None => {
                            out.push(Reading {
                                content: ["NOUN", "VERB", "ADJ"].contains(&cat.as_str()),
                                cat,
                                feats,
                                frame: None,
                                event: None,
                                meanings: vec![],
                            });
                            out.len() - 1
                        }
                    };
                    let r = &mut out[idx];
                    if let Some(m) = &e.meaning {
                        r.meanings.push(s(m));
                    }
                    if r.frame.is_none() {
                        if let Some(f) = kb.frame_of(e) {
                            r.event = Some(s(&f.event));
                            r.frame = Some(
                                f.roles
                                    .iter()
                                    .map(|x| FrameRole {
                                        role: s(&x.role),
                                        restriction: s(&x.restriction),
                                        slot: s(&x.maps_slot),
                                        required: x.required,
                                    })
                                    .collect(),
                            );
                        }
                    }
                }
                out
            })
            .collect();
        Oracle {
            kb,
            tokens: tokens.to_vec(),
            readings,
            context: context.clone(),
            policy,
            root: kb.root_category().map(|c| s(&c.name)).unwrap_or_default(),
        }
    }

    fn rule(&self, id: usize) -> &AttachmentRule {
        self.kb.rule(tandem::knowledge::RuleId(id))
    }

    fn rules_for(&self, cat: &str, feats: &BTreeMap<String, String>) -> Vec<usize> {
        self.kb
            .attachment_rules(&Symbol::new(cat))
            .map(|rs| {
                rs.into_iter()
                    .filter(|r| {
                        r.conditions
                            .iter()
                            .all(|c| feats.get(c.feature.as_str()) == Some(&s(&c.required_value)))
                    })
                    .map(|r| r.id.0)
                    .collect()
            })
            .unwrap_or_default()
    }

    // -- world ------------------------------------------------------------

    fn depth(w: &World, mut n: usize) -> usize {
        let mut d = 0;
        while let Some(p) = w.nodes[n].parent {
            d += 1;
            n = p;
        }
        d
    }

    fn child_in(w: &World, n: usize, slot: &str) -> Option<usize> {
        w.nodes[n].children.iter().copied().find(|&c| w.nodes[c].slot.as_deref() == Some(slot))
    }

    fn fix_spans(w: &mut World, mut n: usize) {
        loop {
            let kids = w.nodes[n].children.clone();
            if !kids.is_empty() {
                w.nodes[n].start = kids.iter().map(|&c| w.nodes[c].start).min().unwrap();
                w.nodes[n].end = kids.iter().map(|&c| w.nodes[c].end).max().unwrap();
            }
            match w.nodes[n].parent {
                Some(p) => n = p,
                None => break,
            }
        }
    }

    fn attach(&self, w: &mut World, child: usize, step: &Step) -> usize {
        let rule = self.rule(step.rule);
        let parent = match step.goal {
            Goal::Old(t) => t,
            Goal::New => {
                w.nodes.push(Node {
                    cat: s(&rule.parent),
                    feats: BTreeMap::new(),
                    start: w.nodes[child].start,
                    end: w.nodes[child].end,
                    token: None,
                    reading: 0,
                    parent: None,
                    slot: None,
                    children: vec![],
                    open: vec![],
                    done: vec![],
                });
                w.nodes.len() - 1
            }
        };
        w.nodes[child].parent = Some(parent);
        w.nodes[child].slot = Some(s(&rule.slot));
        w.nodes[parent].children.push(child);
        if rule.slot == "head" {
            w.nodes[parent].feats = w.nodes[child].feats.clone();
        }
        let ccat = w.nodes[child].cat.clone();
        if rule.satisfies_required {
            let p = &mut w.nodes[parent];
            let i = p.open.iter().position(|e| *e == ccat).expect("open expectation");
            p.open.remove(i);
            p.done.push(ccat);
        }
        for e in &rule.expectations {
            let e = s(e);
            let p = &mut w.nodes[parent];
            if !p.open.contains(&e) && !p.done.contains(&e) {
                p.open.push(e);
            }
        }
        Self::fix_spans(w, parent);
        parent
    }

    fn apply(&self, w: &mut World, origin: usize, steps: &[Step]) {
        let mut child = origin;
        for st in steps {
            child = self.attach(w, child, st);
        }
    }

    /// A new parent needs its head slot filled now or a pending expectation.
    fn opens(rule: &AttachmentRule) -> bool {
        !rule.satisfies_required && (rule.slot == "head" || !rule.expectations.is_empty())
    }

    fn frontier(w: &World, pos: usize) -> Vec<usize> {
        (0..w.nodes.len())
            .filter(|&i| w.nodes[i].end == pos && w.nodes[i].start < pos)
            .filter(|&i| w.nodes[i].token.is_none() || w.leaf.contains(&i))
            .collect()
    }

    fn chains(&self, w: &World, cat: &str, feats: &BTreeMap<String, String>, pos: usize, prefix: &mut Vec<Step>, out: &mut Vec<Vec<Step>>) {
        for rid in self.rules_for(cat, feats) {
            let rule = self.rule(rid);
            for t in Self::frontier(w, pos) {
                let node = &w.nodes[t];
                if node.cat != rule.parent.as_str() || Self::child_in(w, t, rule.slot.as_str()).is_some() {
                    continue;
                }
                if rule.satisfies_required && !node.open.iter().any(|e| e == cat) {
                    continue;
                }
                let mut c = prefix.clone();
                c.push(Step { rule: rid, goal: Goal::Old(t) });
                out.push(c);
            }
            if !Self::opens(rule) {
                continue;
            }
            prefix.push(Step { rule: rid, goal: Goal::New });
            if pos == 0 && w.leaf.is_empty() {
                out.push(prefix.clone());
            } else if prefix.len() < CHAIN_LIMIT {
                let inherited = if rule.slot == "head" { feats.clone() } else { BTreeMap::new() };
                self.chains(w, rule.parent.as_str(), &inherited, pos, prefix, out);
            }
            prefix.pop();
        }
    }

    // -- semantics --------------------------------------------------------

    fn leaf_of(w: &World, mut n: usize) -> Option<usize> {
        for _ in 0..64 {
            if w.nodes[n].token.is_some() {
                return Some(n);
            }
            n = Self::child_in(w, n, "object").or_else(|| Self::child_in(w, n, "head"))?;
        }
        None
    }

    fn filler(w: &World, verb: usize, slot: &str) -> Option<usize> {
        let mut cur = verb;
        loop {
            let p = w.nodes[cur].parent?;
            if let Some(c) = Self::child_in(w, p, slot) {
                if c != cur {
                    return Self::leaf_of(w, c);
                }
            }
            match w.nodes[p].cat.as_str() {
                "RELCLAUSE" if slot == "subject" => {
                    if w.nodes[p].slot.as_deref() != Some("relative") {
                        return None;
                    }
                    return Self::leaf_of(w, w.nodes[p].parent?);
                }
                "S" | "RELCLAUSE" => return None,
                _ => cur = p,
            }
        }
    }

    /// (verb token, role, event, filler token, restriction, required)
    fn roles(&self, w: &World) -> Vec<(usize, String, String, usize, String, bool)> {
        let mut out = vec![];
        for (t, &leaf) in w.leaf.iter().enumerate() {
            let r = &self.readings[t][w.nodes[leaf].reading];
            let (Some(frame), Some(event)) = (&r.frame, &r.event) else { continue };
            if w.nodes[leaf].parent.is_none() {
                continue;
            }
            for fr in frame {
                let Some(f) = Self::filler(w, leaf, &fr.slot) else { continue };
                let ft = w.nodes[f].token.unwrap();
                let fr_reading = &self.readings[ft][w.nodes[f].reading];
                if !(fr_reading.content && !fr_reading.meanings.is_empty()) {
                    continue;
                }
                out.push((t, fr.role.clone(), event.clone(), ft, fr.restriction.clone(), fr.required));
            }
        }
        out
    }

    fn is_a(&self, sub: &str, sup: &str) -> bool {
        self.kb.subsumes(&Symbol::new(sup), &Symbol::new(sub)).unwrap_or(false)
    }

    /// (hard, tier, pruned)
    fn judge(&self, w: &World) -> (bool, u8, Vec<(usize, String)>) {
        let mut hard = false;
        let mut tier = 1;
        let mut pruned: Vec<(usize, String)> = vec![];
        for (_, _, _, ft, restr, required) in self.roles(w) {
            let active = &w.active[ft];
            let ok: Vec<&String> = active.iter().filter(|m| self.is_a(m, &restr)).collect();
            if ok.is_empty() {
                hard |= required;
                continue;
            }
            for m in active {
                if !ok.contains(&m) && !pruned.contains(&(ft, m.clone())) {
                    pruned.push((ft, m.clone()));
                }
            }
            if w.selected[ft].as_ref().is_some_and(|s| ok.contains(&s)) {
                tier = 0;
            }
        }
        (hard, tier, pruned)
    }

    fn prune(w: &mut World, pruned: &[(usize, String)]) {
        for (t, m) in pruned {
            w.active[*t].retain(|x| x != m);
        }
    }

    // -- search -----------------------------------------------------------

    fn read_token(&self, w: &mut World, pos: usize) -> Vec<usize> {
        let mut meanings: Vec<String> = vec![];
        let mut ids = vec![];
        for (i, r) in self.readings[pos].iter().enumerate() {
            w.nodes.push(Node {
                cat: r.cat.clone(),
                feats: r.feats.clone(),
                start: pos,
                end: pos + 1,
                token: Some(pos),
                reading: i,
                parent: None,
                slot: None,
                children: vec![],
                open: vec![],
                done: vec![],
            });
            ids.push(w.nodes.len() - 1);
            if r.content {
                for m in &r.meanings {
                    if !meanings.contains(m) {
                        meanings.push(m.clone());
                    }
                }
            }
        }
        let mut selected = None;
        if meanings.len() >= 2 && !self.context.activation.is_empty() {
            let level = |m: &String| self.context.activation.get(&Symbol::new(m.as_str())).copied().unwrap_or(0);
            let mut order = meanings.clone();
            order.sort_by_key(|m| Reverse(level(m)));
            let top = level(&order[0]);
            if top >= self.context.threshold && top > level(&order[1]) {
                selected = Some(order[0].clone());
                meanings = vec![order[0].clone()];
            }
        }
        w.active.push(meanings);
        w.selected.push(selected);
        ids
    }

    fn options(&self, w: &World, ids: &[usize], pos: usize) -> Vec<Option_> {
        let mut out = vec![];
        for (variant, &id) in ids.iter().enumerate() {
            let mut chains = vec![];
            let n = &w.nodes[id];
            self.chains(w, &n.cat.clone(), &n.feats.clone(), pos, &mut vec![], &mut chains);
            for steps in chains {
                let mut trial = w.clone();
                trial.leaf.push(id);
                self.apply(&mut trial, id, &steps);
                let (hard, sem, pruned) = self.judge(&trial);
                let last = steps.last().unwrap();
                let (syn, rec) = match last.goal {
                    Goal::Old(t) => (
                        if self.rule(last.rule).satisfies_required { 0 } else { 1 },
                        (w.nodes[t].start, Self::depth(w, t)),
                    ),
                    Goal::New => (1, (0, 0)),
                };
                let (a, b) = match self.policy {
                    PreferencePolicy::Lexicographic => (sem, syn),
                    PreferencePolicy::SyntaxFirst => (syn, sem),
                };
                let rules = steps.iter().map(|s| s.rule).collect();
                out.push(Option_ {
                    origin: id,
                    key: (hard, a, b, Reverse(rec), variant, rules),
                    steps,
                    hard,
                    pruned,
                });
            }
        }
        out.sort_by(|x, y| x.key.cmp(&y.key));
        out
    }

    fn has_open(w: &World, n: usize) -> bool {
        !w.nodes[n].open.is_empty() || w.nodes[n].children.iter().any(|&c| Self::has_open(w, c))
    }

    fn tops(w: &World) -> Vec<usize> {
        let live: BTreeSet<usize> = w.leaf.iter().copied().collect();
        (0..w.nodes.len())
            .filter(|&i| w.nodes[i].parent.is_none() && (w.nodes[i].token.is_none() || live.contains(&i)))
            .collect()
    }

    fn lift(&self, w: &mut World) {
        loop {
            let tops = Self::tops(w);
            if tops.len() != 1 {
                return;
            }
            let top = tops[0];
            if w.nodes[top].cat == self.root || Self::has_open(w, top) {
                return;
            }
            let mut ok = vec![];
            for rid in self.rules_for(&w.nodes[top].cat.clone(), &w.nodes[top].feats.clone()) {
                if !Self::opens(self.rule(rid)) {
                    continue;
                }
                let step = Step { rule: rid, goal: Goal::New };
                let mut trial = w.clone();
                self.apply(&mut trial, top, std::slice::from_ref(&step));
                let (hard, _, pruned) = self.judge(&trial);
                if !hard {
                    ok.push((trial, pruned));
                }
            }
            if ok.len() != 1 {
                return;
            }
            let (next, pruned) = ok.pop().unwrap();
            *w = next;
            Self::prune(w, &pruned);
        }
    }

    fn complete(&self, w: &World) -> bool {
        let n = self.tokens.len();
        let tops = Self::tops(w);
        if tops.len() != 1 {
            return false;
        }
        let top = tops[0];
        let node = &w.nodes[top];
        if node.cat != self.root || node.start != 0 || node.end != n || Self::has_open(w, top) {
            return false;
        }
        let roles = self.roles(w);
        for (t, &leaf) in w.leaf.iter().enumerate() {
            let r = &self.readings[t][w.nodes[leaf].reading];
            if let Some(frame) = &r.frame {
                for fr in frame.iter().filter(|f| f.required) {
                    if !roles.iter().any(|x| x.0 == t && x.1 == fr.role) {
                        return false;
                    }
                }
            }
        }
        !self.judge(w).0
    }

    fn search(&self, w: World, pos: usize, greedy: bool) -> Option<World> {
        if pos == self.tokens.len() {
            return self.complete(&w).then_some(w);
        }
        let mut w = w;
        let ids = self.read_token(&mut w, pos);
        for opt in self.options(&w, &ids, pos).into_iter().filter(|o| !o.hard) {
            let mut next = w.clone();
            next.leaf.push(opt.origin);
            self.apply(&mut next, opt.origin, &opt.steps);
            Self::prune(&mut next, &opt.pruned);
            self.lift(&mut next);
            if let Some(done) = self.search(next, pos + 1, greedy) {
                return Some(done);
            }
            if greedy {
                return None;
            }
        }
        None
    }

    fn collect(&self, w: World, pos: usize, out: &mut Vec<World>) {
        if pos == self.tokens.len() {
            if self.complete(&w) {
                out.push(w);
            }
            return;
        }
        let mut w = w;
        let ids = self.read_token(&mut w, pos);
        for opt in self.options(&w, &ids, pos).into_iter().filter(|o| !o.hard) {
            let mut next = w.clone();
            next.leaf.push(opt.origin);
            self.apply(&mut next, opt.origin, &opt.steps);
            Self::prune(&mut next, &opt.pruned);
            self.lift(&mut next);
            self.collect(next, pos + 1, out);
        }
    }

    fn empty() -> World {
        World {
            nodes: vec![],
            leaf: vec![],
            active: vec![],
            selected: vec![],
        }
    }

    /// Most preferred complete parse.
    pub fn best(&self) -> Option<OracleParse> {
        self.search(Self::empty(), 0, false).map(|w| self.report(&w))
    }

    /// Every complete parse, most preferred first.
    pub fn all(&self) -> Vec<OracleParse> {
        let mut out = Vec::new();
        self.collect(Self::empty(), 0, &mut out);
        out.iter().map(|w| self.report(w)).collect()
    }

    /// Parse reached by always taking the top candidate, if it completes.
    pub fn greedy(&self) -> Option<OracleParse> {
        self.search(Self::empty(), 0, true).map(|w| self.report(&w))
    }

    fn shape(w: &World, n: usize, out: &mut String) {
        let node = &w.nodes[n];
        if let Some(slot) = &node.slot {
            out.push_str(slot);
            out.push(':');
        }
        out.push_str(&format!("{}[{},{})", node.cat, node.start, node.end));
        if !node.children.is_empty() {
            let mut kids = node.children.clone();
            kids.sort_by_key(|&c| (w.nodes[c].start, c));
            out.push('(');
            for (i, c) in kids.into_iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                Self::shape(w, c, out);
            }
            out.push(')');
        }
    }

    fn report(&self, w: &World) -> OracleParse {
        let mut shape = String::new();
        Self::shape(w, Self::tops(w)[0], &mut shape);
        let roles = self.roles(w).into_iter().map(|(_, role, event, ft, _, _)| (role, event, ft)).collect();
        let meanings = w
            .active
            .iter()
            .enumerate()
            .filter(|(t, _)| self.readings[*t].iter().any(|r| r.content && !r.meanings.is_empty()))
            .map(|(t, m)| (t, m.clone()))
            .collect();
        OracleParse { shape, roles, meanings }
    }
}
