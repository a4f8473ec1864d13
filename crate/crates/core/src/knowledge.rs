//! The two knowledge networks and the lexicon.
//!
//! Syntactic categories carry slot-filler attachment rules read straight from
//! the knowledge file. Semantic concepts carry `isa` links and role frames; their
//! attachment rules (filler concept to event, event to the event root) are
//! derived from the frames once the file has validated, so both networks are
//! queried through the same [`AttachmentRule`] shape.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Categories whose lexical entries must name a meaning.
pub const CONTENT_CATEGORIES: [&str; 3] = ["NOUN", "VERB", "ADJ"];

/// Slot used when an event concept attaches to the event root.
pub const EVENT_SLOT: &str = "event";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symbol(String);

impl Symbol {
    pub fn new(text: impl Into<String>) -> Self {
        Symbol(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn is_well_formed(&self) -> bool {
        !self.0.is_empty() && !self.0.chars().any(char::is_whitespace)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol(s.to_string())
    }
}

impl PartialEq<str> for Symbol {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for Symbol {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Network {
    Syntactic,
    Semantic,
    Role,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureTest {
    pub feature: Symbol,
    pub required_value: Symbol,
}

impl FeatureTest {
    /// An absent feature fails the test.
    pub fn passes(&self, features: &BTreeMap<Symbol, Symbol>) -> bool {
        features.get(&self.feature) == Some(&self.required_value)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttachmentRule {
    pub id: RuleId,
    pub network: Network,
    pub child: Symbol,
    pub parent: Symbol,
    pub slot: Symbol,
    pub conditions: Vec<FeatureTest>,
    pub expectations: Vec<Symbol>,
    pub satisfies_required: bool,
}

impl AttachmentRule {
    pub fn conditions_hold(&self, features: &BTreeMap<Symbol, Symbol>) -> bool {
        self.conditions.iter().all(|t| t.passes(features))
    }

    /// Whether the child may open a new parent through this rule. A parent
    /// opened through a non-head slot needs an expectation, or its head could
    /// never attach.
    pub fn may_project(&self) -> bool {
        !self.satisfies_required && (self.slot == crate::state::HEAD_SLOT || !self.expectations.is_empty())
    }

    /// Short human label, e.g. `VERB->VP.head`.
    pub fn label(&self) -> String {
        format!("{}->{}.{}", self.child, self.parent, self.slot)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Category {
    pub name: Symbol,
    pub is_root: bool,
    pub rules: Vec<RuleId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleSpec {
    pub role: Symbol,
    pub restriction: Symbol,
    pub maps_slot: Symbol,
    pub required: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleFrame {
    pub event: Symbol,
    pub roles: Vec<RoleSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Concept {
    pub name: Symbol,
    pub isa: Vec<Symbol>,
    pub frames: Vec<RoleFrame>,
    pub is_event_root: bool,
    /// Derived semantic attachment rules (filled after validation).
    pub rules: Vec<RuleId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub word: Symbol,
    pub category: Symbol,
    pub features: BTreeMap<Symbol, Symbol>,
    pub meaning: Option<Symbol>,
    pub frame: Option<usize>,
}

impl LexEntry {
    pub fn is_content_word(&self) -> bool {
        CONTENT_CATEGORIES.contains(&self.category.as_str())
    }
}

// ---------------------------------------------------------------------------
// File schema

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbDocument {
    pub features: BTreeMap<String, Vec<String>>,
    pub categories: Vec<CategoryDoc>,
    pub concepts: Vec<ConceptDoc>,
    pub lexicon: Vec<LexiconDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryDoc {
    pub name: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub root: bool,
    #[serde(default)]
    pub rules: Vec<RuleDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDoc {
    pub parent: String,
    pub slot: String,
    #[serde(default)]
    pub conditions: Vec<ConditionDoc>,
    #[serde(default)]
    pub expects: Vec<String>,
    #[serde(default)]
    pub satisfies_required: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionDoc {
    pub feature: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptDoc {
    pub name: String,
    #[serde(default)]
    pub isa: Vec<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub event_root: bool,
    #[serde(default)]
    pub frames: Vec<FrameDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDoc {
    pub roles: Vec<RoleDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleDoc {
    pub role: String,
    pub restriction: String,
    pub maps_slot: String,
    pub required: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconDoc {
    pub word: String,
    pub entries: Vec<EntryDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryDoc {
    pub category: String,
    #[serde(default)]
    pub features: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meaning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<usize>,
}

// ---------------------------------------------------------------------------
// Diagnostics and errors

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    InvalidSymbol,
    DuplicateName,
    DanglingReference,
    IsaCycle,
    NoRoot,
    MultipleRoots,
    NoEventRoot,
    MultipleEventRoots,
    UndeclaredFeature,
    DanglingRestriction,
    MissingMeaning,
    BadFrameIndex,
    DuplicateRole,
    FrameOnNonEvent,
}

impl DiagnosticKind {
    pub fn code(self) -> &'static str {
        match self {
            DiagnosticKind::InvalidSymbol => "invalid-symbol",
            DiagnosticKind::DuplicateName => "duplicate-name",
            DiagnosticKind::DanglingReference => "dangling-reference",
            DiagnosticKind::IsaCycle => "isa-cycle",
            DiagnosticKind::NoRoot => "no-root",
            DiagnosticKind::MultipleRoots => "multiple-roots",
            DiagnosticKind::NoEventRoot => "no-event-root",
            DiagnosticKind::MultipleEventRoots => "multiple-event-roots",
            DiagnosticKind::UndeclaredFeature => "undeclared-feature",
            DiagnosticKind::DanglingRestriction => "dangling-restriction",
            DiagnosticKind::MissingMeaning => "missing-meaning",
            DiagnosticKind::BadFrameIndex => "bad-frame-index",
            DiagnosticKind::DuplicateRole => "duplicate-role",
            DiagnosticKind::FrameOnNonEvent => "frame-on-non-event",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.kind.code(), self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid knowledge base:\n{}", render_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("undeclared symbol `{0}`")]
    Undeclared(Symbol),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn render_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

// ---------------------------------------------------------------------------
// The knowledge base

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeBase {
    features: BTreeMap<Symbol, Vec<Symbol>>,
    categories: Vec<Category>,
    concepts: Vec<Concept>,
    rules: Vec<AttachmentRule>,
    lexicon: Vec<(Symbol, Vec<LexEntry>)>,
    category_index: HashMap<Symbol, usize>,
    concept_index: HashMap<Symbol, usize>,
    word_index: HashMap<Symbol, usize>,
}

/// Parses, validates and freezes a knowledge file.
pub fn load_knowledge_base(document: &str) -> Result<KnowledgeBase, KbError> {
    let doc = parse_document(document)?;
    let mut kb = KnowledgeBase::from_document(&doc);
    let diags = kb.validate();
    if !diags.is_empty() {
        return Err(KbError::Invalid(diags));
    }
    kb.derive_semantic_rules();
    Ok(kb)
}

pub fn load_knowledge_base_file(path: impl AsRef<Path>) -> Result<KnowledgeBase, KbError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| KbError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_knowledge_base(&text)
}

/// Schema-level parse only: unknown keys and type errors name the offending path.
pub fn parse_document(document: &str) -> Result<KbDocument, KbError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        KbError::Schema {
            path: if path.is_empty() { ".".to_string() } else { path },
            message: err.into_inner().to_string(),
        }
    })
}

impl KnowledgeBase {
    /// Structural build with no checks; names may dangle until [`validate`](Self::validate).
    pub fn from_document(doc: &KbDocument) -> Self {
        let mut kb = KnowledgeBase {
            features: doc
                .features
                .iter()
                .map(|(f, vs)| (Symbol::new(f.as_str()), vs.iter().map(|v| Symbol::new(v.as_str())).collect()))
                .collect(),
            categories: Vec::new(),
            concepts: Vec::new(),
            rules: Vec::new(),
            lexicon: Vec::new(),
            category_index: HashMap::new(),
            concept_index: HashMap::new(),
            word_index: HashMap::new(),
        };
        for cat in &doc.categories {
            let name = Symbol::new(cat.name.as_str());
            let mut ids = Vec::new();
            for r in &cat.rules {
                let id = RuleId(kb.rules.len());
                kb.rules.push(AttachmentRule {
                    id,
                    network: Network::Syntactic,
                    child: name.clone(),
                    parent: Symbol::new(r.parent.as_str()),
                    slot: Symbol::new(r.slot.as_str()),
                    conditions: r
                        .conditions
                        .iter()
                        .map(|c| FeatureTest {
                            feature: Symbol::new(c.feature.as_str()),
                            required_value: Symbol::new(c.value.as_str()),
                        })
                        .collect(),
                    expectations: r.expects.iter().map(|e| Symbol::new(e.as_str())).collect(),
                    satisfies_required: r.satisfies_required,
                });
                ids.push(id);
            }
            kb.category_index.entry(name.clone()).or_insert(kb.categories.len());
            kb.categories.push(Category {
                name,
                is_root: cat.root,
                rules: ids,
            });
        }
        for c in &doc.concepts {
            let name = Symbol::new(c.name.as_str());
            kb.concept_index.entry(name.clone()).or_insert(kb.concepts.len());
            kb.concepts.push(Concept {
                frames: c
                    .frames
                    .iter()
                    .map(|f| RoleFrame {
                        event: name.clone(),
                        roles: f
                            .roles
                            .iter()
                            .map(|r| RoleSpec {
                                role: Symbol::new(r.role.as_str()),
                                restriction: Symbol::new(r.restriction.as_str()),
                                maps_slot: Symbol::new(r.maps_slot.as_str()),
                                required: r.required,
                            })
                            .collect(),
                    })
                    .collect(),
                name,
                isa: c.isa.iter().map(|p| Symbol::new(p.as_str())).collect(),
                is_event_root: c.event_root,
                rules: Vec::new(),
            });
        }
        for item in &doc.lexicon {
            let word = Symbol::new(item.word.as_str());
            let entries = item
                .entries
                .iter()
                .map(|e| LexEntry {
                    word: word.clone(),
                    category: Symbol::new(e.category.as_str()),
                    features: e
                        .features
                        .iter()
                        .map(|(k, v)| (Symbol::new(k.as_str()), Symbol::new(v.as_str())))
                        .collect(),
                    meaning: e.meaning.as_deref().map(Symbol::new),
                    frame: e.frame_index,
                })
                .collect();
            kb.word_index.entry(word.clone()).or_insert(kb.lexicon.len());
            kb.lexicon.push((word, entries));
        }
        kb
    }

    pub fn to_document(&self) -> KbDocument {
        KbDocument {
            features: self
                .features
                .iter()
                .map(|(f, vs)| (f.to_string(), vs.iter().map(|v| v.to_string()).collect()))
                .collect(),
            categories: self
                .categories
                .iter()
                .map(|c| CategoryDoc {
                    name: c.name.to_string(),
                    root: c.is_root,
                    rules: c
                        .rules
                        .iter()
                        .map(|id| {
                            let r = &self.rules[id.0];
                            RuleDoc {
                                parent: r.parent.to_string(),
                                slot: r.slot.to_string(),
                                conditions: r
                                    .conditions
                                    .iter()
                                    .map(|t| ConditionDoc {
                                        feature: t.feature.to_string(),
                                        value: t.required_value.to_string(),
                                    })
                                    .collect(),
                                expects: r.expectations.iter().map(|e| e.to_string()).collect(),
                                satisfies_required: r.satisfies_required,
                            }
                        })
                        .collect(),
                })
                .collect(),
            concepts: self
                .concepts
                .iter()
                .map(|c| ConceptDoc {
                    name: c.name.to_string(),
                    isa: c.isa.iter().map(|p| p.to_string()).collect(),
                    event_root: c.is_event_root,
                    frames: c
                        .frames
                        .iter()
                        .map(|f| FrameDoc {
                            roles: f
                                .roles
                                .iter()
                                .map(|r| RoleDoc {
                                    role: r.role.to_string(),
                                    restriction: r.restriction.to_string(),
                                    maps_slot: r.maps_slot.to_string(),
                                    required: r.required,
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
            lexicon: self
                .lexicon
                .iter()
                .map(|(w, es)| LexiconDoc {
                    word: w.to_string(),
                    entries: es
                        .iter()
                        .map(|e| EntryDoc {
                            category: e.category.to_string(),
                            features: e.features.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
                            meaning: e.meaning.as_ref().map(|m| m.to_string()),
                            frame_index: e.frame,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn dump(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.to_document()).expect("document serializes");
        text.push('\n');
        text
    }

    // -- queries ----------------------------------------------------------

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn category(&self, name: &Symbol) -> Option<&Category> {
        self.category_index.get(name).map(|&i| &self.categories[i])
    }

    pub fn concept(&self, name: &Symbol) -> Option<&Concept> {
        self.concept_index.get(name).map(|&i| &self.concepts[i])
    }

    pub fn rule(&self, id: RuleId) -> &AttachmentRule {
        &self.rules[id.0]
    }

    pub fn root_category(&self) -> Option<&Category> {
        self.categories.iter().find(|c| c.is_root)
    }

    pub fn event_root(&self) -> Option<&Concept> {
        self.concepts.iter().find(|c| c.is_event_root)
    }

    pub fn is_root_category(&self, name: &Symbol) -> bool {
        self.category(name).is_some_and(|c| c.is_root)
    }

    pub fn network_of(&self, name: &Symbol) -> Option<Network> {
        if self.category_index.contains_key(name) {
            Some(Network::Syntactic)
        } else if self.concept_index.contains_key(name) {
            Some(Network::Semantic)
        } else {
            None
        }
    }

    pub fn feature_values(&self, feature: &Symbol) -> Option<&[Symbol]> {
        self.features.get(feature).map(Vec::as_slice)
    }

    /// Every entry for `word` in file order; empty for unknown words.
    pub fn lexical_access(&self, word: &str) -> &[LexEntry] {
        self.word_index
            .get(&Symbol::new(word))
            .map(|&i| self.lexicon[i].1.as_slice())
            .unwrap_or(&[])
    }

    pub fn words(&self) -> impl Iterator<Item = &Symbol> {
        self.lexicon.iter().map(|(w, _)| w)
    }

    /// Reflexive, transitive `isa` reachability.
    pub fn subsumes(&self, ancestor: &Symbol, descendant: &Symbol) -> Result<bool, KbError> {
        for name in [ancestor, descendant] {
            if self.concept(name).is_none() {
                return Err(KbError::Undeclared(name.clone()));
            }
        }
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([descendant]);
        while let Some(cur) = queue.pop_front() {
            if cur == ancestor {
                return Ok(true);
            }
            if !seen.insert(cur) {
                continue;
            }
            if let Some(c) = self.concept(cur) {
                queue.extend(c.isa.iter());
            }
        }
        Ok(false)
    }

    pub fn attachment_rules(&self, node: &Symbol) -> Result<Vec<&AttachmentRule>, KbError> {
        let ids = if let Some(c) = self.category(node) {
            &c.rules
        } else if let Some(c) = self.concept(node) {
            &c.rules
        } else {
            return Err(KbError::Undeclared(node.clone()));
        };
        Ok(ids.iter().map(|id| &self.rules[id.0]).collect())
    }

    /// Frame selected by a lexical entry, if it has one.
    pub fn frame_of(&self, entry: &LexEntry) -> Option<&RoleFrame> {
        let concept = self.concept(entry.meaning.as_ref()?)?;
        concept.frames.get(entry.frame.unwrap_or(0))
    }

    // -- validation -------------------------------------------------------

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut push = |kind, location: String, message: String| {
            out.push(Diagnostic {
                kind,
                location,
                message,
            })
        };

        for (f, values) in &self.features {
            if !f.is_well_formed() {
                push(DiagnosticKind::InvalidSymbol, format!("features.{f}"), format!("bad feature name `{f}`"));
            }
            for v in values {
                if !v.is_well_formed() {
                    push(DiagnosticKind::InvalidSymbol, format!("features.{f}"), format!("bad value `{v}`"));
                }
            }
        }

        let mut seen = HashSet::new();
        for (i, cat) in self.categories.iter().enumerate() {
            let loc = format!("categories[{i}]");
            if !cat.name.is_well_formed() {
                push(DiagnosticKind::InvalidSymbol, loc.clone(), format!("bad category name `{}`", cat.name));
            }
            if !seen.insert(&cat.name) || self.concept_index.contains_key(&cat.name) {
                push(DiagnosticKind::DuplicateName, loc.clone(), format!("`{}` declared twice", cat.name));
            }
            for (j, id) in cat.rules.iter().enumerate() {
                let rule = &self.rules[id.0];
                let rloc = format!("{loc}.rules[{j}]");
                if self.category(&rule.parent).is_none() {
                    let kind = DiagnosticKind::DanglingReference;
                    let msg = if self.concept(&rule.parent).is_some() {
                        format!("parent `{}` is a concept; rules stay inside one network", rule.parent)
                    } else {
                        format!("undeclared parent `{}`", rule.parent)
                    };
                    push(kind, format!("{rloc}.parent"), msg);
                }
                if !rule.slot.is_well_formed() {
                    push(DiagnosticKind::InvalidSymbol, format!("{rloc}.slot"), format!("bad slot `{}`", rule.slot));
                }
                for e in &rule.expectations {
                    if self.category(e).is_none() {
                        push(
                            DiagnosticKind::DanglingReference,
                            format!("{rloc}.expects"),
                            format!("undeclared expectation `{e}`"),
                        );
                    }
                }
                for (k, t) in rule.conditions.iter().enumerate() {
                    if !self.feature_declared(&t.feature, &t.required_value) {
                        push(
                            DiagnosticKind::UndeclaredFeature,
                            format!("{rloc}.conditions[{k}]"),
                            format!("undeclared feature {}={}", t.feature, t.required_value),
                        );
                    }
                }
            }
        }
        match self.categories.iter().filter(|c| c.is_root).count() {
            0 => push(DiagnosticKind::NoRoot, "categories".into(), "no syntactic root".into()),
            1 => {}
            n => push(DiagnosticKind::MultipleRoots, "categories".into(), format!("{n} syntactic roots")),
        }

        let mut seen = HashSet::new();
        for (i, c) in self.concepts.iter().enumerate() {
            let loc = format!("concepts[{i}]");
            if !c.name.is_well_formed() {
                push(DiagnosticKind::InvalidSymbol, loc.clone(), format!("bad concept name `{}`", c.name));
            }
            if !seen.insert(&c.name) {
                push(DiagnosticKind::DuplicateName, loc.clone(), format!("`{}` declared twice", c.name));
            }
            for p in &c.isa {
                if self.concept(p).is_none() {
                    push(DiagnosticKind::DanglingReference, format!("{loc}.isa"), format!("undeclared concept `{p}`"));
                }
            }
            if !c.frames.is_empty() && !self.is_event_concept(&c.name) {
                push(
                    DiagnosticKind::FrameOnNonEvent,
                    format!("{loc}.frames"),
                    format!("`{}` has frames but is not an event", c.name),
                );
            }
            for (j, frame) in c.frames.iter().enumerate() {
                let mut roles = HashSet::new();
                for (k, r) in frame.roles.iter().enumerate() {
                    let rloc = format!("{loc}.frames[{j}].roles[{k}]");
                    if !roles.insert(&r.role) {
                        push(DiagnosticKind::DuplicateRole, rloc.clone(), format!("role `{}` repeated", r.role));
                    }
                    if self.concept(&r.restriction).is_none() {
                        push(
                            DiagnosticKind::DanglingRestriction,
                            format!("{rloc}.restriction"),
                            format!("undeclared restriction `{}`", r.restriction),
                        );
                    }
                }
            }
        }
        for cycle in self.isa_cycles() {
            let names: Vec<_> = cycle.iter().map(|s| s.as_str()).collect();
            let at = self.concept_index[&cycle[0]];
            push(
                DiagnosticKind::IsaCycle,
                format!("concepts[{at}].isa"),
                format!("cyclic isa: {}", names.join(" -> ")),
            );
        }
        match self.concepts.iter().filter(|c| c.is_event_root).count() {
            0 => push(DiagnosticKind::NoEventRoot, "concepts".into(), "no event root".into()),
            1 => {}
            n => push(DiagnosticKind::MultipleEventRoots, "concepts".into(), format!("{n} event roots")),
        }

        let mut seen = HashSet::new();
        for (i, (word, entries)) in self.lexicon.iter().enumerate() {
            let loc = format!("lexicon[{i}]");
            if !word.is_well_formed() {
                push(DiagnosticKind::InvalidSymbol, loc.clone(), format!("bad word `{word}`"));
            }
            if !seen.insert(word) {
                push(DiagnosticKind::DuplicateName, loc.clone(), format!("word `{word}` listed twice"));
            }
            for (j, e) in entries.iter().enumerate() {
                let eloc = format!("{loc}.entries[{j}]");
                if self.category(&e.category).is_none() {
                    push(
                        DiagnosticKind::DanglingReference,
                        format!("{eloc}.category"),
                        format!("undeclared category `{}`", e.category),
                    );
                }
                for (f, v) in &e.features {
                    if !self.feature_declared(f, v) {
                        push(
                            DiagnosticKind::UndeclaredFeature,
                            format!("{eloc}.features.{f}"),
                            format!("undeclared feature {f}={v}"),
                        );
                    }
                }
                match &e.meaning {
                    Some(m) => match self.concept(m) {
                        None => push(
                            DiagnosticKind::DanglingReference,
                            format!("{eloc}.meaning"),
                            format!("undeclared concept `{m}`"),
                        ),
                        Some(c) => {
                            if let Some(fi) = e.frame {
                                if fi >= c.frames.len() {
                                    push(
                                        DiagnosticKind::BadFrameIndex,
                                        format!("{eloc}.frame_index"),
                                        format!("`{m}` has {} frames, index {fi}", c.frames.len()),
                                    );
                                }
                            }
                        }
                    },
                    None => {
                        if e.is_content_word() {
                            push(
                                DiagnosticKind::MissingMeaning,
                                format!("{eloc}.meaning"),
                                format!("content word `{word}` ({}) needs a meaning", e.category),
                            );
                        }
                        if e.frame.is_some() {
                            push(
                                DiagnosticKind::BadFrameIndex,
                                format!("{eloc}.frame_index"),
                                "frame index without a meaning".into(),
                            );
                        }
                    }
                }
            }
        }
        out
    }

    fn feature_declared(&self, feature: &Symbol, value: &Symbol) -> bool {
        self.features.get(feature).is_some_and(|vs| vs.contains(value))
    }

    /// Concepts that reach the event root through `isa`, excluding the root itself.
    pub fn is_event_concept(&self, name: &Symbol) -> bool {
        let Some(root) = self.event_root() else {
            return false;
        };
        name != &root.name && self.subsumes(&root.name, name).unwrap_or(false)
    }

    /// Each cycle reported once, rotated so its smallest member comes first.
    fn isa_cycles(&self) -> Vec<Vec<Symbol>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Open,
            Done,
        }
        fn visit(kb: &KnowledgeBase, i: usize, marks: &mut [Mark], path: &mut Vec<usize>, found: &mut BTreeSet<Vec<Symbol>>) {
            marks[i] = Mark::Open;
            path.push(i);
            for p in &kb.concepts[i].isa {
                let Some(&j) = kb.concept_index.get(p) else { continue };
                match marks[j] {
                    Mark::New => visit(kb, j, marks, path, found),
                    Mark::Open => {
                        let start = path.iter().position(|&k| k == j).expect("open node on path");
                        let mut cycle: Vec<Symbol> = path[start..].iter().map(|&k| kb.concepts[k].name.clone()).collect();
                        let min = cycle.iter().enumerate().min_by_key(|(_, s)| *s).map(|(k, _)| k).unwrap_or(0);
                        cycle.rotate_left(min);
                        found.insert(cycle);
                    }
                    Mark::Done => {}
                }
            }
            path.pop();
            marks[i] = Mark::Done;
        }
        let mut marks = vec![Mark::New; self.concepts.len()];
        let mut found = BTreeSet::new();
        for i in 0..self.concepts.len() {
            if marks[i] == Mark::New && self.concept_index.get(&self.concepts[i].name) == Some(&i) {
                visit(self, i, &mut marks, &mut Vec::new(), &mut found);
            }
        }
        found.into_iter().collect()
    }

    /// Semantic attachment rules: every concept a role restriction admits can
    /// fill that role of the event, and every event concept hangs off the event root.
    fn derive_semantic_rules(&mut self) {
        let Some(root) = self.event_root().map(|c| c.name.clone()) else {
            return;
        };
        let mut derived: Vec<(usize, AttachmentRule)> = Vec::new();
        for (ci, c) in self.concepts.iter().enumerate() {
            if self.is_event_concept(&c.name) {
                derived.push((
                    ci,
                    AttachmentRule {
                        id: RuleId(0),
                        network: Network::Semantic,
                        child: c.name.clone(),
                        parent: root.clone(),
                        slot: Symbol::new(EVENT_SLOT),
                        conditions: Vec::new(),
                        expectations: Vec::new(),
                        satisfies_required: false,
                    },
                ));
            }
            for event in &self.concepts {
                for frame in &event.frames {
                    for r in &frame.roles {
                        if self.subsumes(&r.restriction, &c.name).unwrap_or(false) {
                            derived.push((
                                ci,
                                AttachmentRule {
                                    id: RuleId(0),
                                    network: Network::Semantic,
                                    child: c.name.clone(),
                                    parent: event.name.clone(),
                                    slot: r.role.clone(),
                                    conditions: Vec::new(),
                                    expectations: Vec::new(),
                                    satisfies_required: r.required,
                                },
                            ));
                        }
                    }
                }
            }
        }
        for (ci, mut rule) in derived {
            let duplicate = self.concepts[ci].rules.iter().any(|id| {
                let r = &self.rules[id.0];
                r.parent == rule.parent && r.slot == rule.slot
            });
            if duplicate {
                continue;
            }
            rule.id = RuleId(self.rules.len());
            self.concepts[ci].rules.push(rule.id);
            self.rules.push(rule);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KB0: &str = include_str!("../data/kb0.json");

    fn kb0() -> KnowledgeBase {
        load_knowledge_base(KB0).expect("KB0 loads")
    }

    fn kb0_doc() -> KbDocument {
        parse_document(KB0).unwrap()
    }

    fn sym(s: &str) -> Symbol {
        Symbol::new(s)
    }

    fn kinds(doc: &KbDocument) -> Vec<DiagnosticKind> {
        KnowledgeBase::from_document(doc).validate().into_iter().map(|d| d.kind).collect()
    }

    #[test]
    fn kb0_has_the_expected_categories() {
        let kb = kb0();
        let names: BTreeSet<_> = kb.categories().iter().map(|c| c.name.to_string()).collect();
        let want: BTreeSet<_> = ["DET", "NOUN", "NP", "VERB", "VP", "PP", "PREP", "ADJ", "ADV", "AUX", "RELCLAUSE", "S"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(names, want);
        assert_eq!(kb.root_category().unwrap().name, "S");
        assert!(kb.validate().is_empty());
    }

    #[test]
    fn dump_reloads_to_the_same_base() {
        let kb = kb0();
        let again = load_knowledge_base(&kb.dump()).unwrap();
        assert_eq!(kb, again);
        assert_eq!(kb.to_document(), kb0_doc());
    }

    #[test]
    fn lexical_access_lists_every_sense() {
        let kb = kb0();
        let bugs = kb.lexical_access("bugs");
        assert_eq!(bugs.len(), 2);
        assert_eq!(bugs[0].meaning, Some(sym("INSECT")));
        assert_eq!(bugs[1].meaning, Some(sym("MICROPHONE")));
        assert!(bugs.iter().all(|e| e.category == "NOUN"));

        let moved = kb.lexical_access("moved");
        assert_eq!(moved.len(), 2);
        assert_eq!(moved[0].features[&sym("form")], "past");
        assert_eq!(moved[1].features[&sym("form")], "past-participle");
        assert_eq!(kb.frame_of(&moved[0]).unwrap().roles[0].role, "agent");
        assert_eq!(kb.frame_of(&moved[1]).unwrap().roles[0].role, "theme");

        assert!(kb.lexical_access("xylophone").is_empty());
        assert_eq!(kb.lexical_access("bugs"), kb.lexical_access("bugs"));
    }

    #[test]
    fn subsumption_follows_isa() {
        let kb = kb0();
        assert!(kb.subsumes(&sym("ANIMATE"), &sym("INSECT")).unwrap());
        assert!(!kb.subsumes(&sym("ANIMATE"), &sym("MICROPHONE")).unwrap());
        assert!(kb.subsumes(&sym("INSECT"), &sym("INSECT")).unwrap());
        assert!(kb.subsumes(&sym("PHYSOBJ"), &sym("MICROPHONE")).unwrap());
        assert!(matches!(kb.subsumes(&sym("ANIMATE"), &sym("BUGG")), Err(KbError::Undeclared(_))));
    }

    #[test]
    fn attachment_rules_by_node() {
        let kb = kb0();
        let verb = kb.attachment_rules(&sym("VERB")).unwrap();
        assert!(!verb.is_empty());
        assert!(verb.iter().all(|r| r.parent == "VP"));
        let forms: BTreeSet<_> = verb
            .iter()
            .flat_map(|r| r.conditions.iter())
            .filter(|t| t.feature == "form")
            .map(|t| t.required_value.to_string())
            .collect();
        assert_eq!(forms, BTreeSet::from(["past".to_string(), "past-participle".to_string()]));

        let vp = kb.attachment_rules(&sym("VP")).unwrap();
        assert_eq!(vp.len(), 2);
        assert_eq!(vp[0].label(), "VP->S.predicate");
        assert!(vp[0].satisfies_required);
        assert_eq!(vp[1].label(), "VP->RELCLAUSE.head");
        assert_eq!(vp[1].conditions[0].required_value, "past-participle");

        assert!(kb.attachment_rules(&sym("S")).unwrap().is_empty());
        assert!(kb.attachment_rules(&sym("NOPE")).is_err());
    }

    #[test]
    fn semantic_rules_stay_in_their_network() {
        let kb = kb0();
        let insect = kb.attachment_rules(&sym("INSECT")).unwrap();
        assert!(insect.iter().all(|r| r.network == Network::Semantic));
        assert!(insect.iter().any(|r| r.parent == "MOVE" && r.slot == "agent"));
        let mic = kb.attachment_rules(&sym("MICROPHONE")).unwrap();
        assert!(!mic.iter().any(|r| r.slot == "agent"));
        assert!(mic.iter().any(|r| r.parent == "MOVE" && r.slot == "theme"));
        let moves = kb.attachment_rules(&sym("MOVE")).unwrap();
        assert!(moves.iter().any(|r| r.parent == "Event" && r.slot == EVENT_SLOT));
        for r in kb.rules.iter() {
            assert_eq!(kb.network_of(&r.child), kb.network_of(&r.parent), "{}", r.label());
        }
    }

    #[test]
    fn dangling_meaning_names_the_concept() {
        let mut doc = kb0_doc();
        doc.lexicon.iter_mut().find(|l| l.word == "bugs").unwrap().entries[0].meaning = Some("BUGG".into());
        let err = load_knowledge_base(&serde_json::to_string(&doc).unwrap()).unwrap_err();
        assert!(err.to_string().contains("BUGG"), "{err}");
        assert_eq!(kinds(&doc), vec![DiagnosticKind::DanglingReference]);
    }

    #[test]
    fn isa_cycle_reported_once() {
        let mut doc = kb0_doc();
        doc.concepts.iter_mut().find(|c| c.name == "ANIMATE").unwrap().isa = vec!["INSECT".into()];
        assert_eq!(kinds(&doc), vec![DiagnosticKind::IsaCycle]);
    }

    #[test]
    fn missing_root_category() {
        let mut doc = kb0_doc();
        doc.categories.retain(|c| c.name != "S");
        assert!(kinds(&doc).contains(&DiagnosticKind::NoRoot));

        let mut doc = kb0_doc();
        doc.categories.iter_mut().for_each(|c| c.root = false);
        assert_eq!(kinds(&doc), vec![DiagnosticKind::NoRoot]);

        let mut doc = kb0_doc();
        doc.categories[0].root = true;
        assert_eq!(kinds(&doc), vec![DiagnosticKind::MultipleRoots]);
    }

    #[test]
    fn dangling_restriction() {
        let mut doc = kb0_doc();
        let mv = doc.concepts.iter_mut().find(|c| c.name == "MOVE").unwrap();
        mv.frames[0].roles[0].restriction = "UNDECLARED".into();
        assert_eq!(kinds(&doc), vec![DiagnosticKind::DanglingRestriction]);
    }

    #[test]
    fn undeclared_feature_in_entry() {
        let mut doc = kb0_doc();
        let slept = doc.lexicon.iter_mut().find(|l| l.word == "slept").unwrap();
        slept.entries[0].features.insert("tense".into(), "past".into());
        assert_eq!(kinds(&doc), vec![DiagnosticKind::UndeclaredFeature]);
    }

    #[test]
    fn content_word_needs_meaning() {
        let mut doc = kb0_doc();
        doc.lexicon.iter_mut().find(|l| l.word == "dog").unwrap().entries[0].meaning = None;
        assert_eq!(kinds(&doc), vec![DiagnosticKind::MissingMeaning]);
    }

    #[test]
    fn unknown_keys_are_schema_errors_with_paths() {
        let text = KB0.replacen("\"satisfies_required\"", "\"satisfies\"", 1);
        match load_knowledge_base(&text) {
            Err(KbError::Schema { path, .. }) => assert_eq!(path, "categories[0].rules[0].satisfies"),
            other => panic!("expected schema error, got {other:?}"),
        }
        assert!(matches!(load_knowledge_base("{}"), Err(KbError::Schema { .. })));
    }
}
