//! Predicate-argument extraction over dependency trees.
//!
//! A small rule subset in the style of PredPatt:
//!
//! * verbal predicates: a `VERB` with at least one `nsubj`, `nsubj:pass`,
//!   `obj`, `iobj` or `obl` dependent;
//! * copular predicates: a token with a `cop` dependent yields `be` with its
//!   `nsubj` as subject and the token itself as complement;
//! * adjectival modification: an `amod` adjective of a `NOUN` yields `be`
//!   with the noun as subject and the adjective as complement.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus_io::{DepSentence, Token};

/// Argument role. Oblique arguments carry their preposition (the lemma of
/// the `case` dependent, empty if there is none).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Subj,
    Obj,
    Iobj,
    Obl(String),
}

impl Role {
    fn rank(&self) -> u8 {
        match self {
            Role::Subj => 0,
            Role::Obj => 1,
            Role::Iobj => 2,
            Role::Obl(_) => 3,
        }
    }

    fn from_deprel(tok: &Token, sentence: &DepSentence) -> Option<Role> {
        match tok.deprel.as_str() {
            "nsubj" | "nsubj:pass" => Some(Role::Subj),
            "obj" => Some(Role::Obj),
            "iobj" => Some(Role::Iobj),
            _ if tok.base_deprel() == "obl" => Some(Role::Obl(preposition(tok, sentence))),
            _ => None,
        }
    }
}

/// Lemma of the first `case` dependent, lowercased.
fn preposition(tok: &Token, sentence: &DepSentence) -> String {
    sentence
        .dependents(tok.index)
        .find(|d| d.base_deprel() == "case")
        .map(|d| d.lemma.to_lowercase())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropositionKind {
    Verbal,
    Copular,
    Modifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgSlot {
    pub role: Role,
    pub head_index: usize,
    pub head_lemma: String,
    /// Inclusive token index range of the argument phrase.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposition {
    pub predicate_lemma: String,
    /// The predicate token: the verb, the copular complement, or the adjective.
    pub predicate_index: usize,
    pub kind: PropositionKind,
    pub arg_slots: Vec<ArgSlot>,
    pub negated: bool,
    pub source_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentSpan {
    pub head_index: usize,
    pub head_lemma: String,
    pub span: (usize, usize),
}

pub const MAX_SLOTS: usize = 3;

/// Person-name detection for proper nouns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonNames {
    /// Titles that mark a proper noun as a person name (compared lowercase,
    /// trailing period removed).
    pub honorifics: BTreeSet<String>,
    /// Lowercase first names or surnames that are always persons.
    pub names: BTreeSet<String>,
}

impl Default for PersonNames {
    fn default() -> Self {
        PersonNames {
            honorifics: ["mr", "mrs", "ms", "dr"].iter().map(|s| s.to_string()).collect(),
            names: BTreeSet::new(),
        }
    }
}

impl PersonNames {
    fn normalize(word: &str) -> String {
        word.trim_end_matches('.').to_lowercase()
    }

    fn is_honorific(&self, word: &str) -> bool {
        self.honorifics.contains(&Self::normalize(word))
    }

    /// A `PROPN` is a person when it is a listed name, is or carries an
    /// honorific, or is a `flat` part of a person name.
    pub fn is_person(&self, tok: &Token, sentence: &DepSentence) -> bool {
        self.is_person_depth(tok, sentence, 0)
    }

    fn is_person_depth(&self, tok: &Token, sentence: &DepSentence, depth: usize) -> bool {
        if tok.upos != "PROPN" || depth > sentence.tokens.len() {
            return false;
        }
        if self.names.contains(&Self::normalize(&tok.lemma)) || self.is_honorific(&tok.form) {
            return true;
        }
        if sentence
            .dependents(tok.index)
            .any(|d| self.is_honorific(&d.form) || self.is_honorific(&d.lemma))
        {
            return true;
        }
        if tok.base_deprel() == "flat" {
            if let Some(parent) = sentence.token(tok.head) {
                return self.is_person_depth(parent, sentence, depth + 1);
            }
        }
        false
    }

    /// The argument lemma: `person` for detected names, else the LEMMA column.
    pub fn argument_lemma(&self, tok: &Token, sentence: &DepSentence) -> String {
        if self.is_person(tok, sentence) {
            "person".to_string()
        } else {
            tok.lemma.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    #[serde(default)]
    pub person_names: PersonNames,
}

fn is_negator(tok: &Token) -> bool {
    matches!(tok.base_deprel(), "advmod" | "neg")
        && matches!(tok.lemma.to_lowercase().as_str(), "not" | "n't")
}

fn negated(sentence: &DepSentence, index: usize) -> bool {
    sentence.dependents(index).any(is_negator)
}

/// Span of a copular complement: its subtree without the clause-level
/// dependents (subject, copula, auxiliaries, punctuation, negation, ...).
fn complement_span(sentence: &DepSentence, index: usize) -> (usize, usize) {
    const CLAUSAL: &[&str] = &[
        "nsubj", "csubj", "cop", "aux", "punct", "mark", "cc", "conj", "advcl", "parataxis",
        "expl", "obl", "advmod",
    ];
    let mut lo = index;
    let mut hi = index;
    for d in sentence.dependents(index) {
        if CLAUSAL.contains(&d.base_deprel()) {
            continue;
        }
        let (a, b) = sentence.subtree_span(d.index);
        lo = lo.min(a);
        hi = hi.max(b);
    }
    (lo, hi)
}

fn slot_for(tok: &Token, role: Role, sentence: &DepSentence, cfg: &ExtractionConfig) -> ArgSlot {
    ArgSlot {
        role,
        head_index: tok.index,
        head_lemma: cfg.person_names.argument_lemma(tok, sentence),
        span: sentence.subtree_span(tok.index),
    }
}

/// Orders slots (subj, obj, iobj, obl in document order), keeps one subj,
/// obj and iobj, and truncates to [`MAX_SLOTS`].
fn normalize_slots(mut slots: Vec<ArgSlot>) -> Vec<ArgSlot> {
    slots.sort_by_key(|s| (s.role.rank(), s.head_index));
    let mut seen = BTreeSet::new();
    slots.retain(|s| matches!(s.role, Role::Obl(_)) || seen.insert(s.role.rank()));
    slots.truncate(MAX_SLOTS);
    slots
}

pub fn extract_propositions(sentence: &DepSentence) -> Vec<Proposition> {
    extract_propositions_with(sentence, &ExtractionConfig::default())
}

pub fn extract_propositions_with(sentence: &DepSentence, cfg: &ExtractionConfig) -> Vec<Proposition> {
    let mut props = Vec::new();
    for tok in &sentence.tokens {
        let has_cop = sentence.dependents(tok.index).any(|d| d.base_deprel() == "cop");

        if has_cop {
            let mut slots: Vec<ArgSlot> = sentence
                .dependents(tok.index)
                .filter(|d| matches!(d.deprel.as_str(), "nsubj" | "nsubj:pass"))
                .map(|d| slot_for(d, Role::Subj, sentence, cfg))
                .collect();
            slots.push(ArgSlot {
                role: Role::Obj,
                head_index: tok.index,
                head_lemma: cfg.person_names.argument_lemma(tok, sentence),
                span: complement_span(sentence, tok.index),
            });
            props.push(Proposition {
                predicate_lemma: "be".into(),
                predicate_index: tok.index,
                kind: PropositionKind::Copular,
                arg_slots: normalize_slots(slots),
                negated: negated(sentence, tok.index),
                source_id: sentence.source_id.clone(),
            });
        } else if tok.upos == "VERB" {
            let slots: Vec<ArgSlot> = sentence
                .dependents(tok.index)
                .filter_map(|d| Role::from_deprel(d, sentence).map(|r| slot_for(d, r, sentence, cfg)))
                .collect();
            if !slots.is_empty() {
                props.push(Proposition {
                    predicate_lemma: tok.lemma.to_lowercase(),
                    predicate_index: tok.index,
                    kind: PropositionKind::Verbal,
                    arg_slots: normalize_slots(slots),
                    negated: negated(sentence, tok.index),
                    source_id: sentence.source_id.clone(),
                });
            }
        }

        if tok.upos == "ADJ" && tok.deprel == "amod" {
            if let Some(noun) = sentence.token(tok.head).filter(|h| h.upos == "NOUN") {
                props.push(Proposition {
                    predicate_lemma: "be".into(),
                    predicate_index: tok.index,
                    kind: PropositionKind::Modifier,
                    arg_slots: vec![
                        ArgSlot {
                            role: Role::Subj,
                            head_index: noun.index,
                            head_lemma: noun.lemma.clone(),
                            span: (noun.index, noun.index),
                        },
                        ArgSlot {
                            role: Role::Obj,
                            head_index: tok.index,
                            head_lemma: tok.lemma.clone(),
                            span: sentence.subtree_span(tok.index),
                        },
                    ],
                    negated: false,
                    source_id: sentence.source_id.clone(),
                });
            }
        }
    }
    props
}

const ARGUMENT_RELATIONS: &[&str] = &["nsubj", "nsubj:pass", "obj", "iobj"];

fn is_argument_relation(tok: &Token) -> bool {
    ARGUMENT_RELATIONS.contains(&tok.deprel.as_str()) || tok.base_deprel() == "obl"
}

pub fn extract_arguments(sentence: &DepSentence) -> Vec<ArgumentSpan> {
    extract_arguments_with(sentence, &ExtractionConfig::default())
}

/// Noun arguments of any predicate, in document order.
pub fn extract_arguments_with(sentence: &DepSentence, cfg: &ExtractionConfig) -> Vec<ArgumentSpan> {
    sentence
        .tokens
        .iter()
        .filter(|t| matches!(t.upos.as_str(), "NOUN" | "PROPN") && is_argument_relation(t))
        .map(|t| ArgumentSpan {
            head_index: t.index,
            head_lemma: cfg.person_names.argument_lemma(t, sentence),
            span: sentence.subtree_span(t.index),
        })
        .collect()
}

/// Checks that every slot hangs off the predicate as the tree says it should.
pub fn slot_attachment_holds(prop: &Proposition, sentence: &DepSentence) -> bool {
    prop.arg_slots.iter().all(|slot| {
        let Some(tok) = sentence.token(slot.head_index) else {
            return false;
        };
        match prop.kind {
            PropositionKind::Verbal => tok.head == prop.predicate_index,
            PropositionKind::Copular => {
                slot.head_index == prop.predicate_index || tok.head == prop.predicate_index
            }
            PropositionKind::Modifier => {
                slot.head_index == prop.predicate_index
                    || sentence.token(prop.predicate_index).map(|p| p.head) == Some(slot.head_index)
            }
        }
    })
}
