//! Abstraction of propositions into sense-anchored templates.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{Proposition, Role};
use crate::taxonomy::{SenseId, Taxonomy};

pub const PLACEHOLDER: &str = "____";

/// Prepositions recognized when reading a pattern back into its parts.
pub const PREPOSITIONS: &[&str] = &[
    "about", "above", "across", "after", "against", "along", "among", "around", "as", "at",
    "before", "behind", "below", "beneath", "beside", "between", "beyond", "by", "despite",
    "down", "during", "except", "for", "from", "in", "inside", "into", "like", "near", "of",
    "off", "on", "onto", "out", "outside", "over", "past", "since", "through", "throughout",
    "to", "toward", "towards", "under", "underneath", "until", "up", "upon", "with", "within",
    "without",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Word {
    Placeholder,
    Lemma(String),
}

impl Word {
    fn parse(token: &str) -> Word {
        if token == PLACEHOLDER {
            Word::Placeholder
        } else {
            Word::Lemma(token.to_string())
        }
    }

    /// Replaces the placeholder with `filler`.
    pub fn fill(&self, filler: &str) -> String {
        match self {
            Word::Placeholder => filler.to_string(),
            Word::Lemma(l) => l.clone(),
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Word::Placeholder => f.write_str(PLACEHOLDER),
            Word::Lemma(l) => f.write_str(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Complement {
    pub prep: Option<String>,
    pub word: Word,
}

/// The structured form of a template pattern such as
/// `person borrow ____ from library`: subject, predicate lemma, and
/// complements in surface order. Multiword lemmas use underscores.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pattern {
    pub subject: Word,
    pub predicate: String,
    pub complements: Vec<Complement>,
}

impl Pattern {
    pub fn parse(text: &str) -> Result<Pattern> {
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() < 2 {
            return Err(Error::Format(format!("pattern {text:?} lacks a predicate")));
        }
        if toks[1] == PLACEHOLDER {
            return Err(Error::Format(format!("pattern {text:?} has a placeholder predicate")));
        }
        let mut complements = Vec::new();
        let mut i = 2;
        while i < toks.len() {
            if PREPOSITIONS.contains(&toks[i]) && i + 1 < toks.len() {
                complements.push(Complement {
                    prep: Some(toks[i].to_string()),
                    word: Word::parse(toks[i + 1]),
                });
                i += 2;
            } else {
                complements.push(Complement {
                    prep: None,
                    word: Word::parse(toks[i]),
                });
                i += 1;
            }
        }
        let pattern = Pattern {
            subject: Word::parse(toks[0]),
            predicate: toks[1].to_string(),
            complements,
        };
        if pattern.placeholder_count() != 1 {
            return Err(Error::Format(format!(
                "pattern {text:?} must contain exactly one placeholder"
            )));
        }
        Ok(pattern)
    }

    pub fn placeholder_count(&self) -> usize {
        std::iter::once(&self.subject)
            .chain(self.complements.iter().map(|c| &c.word))
            .filter(|w| **w == Word::Placeholder)
            .count()
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.subject, self.predicate)?;
        for c in &self.complements {
            match &c.prep {
                Some(p) if !p.is_empty() => write!(f, " {p} {}", c.word)?,
                _ => write!(f, " {}", c.word)?,
            }
        }
        Ok(())
    }
}

/// Number of placeholder tokens in a pattern string.
pub fn count_placeholders(pattern: &str) -> usize {
    pattern.matches(PLACEHOLDER).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractSlot {
    pub role: Role,
    pub lemma: String,
    pub sense: Option<SenseId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractedProposition {
    pub predicate_lemma: String,
    /// One or two argument slots.
    pub slots: Vec<AbstractSlot>,
    /// Oblique arguments dropped from the slots but kept as fixed pattern
    /// text, as `(preposition, lemma)`.
    pub fixed_obliques: Vec<(String, String)>,
    pub negated: bool,
}

fn normalize_lemma(lemma: &str) -> String {
    lemma.trim().to_lowercase().replace(' ', "_")
}

/// Reduces a proposition to at most two head-lemma slots with first senses.
/// Oblique slots are dropped first (kept as fixed text), then the indirect
/// object.
pub fn abstract_proposition(prop: &Proposition, taxonomy: &Taxonomy) -> Option<AbstractedProposition> {
    let mut slots: Vec<(Role, String)> = prop
        .arg_slots
        .iter()
        .map(|s| (s.role.clone(), normalize_lemma(&s.head_lemma)))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut fixed_obliques = Vec::new();
    while slots.len() > 2 {
        match slots.iter().rposition(|(r, _)| matches!(r, Role::Obl(_))) {
            Some(i) => {
                let (role, lemma) = slots.remove(i);
                if let Role::Obl(prep) = role {
                    fixed_obliques.insert(0, (prep, lemma));
                }
            }
            None => break,
        }
    }
    if slots.len() > 2 {
        if let Some(i) = slots.iter().position(|(r, _)| *r == Role::Iobj) {
            slots.remove(i);
        }
    }
    if slots.is_empty() || slots.len() > 2 {
        return None;
    }
    let predicate_lemma = normalize_lemma(&prop.predicate_lemma);
    if predicate_lemma.is_empty() {
        return None;
    }
    Some(AbstractedProposition {
        predicate_lemma,
        slots: slots
            .into_iter()
            .map(|(role, lemma)| AbstractSlot {
                sense: taxonomy.first_sense(&lemma).cloned(),
                role,
                lemma,
            })
            .collect(),
        fixed_obliques,
        negated: prop.negated,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub anchor_sense: SenseId,
    pub pattern: String,
    pub count: u64,
}

fn complement_rank(role: &Role) -> u8 {
    match role {
        Role::Iobj => 0,
        Role::Obj => 1,
        _ => 2,
    }
}

fn build_pattern(aprop: &AbstractedProposition, placeholder: usize) -> Option<Pattern> {
    let word = |i: usize| {
        if i == placeholder {
            Word::Placeholder
        } else {
            Word::Lemma(aprop.slots[i].lemma.clone())
        }
    };
    let subj = aprop.slots.iter().position(|s| s.role == Role::Subj)?;
    let mut others: Vec<usize> = (0..aprop.slots.len()).filter(|&i| i != subj).collect();
    others.sort_by_key(|&i| complement_rank(&aprop.slots[i].role));
    let mut complements: Vec<Complement> = others
        .into_iter()
        .map(|i| Complement {
            prep: match &aprop.slots[i].role {
                Role::Obl(p) if !p.is_empty() => Some(p.clone()),
                _ => None,
            },
            word: word(i),
        })
        .collect();
    complements.extend(aprop.fixed_obliques.iter().map(|(p, l)| Complement {
        prep: (!p.is_empty()).then(|| p.clone()),
        word: Word::Lemma(l.clone()),
    }));
    Some(Pattern {
        subject: word(subj),
        predicate: aprop.predicate_lemma.clone(),
        complements,
    })
}

/// One template per slot whose sense lies below the taxonomy cut. Negated
/// propositions and propositions without a subject yield nothing.
pub fn make_templates(aprop: &AbstractedProposition, taxonomy: &Taxonomy) -> Vec<Template> {
    if aprop.negated {
        return Vec::new();
    }
    aprop
        .slots
        .iter()
        .enumerate()
        .filter_map(|(i, slot)| {
            let sense = slot.sense.as_ref()?;
            if !taxonomy.below_cut(sense).unwrap_or(false) {
                return None;
            }
            let pattern = build_pattern(aprop, i)?;
            Some(Template {
                anchor_sense: sense.clone(),
                pattern: pattern.to_string(),
                count: 1,
            })
        })
        .collect()
}

/// Pattern counts per anchor sense.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateStore {
    by_sense: BTreeMap<SenseId, BTreeMap<String, u64>>,
}

impl TemplateStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, templates: impl IntoIterator<Item = Template>) {
        for t in templates {
            if t.count == 0 {
                continue;
            }
            *self
                .by_sense
                .entry(t.anchor_sense)
                .or_default()
                .entry(t.pattern)
                .or_default() += t.count;
        }
    }

    /// Sums counts from another store.
    pub fn merge(&mut self, other: TemplateStore) {
        for (sense, patterns) in other.by_sense {
            let dst = self.by_sense.entry(sense).or_default();
            for (p, c) in patterns {
                *dst.entry(p).or_default() += c;
            }
        }
    }

    /// Keeps only (sense, pattern) entries seen at least `min_count` times.
    pub fn prune(&self, min_count: u64) -> TemplateStore {
        let by_sense = self
            .by_sense
            .iter()
            .filter_map(|(s, patterns)| {
                let kept: BTreeMap<String, u64> = patterns
                    .iter()
                    .filter(|(_, &c)| c >= min_count)
                    .map(|(p, &c)| (p.clone(), c))
                    .collect();
                (!kept.is_empty()).then(|| (s.clone(), kept))
            })
            .collect();
        TemplateStore { by_sense }
    }

    pub fn patterns(&self, sense: &SenseId) -> Option<&BTreeMap<String, u64>> {
        self.by_sense.get(sense)
    }

    pub fn count(&self, sense: &SenseId, pattern: &str) -> u64 {
        self.patterns(sense)
            .and_then(|m| m.get(pattern))
            .copied()
            .unwrap_or(0)
    }

    pub fn senses(&self) -> impl Iterator<Item = &SenseId> {
        self.by_sense.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SenseId, &str, u64)> {
        self.by_sense
            .iter()
            .flat_map(|(s, m)| m.iter().map(move |(p, &c)| (s, p.as_str(), c)))
    }

    /// Number of unique (sense, pattern) entries.
    pub fn total_templates(&self) -> usize {
        self.by_sense.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_sense.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (s, p, c) in self.iter() {
            out.push_str(&format!("{s}\t{p}\t{c}\n"));
        }
        out
    }

    pub fn parse_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut store = TemplateStore::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(origin, i + 1, "expected sense<TAB>pattern<TAB>count"));
            }
            let sense: SenseId = cols[0]
                .parse()
                .map_err(|e: Error| Error::parse(origin, i + 1, e.to_string()))?;
            let count: u64 = cols[2]
                .parse()
                .ok()
                .filter(|&c| c > 0)
                .ok_or_else(|| Error::parse(origin, i + 1, format!("bad count {:?}", cols[2])))?;
            if count_placeholders(cols[1]) != 1 {
                return Err(Error::parse(origin, i + 1, "pattern must have exactly one placeholder"));
            }
            store.add([Template {
                anchor_sense: sense,
                pattern: cols[1].to_string(),
                count,
            }]);
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, &path.display().to_string())
    }
}

/// Abstracts and templates a batch of propositions, merging per-worker stores.
pub fn build_store(props: &[Proposition], taxonomy: &Taxonomy) -> TemplateStore {
    props
        .par_chunks(256)
        .map(|chunk| {
            let mut store = TemplateStore::new();
            for p in chunk {
                if let Some(a) = abstract_proposition(p, taxonomy) {
                    store.add(make_templates(&a, taxonomy));
                }
            }
            store
        })
        .reduce(TemplateStore::new, |mut a, b| {
            a.merge(b);
            a
        })
}
