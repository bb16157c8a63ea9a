//! Hypothesis generation from derived properties, with a small rule-based
//! English realizer (articles, agreement, capitalization).

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::abstraction::{Pattern, Word};
use crate::corpus_io::{DepSentence, PairRecord};
use crate::error::{Error, Result};
use crate::extraction::{extract_arguments_with, ExtractionConfig};
use crate::properties::{Property, PropertyIndex, Strategy};
use crate::taxonomy::{SenseId, Taxonomy};
use crate::text::capitalize;

pub const DEFAULT_PER_ARG_LIMIT: usize = 5;

/// Where a hypothesis came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateSource {
    Knowledge(Strategy),
    S2sWord,
    S2sSentence,
}

impl CandidateSource {
    pub fn provenance(self) -> String {
        match self {
            CandidateSource::Knowledge(s) => format!("wk-{s}"),
            CandidateSource::S2sWord => "s2s-word".into(),
            CandidateSource::S2sSentence => "s2s-sentence".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisCandidate {
    pub context_id: String,
    pub argument_lemma: String,
    pub source_sense: Option<SenseId>,
    pub pattern: Option<String>,
    pub surface: String,
    pub source: CandidateSource,
}

impl HypothesisCandidate {
    pub fn to_pair(&self, context: &str) -> PairRecord {
        PairRecord {
            context: context.to_string(),
            hypothesis: self.surface.clone(),
            annotations: Vec::new(),
            gold: None,
            provenance: self.source.provenance(),
        }
    }
}

/// A clause to realize: subject lemma, predicate lemma, and complements as
/// `(preposition, lemma)` in surface order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub subject: String,
    pub predicate: String,
    pub complements: Vec<(Option<String>, String)>,
}

impl Clause {
    /// Instantiates a pattern by putting `filler` into the placeholder.
    pub fn from_pattern(pattern: &Pattern, filler: &str) -> Clause {
        Clause {
            subject: pattern.subject.fill(filler),
            predicate: pattern.predicate.clone(),
            complements: pattern
                .complements
                .iter()
                .map(|c| (c.prep.clone(), c.word.fill(filler)))
                .collect(),
        }
    }
}

const IRREGULAR_3SG: &[(&str, &str)] = &[("be", "is"), ("have", "has"), ("do", "does"), ("go", "goes")];

const PRONOUNS: &[&str] = &[
    "i", "you", "he", "she", "it", "we", "they", "someone", "somebody", "something", "everyone",
    "everybody", "everything", "anyone", "anybody", "anything", "nobody", "nothing",
];

const PLURAL_SUBJECTS: &[&str] = &["people", "you", "we", "they"];

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Third-person singular present of a verb lemma. Multiword lemmas inflect
/// their first word.
pub fn third_person_singular(lemma: &str) -> String {
    let mut words = lemma.split(['_', ' ']);
    let head = words.next().unwrap_or("");
    let rest: Vec<&str> = words.collect();
    let inflected = if let Some(&(_, f)) = IRREGULAR_3SG.iter().find(|(l, _)| *l == head) {
        f.to_string()
    } else if head.len() >= 2
        && head.ends_with('y')
        && !is_vowel(head.chars().nth_back(1).unwrap_or('a'))
    {
        format!("{}ies", &head[..head.len() - 1])
    } else if ["s", "x", "z", "ch", "sh", "o"].iter().any(|suf| head.ends_with(suf)) {
        format!("{head}es")
    } else {
        format!("{head}s")
    };
    std::iter::once(inflected.as_str())
        .chain(rest)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Plural (or first/second person) present: `be` -> `are`, otherwise the lemma.
pub fn plural_present(lemma: &str) -> String {
    let words: Vec<&str> = lemma.split(['_', ' ']).collect();
    match words.split_first() {
        Some((&"be", rest)) => std::iter::once("are").chain(rest.iter().copied()).collect::<Vec<_>>().join(" "),
        _ => words.join(" "),
    }
}

/// `a` or `an` for a word.
pub fn indefinite_article(word: &str) -> &'static str {
    let w = word.to_lowercase();
    const AN: &[&str] = &["hour", "honest", "honor", "honour", "heir"];
    const A: &[&str] = &["uni", "use", "usu", "uti", "eu", "one", "once", "ewe"];
    if AN.iter().any(|p| w.starts_with(p)) {
        return "an";
    }
    if A.iter().any(|p| w.starts_with(p)) {
        return "a";
    }
    match w.chars().next() {
        Some(c) if is_vowel(c) => "an",
        _ => "a",
    }
}

/// Realizes clauses relative to a context sentence.
pub struct Realizer<'a> {
    context_lemmas: HashSet<String>,
    is_noun: Box<dyn Fn(&str) -> bool + 'a>,
}

impl<'a> Realizer<'a> {
    pub fn new(
        context_lemmas: impl IntoIterator<Item = String>,
        is_noun: impl Fn(&str) -> bool + 'a,
    ) -> Self {
        Realizer {
            context_lemmas: context_lemmas.into_iter().map(|l| l.to_lowercase()).collect(),
            is_noun: Box::new(is_noun),
        }
    }

    /// Nouns are the lemmas the taxonomy knows; the context supplies the
    /// definiteness information.
    pub fn for_context(context: &DepSentence, taxonomy: &'a Taxonomy) -> Self {
        Realizer::new(
            context.tokens.iter().map(|t| t.lemma.clone()),
            move |l| taxonomy.has_lemma(l),
        )
    }

    pub fn noun_phrase(&self, lemma: &str) -> String {
        let lower = lemma.to_lowercase();
        let text = lemma.replace('_', " ");
        if lower == "i" {
            return "I".into();
        }
        if PRONOUNS.contains(&lower.as_str()) || PLURAL_SUBJECTS.contains(&lower.as_str()) {
            return text;
        }
        if !(self.is_noun)(&lower) {
            return text;
        }
        if self.context_lemmas.contains(&lower) {
            format!("the {text}")
        } else {
            format!("{} {text}", indefinite_article(&text))
        }
    }

    fn verb(&self, subject: &str, predicate: &str) -> String {
        let s = subject.to_lowercase();
        if s == "i" {
            let words: Vec<&str> = predicate.split(['_', ' ']).collect();
            return match words.split_first() {
                Some((&"be", rest)) => std::iter::once("am").chain(rest.iter().copied()).collect::<Vec<_>>().join(" "),
                _ => words.join(" "),
            };
        }
        if PLURAL_SUBJECTS.contains(&s.as_str()) {
            plural_present(predicate)
        } else {
            third_person_singular(predicate)
        }
    }

    pub fn verbalize(&self, clause: &Clause) -> Result<String> {
        if clause.predicate.trim().is_empty() {
            return Err(Error::invalid("cannot verbalize a clause without a predicate"));
        }
        let mut parts = vec![self.noun_phrase(&clause.subject), self.verb(&clause.subject, &clause.predicate)];
        for (prep, word) in &clause.complements {
            if let Some(p) = prep.as_ref().filter(|p| !p.is_empty()) {
                parts.push(p.replace('_', " "));
            }
            parts.push(self.noun_phrase(word));
        }
        let sentence = parts
            .into_iter()
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        Ok(format!("{} .", capitalize(&sentence)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub per_arg_limit: usize,
    #[serde(default)]
    pub extraction: ExtractionConfig,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            per_arg_limit: DEFAULT_PER_ARG_LIMIT,
            extraction: ExtractionConfig::default(),
        }
    }
}

/// Interleaves the per-strategy queues: first of each, then second of each...
fn round_robin<T: Clone>(queues: &[Vec<T>]) -> Vec<T> {
    let longest = queues.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .flat_map(|i| queues.iter().filter_map(move |q| q.get(i).cloned()))
        .collect()
}

/// Hypotheses for every argument of `context`, using the properties of all
/// senses of the argument lemma.
pub fn generate(
    context: &DepSentence,
    taxonomy: &Taxonomy,
    properties: &PropertyIndex,
    cfg: &GenerationConfig,
) -> Vec<HypothesisCandidate> {
    let realizer = Realizer::for_context(context, taxonomy);
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();

    for arg in extract_arguments_with(context, &cfg.extraction) {
        let lemma = arg.head_lemma.to_lowercase().replace(' ', "_");
        let senses = taxonomy.senses_of(&lemma);
        if senses.is_empty() {
            continue;
        }
        let queues: Vec<Vec<(&SenseId, &Property)>> = Strategy::ALL
            .iter()
            .map(|&strategy| {
                senses
                    .iter()
                    .filter_map(|s| properties.get(s))
                    .flat_map(|set| set.by_strategy(strategy).map(move |p| (&set.sense, p)))
                    .collect()
            })
            .collect();

        let mut emitted = 0;
        for (sense, prop) in round_robin(&queues) {
            if emitted >= cfg.per_arg_limit {
                break;
            }
            let Ok(pattern) = Pattern::parse(&prop.pattern) else {
                log::warn!("skipping malformed pattern {:?}", prop.pattern);
                continue;
            };
            let Ok(surface) = realizer.verbalize(&Clause::from_pattern(&pattern, &lemma)) else {
                continue;
            };
            if !seen.insert(surface.clone()) {
                continue;
            }
            emitted += 1;
            out.push(HypothesisCandidate {
                context_id: context.source_id.clone(),
                argument_lemma: lemma.clone(),
                source_sense: Some(sense.clone()),
                pattern: Some(prop.pattern.clone()),
                surface,
                source: CandidateSource::Knowledge(prop.strategy),
            });
        }
    }
    out
}

/// Recovers the lemma-level token sequence of a realized pattern: articles
/// removed, the verb mapped back to the predicate lemma. Used to check that
/// realization only adds articles and inflection.
pub fn delexicalize(surface: &str, pattern: &Pattern) -> Vec<String> {
    let body = surface.strip_suffix(" .").unwrap_or(surface).to_lowercase();
    let mut toks: Vec<String> = body
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .map(str::to_string)
        .collect();
    let subj_len = match &pattern.subject {
        Word::Lemma(l) => l.split('_').count(),
        Word::Placeholder => 0,
    };
    let forms = [
        third_person_singular(&pattern.predicate),
        plural_present(&pattern.predicate),
        pattern.predicate.replace('_', " "),
        "am".into(),
    ];
    // The subject filler may span several words; find the verb after it.
    let start = subj_len.max(1) - 1;
    for i in start..toks.len() {
        for f in &forms {
            let fw: Vec<&str> = f.split(' ').collect();
            if toks.len() >= i + fw.len() && toks[i..i + fw.len()].iter().zip(&fw).all(|(a, b)| a == b) {
                let lemma_words: Vec<String> = pattern.predicate.split('_').map(str::to_string).collect();
                toks.splice(i..i + fw.len(), lemma_words);
                return toks;
            }
        }
    }
    toks
}
