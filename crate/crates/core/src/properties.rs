//! Per-sense property derivation from the template store.
//!
//! Three strategies: a discriminative decision tree over each co-hyponym
//! family, frequency ranking, and hypernym (ISA) statements.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abstraction::{count_placeholders, TemplateStore, PLACEHOLDER};
use crate::error::{Error, Result};
use crate::taxonomy::{SenseId, Taxonomy};

/// Gains at or below this are treated as zero.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Dt,
    Freq,
    Isa,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Dt, Strategy::Freq, Strategy::Isa];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Dt => "dt",
            Strategy::Freq => "freq",
            Strategy::Isa => "isa",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dt" => Ok(Strategy::Dt),
            "freq" => Ok(Strategy::Freq),
            "isa" => Ok(Strategy::Isa),
            other => Err(Error::invalid(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub pattern: String,
    pub strategy: Strategy,
    pub score: f64,
}

/// Properties of one sense, sorted by score (descending) then pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySet {
    pub sense: SenseId,
    pub properties: Vec<Property>,
}

impl PropertySet {
    pub fn new(sense: SenseId, mut properties: Vec<Property>) -> Self {
        // Unique per (pattern, strategy), keeping the best score.
        properties.sort_by(|a, b| {
            (a.strategy, &a.pattern)
                .cmp(&(b.strategy, &b.pattern))
                .then(b.score.total_cmp(&a.score))
        });
        properties.dedup_by(|a, b| a.strategy == b.strategy && a.pattern == b.pattern);
        properties.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.pattern.cmp(&b.pattern))
                .then(a.strategy.cmp(&b.strategy))
        });
        PropertySet { sense, properties }
    }

    pub fn by_strategy(&self, strategy: Strategy) -> impl Iterator<Item = &Property> {
        self.properties.iter().filter(move |p| p.strategy == strategy)
    }
}

/// A node of the template decision tree. Instances carry exactly one
/// pattern, so a split on `p` sends the instances of `p` to `present` and
/// everything else to `absent`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTreeNode {
    pub split_pattern: Option<String>,
    pub gain: f64,
    /// Every pattern reaching the node's maximal gain (the split pattern
    /// included) with the majority sense of its present branch.
    pub assignments: Vec<(String, SenseId)>,
    pub class_counts: BTreeMap<SenseId, u64>,
    pub present: Option<Box<DecisionTreeNode>>,
    pub absent: Option<Box<DecisionTreeNode>>,
}

impl DecisionTreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split_pattern.is_none()
    }

    /// Visits every internal node in preorder (present branch first).
    pub fn internal_nodes(&self) -> Vec<&DecisionTreeNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            if n.is_leaf() {
                continue;
            }
            out.push(n);
            if let Some(a) = &n.absent {
                stack.push(a);
            }
            if let Some(p) = &n.present {
                stack.push(p);
            }
        }
        out
    }
}

/// Shannon entropy (bits) of a count vector.
pub fn entropy<I: IntoIterator<Item = u64>>(counts: I) -> f64 {
    let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    -counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Instance table of one node: (sense, pattern) -> count.
type Instances = BTreeMap<(SenseId, String), u64>;

fn class_counts(inst: &Instances) -> BTreeMap<SenseId, u64> {
    let mut out: BTreeMap<SenseId, u64> = BTreeMap::new();
    for ((s, _), &c) in inst {
        *out.entry(s.clone()).or_default() += c;
    }
    out
}

/// Information gain of splitting `inst` on `pattern`.
fn split_gain(inst: &Instances, pattern: &str) -> f64 {
    let parent = class_counts(inst);
    let mut present: BTreeMap<&SenseId, u64> = BTreeMap::new();
    for ((s, p), &c) in inst {
        if p == pattern {
            *present.entry(s).or_default() += c;
        }
    }
    let total: u64 = parent.values().sum();
    let n_present: u64 = present.values().sum();
    if total == 0 || n_present == 0 || n_present == total {
        return 0.0;
    }
    let absent = parent
        .iter()
        .map(|(s, &c)| c - present.get(s).copied().unwrap_or(0));
    let h = entropy(parent.values().copied());
    let hp = entropy(present.values().copied());
    let ha = entropy(absent);
    let w = n_present as f64 / total as f64;
    h - w * hp - (1.0 - w) * ha
}

fn grow(inst: Instances, depth_left: usize) -> DecisionTreeNode {
    let counts = class_counts(&inst);
    let leaf = |counts| DecisionTreeNode {
        split_pattern: None,
        gain: 0.0,
        assignments: Vec::new(),
        class_counts: counts,
        present: None,
        absent: None,
    };
    if depth_left == 0 || counts.len() < 2 {
        return leaf(counts);
    }
    let patterns: BTreeSet<&str> = inst.keys().map(|(_, p)| p.as_str()).collect();
    let gains: Vec<(&str, f64)> = patterns.into_iter().map(|p| (p, split_gain(&inst, p))).collect();
    let mut best: Option<(&str, f64)> = None;
    for &(p, g) in &gains {
        // Ties resolve to the lexicographically smallest pattern.
        if best.is_none_or(|(_, bg)| g > bg) {
            best = Some((p, g));
        }
    }
    let Some((pattern, gain)) = best.filter(|&(_, g)| g > GAIN_EPS) else {
        return leaf(counts);
    };
    let assignments = gains
        .iter()
        .filter(|&&(_, g)| gain - g <= GAIN_EPS)
        .filter_map(|&(p, _)| {
            let mut present: BTreeMap<SenseId, u64> = BTreeMap::new();
            for ((s, q), &c) in &inst {
                if q == p {
                    *present.entry(s.clone()).or_default() += c;
                }
            }
            majority(&present).map(|s| (p.to_string(), s.clone()))
        })
        .collect();
    let pattern = pattern.to_string();
    let (present, absent): (Instances, Instances) =
        inst.into_iter().partition(|((_, p), _)| *p == pattern);
    DecisionTreeNode {
        split_pattern: Some(pattern),
        gain,
        assignments,
        class_counts: counts,
        present: Some(Box::new(grow(present, depth_left - 1))),
        absent: Some(Box::new(grow(absent, depth_left - 1))),
    }
}

/// Grows an information-gain tree over the templates of `siblings`. Each
/// stored (sense, pattern, count) contributes `count` one-hot instances
/// labeled with the sense.
pub fn grow_tree(siblings: &BTreeSet<SenseId>, store: &TemplateStore, max_depth: usize) -> DecisionTreeNode {
    let mut inst = Instances::new();
    for s in siblings {
        match store.patterns(s) {
            Some(ps) if !ps.is_empty() => {
                for (p, &c) in ps {
                    inst.insert((s.clone(), p.clone()), c);
                }
            }
            _ => log::warn!("sense {s} has no templates; skipped in its family tree"),
        }
    }
    grow(inst, max_depth)
}

/// Majority sense of a node, ties to the smallest sense id.
fn majority(counts: &BTreeMap<SenseId, u64>) -> Option<&SenseId> {
    counts
        .iter()
        .fold(None, |best: Option<(&SenseId, u64)>, (s, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((s, c)),
        })
        .map(|(s, _)| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtParams {
    pub max_depth: usize,
    pub k_per_sense: usize,
}

impl Default for DtParams {
    fn default() -> Self {
        DtParams {
            max_depth: 8,
            k_per_sense: 10,
        }
    }
}

/// Decision-tree properties for one co-hyponym family: each split pattern
/// goes to the majority sense of its present branch, as does every other
/// pattern tied with it at that node; per sense, the top `k_per_sense`
/// patterns by gain.
pub fn derive_dt(
    siblings: &BTreeSet<SenseId>,
    store: &TemplateStore,
    params: DtParams,
) -> BTreeMap<SenseId, Vec<(String, f64)>> {
    let tree = grow_tree(siblings, store, params.max_depth);
    let mut out: BTreeMap<SenseId, Vec<(String, f64)>> = BTreeMap::new();
    for node in tree.internal_nodes() {
        for (pattern, sense) in &node.assignments {
            out.entry(sense.clone()).or_default().push((pattern.clone(), node.gain));
        }
    }
    for list in out.values_mut() {
        list.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        list.dedup_by(|a, b| a.0 == b.0);
        list.truncate(params.k_per_sense);
    }
    out.retain(|_, l| !l.is_empty());
    out
}

/// Top-`k` patterns by count, ties lexicographic.
pub fn derive_freq(sense: &SenseId, store: &TemplateStore, k: usize) -> Vec<(String, u64)> {
    let Some(patterns) = store.patterns(sense) else {
        return Vec::new();
    };
    let mut v: Vec<(String, u64)> = patterns.iter().map(|(p, &c)| (p.clone(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

/// One `____ be <parent>` pattern per direct hypernym.
pub fn derive_isa(sense: &SenseId, taxonomy: &Taxonomy) -> Result<Vec<String>> {
    Ok(taxonomy
        .hypernyms(sense)?
        .into_iter()
        .map(|p| format!("{PLACEHOLDER} be {}", p.lemma))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeriveParams {
    pub strategies: Vec<Strategy>,
    pub dt: DtParams,
    pub freq_k: usize,
}

impl Default for DeriveParams {
    fn default() -> Self {
        DeriveParams {
            strategies: Strategy::ALL.to_vec(),
            dt: DtParams::default(),
            freq_k: 10,
        }
    }
}

/// Property sets for every sense, keyed by sense.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropertyIndex {
    sets: BTreeMap<SenseId, PropertySet>,
}

impl PropertyIndex {
    pub fn from_sets(sets: impl IntoIterator<Item = PropertySet>) -> Self {
        PropertyIndex {
            sets: sets.into_iter().map(|s| (s.sense.clone(), s)).collect(),
        }
    }

    pub fn get(&self, sense: &SenseId) -> Option<&PropertySet> {
        self.sets.get(sense)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PropertySet> {
        self.sets.values()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for set in self.sets.values() {
            for p in &set.properties {
                out.push_str(&format!("{}\t{}\t{}\t{}\n", set.sense, p.pattern, p.strategy, p.score));
            }
        }
        out
    }

    pub fn parse_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut acc: BTreeMap<SenseId, Vec<Property>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |m: String| Error::parse(origin, i + 1, m);
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(err("expected sense<TAB>pattern<TAB>strategy<TAB>score".into()));
            }
            let sense: SenseId = cols[0].parse().map_err(|e: Error| err(e.to_string()))?;
            if count_placeholders(cols[1]) != 1 {
                return Err(err("pattern must have exactly one placeholder".into()));
            }
            let strategy: Strategy = cols[2].parse().map_err(|e: Error| err(e.to_string()))?;
            let score: f64 = cols[3].parse().map_err(|_| err(format!("bad score {:?}", cols[3])))?;
            acc.entry(sense).or_default().push(Property {
                pattern: cols[1].to_string(),
                strategy,
                score,
            });
        }
        Ok(PropertyIndex::from_sets(
            acc.into_iter().map(|(s, ps)| PropertySet::new(s, ps)),
        ))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, &path.display().to_string())
    }
}

/// Runs the selected strategies. Decision trees are trained per parent
/// sense over its children that have templates, and results are unioned.
/// Frequency and ISA properties are derived for every stored sense.
pub fn derive_all(taxonomy: &Taxonomy, store: &TemplateStore, params: &DeriveParams) -> PropertyIndex {
    let mut acc: BTreeMap<SenseId, Vec<Property>> = BTreeMap::new();

    if params.strategies.contains(&Strategy::Dt) {
        let families: Vec<BTreeSet<SenseId>> = taxonomy
            .internal_senses()
            .map(|p| {
                taxonomy
                    .hyponyms(p)
                    .expect("internal sense exists")
                    .into_iter()
                    .filter(|c| store.patterns(c).is_some())
                    .collect::<BTreeSet<_>>()
            })
            .filter(|f| f.len() >= 2)
            .collect();
        let results: Vec<_> = families
            .par_iter()
            .map(|f| derive_dt(f, store, params.dt))
            .collect();
        for r in results {
            for (sense, pats) in r {
                acc.entry(sense).or_default().extend(pats.into_iter().map(|(pattern, gain)| Property {
                    pattern,
                    strategy: Strategy::Dt,
                    score: gain,
                }));
            }
        }
    }

    for sense in store.senses() {
        if params.strategies.contains(&Strategy::Freq) {
            acc.entry(sense.clone()).or_default().extend(
                derive_freq(sense, store, params.freq_k)
                    .into_iter()
                    .map(|(pattern, c)| Property {
                        pattern,
                        strategy: Strategy::Freq,
                        score: c as f64,
                    }),
            );
        }
        if params.strategies.contains(&Strategy::Isa) {
            if let Ok(pats) = derive_isa(sense, taxonomy) {
                acc.entry(sense.clone())
                    .or_default()
                    .extend(pats.into_iter().map(|pattern| Property {
                        pattern,
                        strategy: Strategy::Isa,
                        score: 1.0,
                    }));
            }
        }
    }

    PropertyIndex::from_sets(
        acc.into_iter()
            .filter(|(_, ps)| !ps.is_empty())
            .map(|(s, ps)| PropertySet::new(s, ps)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::Template;

    fn sid(s: &str) -> SenseId {
        s.parse().unwrap()
    }

    fn store(entries: &[(&str, &str, u64)]) -> TemplateStore {
        let mut st = TemplateStore::new();
        st.add(entries.iter().map(|&(s, p, c)| Template {
            anchor_sense: sid(s),
            pattern: p.into(),
            count: c,
        }));
        st
    }

    fn set(v: &[&str]) -> BTreeSet<SenseId> {
        v.iter().map(|s| sid(s)).collect()
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy([4, 4]), 1.0);
        assert_eq!(entropy([7]), 0.0);
        assert_eq!(entropy([0, 0]), 0.0);
        assert!((entropy([1, 1, 1, 1]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_pair_gets_full_entropy_gain() {
        let st = store(&[("a.n.01", "x ____", 3), ("b.n.01", "y ____", 3)]);
        let out = derive_dt(&set(&["a.n.01", "b.n.01"]), &st, DtParams::default());
        // the first split separates the classes entirely: gain = H(.5,.5) = 1 bit
        assert_eq!(out[&sid("a.n.01")], vec![("x ____".to_string(), 1.0)]);
        assert_eq!(out[&sid("b.n.01")], vec![("y ____".to_string(), 1.0)]);
        let tree = grow_tree(&set(&["a.n.01", "b.n.01"]), &st, 8);
        assert_eq!(tree.gain, 1.0);
        assert_eq!(tree.internal_nodes().len(), 1);
    }

    #[test]
    fn identical_distributions_give_nothing() {
        let st = store(&[
            ("a.n.01", "x ____", 2),
            ("a.n.01", "y ____", 1),
            ("b.n.01", "x ____", 2),
            ("b.n.01", "y ____", 1),
        ]);
        assert!(derive_dt(&set(&["a.n.01", "b.n.01"]), &st, DtParams::default()).is_empty());
        let single = store(&[("a.n.01", "x ____", 5)]);
        assert!(derive_dt(&set(&["a.n.01", "b.n.01"]), &single, DtParams::default()).is_empty());
    }

    #[test]
    fn freq_ranking() {
        let st = store(&[("a.n.01", "p1 ____", 5), ("a.n.01", "p3 ____", 3), ("a.n.01", "p2 ____", 3)]);
        let f = |k| -> Vec<String> { derive_freq(&sid("a.n.01"), &st, k).into_iter().map(|x| x.0).collect() };
        assert_eq!(f(2), vec!["p1 ____", "p2 ____"]);
        assert_eq!(f(10).len(), 3);
        assert!(f(0).is_empty());
        assert!(derive_freq(&sid("zz.n.01"), &st, 3).is_empty());
        for k in 0..4 {
            let a = f(k);
            let b = f(k + 1);
            assert_eq!(&b[..a.len()], &a[..]);
        }
    }

    #[test]
    fn isa_patterns() {
        let t = Taxonomy::parse_tsv(
            "entity.n.01\t1\t\npublication.n.01\t1\tentity.n.01\nbook.n.01\t1\tpublication.n.01\n\
             device.n.01\t1\tentity.n.01\ncontainer.n.01\t1\tentity.n.01\n\
             gadget.n.01\t1\tdevice.n.01,container.n.01\n",
            "t",
        )
        .unwrap();
        assert_eq!(derive_isa(&sid("book.n.01"), &t).unwrap(), vec!["____ be publication"]);
        assert!(derive_isa(&sid("entity.n.01"), &t).unwrap().is_empty());
        assert_eq!(
            derive_isa(&sid("gadget.n.01"), &t).unwrap(),
            vec!["____ be container", "____ be device"]
        );
        assert!(derive_isa(&sid("nope.n.01"), &t).is_err());
    }

    #[test]
    fn property_set_ordering() {
        let ps = PropertySet::new(
            sid("a.n.01"),
            vec![
                Property { pattern: "b ____".into(), strategy: Strategy::Freq, score: 2.0 },
                Property { pattern: "a ____".into(), strategy: Strategy::Freq, score: 2.0 },
                Property { pattern: "c ____".into(), strategy: Strategy::Freq, score: 5.0 },
                Property { pattern: "c ____".into(), strategy: Strategy::Freq, score: 1.0 },
            ],
        );
        let pats: Vec<(&str, f64)> = ps.properties.iter().map(|p| (p.pattern.as_str(), p.score)).collect();
        assert_eq!(pats, vec![("c ____", 5.0), ("a ____", 2.0), ("b ____", 2.0)]);
    }

    #[test]
    fn index_tsv_round_trip() {
        let st = store(&[
            ("book.n.01", "person read ____", 4),
            ("book.n.01", "person borrow ____ from library", 3),
            ("magazine.n.01", "person subscribe to ____", 3),
            ("magazine.n.01", "person read ____", 2),
        ]);
        let t = Taxonomy::parse_tsv(
            "publication.n.01\t1\t\nbook.n.01\t1\tpublication.n.01\nmagazine.n.01\t1\tpublication.n.01\n",
            "t",
        )
        .unwrap();
        let idx = derive_all(&t, &st, &DeriveParams::default());
        let back = PropertyIndex::parse_tsv(&idx.to_tsv(), "t").unwrap();
        assert_eq!(back, idx);
        for set in idx.iter() {
            for p in &set.properties {
                assert_eq!(count_placeholders(&p.pattern), 1);
            }
        }
    }
}
