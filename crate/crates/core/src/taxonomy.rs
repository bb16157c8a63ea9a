//! A noun-sense hierarchy with first-sense lookup and depth-based cut points.
//!
//! The on-disk form is a TSV with one sense per line:
//!
//! ```text
//! book.n.01<TAB>1<TAB>publication.n.01
//! entity.n.01<TAB>1<TAB>
//! ```
//!
//! The third column lists comma-separated parents; an empty column (or `_`)
//! marks a root.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const DEFAULT_CUT_DEPTH: usize = 4;

/// A noun sense rendered as `lemma.n.NN`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SenseId {
    pub lemma: String,
    pub sense_number: u32,
}

impl SenseId {
    pub fn new(lemma: impl Into<String>, sense_number: u32) -> Self {
        SenseId {
            lemma: lemma.into(),
            sense_number,
        }
    }

    /// The lemma with underscores turned into spaces.
    pub fn display_lemma(&self) -> String {
        self.lemma.replace('_', " ")
    }
}

impl fmt::Display for SenseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.n.{:02}", self.lemma, self.sense_number)
    }
}

impl FromStr for SenseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("malformed sense id {s:?}"));
        let (rest, num) = s.rsplit_once('.').ok_or_else(bad)?;
        let (lemma, pos) = rest.rsplit_once('.').ok_or_else(bad)?;
        if pos != "n" || lemma.is_empty() {
            return Err(bad());
        }
        let sense_number: u32 = num.parse().map_err(|_| bad())?;
        if sense_number == 0 {
            return Err(bad());
        }
        Ok(SenseId::new(lemma, sense_number))
    }
}

impl Serialize for SenseId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SenseId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default)]
struct Node {
    parents: BTreeSet<SenseId>,
    children: BTreeSet<SenseId>,
    depth: usize,
}

#[derive(Debug, Clone)]
pub struct Taxonomy {
    nodes: BTreeMap<SenseId, Node>,
    lemma_index: BTreeMap<String, Vec<SenseId>>,
    pub cut_depth: usize,
}

impl Taxonomy {
    /// Builds a taxonomy from `(sense, parents)` entries. Parents must be
    /// declared senses and the graph must be acyclic.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (SenseId, Vec<SenseId>)>,
    {
        let mut nodes: BTreeMap<SenseId, Node> = BTreeMap::new();
        let mut edges = Vec::new();
        for (sense, parents) in entries {
            if nodes.insert(sense.clone(), Node::default()).is_some() {
                return Err(Error::Format(format!("sense {sense} declared twice")));
            }
            for p in parents {
                edges.push((sense.clone(), p));
            }
        }
        for (child, parent) in edges {
            if !nodes.contains_key(&parent) {
                return Err(Error::Lookup {
                    kind: "parent sense",
                    name: format!("{parent} (of {child})"),
                });
            }
            if child == parent {
                return Err(Error::Format(format!("sense {child} is its own parent")));
            }
            nodes.get_mut(&child).expect("declared").parents.insert(parent.clone());
            nodes.get_mut(&parent).expect("declared").children.insert(child);
        }

        // Multi-source BFS from the roots gives shortest-path depths; senses it
        // never reaches lie on a cycle.
        let mut depth: BTreeMap<SenseId, usize> = BTreeMap::new();
        let mut queue: VecDeque<SenseId> = nodes
            .iter()
            .filter(|(_, n)| n.parents.is_empty())
            .map(|(s, _)| s.clone())
            .collect();
        if queue.is_empty() && !nodes.is_empty() {
            return Err(Error::Format("taxonomy has no root".into()));
        }
        for r in &queue {
            depth.insert(r.clone(), 0);
        }
        while let Some(s) = queue.pop_front() {
            let d = depth[&s];
            for c in &nodes[&s].children {
                if !depth.contains_key(c) {
                    depth.insert(c.clone(), d + 1);
                    queue.push_back(c.clone());
                }
            }
        }
        if let Some((s, _)) = nodes.iter().find(|(s, _)| !depth.contains_key(*s)) {
            return Err(Error::Format(format!("sense {s} lies on a hypernym cycle")));
        }
        Self::check_acyclic(&nodes)?;
        for (s, n) in nodes.iter_mut() {
            n.depth = depth[s];
        }

        let mut lemma_index: BTreeMap<String, Vec<SenseId>> = BTreeMap::new();
        for s in nodes.keys() {
            lemma_index.entry(s.lemma.clone()).or_default().push(s.clone());
        }
        for senses in lemma_index.values_mut() {
            senses.sort_by_key(|s| s.sense_number);
        }

        Ok(Taxonomy {
            nodes,
            lemma_index,
            cut_depth: DEFAULT_CUT_DEPTH,
        })
    }

    fn check_acyclic(nodes: &BTreeMap<SenseId, Node>) -> Result<()> {
        // Kahn's algorithm over child -> parent edges.
        let mut indegree: BTreeMap<&SenseId, usize> =
            nodes.iter().map(|(s, n)| (s, n.children.len())).collect();
        let mut ready: Vec<&SenseId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(s, _)| *s)
            .collect();
        let mut seen = 0;
        while let Some(s) = ready.pop() {
            seen += 1;
            for p in &nodes[s].parents {
                let d = indegree.get_mut(p).expect("declared");
                *d -= 1;
                if *d == 0 {
                    ready.push(p);
                }
            }
        }
        if seen != nodes.len() {
            return Err(Error::Format("hypernym graph contains a cycle".into()));
        }
        Ok(())
    }

    pub fn parse_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 2 {
                return Err(Error::parse(origin, lineno, "expected SENSE<TAB>NUMBER<TAB>PARENTS"));
            }
            let sense: SenseId = cols[0]
                .trim()
                .parse()
                .map_err(|e: Error| Error::parse(origin, lineno, e.to_string()))?;
            let number: u32 = cols[1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("bad sense number {:?}", cols[1])))?;
            if number != sense.sense_number {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("sense number {number} disagrees with id {sense}"),
                ));
            }
            let parents = match cols.get(2).map(|c| c.trim()) {
                None | Some("") | Some("_") => Vec::new(),
                Some(list) => list
                    .split(',')
                    .map(|p| {
                        p.trim()
                            .parse()
                            .map_err(|e: Error| Error::parse(origin, lineno, e.to_string()))
                    })
                    .collect::<Result<Vec<SenseId>>>()?,
            };
            entries.push((sense, parents));
        }
        Self::from_entries(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, &path.display().to_string())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (s, n) in &self.nodes {
            let parents: Vec<String> = n.parents.iter().map(|p| p.to_string()).collect();
            out.push_str(&format!("{s}\t{}\t{}\n", s.sense_number, parents.join(",")));
        }
        out
    }

    pub fn with_cut_depth(mut self, cut_depth: usize) -> Self {
        self.cut_depth = cut_depth;
        self
    }

    fn node(&self, sense: &SenseId) -> Result<&Node> {
        self.nodes.get(sense).ok_or_else(|| Error::Lookup {
            kind: "sense",
            name: sense.to_string(),
        })
    }

    pub fn contains(&self, sense: &SenseId) -> bool {
        self.nodes.contains_key(sense)
    }

    pub fn senses(&self) -> impl Iterator<Item = &SenseId> {
        self.nodes.keys()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// All senses of a lemma in sense-number order.
    pub fn senses_of(&self, lemma: &str) -> &[SenseId] {
        self.lemma_index.get(lemma).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_lemma(&self, lemma: &str) -> bool {
        self.lemma_index.contains_key(lemma)
    }

    pub fn first_sense(&self, lemma: &str) -> Option<&SenseId> {
        self.senses_of(lemma).first()
    }

    /// Shortest hypernym-path length to any root.
    pub fn depth(&self, sense: &SenseId) -> Result<usize> {
        Ok(self.node(sense)?.depth)
    }

    /// True when the sense is specific enough to anchor templates.
    pub fn below_cut(&self, sense: &SenseId) -> Result<bool> {
        Ok(self.depth(sense)? >= self.cut_depth)
    }

    /// Direct parents, sorted.
    pub fn hypernyms(&self, sense: &SenseId) -> Result<Vec<SenseId>> {
        Ok(self.node(sense)?.parents.iter().cloned().collect())
    }

    pub fn hyponyms(&self, sense: &SenseId) -> Result<Vec<SenseId>> {
        Ok(self.node(sense)?.children.iter().cloned().collect())
    }

    /// Senses sharing a direct parent with `sense`.
    pub fn co_hyponyms(&self, sense: &SenseId) -> Result<BTreeSet<SenseId>> {
        let node = self.node(sense)?;
        let mut out = BTreeSet::new();
        for p in &node.parents {
            out.extend(self.nodes[p].children.iter().cloned());
        }
        out.remove(sense);
        Ok(out)
    }

    /// True when `ancestor` is reachable from `sense` along hypernym edges
    /// (a sense is its own ancestor).
    pub fn is_a(&self, sense: &SenseId, ancestor: &SenseId) -> bool {
        let mut stack = vec![sense];
        let mut seen = BTreeSet::new();
        while let Some(s) = stack.pop() {
            if s == ancestor {
                return true;
            }
            if !seen.insert(s) {
                continue;
            }
            if let Some(n) = self.nodes.get(s) {
                stack.extend(n.parents.iter());
            }
        }
        false
    }

    /// Senses with at least one child, i.e. the parents of co-hyponym families.
    pub fn internal_senses(&self) -> impl Iterator<Item = &SenseId> {
        self.nodes
            .iter()
            .filter(|(_, n)| !n.children.is_empty())
            .map(|(s, _)| s)
    }

    pub fn below_cut_count(&self) -> usize {
        self.nodes.values().filter(|n| n.depth >= self.cut_depth).count()
    }
}
