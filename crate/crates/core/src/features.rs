//! Pair features for the ordinal models: word overlap, embedding
//! similarity, seq2seq scores with their argmin indicators, and lengths.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::OrdinalLabel;
use crate::corpus_io::{EmbeddingTable, PairRecord};
use crate::error::{Error, Result};
use crate::seq2seq::{score_variants, VariantModels};
use crate::text::word_tokens;

pub const NUM_FEATURES: usize = 17;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "bow_overlap",
    "bow_overlap_norm",
    "sim_of_avg",
    "avg_of_sim",
    "s2s_ent",
    "s2s_neu",
    "s2s_con",
    "s2s_neu_con",
    "s2s_empty",
    "s2s_bin_ent",
    "s2s_bin_neu",
    "s2s_bin_con",
    "s2s_bin_neu_con",
    "s2s_bin_empty",
    "len_context",
    "len_diff",
    "hyp_longer",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "bow")]
    Bow,
    #[serde(rename = "sim")]
    Sim,
    #[serde(rename = "s2s")]
    S2s,
    #[serde(rename = "s2s-bin")]
    S2sBin,
    #[serde(rename = "len")]
    Len,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Bow, Family::Sim, Family::S2s, Family::S2sBin, Family::Len];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Bow => "bow",
            Family::Sim => "sim",
            Family::S2s => "s2s",
            Family::S2sBin => "s2s-bin",
            Family::Len => "len",
        }
    }

    /// Column range of this family in a feature vector.
    pub fn columns(self) -> std::ops::Range<usize> {
        match self {
            Family::Bow => 0..2,
            Family::Sim => 2..4,
            Family::S2s => 4..9,
            Family::S2sBin => 9..14,
            Family::Len => 14..17,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim())
            .ok_or_else(|| Error::Lookup { kind: "feature family", name: s.to_string() })
    }
}

/// Parses a comma-separated family list such as `sim,bow,s2s`.
pub fn parse_families(s: &str) -> Result<Vec<Family>> {
    let mut out: Vec<Family> = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let f: Family = part.parse()?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    Ok(out)
}

/// Column indices of the selected families, in canonical order.
pub fn family_columns(families: &[Family]) -> Vec<usize> {
    Family::ALL
        .iter()
        .filter(|f| families.contains(f))
        .flat_map(|f| f.columns())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; NUM_FEATURES],
    /// `true` where the family could not be computed; its values are 0.
    pub masked: [bool; 5],
}

impl Default for FeatureVector {
    fn default() -> Self {
        FeatureVector { values: [0.0; NUM_FEATURES], masked: [false; 5] }
    }
}

impl FeatureVector {
    pub fn family(&self, f: Family) -> &[f64] {
        &self.values[f.columns()]
    }

    pub fn is_masked(&self, f: Family) -> bool {
        self.masked[f.index()]
    }

    fn set(&mut self, f: Family, vals: &[f64]) {
        self.values[f.columns()].copy_from_slice(vals);
    }

    fn mask(&mut self, f: Family) {
        self.masked[f.index()] = true;
        self.values[f.columns()].fill(0.0);
    }

    pub fn select(&self, columns: &[usize]) -> Vec<f64> {
        columns.iter().map(|&c| self.values[c]).collect()
    }
}

/// Type overlap and overlap over hypothesis token count.
pub fn bow_features(context: &str, hypothesis: &str) -> (usize, f64) {
    let c: HashSet<String> = word_tokens(context).into_iter().collect();
    let h_tokens = word_tokens(hypothesis);
    let h: HashSet<&String> = h_tokens.iter().collect();
    let overlap = h.iter().filter(|w| c.contains(**w)).count();
    let norm = if h_tokens.is_empty() { 0.0 } else { overlap as f64 / h_tokens.len() as f64 };
    (overlap, norm)
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine of the summed vectors and mean cosine over all cross pairs, using
/// in-vocabulary tokens only. `None` when either side has no usable vector.
pub fn sim_features(context: &str, hypothesis: &str, emb: &EmbeddingTable) -> Option<(f64, f64)> {
    let vecs = |s: &str| -> Vec<&[f64]> { word_tokens(s).iter().filter_map(|w| emb.get(w)).collect() };
    let cv = vecs(context);
    let hv = vecs(hypothesis);
    if cv.is_empty() || hv.is_empty() {
        return None;
    }
    let sum = |vs: &[&[f64]]| {
        let mut acc = vec![0.0; emb.dimension];
        for v in vs {
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += x;
            }
        }
        acc
    };
    let sim_of_avg = cosine(&sum(&cv), &sum(&hv))?;
    let mut total = 0.0;
    for c in &cv {
        for h in &hv {
            total += cosine(c, h).unwrap_or(0.0);
        }
    }
    Some((sim_of_avg, total / (cv.len() * hv.len()) as f64))
}

/// One-hot at the lowest score; ties go to the lowest index.
pub fn s2s_bin(scores: &[f64; 5]) -> [f64; 5] {
    let mut best = 0;
    for i in 1..5 {
        if scores[i] < scores[best] {
            best = i;
        }
    }
    let mut out = [0.0; 5];
    out[best] = 1.0;
    out
}

/// `(|C|, |C| - |H|, |H| > |C|)` in word tokens.
pub fn len_features(context: &str, hypothesis: &str) -> (usize, i64, bool) {
    let c = word_tokens(context).len();
    let h = word_tokens(hypothesis).len();
    (c, c as i64 - h as i64, h > c)
}

/// Computes feature vectors with whatever resources are available; missing
/// resources mask their families.
#[derive(Default, Clone, Copy)]
pub struct Featurizer<'a> {
    pub embeddings: Option<&'a EmbeddingTable>,
    pub s2s: Option<&'a VariantModels>,
}

impl<'a> Featurizer<'a> {
    pub fn featurize(&self, context: &str, hypothesis: &str) -> Result<FeatureVector> {
        let mut fv = FeatureVector::default();
        let (overlap, norm) = bow_features(context, hypothesis);
        fv.set(Family::Bow, &[overlap as f64, norm]);

        match self.embeddings.and_then(|e| sim_features(context, hypothesis, e)) {
            Some((a, b)) => fv.set(Family::Sim, &[a, b]),
            None => fv.mask(Family::Sim),
        }

        let scores = match self.s2s {
            Some(models) => score_variants(context, hypothesis, models)?,
            None => [None; 5],
        };
        if scores.iter().all(Option::is_some) {
            let s = scores.map(|x| x.unwrap_or_default());
            fv.set(Family::S2s, &s);
            fv.set(Family::S2sBin, &s2s_bin(&s));
        } else {
            fv.mask(Family::S2s);
            fv.mask(Family::S2sBin);
        }

        let (lc, diff, longer) = len_features(context, hypothesis);
        fv.set(Family::Len, &[lc as f64, diff as f64, if longer { 1.0 } else { 0.0 }]);
        Ok(fv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub features: FeatureVector,
    pub gold: Option<OrdinalLabel>,
}

/// Featurized pairs, the unit the ordinal models train and evaluate on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

const MASK_PREFIX: &str = "mask_";
pub const DEFAULT_LABEL_COLUMN: &str = "gold";

impl FeatureTable {
    pub fn from_pairs(pairs: &[PairRecord], featurizer: &Featurizer) -> Result<FeatureTable> {
        let rows = pairs
            .par_iter()
            .map(|p| {
                Ok(FeatureRow { features: featurizer.featurize(&p.context, &p.hypothesis)?, gold: p.gold })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureTable { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Matrix of the selected columns and the gold labels; rows without a
    /// gold label are an error.
    pub fn xy(&self, columns: &[usize]) -> Result<(Vec<Vec<f64>>, Vec<OrdinalLabel>)> {
        let mut x = Vec::with_capacity(self.rows.len());
        let mut y = Vec::with_capacity(self.rows.len());
        for (i, r) in self.rows.iter().enumerate() {
            let g = r.gold.ok_or_else(|| Error::invalid(format!("feature row {} has no gold label", i + 1)))?;
            x.push(r.features.select(columns));
            y.push(g);
        }
        Ok((x, y))
    }

    pub fn matrix(&self, columns: &[usize]) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.select(columns)).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = FEATURE_NAMES
            .iter()
            .map(|s| s.to_string())
            .chain(Family::ALL.iter().map(|f| format!("{MASK_PREFIX}{f}")))
            .chain(std::iter::once(DEFAULT_LABEL_COLUMN.to_string()))
            .collect();
        out.push_str(&header.join("\t"));
        out.push('\n');
        for r in &self.rows {
            let mut cells: Vec<String> = r.features.values.iter().map(|v| format_value(*v)).collect();
            cells.extend(r.features.masked.iter().map(|m| if *m { "1" } else { "0" }.to_string()));
            cells.push(r.gold.map(|g| g.value().to_string()).unwrap_or_default());
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }

    /// Parses a feature TSV; `label_column` names the gold column (missing
    /// column or empty cells give rows without gold).
    pub fn parse_tsv(text: &str, origin: &str, label_column: &str) -> Result<FeatureTable> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Ok(FeatureTable::default());
        };
        let cols: Vec<&str> = header.split('\t').collect();
        let find = |name: &str| cols.iter().position(|c| *c == name);
        let feature_idx: Vec<usize> = FEATURE_NAMES
            .iter()
            .map(|n| find(n).ok_or_else(|| Error::parse(origin, 1, format!("missing feature column {n}"))))
            .collect::<Result<_>>()?;
        let mask_idx: Vec<Option<usize>> = Family::ALL.iter().map(|f| find(&format!("{MASK_PREFIX}{f}"))).collect();
        let label_idx = find(label_column);
        if label_idx.is_none() {
            log::warn!("{origin}: no label column {label_column:?}");
        }

        let mut rows = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != cols.len() {
                return Err(Error::parse(origin, lineno, format!("expected {} columns, found {}", cols.len(), cells.len())));
            }
            let mut fv = FeatureVector::default();
            for (k, &c) in feature_idx.iter().enumerate() {
                fv.values[k] = cells[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(origin, lineno, format!("bad value {:?} for {}", cells[c], FEATURE_NAMES[k])))?;
            }
            for (k, idx) in mask_idx.iter().enumerate() {
                if let Some(c) = idx {
                    fv.masked[k] = match cells[*c] {
                        "0" => false,
                        "1" => true,
                        other => return Err(Error::parse(origin, lineno, format!("bad mask value {other:?}"))),
                    };
                }
            }
            let gold = match label_idx.map(|c| cells[c].trim()) {
                None | Some("") => None,
                Some(v) => {
                    let n: i64 = v.parse().map_err(|_| Error::parse(origin, lineno, format!("bad label {v:?}")))?;
                    Some(OrdinalLabel::from_value(n).ok_or_else(|| Error::parse(origin, lineno, format!("label {n} outside 1..5")))?)
                }
            };
            rows.push(FeatureRow { features: fv, gold });
        }
        Ok(FeatureTable { rows })
    }

    pub fn load(path: impl AsRef<Path>, label_column: &str) -> Result<FeatureTable> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, &path.display().to_string(), label_column)
    }
}

/// Shortest decimal form that round-trips.
fn format_value(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}
