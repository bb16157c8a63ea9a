//! Ordinal labels, annotation aggregation and agreement statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::corpus_io::PairRecord;
use crate::error::{Error, Result};

/// Five-point subjective likelihood scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OrdinalLabel {
    Impossible = 1,
    TechnicallyPossible = 2,
    Plausible = 3,
    Likely = 4,
    VeryLikely = 5,
}

impl OrdinalLabel {
    pub const ALL: [OrdinalLabel; 5] = [
        OrdinalLabel::Impossible,
        OrdinalLabel::TechnicallyPossible,
        OrdinalLabel::Plausible,
        OrdinalLabel::Likely,
        OrdinalLabel::VeryLikely,
    ];

    pub fn from_value(value: i64) -> Option<Self> {
        match value {
            1 => Some(OrdinalLabel::Impossible),
            2 => Some(OrdinalLabel::TechnicallyPossible),
            3 => Some(OrdinalLabel::Plausible),
            4 => Some(OrdinalLabel::Likely),
            5 => Some(OrdinalLabel::VeryLikely),
            _ => None,
        }
    }

    pub fn value(self) -> u8 {
        self as u8
    }

    /// Zero-based position on the scale.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            OrdinalLabel::Impossible => "impossible",
            OrdinalLabel::TechnicallyPossible => "technically possible",
            OrdinalLabel::Plausible => "plausible",
            OrdinalLabel::Likely => "likely",
            OrdinalLabel::VeryLikely => "very likely",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        OrdinalLabel::ALL.into_iter().find(|l| l.name() == name)
    }

    /// Clamps and rounds half-up a real score onto the scale.
    pub fn round_half_up(x: f64) -> Self {
        let v = (x + 0.5).floor().clamp(1.0, 5.0) as i64;
        OrdinalLabel::from_value(v).expect("clamped to 1..=5")
    }
}

impl fmt::Display for OrdinalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for OrdinalLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.value())
    }
}

impl<'de> Deserialize<'de> for OrdinalLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        OrdinalLabel::from_value(v)
            .ok_or_else(|| de::Error::custom(format!("ordinal label out of range: {v}")))
    }
}

/// One annotator's judgment: a label or "NA" (the hypothesis is nonsense).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Judgment {
    Label(OrdinalLabel),
    Na,
}

impl Judgment {
    pub fn label(self) -> Option<OrdinalLabel> {
        match self {
            Judgment::Label(l) => Some(l),
            Judgment::Na => None,
        }
    }

    pub fn is_na(self) -> bool {
        matches!(self, Judgment::Na)
    }
}

impl From<OrdinalLabel> for Judgment {
    fn from(l: OrdinalLabel) -> Self {
        Judgment::Label(l)
    }
}

impl Serialize for Judgment {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Judgment::Label(l) => l.serialize(s),
            Judgment::Na => s.serialize_str("NA"),
        }
    }
}

impl<'de> Deserialize<'de> for Judgment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct JudgmentVisitor;

        impl Visitor<'_> for JudgmentVisitor {
            type Value = Judgment;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an integer label 1..5 or \"NA\"")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Judgment, E> {
                OrdinalLabel::from_value(v)
                    .map(Judgment::Label)
                    .ok_or_else(|| E::custom(format!("ordinal label out of range: {v}")))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Judgment, E> {
                self.visit_i64(v.min(i64::MAX as u64) as i64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Judgment, E> {
                if v.eq_ignore_ascii_case("na") {
                    Ok(Judgment::Na)
                } else {
                    Err(E::custom(format!("unexpected judgment {v:?}")))
                }
            }
        }

        d.deserialize_any(JudgmentVisitor)
    }
}

/// A judgment with an optional worker id. Serialized as a bare judgment when
/// the worker is unknown, otherwise as `{"worker": .., "label": ..}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub worker: Option<String>,
    pub judgment: Judgment,
}

impl Annotation {
    pub fn anonymous(judgment: impl Into<Judgment>) -> Self {
        Annotation {
            worker: None,
            judgment: judgment.into(),
        }
    }

    pub fn by(worker: &str, judgment: impl Into<Judgment>) -> Self {
        Annotation {
            worker: Some(worker.to_string()),
            judgment: judgment.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AnnotationRepr {
    Bare(Judgment),
    Tagged { worker: String, label: Judgment },
}

impl Serialize for Annotation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match &self.worker {
            None => AnnotationRepr::Bare(self.judgment),
            Some(w) => AnnotationRepr::Tagged {
                worker: w.clone(),
                label: self.judgment,
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Annotation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match AnnotationRepr::deserialize(d)? {
            AnnotationRepr::Bare(judgment) => Annotation {
                worker: None,
                judgment,
            },
            AnnotationRepr::Tagged { worker, label } => Annotation {
                worker: Some(worker),
                judgment: label,
            },
        })
    }
}

/// The worker-attributed annotations of one pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    entries: BTreeMap<String, Judgment>,
}

impl AnnotationSet {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Judgment)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (worker, judgment) in entries {
            let worker = worker.into();
            if map.insert(worker.clone(), judgment).is_some() {
                return Err(Error::invalid(format!(
                    "worker {worker} labeled the same pair twice"
                )));
            }
        }
        Ok(AnnotationSet { entries: map })
    }

    /// Builds the set from a record's annotations; anonymous entries are
    /// given positional ids `#0`, `#1`, ...
    pub fn from_record(record: &PairRecord) -> Result<Self> {
        AnnotationSet::new(record.annotations.iter().enumerate().map(|(i, a)| {
            (
                a.worker.clone().unwrap_or_else(|| format!("#{i}")),
                a.judgment,
            )
        }))
    }

    pub fn get(&self, worker: &str) -> Option<Judgment> {
        self.entries.get(worker).copied()
    }

    pub fn workers(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Vote rule for discarding pairs marked as nonsense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NaPolicy {
    #[default]
    AnyNa,
    MajorityNa,
}

impl NaPolicy {
    fn drops(self, annotations: &[Annotation]) -> bool {
        let na = annotations.iter().filter(|a| a.judgment.is_na()).count();
        match self {
            NaPolicy::AnyNa => na > 0,
            NaPolicy::MajorityNa => 2 * na > annotations.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaFilterOutcome {
    pub kept: Vec<PairRecord>,
    pub dropped: usize,
}

impl NaFilterOutcome {
    pub fn drop_rate(&self) -> f64 {
        let total = self.kept.len() + self.dropped;
        if total == 0 {
            0.0
        } else {
            self.dropped as f64 / total as f64
        }
    }
}

pub fn filter_na(records: Vec<PairRecord>, policy: NaPolicy) -> NaFilterOutcome {
    let total = records.len();
    let kept: Vec<PairRecord> = records
        .into_iter()
        .filter(|r| !policy.drops(&r.annotations))
        .collect();
    NaFilterOutcome {
        dropped: total - kept.len(),
        kept,
    }
}

/// Median label; the lower median for even counts.
pub fn aggregate_median(labels: &[OrdinalLabel]) -> Result<OrdinalLabel> {
    if labels.is_empty() {
        return Err(Error::invalid("median of an empty label list"));
    }
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    Ok(sorted[(sorted.len() - 1) / 2])
}

/// Quadratic weighted kappa with a degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa {
    pub value: f64,
    /// Set when the expected-disagreement denominator vanished.
    pub degenerate: bool,
}

/// Quadratic weighted Cohen's kappa of two label sequences on a `k`-point
/// scale. Labels are 1-based.
pub fn qwk(a: &[OrdinalLabel], b: &[OrdinalLabel]) -> Result<Kappa> {
    let a: Vec<usize> = a.iter().map(|l| l.index()).collect();
    let b: Vec<usize> = b.iter().map(|l| l.index()).collect();
    qwk_indices(&a, &b, 5)
}

/// Kappa over zero-based category indices `< k`.
pub fn qwk_indices(a: &[usize], b: &[usize], k: usize) -> Result<Kappa> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "kappa over sequences of different length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("kappa over empty sequences"));
    }
    if k < 2 {
        return Err(Error::invalid("kappa needs at least two categories"));
    }
    if let Some(&bad) = a.iter().chain(b).find(|&&x| x >= k) {
        return Err(Error::invalid(format!("category {bad} outside 0..{k}")));
    }

    let n = a.len() as f64;
    let mut observed = vec![0.0; k * k];
    let mut row = vec![0.0; k];
    let mut col = vec![0.0; k];
    for (&i, &j) in a.iter().zip(b) {
        observed[i * k + j] += 1.0 / n;
        row[i] += 1.0 / n;
        col[j] += 1.0 / n;
    }

    let denom_scale = ((k - 1) * (k - 1)) as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = ((i as f64 - j as f64).powi(2)) / denom_scale;
            num += w * observed[i * k + j];
            den += w * row[i] * col[j];
        }
    }

    if den == 0.0 {
        // Both raters used a single, shared category.
        return Ok(if num == 0.0 {
            Kappa {
                value: 1.0,
                degenerate: false,
            }
        } else {
            Kappa {
                value: 0.0,
                degenerate: true,
            }
        });
    }
    Ok(Kappa {
        value: 1.0 - num / den,
        degenerate: false,
    })
}

/// Labels of two workers on the items both labeled (NA excluded).
fn co_annotated(sets: &[AnnotationSet], w1: &str, w2: &str) -> (Vec<OrdinalLabel>, Vec<OrdinalLabel>) {
    sets.iter()
        .filter_map(|s| {
            let a = s.get(w1)?.label()?;
            let b = s.get(w2)?.label()?;
            Some((a, b))
        })
        .unzip()
}

fn all_workers(sets: &[AnnotationSet]) -> BTreeSet<String> {
    sets.iter()
        .flat_map(|s| s.workers().map(str::to_string))
        .collect()
}

/// Pairwise kappa of every worker pair with at least one co-annotated item.
pub fn pairwise_kappas(sets: &[AnnotationSet]) -> BTreeMap<(String, String), f64> {
    let workers: Vec<String> = all_workers(sets).into_iter().collect();
    let mut out = BTreeMap::new();
    for (i, w1) in workers.iter().enumerate() {
        for w2 in &workers[i + 1..] {
            let (a, b) = co_annotated(sets, w1, w2);
            if a.is_empty() {
                continue;
            }
            let k = qwk(&a, &b).expect("equal nonempty lengths");
            out.insert((w1.clone(), w2.clone()), k.value);
        }
    }
    out
}

/// Mean of kappa over all overlapping worker pairs.
pub fn avg_pairwise_kappa(sets: &[AnnotationSet]) -> Result<f64> {
    let kappas = pairwise_kappas(sets);
    if kappas.is_empty() {
        return Err(Error::invalid(
            "no pair of workers overlaps on any labeled item",
        ));
    }
    Ok(kappas.values().sum::<f64>() / kappas.len() as f64)
}

/// Per-worker average kappa against every other worker they overlap with.
pub fn worker_agreement(sets: &[AnnotationSet]) -> BTreeMap<String, f64> {
    let kappas = pairwise_kappas(sets);
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for ((w1, w2), k) in &kappas {
        for w in [w1, w2] {
            let e = acc.entry(w.clone()).or_default();
            e.0 += k;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(w, (sum, n))| (w, sum / n as f64))
        .collect()
}

/// Workers whose average agreement with the others reaches `threshold`.
pub fn qualify_workers(sets: &[AnnotationSet], threshold: f64) -> BTreeSet<String> {
    let agreement = worker_agreement(sets);
    for w in all_workers(sets) {
        if !agreement.contains_key(&w) {
            log::warn!("worker {w} shares no labeled item with any other worker; excluded");
        }
    }
    agreement
        .into_iter()
        .filter(|(_, k)| *k >= threshold)
        .map(|(w, _)| w)
        .collect()
}

/// Per-pair agreement proxy: mean pairwise kappa between the pair's own
/// annotators, each kappa computed over every item that worker pair
/// co-annotated. `None` when no worker pair of the item overlaps.
pub fn per_pair_kappa(sets: &[AnnotationSet]) -> Vec<Option<f64>> {
    let kappas = pairwise_kappas(sets);
    sets.iter()
        .map(|s| {
            let workers: Vec<&str> = s.workers().collect();
            let mut sum = 0.0;
            let mut n = 0usize;
            for (i, w1) in workers.iter().enumerate() {
                for w2 in &workers[i + 1..] {
                    let key = if w1 < w2 {
                        (w1.to_string(), w2.to_string())
                    } else {
                        (w2.to_string(), w1.to_string())
                    };
                    if let Some(k) = kappas.get(&key) {
                        sum += k;
                        n += 1;
                    }
                }
            }
            (n > 0).then(|| sum / n as f64)
        })
        .collect()
}

/// Number of pairs with kappa at or above each threshold.
pub fn kappa_growth_curve(pair_kappas: &[f64], thresholds: &[f64]) -> Vec<(f64, usize)> {
    thresholds
        .iter()
        .map(|&t| (t, pair_kappas.iter().filter(|&&k| k >= t).count()))
        .collect()
}

/// Evenly spaced thresholds from `lo` to `hi` inclusive.
pub fn threshold_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![lo];
    }
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    pub values: [f64; 5],
    /// Records without a gold label.
    pub skipped: usize,
}

pub fn label_distribution(records: &[PairRecord], normalize: bool) -> LabelDistribution {
    let mut values = [0.0; 5];
    let mut skipped = 0;
    for r in records {
        match r.gold {
            Some(l) => values[l.index()] += 1.0,
            None => skipped += 1,
        }
    }
    if normalize {
        let total: f64 = values.iter().sum();
        if total > 0.0 {
            values.iter_mut().for_each(|v| *v /= total);
        }
    }
    LabelDistribution { values, skipped }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    /// `counts[i][j]`: series-0 label `i + 1`, series-1 label `j + 1`.
    pub counts: [[f64; 5]; 5],
    pub skipped: usize,
}

pub fn joint_distribution(
    pairs: &[(Option<OrdinalLabel>, Option<OrdinalLabel>)],
    normalize: bool,
) -> JointDistribution {
    let mut counts = [[0.0; 5]; 5];
    let mut skipped = 0;
    for pair in pairs {
        match pair {
            (Some(a), Some(b)) => counts[a.index()][b.index()] += 1.0,
            _ => skipped += 1,
        }
    }
    if normalize {
        let total: f64 = counts.iter().flatten().sum();
        if total > 0.0 {
            counts.iter_mut().flatten().for_each(|v| *v /= total);
        }
    }
    JointDistribution { counts, skipped }
}

/// Fills `gold` with the median of the non-NA annotations. Records without
/// any label keep their existing gold.
pub fn assign_gold(records: &mut [PairRecord]) {
    for r in records {
        let labels: Vec<OrdinalLabel> = r
            .annotations
            .iter()
            .filter_map(|a| a.judgment.label())
            .collect();
        if let Ok(m) = aggregate_median(&labels) {
            r.gold = Some(m);
        }
    }
}
