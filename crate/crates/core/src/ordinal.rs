//! Threshold-based ordinal regression and the baseline predictors.
//!
//! The regression scores `z = w . x` and predicts `1 + #{k : z > theta_k}`.
//! Thresholds are parameterized as `theta_1` plus softplus increments, so
//! they stay ordered whatever the optimizer does.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::OrdinalLabel;
use crate::corpus_io::write_atomic;
use crate::error::{Error, Result};
use crate::optim::{minimize, LineSearchConfig};

pub const NUM_THRESHOLDS: usize = 4;
pub const MIN_TRAINING_ROWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossVariant {
    /// Unit-weight logistic loss on every threshold.
    #[default]
    AllThresholdLogistic,
    /// Threshold `k` weighted by the squared-error cost difference between
    /// predicting `k` and `k + 1`.
    SquaredErrorLink,
}

impl std::str::FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-threshold-logistic" | "at" => Ok(LossVariant::AllThresholdLogistic),
            "squared-error-link" | "se" => Ok(LossVariant::SquaredErrorLink),
            _ => Err(Error::Lookup { kind: "loss variant", name: s.to_string() }),
        }
    }
}

impl LossVariant {
    /// Weight of threshold `k` (1-based) for a label of value `y`.
    fn weight(self, k: usize, y: usize) -> f64 {
        match self {
            LossVariant::AllThresholdLogistic => 1.0,
            LossVariant::SquaredErrorLink => (2.0 * (k as f64 - y as f64) + 1.0).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrdinalConfig {
    pub lambda: f64,
    pub loss: LossVariant,
    pub standardize: bool,
    pub optimizer: LineSearchConfig,
    pub seed: u64,
}

impl Default for OrdinalConfig {
    fn default() -> Self {
        OrdinalConfig {
            lambda: 1e-3,
            loss: LossVariant::default(),
            standardize: true,
            optimizer: LineSearchConfig { max_iter: 2000, grad_tol: 1e-6, ..Default::default() },
            seed: 0,
        }
    }
}

/// Per-column affine transform fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Zero mean and unit variance; constant columns keep scale 1.
    pub fn fit(x: &[Vec<f64>]) -> Standardizer {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let scale = var.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, scale }
    }

    pub fn identity(d: usize) -> Standardizer {
        Standardizer { mean: vec![0.0; d], scale: vec![1.0; d] }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-m))` and its derivative in `m`.
fn logistic_loss(m: f64) -> (f64, f64) {
    (softplus(-m), -sigmoid(-m))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thresholds from the unconstrained parameters `[theta_1, rho_1..rho_3]`.
pub fn thresholds_from(raw: &[f64]) -> [f64; NUM_THRESHOLDS] {
    let mut t = [raw[0]; NUM_THRESHOLDS];
    for k in 1..NUM_THRESHOLDS {
        t[k] = t[k - 1] + softplus(raw[k]);
    }
    t
}

/// The training objective over parameters `[w; theta_1; rho]` on
/// already-transformed features. Returns value and gradient.
pub fn objective(params: &[f64], x: &[Vec<f64>], y: &[OrdinalLabel], lambda: f64, loss: LossVariant) -> (f64, Vec<f64>) {
    let d = params.len() - NUM_THRESHOLDS;
    let (w, raw) = params.split_at(d);
    let theta = thresholds_from(raw);
    let mut value = lambda * dot(w, w);
    let mut grad = vec![0.0; params.len()];
    for (i, row) in x.iter().enumerate() {
        let z = dot(w, row);
        let yv = y[i].value() as usize;
        let mut dz = 0.0;
        for k in 1..=NUM_THRESHOLDS {
            let s = if k >= yv { 1.0 } else { -1.0 };
            let c = loss.weight(k, yv);
            let (l, dl) = logistic_loss(s * (theta[k - 1] - z));
            value += c * l;
            // d/dtheta_k = c dl s, d/dz = -c dl s
            let g = c * dl * s;
            dz -= g;
            accumulate_theta_grad(&mut grad[d..], raw, k - 1, g);
        }
        for (gj, xj) in grad[..d].iter_mut().zip(row) {
            *gj += dz * xj;
        }
    }
    for j in 0..d {
        grad[j] += 2.0 * lambda * w[j];
    }
    (value, grad)
}

/// Chain rule from `d/dtheta_k` to the raw threshold parameters.
fn accumulate_theta_grad(grad_raw: &mut [f64], raw: &[f64], k: usize, g: f64) {
    grad_raw[0] += g;
    for j in 1..=k {
        grad_raw[j] += g * sigmoid(raw[j]);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalModel {
    pub weights: Vec<f64>,
    pub thresholds: [f64; NUM_THRESHOLDS],
    pub lambda: f64,
    pub loss: LossVariant,
    pub standardizer: Standardizer,
    /// Set when training saw a single class; the model always predicts it.
    #[serde(default)]
    pub constant: Option<OrdinalLabel>,
    pub seed: u64,
    #[serde(default)]
    pub converged: bool,
}

fn check_xy(x: &[Vec<f64>], y: &[OrdinalLabel]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} feature rows but {} labels", x.len(), y.len())));
    }
    let d = x.first().map_or(0, Vec::len);
    if let Some(i) = x.iter().position(|r| r.len() != d) {
        return Err(Error::invalid(format!("feature row {} has {} columns, expected {d}", i + 1, x[i].len())));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    Ok(d)
}

pub fn train_ordinal(x: &[Vec<f64>], y: &[OrdinalLabel], cfg: &OrdinalConfig) -> Result<OrdinalModel> {
    let d = check_xy(x, y)?;
    if y.len() < MIN_TRAINING_ROWS {
        return Err(Error::invalid(format!("need at least {MIN_TRAINING_ROWS} training rows, got {}", y.len())));
    }
    if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
        return Err(Error::invalid("lambda must be finite and non-negative"));
    }
    let standardizer = if cfg.standardize { Standardizer::fit(x) } else { Standardizer::identity(d) };
    if y.iter().all(|l| *l == y[0]) {
        log::warn!("training labels are all {}; the model predicts that class", y[0].value());
        return Ok(OrdinalModel {
            weights: vec![0.0; d],
            thresholds: [0.0; NUM_THRESHOLDS],
            lambda: cfg.lambda,
            loss: cfg.loss,
            standardizer,
            constant: Some(y[0]),
            seed: cfg.seed,
            converged: true,
        });
    }
    let xs: Vec<Vec<f64>> = x.iter().map(|r| standardizer.apply(r)).collect();
    let unit_increment = (1f64.exp() - 1.0).ln();
    let mut p0 = vec![0.0; d];
    p0.extend([-1.5, unit_increment, unit_increment, unit_increment]);
    let result = minimize(|p| objective(p, &xs, y, cfg.lambda, cfg.loss), p0, &cfg.optimizer);
    if !result.value.is_finite() || result.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("ordinal training diverged after {} iterations", result.iterations)));
    }
    if !result.converged {
        log::warn!("ordinal training stopped at the iteration cap ({})", result.iterations);
    }
    let (w, raw) = result.x.split_at(d);
    Ok(OrdinalModel {
        weights: w.to_vec(),
        thresholds: thresholds_from(raw),
        lambda: cfg.lambda,
        loss: cfg.loss,
        standardizer,
        constant: None,
        seed: cfg.seed,
        converged: result.converged,
    })
}

/// `1 + #{k : score > theta_k}`.
pub fn label_from_score(score: f64, thresholds: &[f64; NUM_THRESHOLDS]) -> OrdinalLabel {
    let above = thresholds.iter().filter(|t| score > **t).count();
    OrdinalLabel::from_value(1 + above as i64).expect("1..=5 by construction")
}

impl OrdinalModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.weights, &self.standardizer.apply(x))
    }

    pub fn predict(&self, x: &[f64]) -> OrdinalLabel {
        match self.constant {
            Some(l) => l,
            None => label_from_score(self.score(x), &self.thresholds),
        }
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Vec<OrdinalLabel> {
        x.iter().map(|r| self.predict(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    MostFrequent,
    FreqSampling,
    RoundedAverage,
    OneVsAllSvm,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] =
        [BaselineKind::MostFrequent, BaselineKind::FreqSampling, BaselineKind::RoundedAverage, BaselineKind::OneVsAllSvm];

    pub fn display_name(self) -> &'static str {
        match self {
            BaselineKind::MostFrequent => "Most Frequent",
            BaselineKind::FreqSampling => "Freq. Sampling",
            BaselineKind::RoundedAverage => "Rounded Average",
            BaselineKind::OneVsAllSvm => "One-vs-All",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "most-frequent" => Ok(BaselineKind::MostFrequent),
            "freq-sampling" => Ok(BaselineKind::FreqSampling),
            "rounded-average" => Ok(BaselineKind::RoundedAverage),
            "one-vs-all-svm" | "svm" => Ok(BaselineKind::OneVsAllSvm),
            _ => Err(Error::Lookup { kind: "baseline", name: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    pub standardize: bool,
    pub optimizer: LineSearchConfig,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { c: 1.0, standardize: true, optimizer: LineSearchConfig { max_iter: 2000, grad_tol: 1e-6, ..Default::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaselineModel {
    MostFrequent { label: OrdinalLabel },
    FreqSampling { distribution: [f64; 5], seed: u64 },
    RoundedAverage { label: OrdinalLabel },
    OneVsAllSvm { classifiers: Vec<LinearClassifier>, standardizer: Standardizer },
}

fn label_counts(y: &[OrdinalLabel]) -> [usize; 5] {
    let mut c = [0; 5];
    for l in y {
        c[l.index()] += 1;
    }
    c
}

/// Squared-hinge objective `0.5 |w|^2 + C sum max(0, 1 - t (w.x + b))^2`
/// over `[w; b]`, the bias unregularized.
pub fn squared_hinge_objective(params: &[f64], x: &[Vec<f64>], t: &[f64], c: f64) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let (w, b) = (&params[..d], params[d]);
    let mut value = 0.5 * dot(w, w);
    let mut grad: Vec<f64> = w.to_vec();
    grad.push(0.0);
    for (row, &ti) in x.iter().zip(t) {
        let slack = 1.0 - ti * (dot(w, row) + b);
        if slack > 0.0 {
            value += c * slack * slack;
            let g = -2.0 * c * slack * ti;
            for (gj, xj) in grad[..d].iter_mut().zip(row) {
                *gj += g * xj;
            }
            grad[d] += g;
        }
    }
    (value, grad)
}

pub fn fit_baseline(
    kind: BaselineKind,
    y: &[OrdinalLabel],
    x: Option<&[Vec<f64>]>,
    svm: &SvmConfig,
    seed: u64,
) -> Result<BaselineModel> {
    if y.is_empty() {
        return Err(Error::invalid("baseline needs at least one training label"));
    }
    let counts = label_counts(y);
    Ok(match kind {
        BaselineKind::MostFrequent => {
            let best = (0..5).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
            BaselineModel::MostFrequent { label: OrdinalLabel::from_value(best as i64 + 1).unwrap() }
        }
        BaselineKind::FreqSampling => {
            let n = y.len() as f64;
            BaselineModel::FreqSampling { distribution: counts.map(|c| c as f64 / n), seed }
        }
        BaselineKind::RoundedAverage => {
            let mean = y.iter().map(|l| l.value() as f64).sum::<f64>() / y.len() as f64;
            BaselineModel::RoundedAverage { label: OrdinalLabel::round_half_up(mean) }
        }
        BaselineKind::OneVsAllSvm => {
            let x = x.ok_or_else(|| Error::invalid("the SVM baseline needs training features"))?;
            let d = check_xy(x, y)?;
            let standardizer = if svm.standardize { Standardizer::fit(x) } else { Standardizer::identity(d) };
            let xs: Vec<Vec<f64>> = x.iter().map(|r| standardizer.apply(r)).collect();
            let classifiers = (1..=5)
                .map(|class| {
                    let t: Vec<f64> = y.iter().map(|l| if l.value() as usize == class { 1.0 } else { -1.0 }).collect();
                    let r = minimize(|p| squared_hinge_objective(p, &xs, &t, svm.c), vec![0.0; d + 1], &svm.optimizer);
                    if !r.x.iter().all(|v| v.is_finite()) {
                        return Err(Error::Numeric(format!("SVM for class {class} diverged")));
                    }
                    Ok(LinearClassifier { weights: r.x[..d].to_vec(), bias: r.x[d] })
                })
                .collect::<Result<Vec<_>>>()?;
            BaselineModel::OneVsAllSvm { classifiers, standardizer }
        }
    })
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineModel::MostFrequent { .. } => BaselineKind::MostFrequent,
            BaselineModel::FreqSampling { .. } => BaselineKind::FreqSampling,
            BaselineModel::RoundedAverage { .. } => BaselineKind::RoundedAverage,
            BaselineModel::OneVsAllSvm { .. } => BaselineKind::OneVsAllSvm,
        }
    }

    /// Predictions for a batch of rows. Frequency sampling restarts its
    /// generator from the stored seed on every call.
    pub fn predict_all(&self, x: &[Vec<f64>]) -> Vec<OrdinalLabel> {
        match self {
            BaselineModel::MostFrequent { label } | BaselineModel::RoundedAverage { label } => vec![*label; x.len()],
            BaselineModel::FreqSampling { distribution, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let dist = WeightedIndex::new(distribution).expect("a nonempty label distribution");
                (0..x.len()).map(|_| OrdinalLabel::from_value(dist.sample(&mut rng) as i64 + 1).unwrap()).collect()
            }
            BaselineModel::OneVsAllSvm { classifiers, standardizer } => x
                .iter()
                .map(|row| {
                    let xs = standardizer.apply(row);
                    let margins: Vec<f64> = classifiers.iter().map(|c| dot(&c.weights, &xs) + c.bias).collect();
                    let best = (0..margins.len()).fold(0, |b, i| if margins[i] > margins[b] { i } else { b });
                    OrdinalLabel::from_value(best as i64 + 1).unwrap()
                })
                .collect(),
        }
    }
}

const MODEL_FORMAT: &str = "joci-ordinal";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum SavedModel {
    Ordinal(OrdinalModel),
    Baseline(BaselineModel),
}

/// A model file: the fitted model plus the feature columns it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub columns: Vec<String>,
    pub fitted: SavedModel,
}

impl ModelFile {
    pub fn new(columns: Vec<String>, fitted: SavedModel) -> Self {
        ModelFile { format: MODEL_FORMAT.into(), version: MODEL_VERSION, columns, fitted }
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Vec<OrdinalLabel> {
        match &self.fitted {
            SavedModel::Ordinal(m) => m.predict_all(x),
            SavedModel::Baseline(b) => b.predict_all(x),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(path.as_ref(), format!("{text}\n").as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: ModelFile = serde_json::from_str(&text)?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::Format(format!("{}: unsupported model file {} v{}", path.display(), m.format, m.version)));
        }
        Ok(m)
    }
}
