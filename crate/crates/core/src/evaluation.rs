//! Metrics (MSE, Spearman with a permutation test) and the experiment
//! harness: regression against baselines, and family ablations.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::OrdinalLabel;
use crate::error::{Error, Result};
use crate::features::{family_columns, Family, FeatureTable, FEATURE_NAMES};
use crate::ordinal::{fit_baseline, train_ordinal, BaselineKind, OrdinalConfig, SvmConfig};

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

pub fn mse(pred: &[f64], gold: &[f64]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!("{} predictions for {} gold values", pred.len(), gold.len())));
    }
    if pred.is_empty() {
        return Err(Error::invalid("mse of empty sequences"));
    }
    Ok(pred.iter().zip(gold).map(|(p, g)| (p - g).powi(2)).sum::<f64>() / pred.len() as f64)
}

pub fn mse_labels(pred: &[OrdinalLabel], gold: &[OrdinalLabel]) -> Result<f64> {
    mse(&values(pred), &values(gold))
}

pub fn values(labels: &[OrdinalLabel]) -> Vec<f64> {
    labels.iter().map(|l| l.value() as f64).collect()
}

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    pub p_value: f64,
    /// Set when one side is constant; rho is then reported as 0 and p as 1.
    pub degenerate: bool,
}

/// Spearman's rho with a two-sided permutation p-value,
/// `(1 + #{|rho_perm| >= |rho|}) / (1 + permutations)`.
pub fn spearman(pred: &[f64], gold: &[f64], permutations: usize, seed: u64) -> Result<Spearman> {
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!("{} predictions for {} gold values", pred.len(), gold.len())));
    }
    if pred.len() < 3 {
        return Err(Error::invalid("spearman needs at least 3 pairs"));
    }
    let rp = average_ranks(pred);
    let rg = average_ranks(gold);
    let Some(rho) = pearson(&rp, &rg) else {
        return Ok(Spearman { rho: 0.0, p_value: 1.0, degenerate: true });
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = rp.clone();
    let mut extreme = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        let r = pearson(&shuffled, &rg).unwrap_or(0.0);
        if r.abs() >= rho.abs() - 1e-12 {
            extreme += 1;
        }
    }
    Ok(Spearman { rho, p_value: (extreme + 1) as f64 / (permutations + 1) as f64, degenerate: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub split: String,
    pub n: usize,
    pub mse: f64,
    pub rho: f64,
    pub p_value: f64,
    pub rho_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub families: Vec<Family>,
    pub ordinal: OrdinalConfig,
    pub svm: SvmConfig,
    pub seed: u64,
    pub permutations: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            families: Family::ALL.to_vec(),
            ordinal: OrdinalConfig::default(),
            svm: SvmConfig::default(),
            seed: 0,
            permutations: DEFAULT_PERMUTATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub seed: u64,
    pub permutations: usize,
}

pub const REGRESSION_ROW: &str = "Regression";

fn eval_row(model: &str, split: &str, pred: &[OrdinalLabel], gold: &[OrdinalLabel], spec: &ExperimentSpec) -> Result<EvalRow> {
    let (p, g) = (values(pred), values(gold));
    let sp = spearman(&p, &g, spec.permutations, spec.seed)?;
    Ok(EvalRow {
        model: model.to_string(),
        split: split.to_string(),
        n: pred.len(),
        mse: mse(&p, &g)?,
        rho: sp.rho,
        p_value: sp.p_value,
        rho_degenerate: sp.degenerate,
    })
}

/// Trains the regression and the four baselines on `train` and reports
/// both splits.
pub fn run_experiment(train: &FeatureTable, test: &FeatureTable, spec: &ExperimentSpec) -> Result<EvalReport> {
    let cols = family_columns(&spec.families);
    if cols.is_empty() {
        return Err(Error::invalid("no feature families selected"));
    }
    let (xtr, ytr) = train.xy(&cols)?;
    let (xte, yte) = test.xy(&cols)?;
    let cfg = OrdinalConfig { seed: spec.seed, ..spec.ordinal.clone() };
    let reg = train_ordinal(&xtr, &ytr, &cfg)?;
    let mut fitted: Vec<(String, Vec<OrdinalLabel>, Vec<OrdinalLabel>)> =
        vec![(REGRESSION_ROW.to_string(), reg.predict_all(&xtr), reg.predict_all(&xte))];
    for kind in BaselineKind::ALL {
        let m = fit_baseline(kind, &ytr, Some(&xtr), &spec.svm, spec.seed)?;
        fitted.push((kind.display_name().to_string(), m.predict_all(&xtr), m.predict_all(&xte)));
    }
    let jobs: Vec<(&str, &str, &[OrdinalLabel], &[OrdinalLabel])> = fitted
        .iter()
        .flat_map(|(name, ptr, pte)| {
            [(name.as_str(), "train", ptr.as_slice(), ytr.as_slice()), (name.as_str(), "test", pte.as_slice(), yte.as_slice())]
        })
        .collect();
    let rows = jobs
        .par_iter()
        .map(|(m, s, p, g)| eval_row(m, s, p, g, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { rows, seed: spec.seed, permutations: spec.permutations })
}

fn set_expr(families: &[Family]) -> String {
    families.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(",")
}

/// Feature-set expressions of the ablation grid, with their families.
pub fn ablation_sets(base: &[Family]) -> Vec<(String, Vec<Family>)> {
    let base: Vec<Family> = Family::ALL.iter().copied().filter(|f| base.contains(f)).collect();
    let without = |drop: &[Family]| base.iter().copied().filter(|f| !drop.contains(f)).collect::<Vec<_>>();
    let mut out = vec![("ALL".to_string(), base.clone())];
    for &f in &base {
        out.push((format!("ALL-{{{f}}}"), without(&[f])));
    }
    for pair in [[Family::Sim, Family::Bow], [Family::S2s, Family::S2sBin]] {
        if pair.iter().all(|f| base.contains(f)) {
            out.push((format!("ALL-{{{}}}", set_expr(&pair)), without(&pair)));
        }
    }
    for &f in &base {
        out.push((format!("\u{2205}+{{{f}}}"), vec![f]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub expr: String,
    pub families: Vec<Family>,
    pub n: usize,
    pub mse: f64,
    pub rho: f64,
    pub p_value: f64,
    pub rho_degenerate: bool,
}

/// Regression test-split results for every row of the ablation grid.
/// Empty feature sets are skipped with a warning.
pub fn ablation(train: &FeatureTable, test: &FeatureTable, spec: &ExperimentSpec) -> Result<Vec<AblationRow>> {
    if spec.families.is_empty() {
        return Err(Error::invalid("ablation needs at least one feature family"));
    }
    let mut rows = Vec::new();
    for (expr, fams) in ablation_sets(&spec.families) {
        if fams.is_empty() {
            log::warn!("skipping ablation row {expr}: empty feature set");
            continue;
        }
        let cols = family_columns(&fams);
        let (xtr, ytr) = train.xy(&cols)?;
        let (xte, yte) = test.xy(&cols)?;
        let model = train_ordinal(&xtr, &ytr, &OrdinalConfig { seed: spec.seed, ..spec.ordinal.clone() })?;
        let r = eval_row(&expr, "test", &model.predict_all(&xte), &yte, spec)?;
        rows.push(AblationRow {
            expr,
            families: fams,
            n: r.n,
            mse: r.mse,
            rho: r.rho,
            p_value: r.p_value,
            rho_degenerate: r.rho_degenerate,
        });
    }
    Ok(rows)
}

fn fmt_rho(rho: f64, p: f64, degenerate: bool) -> String {
    let star = if !degenerate && p < 0.01 { "*" } else { "" };
    format!("{rho:.2}{star}")
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("model\tsplit\tn\tmse\trho\tp_value\trho_degenerate\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}",
                r.model, r.split, r.n, r.mse, r.rho, r.p_value, r.rho_degenerate as u8
            );
        }
        out
    }

    /// Models as rows, splits as MSE and rho columns.
    pub fn to_text(&self) -> String {
        let mut splits: Vec<&str> = Vec::new();
        let mut models: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !splits.contains(&r.split.as_str()) {
                splits.push(&r.split);
            }
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
        }
        let mut out = format!("{:<16}", "");
        for s in &splits {
            let _ = write!(out, " {:>10} {:>10}", format!("{s} MSE"), format!("{s} rho"));
        }
        out.push('\n');
        for m in models {
            let _ = write!(out, "{m:<16}");
            for s in &splits {
                match self.rows.iter().find(|r| r.model == m && r.split == *s) {
                    Some(r) => {
                        let _ = write!(out, " {:>10.2} {:>10}", r.mse, fmt_rho(r.rho, r.p_value, r.rho_degenerate));
                    }
                    None => out.push_str(&format!(" {:>10} {:>10}", "-", "-")),
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "(* p < .01, permutation test, {} permutations, seed {})", self.permutations, self.seed);
        out
    }
}

pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let mut out = String::from("features\tn\tmse\trho\tp_value\trho_degenerate\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}", r.expr, r.n, r.mse, r.rho, r.p_value, r.rho_degenerate as u8);
    }
    out
}

pub fn ablation_text(rows: &[AblationRow]) -> String {
    let mut out = format!("{:<24} {:>8} {:>8}\n", "Feature set", "MSE", "rho");
    for r in rows {
        let _ = writeln!(out, "{:<24} {:>8.2} {:>8}", r.expr, r.mse, fmt_rho(r.rho, r.p_value, r.rho_degenerate));
    }
    out
}

/// Names of the columns a family set selects.
pub fn column_names(families: &[Family]) -> Vec<String> {
    family_columns(families).into_iter().map(|c| FEATURE_NAMES[c].to_string()).collect()
}
