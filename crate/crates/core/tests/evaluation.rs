use joci::annotation::OrdinalLabel;
use joci::evaluation::*;
use joci::features::{Family, FeatureRow, FeatureTable, FeatureVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_mse(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s / a.len() as f64
}

/// Average rank by counting: below + (equal + 1) / 2.
fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let below = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn naive_spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = naive_ranks(a);
    let rb = naive_ranks(b);
    let n = a.len() as f64;
    let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        sa += ra[i];
        sb += rb[i];
        sab += ra[i] * rb[i];
        saa += ra[i] * ra[i];
        sbb += rb[i] * rb[i];
    }
    let cov = sab - sa * sb / n;
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va <= 1e-12 || vb <= 1e-12 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

#[test]
fn metrics_match_naive_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..1000 {
        let n = rng.gen_range(3..40);
        // Half the cases are tie-heavy 5-point labels.
        let gen = |rng: &mut ChaCha8Rng| -> f64 {
            if case % 2 == 0 { rng.gen_range(1..=5) as f64 } else { rng.gen_range(-10.0..10.0) }
        };
        let a: Vec<f64> = (0..n).map(|_| gen(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| gen(&mut rng)).collect();
        assert!((mse(&a, &b).unwrap() - naive_mse(&a, &b)).abs() <= 1e-12);
        assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        assert_eq!(average_ranks(&a), naive_ranks(&a));
        let s = spearman(&a, &b, 0, 0).unwrap();
        assert!((s.rho - naive_spearman(&a, &b)).abs() <= 1e-12, "case {case}: {} vs {}", s.rho, naive_spearman(&a, &b));
        assert!((-1.0..=1.0).contains(&s.rho));
    }
}

#[test]
fn self_correlation_reaches_permutation_floor() {
    let x: Vec<f64> = (0..30).map(|i| (i % 7) as f64).collect();
    let s = spearman(&x, &x, 999, 3).unwrap();
    assert!((s.rho - 1.0).abs() < 1e-12);
    assert_eq!(s.p_value, 1.0 / 1000.0);
}

fn row(values: &[(usize, f64)], gold: i64) -> FeatureRow {
    let mut fv = FeatureVector::default();
    for &(i, v) in values {
        fv.values[i] = v;
    }
    FeatureRow { features: fv, gold: OrdinalLabel::from_value(gold) }
}

/// Gold depends on the sim columns; bow and len carry noise; s2s columns
/// stay zero.
fn sim_signal_table(rng: &mut ChaCha8Rng, n: usize) -> FeatureTable {
    let rows = (0..n)
        .map(|_| {
            let latent: f64 = rng.gen_range(0.0..5.0);
            let gold = (latent.floor() as i64 + 1).min(5);
            row(
                &[
                    (0, rng.gen_range(0..4) as f64),
                    (1, rng.gen_range(0.0..1.0)),
                    (2, latent / 5.0 + rng.gen_range(-0.05..0.05)),
                    (3, latent / 10.0 + rng.gen_range(-0.05..0.05)),
                    (14, rng.gen_range(3..20) as f64),
                    (15, rng.gen_range(-5..5) as f64),
                    (16, rng.gen_range(0..2) as f64),
                ],
                gold,
            )
        })
        .collect();
    FeatureTable { rows }
}

fn spec() -> ExperimentSpec {
    ExperimentSpec { permutations: 200, ..Default::default() }
}

#[test]
fn experiment_rows_and_baselines() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let train = sim_signal_table(&mut rng, 300);
    let test = sim_signal_table(&mut rng, 300);
    let report = run_experiment(&train, &test, &spec()).unwrap();
    assert_eq!(report.rows.len(), 10);
    let get = |m: &str, s: &str| report.rows.iter().find(|r| r.model == m && r.split == s).unwrap();
    assert!(get(REGRESSION_ROW, "test").mse < get("Rounded Average", "test").mse);
    let mf = get("Most Frequent", "test");
    assert!(mf.rho_degenerate && mf.rho == 0.0);
    assert!(report.rows.iter().all(|r| r.n == 300 && r.mse >= 0.0));
    assert_eq!(report, run_experiment(&train, &test, &spec()).unwrap());
    assert!(report.to_text().contains("Most Frequent"));
    assert_eq!(report.to_tsv().lines().count(), 11);
}

#[test]
fn ablation_behaviour() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let train = sim_signal_table(&mut rng, 300);
    let test = sim_signal_table(&mut rng, 300);
    let rows = ablation(&train, &test, &spec()).unwrap();
    let mse_of = |e: &str| rows.iter().find(|r| r.expr == e).unwrap().mse;

    // Removing the all-zero s2s families changes nothing.
    assert!((mse_of("ALL") - mse_of("ALL-{s2s}")).abs() <= 1e-9);
    assert!((mse_of("ALL") - mse_of("ALL-{s2s,s2s-bin}")).abs() <= 1e-9);

    let singles = ["ALL-{bow}", "ALL-{sim}", "ALL-{s2s}", "ALL-{s2s-bin}", "ALL-{len}"];
    let worst = singles.iter().max_by(|a, b| mse_of(a).total_cmp(&mse_of(b))).unwrap();
    assert_eq!(*worst, "ALL-{sim}");

    let single = ablation(&train, &test, &ExperimentSpec { families: vec![Family::Sim], ..spec() }).unwrap();
    let all = single.iter().find(|r| r.expr == "ALL").unwrap();
    let only = single.iter().find(|r| r.expr == "\u{2205}+{sim}").unwrap();
    assert_eq!(all.mse, only.mse);
    assert!(single.iter().all(|r| r.expr != "ALL-{sim}"));
}
