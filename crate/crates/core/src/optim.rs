//! First-order optimizers: gradient descent with a backtracking (Armijo)
//! line search for the small convex ordinal models, and Adam for the
//! sequence model.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearchConfig {
    pub max_iter: usize,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative decrease of the objective falls below this.
    pub f_tol: f64,
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            max_iter: 1000,
            grad_tol: 1e-7,
            f_tol: 1e-12,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes `f`, which returns the objective and its gradient.
pub fn minimize<F>(f: F, x0: Vec<f64>, cfg: &LineSearchConfig) -> Minimum
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut step = cfg.initial_step;
    for iter in 0..cfg.max_iter {
        let gn2: f64 = g.iter().map(|v| v * v).sum();
        if gn2.sqrt() < cfg.grad_tol || !fx.is_finite() {
            return Minimum { x, value: fx, iterations: iter, converged: fx.is_finite() };
        }
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let (fc, gc) = f(&cand);
            if fc.is_finite() && fc <= fx - cfg.armijo * step * gn2 {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= cfg.shrink;
        }
        let Some((cand, fc, gc)) = accepted else {
            return Minimum { x, value: fx, iterations: iter, converged: norm(&g) < cfg.grad_tol.sqrt() };
        };
        let decrease = fx - fc;
        // Barzilai-Borwein guess for the next trial step.
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..x.len() {
            let s = cand[k] - x[k];
            ss += s * s;
            sy += s * (gc[k] - g[k]);
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { cfg.initial_step };
        x = cand;
        g = gc;
        let prev = fx;
        fx = fc;
        if decrease <= cfg.f_tol * prev.abs().max(1.0) {
            return Minimum { x, value: fx, iterations: iter + 1, converged: true };
        }
    }
    Minimum { x, value: fx, iterations: cfg.max_iter, converged: false }
}

/// Adam over a set of parameter slices that is fixed for the optimizer's
/// lifetime.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    /// One update. `params` and `grads` are visited in the same order every
    /// call; their total length must equal `num_params`.
    pub fn step<'a, 'b>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut [f64]>,
        grads: impl IntoIterator<Item = &'b [f64]>,
    ) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let mut offset = 0;
        for (p, g) in params.into_iter().zip(grads) {
            assert_eq!(p.len(), g.len());
            let m = &mut self.m[offset..offset + p.len()];
            let v = &mut self.v[offset..offset + p.len()];
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            offset += p.len();
        }
        assert_eq!(offset, self.m.len(), "parameter count changed");
    }
}
