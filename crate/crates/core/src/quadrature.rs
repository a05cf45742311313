//! One-dimensional Gaussian quadrature.
//!
//! Expectations over `N(0, 1)` use probabilists' Gauss–Hermite rules built by
//! the Golub–Welsch eigenvalue construction and refined by Newton steps on
//! the orthonormal Hermite recurrence. Integrals over the whole real line
//! with exponentially decaying tails use composite Gauss–Legendre panels.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::special::norm_pdf;

pub const MAX_HERMITE_ORDER: usize = 512;
pub const MIN_ADAPTIVE_ORDER: usize = 32;
pub const LEGENDRE_POINTS: usize = 16;
pub const DEFAULT_HALF_WIDTH: f64 = 40.0;
pub const DEFAULT_PANELS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    GaussHermiteProbabilist,
    CompositeRealLine,
}

/// Nodes and weights for `E[f(U)]`, `U ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: RuleKind,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gauss–Hermite rule at the default order for this `σ²`.
    pub fn adaptive(sigma2: f64) -> Arc<QuadratureRule> {
        gauss_hermite_cached(adaptive_order(sigma2))
    }

    /// Composite Gauss–Legendre rule for `N(0, 1)` expectations, with panels
    /// narrow enough that an integrand varying on the scale `1/scale` is
    /// resolved. Costs far more nodes than Gauss–Hermite for large `scale`.
    pub fn composite_normal(scale: f64) -> QuadratureRule {
        let half = 10.0;
        let n_panels = ((2.0 * half * scale.max(1.0)).ceil() as usize).max(20);
        let (gx, gw) = legendre16();
        let h = 2.0 * half / n_panels as f64;
        let mut nodes = Vec::with_capacity(n_panels * gx.len());
        let mut weights = Vec::with_capacity(n_panels * gx.len());
        for k in 0..n_panels {
            let mid = -half + (k as f64 + 0.5) * h;
            for (x, w) in gx.iter().zip(gw) {
                let u = mid + 0.5 * h * x;
                nodes.push(u);
                weights.push(0.5 * h * w * norm_pdf(u));
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        QuadratureRule { nodes, weights, kind: RuleKind::CompositeRealLine }
    }
}

/// `n = max(32, ceil(8σ))`, capped at 512.
pub fn adaptive_order(sigma2: f64) -> usize {
    let n = (8.0 * sigma2.max(0.0).sqrt()).ceil() as usize;
    n.clamp(MIN_ADAPTIVE_ORDER, MAX_HERMITE_ORDER)
}

/// Probabilists' Gauss–Hermite rule with `n` nodes; weights sum to one.
pub fn gauss_hermite(n: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_HERMITE_ORDER).contains(&n) {
        return Err(DesignError::QuadratureOrder(n));
    }
    if n == 1 {
        return Ok(QuadratureRule { nodes: vec![0.0], weights: vec![1.0], kind: RuleKind::GaussHermiteProbabilist });
    }
    let jacobi = DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &x)| (x, eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Newton refinement on the orthonormal recurrence; Christoffel weights.
    for (x, w) in pairs.iter_mut() {
        let mut xr = *x;
        for _ in 0..3 {
            let (pn, dpn, _) = orthonormal_hermite(n, xr);
            let step = pn / dpn;
            if !step.is_finite() {
                break;
            }
            xr -= step;
        }
        let (_, _, sumsq) = orthonormal_hermite(n, xr);
        if sumsq.is_finite() && sumsq > 0.0 && (xr - *x).abs() < 1e-6 * (1.0 + x.abs()) {
            *x = xr;
            *w = 1.0 / sumsq;
        }
    }
    // Exact symmetry about zero.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let (nodes, weights) = pairs.into_iter().map(|(x, w)| (x, w / total)).unzip();
    Ok(QuadratureRule { nodes, weights, kind: RuleKind::GaussHermiteProbabilist })
}

/// Returns `(p_n(x), p_n'(x), Σ_{k<n} p_k(x)²)` for the orthonormal
/// probabilists' Hermite polynomials.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut p = 1.0;
    let mut d_prev = 0.0;
    let mut d = 0.0;
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += p * p;
        let kf = k as f64;
        let a = (kf + 1.0).sqrt();
        let b = kf.sqrt();
        let p_next = (x * p - b * p_prev) / a;
        let d_next = (p + x * d - b * d_prev) / a;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d, sumsq)
}

pub fn gauss_hermite_cached(n: usize) -> Arc<QuadratureRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    let n = n.clamp(1, MAX_HERMITE_ORDER);
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(gauss_hermite(n).expect("order clamped into range")))
        .clone()
}

/// `Σ w_i f(x_i)`.
pub fn expect_normal<F: Fn(f64) -> f64>(f: F, rule: &QuadratureRule) -> Result<f64> {
    let mut acc = 0.0;
    for (i, (&x, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let v = f(x);
        if !v.is_finite() {
            return Err(DesignError::NonFiniteIntegrand { index: i, node: x });
        }
        acc += w * v;
    }
    Ok(acc)
}

/// Composite 16-point Gauss–Legendre over `[-half_width, half_width]`.
pub fn integrate_line<F: Fn(f64) -> f64>(f: F, half_width: f64, n_panels: usize) -> f64 {
    let (gx, gw) = legendre16();
    let n_panels = n_panels.max(1);
    let h = 2.0 * half_width / n_panels as f64;
    let mut total = 0.0;
    for k in 0..n_panels {
        let mid = -half_width + (k as f64 + 0.5) * h;
        let panel: f64 = gx.iter().zip(gw).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum();
        total += 0.5 * h * panel;
    }
    total
}

fn legendre16() -> (&'static [f64], &'static [f64]) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (x, w) = RULE.get_or_init(|| gauss_legendre(LEGENDRE_POINTS));
    (x, w)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                let kf = k as f64;
                p0 = ((2.0 * kf + 1.0) * z * p1 - kf * p2) / (kf + 1.0);
            }
            dp = nf * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}
