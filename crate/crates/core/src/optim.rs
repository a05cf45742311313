//! Multi-start search for approximate D-optimal block designs.
//!
//! Each start optimizes `b` blocks (treatments and weights) jointly in an
//! unconstrained parameterization: coordinate `x ∈ [lo, hi]` is
//! `mid + half·sin(z)` and the weights are a softmax of `b − 1` free logits
//! with the last pinned at zero. BFGS with central finite-difference
//! gradients drives the smooth approximations; the asymptotic objective is
//! piecewise and gets a restarted Nelder–Mead instead.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{efficiency_local, logdet_psd, objective_bayes, objective_local, InfoEvaluator};
use crate::error::{DesignError, Result};
use crate::info::Method;
use crate::model::{canonicalize, Block, Design, ModelSpec, ParameterPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub n_starts: usize,
    /// BFGS iteration limit; Nelder–Mead gets `NM_ITERATION_FACTOR` times this.
    pub max_iterations: usize,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Stop once the objective improves by less than this (relative) twice running.
    pub tolerance: f64,
    pub seed: u64,
    /// Number of blocks per start; defaults to `p(p+1)/2 + 1`.
    pub support_cap: Option<usize>,
    pub prune_threshold: f64,
    /// Max-norm distance under which two support blocks are merged.
    pub merge_tolerance: f64,
    /// Re-optimize the pruned, merged design before reporting it.
    pub polish: bool,
    pub nm_restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_starts: 100,
            max_iterations: 500,
            fd_step: 1e-6,
            tolerance: 1e-10,
            seed: 0,
            support_cap: None,
            prune_threshold: 1e-4,
            merge_tolerance: 1e-3,
            polish: true,
            nm_restarts: 3,
        }
    }
}

const NM_ITERATION_FACTOR: usize = 20;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;
/// Coordinates this close (relative to the interval width) to a bound are
/// reported on it; the sine map only reaches a bound in the limit of exact
/// stationarity.
const BOUND_SNAP: f64 = 1e-8;

impl OptimizerConfig {
    /// Start budget used for pseudo-Bayesian searches.
    pub fn bayes_default() -> Self {
        Self { n_starts: 1000, ..Self::default() }
    }

    pub fn with_starts(mut self, n_starts: usize) -> Self {
        self.n_starts = n_starts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn cap(&self, spec: &ModelSpec) -> usize {
        self.support_cap.unwrap_or_else(|| spec.support_cap())
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let bad = |msg: String| Err(DesignError::InvalidParameter(msg));
        if self.n_starts == 0 {
            return bad("n_starts must be at least 1".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.fd_step > 0.0 && self.fd_step < 1e-2) {
            return bad(format!("fd_step = {} must lie in (0, 0.01)", self.fd_step));
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be non-negative".into());
        }
        if !(self.prune_threshold >= 0.0 && self.prune_threshold < 1.0) {
            return bad("prune_threshold must lie in [0, 1)".into());
        }
        if !(self.merge_tolerance >= 0.0) {
            return bad("merge_tolerance must be non-negative".into());
        }
        let cap = self.cap(spec);
        if cap == 0 || cap > spec.support_cap() {
            return bad(format!("support_cap = {cap} must lie in [1, {}]", spec.support_cap()));
        }
        Ok(())
    }
}

/// What the design is optimized for: one parameter point or a prior sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Local(ParameterPoint),
    Bayes(Vec<ParameterPoint>),
}

impl Target {
    pub fn points(&self) -> &[ParameterPoint] {
        match self {
            Target::Local(t) => std::slice::from_ref(t),
            Target::Bayes(ts) => ts,
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.points().is_empty() {
            return Err(DesignError::InvalidParameter("prior sample is empty".into()));
        }
        self.points().iter().try_for_each(|t| spec.check_beta(&t.beta))
    }

    pub fn objective(&self, spec: &ModelSpec, design: &Design, evaluator: &InfoEvaluator) -> Result<f64> {
        match self {
            Target::Local(t) => objective_local(spec, design, t, evaluator),
            Target::Bayes(ts) => objective_bayes(spec, design, ts, evaluator),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignSearchResult {
    /// Canonical best design.
    pub design: Design,
    pub objective: f64,
    pub method: Method,
    pub rho: Option<f64>,
    /// Final objective of every start, `-∞` where a start failed.
    pub start_objectives: Vec<f64>,
    /// Best-so-far objective after each iteration, per start.
    pub traces: Vec<Vec<f64>>,
    pub best_start: usize,
    /// Block-information evaluations summed over all starts.
    pub evaluations: usize,
    pub wall_time_secs: f64,
}

impl DesignSearchResult {
    /// Equality of everything except wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.design == other.design
            && self.objective.to_bits() == other.objective.to_bits()
            && self.method == other.method
            && self.rho == other.rho
            && self.best_start == other.best_start
            && self.evaluations == other.evaluations
            && self.start_objectives.iter().map(|x| x.to_bits()).eq(other.start_objectives.iter().map(|x| x.to_bits()))
            && self.traces.len() == other.traces.len()
            && self
                .traces
                .iter()
                .zip(&other.traces)
                .all(|(a, b)| a.iter().map(|x| x.to_bits()).eq(b.iter().map(|x| x.to_bits())))
    }
}

/// Box mapping `z ↦ mid + half·sin(z)` and its inverse.
fn to_box(z: f64, (lo, hi): (f64, f64)) -> f64 {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (mid + half * z.sin()).clamp(lo, hi)
}

fn from_box(x: f64, (lo, hi): (f64, f64)) -> f64 {
    let half = 0.5 * (hi - lo);
    if half == 0.0 {
        return 0.0;
    }
    ((x - 0.5 * (lo + hi)) / half).clamp(-1.0, 1.0).asin()
}

/// Softmax with an implicit trailing zero logit.
fn weights_from_logits(a: &[f64]) -> Vec<f64> {
    let top = a.iter().copied().fold(0.0, f64::max);
    let mut w: Vec<f64> = a.iter().map(|x| (x - top).exp()).collect();
    w.push((-top).exp());
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

fn logits_from_weights(w: &[f64]) -> Vec<f64> {
    let last = w[w.len() - 1].ln();
    w[..w.len() - 1].iter().map(|x| x.ln() - last).collect()
}

/// Per-start objective with per-block information cached, so a finite
/// difference in one block's coordinates recomputes only that block.
struct Problem<'a> {
    spec: &'a ModelSpec,
    points: &'a [ParameterPoint],
    evaluator: &'a InfoEvaluator,
    b: usize,
    fd_step: f64,
    cache_z: Vec<Option<Vec<f64>>>,
    cache: Vec<Option<Vec<DMatrix<f64>>>>,
    evaluations: usize,
}

impl<'a> Problem<'a> {
    fn new(spec: &'a ModelSpec, points: &'a [ParameterPoint], evaluator: &'a InfoEvaluator, b: usize, fd_step: f64) -> Self {
        Self { spec, points, evaluator, b, fd_step, cache_z: vec![None; b], cache: vec![None; b], evaluations: 0 }
    }

    fn block_len(&self) -> usize {
        self.spec.m * self.spec.q
    }

    fn n_vars(&self) -> usize {
        self.b * self.block_len() + self.b - 1
    }

    fn decode_block(&self, z: &[f64]) -> Block {
        let q = self.spec.q;
        Block::new(
            z.chunks(q)
                .map(|c| c.iter().zip(&self.spec.bounds).map(|(&zi, &bd)| to_box(zi, bd)).collect())
                .collect(),
        )
    }

    fn encode(&self, blocks: &[Block], weights: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n_vars());
        for block in blocks {
            for t in &block.treatments {
                x.extend(t.iter().zip(&self.spec.bounds).map(|(&xi, &bd)| from_box(xi, bd)));
            }
        }
        x.extend(logits_from_weights(weights));
        x
    }

    fn decode(&self, x: &[f64]) -> (Vec<Block>, Vec<f64>) {
        let l = self.block_len();
        let blocks = (0..self.b).map(|k| self.decode_block(&x[k * l..(k + 1) * l])).collect();
        (blocks, weights_from_logits(&x[self.b * l..]))
    }

    fn block_infos(&mut self, z: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let block = self.decode_block(z);
        self.evaluations += self.points.len();
        self.points
            .iter()
            .map(|t| self.evaluator.block_info(self.spec, &block, t).ok().map(|i| i.matrix))
            .collect()
    }

    fn refresh(&mut self, x: &[f64]) {
        let l = self.block_len();
        for k in 0..self.b {
            let z = &x[k * l..(k + 1) * l];
            let stale = match &self.cache_z[k] {
                Some(c) => c.iter().zip(z).any(|(a, b)| a.to_bits() != b.to_bits()),
                None => true,
            };
            if stale {
                self.cache[k] = self.block_infos(z);
                self.cache_z[k] = Some(z.to_vec());
            }
        }
    }

    /// Mean log-determinant with block `swap.0` replaced by `swap.1`.
    fn combine(&self, w: &[f64], swap: Option<(usize, &Option<Vec<DMatrix<f64>>>)>) -> f64 {
        let p = self.spec.p();
        let mut total = 0.0;
        for s in 0..self.points.len() {
            let mut m = DMatrix::<f64>::zeros(p, p);
            for (k, &wk) in w.iter().enumerate() {
                let infos = match swap {
                    Some((j, alt)) if j == k => alt,
                    _ => &self.cache[k],
                };
                match infos {
                    Some(v) => m += &v[s] * wk,
                    None => return f64::NEG_INFINITY,
                }
            }
            let ld = logdet_psd(&m);
            if ld == f64::NEG_INFINITY {
                return ld;
            }
            total += ld;
        }
        total / self.points.len() as f64
    }

    /// Objective to minimize: minus the mean log-determinant.
    fn value(&mut self, x: &[f64]) -> f64 {
        self.refresh(x);
        let w = weights_from_logits(&x[self.b * self.block_len()..]);
        -self.combine(&w, None)
    }

    fn gradient(&mut self, x: &[f64]) -> Vec<f64> {
        self.refresh(x);
        let l = self.block_len();
        let split = self.b * l;
        let w = weights_from_logits(&x[split..]);
        let f0 = -self.combine(&w, None);
        let mut g = vec![0.0; x.len()];
        for k in 0..self.b {
            let mut z = x[k * l..(k + 1) * l].to_vec();
            for i in 0..l {
                let orig = z[i];
                let h = self.fd_step * orig.abs().max(1.0);
                z[i] = orig + h;
                let up = self.block_infos(&z);
                let fp = -self.combine(&w, Some((k, &up)));
                z[i] = orig - h;
                let dn = self.block_infos(&z);
                let fm = -self.combine(&w, Some((k, &dn)));
                z[i] = orig;
                g[k * l + i] = difference(fp, f0, fm, h);
            }
        }
        let mut a = x[split..].to_vec();
        for i in 0..a.len() {
            let orig = a[i];
            let h = self.fd_step * orig.abs().max(1.0);
            a[i] = orig + h;
            let fp = -self.combine(&weights_from_logits(&a), None);
            a[i] = orig - h;
            let fm = -self.combine(&weights_from_logits(&a), None);
            a[i] = orig;
            g[split + i] = difference(fp, f0, fm, h);
        }
        g
    }
}

/// Central difference, falling back to a one-sided one next to an
/// infeasible point.
fn difference(fp: f64, f0: f64, fm: f64, h: f64) -> f64 {
    match (fp.is_finite(), fm.is_finite()) {
        (true, true) => (fp - fm) / (2.0 * h),
        (true, false) if f0.is_finite() => (fp - f0) / h,
        (false, true) if f0.is_finite() => (f0 - fm) / h,
        _ => 0.0,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS on the inverse Hessian with Armijo backtracking. Pushes `-f` (the
/// maximized objective) after every accepted step.
fn bfgs(problem: &mut Problem, mut x: Vec<f64>, config: &OptimizerConfig, trace: &mut Vec<f64>) -> (Vec<f64>, f64) {
    let n = x.len();
    let mut f = problem.value(&x);
    trace.push(-f);
    if !f.is_finite() || n == 0 {
        return (x, f);
    }
    let mut g = problem.gradient(&x);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    let mut quiet = 0;
    for _ in 0..config.max_iterations {
        let gv = DVector::from_column_slice(&g);
        let mut d: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        if slope == 0.0 {
            break;
        }
        let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut alpha = if dmax > 1.0 { 1.0 / dmax } else { 1.0 };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            let fnew = problem.value(&xn);
            if fnew <= f + ARMIJO_C1 * alpha * slope {
                accepted = Some((xn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else { break };
        let gn = problem.gradient(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-12 * (dot(&s, &s) * yy).sqrt() && sy > 0.0 {
            if first {
                h = DMatrix::identity(n, n) * (sy / yy);
                first = false;
            }
            let sv = DVector::from_vec(s);
            let yv = DVector::from_vec(y);
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H ← H − ρ(s yᵀH + H y sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
            h -= (&sv * hy.transpose() + &hy * sv.transpose()) * rho;
            h += (&sv * sv.transpose()) * (rho * rho * yhy + rho);
        }
        let improvement = f - fnew;
        x = xn;
        f = fnew;
        g = gn;
        trace.push(-f);
        if improvement <= config.tolerance * (1.0 + f.abs()) {
            quiet += 1;
            if quiet >= 2 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    (x, f)
}

/// Nelder–Mead with dimension-adaptive coefficients, restarted from the best
/// vertex `nm_restarts` times.
fn nelder_mead(problem: &mut Problem, x0: Vec<f64>, config: &OptimizerConfig, trace: &mut Vec<f64>) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut best_x = x0;
    let mut best_f = problem.value(&best_x);
    trace.push(-best_f);
    if n == 0 {
        return (best_x, best_f);
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let budget = config.max_iterations * NM_ITERATION_FACTOR;
    for _ in 0..=config.nm_restarts {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((best_x.clone(), best_f));
        for i in 0..n {
            let mut v = best_x.clone();
            v[i] += 0.25;
            let fv = problem.value(&v);
            simplex.push((v, fv));
        }
        let start_best = best_f;
        for _ in 0..budget {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (lo, hi) = (simplex[0].1, simplex[n].1);
            if lo < best_f {
                best_f = lo;
                best_x = simplex[0].0.clone();
            }
            trace.push(-best_f);
            if hi.is_finite() && (hi - lo).abs() <= config.tolerance * (1.0 + lo.abs()) {
                break;
            }
            let centroid: Vec<f64> = (0..n).map(|i| simplex[..n].iter().map(|v| v.0[i]).sum::<f64>() / nf).collect();
            let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect() };
            let xr = along(alpha);
            let fr = problem.value(&xr);
            if fr < simplex[0].1 {
                let xe = along(alpha * beta);
                let fe = problem.value(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(alpha * gamma);
                    let fc = problem.value(&xc);
                    (xc, fc)
                } else {
                    let xc = along(-gamma);
                    let fc = problem.value(&xc);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x_lo = simplex[0].0.clone();
                    for v in simplex.iter_mut().skip(1) {
                        v.0 = x_lo.iter().zip(&v.0).map(|(a, b)| a + delta * (b - a)).collect();
                        v.1 = problem.value(&v.0);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best_f {
            best_f = simplex[0].1;
            best_x = simplex[0].0.clone();
            trace.push(-best_f);
        }
        if start_best - best_f <= config.tolerance * (1.0 + best_f.abs()) {
            break;
        }
    }
    (best_x, best_f)
}

fn run_local_search(problem: &mut Problem, x: Vec<f64>, config: &OptimizerConfig, trace: &mut Vec<f64>) -> (Vec<f64>, f64) {
    if problem.evaluator.method == Method::Asymptotic {
        nelder_mead(problem, x, config, trace)
    } else {
        bfgs(problem, x, config, trace)
    }
}

/// Drops weights below the threshold and merges blocks closer than
/// `merge_tolerance`, keeping the heavier block's treatments.
fn prune_and_merge(
    blocks: Vec<Block>,
    weights: Vec<f64>,
    bounds: &[(f64, f64)],
    config: &OptimizerConfig,
) -> Option<(Vec<Block>, Vec<f64>)> {
    let mut items: Vec<(Block, f64)> = blocks
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w >= config.prune_threshold)
        .map(|(b, w)| (snap_to_bounds(b, bounds).canonical(), w))
        .collect();
    if items.is_empty() {
        return None;
    }
    // Stable sort keeps the lower index first among equal weights.
    items.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut merged: Vec<(Block, f64)> = Vec::with_capacity(items.len());
    for (block, w) in items {
        let near = merged.iter_mut().find(|(b, _)| max_distance(b, &block) < config.merge_tolerance);
        match near {
            Some((_, acc)) => *acc += w,
            None => merged.push((block, w)),
        }
    }
    let total: f64 = merged.iter().map(|(_, w)| w).sum();
    Some(merged.into_iter().map(|(b, w)| (b, w / total)).unzip())
}

fn snap_to_bounds(mut block: Block, bounds: &[(f64, f64)]) -> Block {
    for t in &mut block.treatments {
        for (x, &(lo, hi)) in t.iter_mut().zip(bounds) {
            let tol = BOUND_SNAP * (hi - lo);
            if *x - lo < tol {
                *x = lo;
            } else if hi - *x < tol {
                *x = hi;
            }
        }
    }
    block
}

fn max_distance(a: &Block, b: &Block) -> f64 {
    a.treatments
        .iter()
        .zip(&b.treatments)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

struct StartOutcome {
    design: Option<Design>,
    objective: f64,
    trace: Vec<f64>,
    evaluations: usize,
}

fn random_start<R: Rng + ?Sized>(problem: &Problem, rng: &mut R) -> Vec<f64> {
    let spec = problem.spec;
    let blocks: Vec<Block> = (0..problem.b).map(|_| crate::criteria::random_block(spec, rng)).collect();
    // Dirichlet(1, …, 1) via normalized exponentials.
    let e: Vec<f64> = (0..problem.b).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    let w: Vec<f64> = e.iter().map(|x| (x / s).max(1e-12)).collect();
    problem.encode(&blocks, &w)
}

fn run_start(
    spec: &ModelSpec,
    target: &Target,
    evaluator: &InfoEvaluator,
    config: &OptimizerConfig,
    start: usize,
) -> StartOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(start as u64);
    let points = target.points();
    let mut problem = Problem::new(spec, points, evaluator, config.cap(spec), config.fd_step);
    let x0 = random_start(&problem, &mut rng);
    let mut trace = Vec::new();
    let (x, f) = run_local_search(&mut problem, x0, config, &mut trace);
    let mut evaluations = problem.evaluations;
    let failed = |trace, evaluations| StartOutcome { design: None, objective: f64::NEG_INFINITY, trace, evaluations };
    if !f.is_finite() {
        return failed(trace, evaluations);
    }
    let (blocks, weights) = problem.decode(&x);
    let Some((mut blocks, mut weights)) = prune_and_merge(blocks, weights, &spec.bounds, config) else {
        return failed(trace, evaluations);
    };
    if config.polish {
        let mut reduced = Problem::new(spec, points, evaluator, blocks.len(), config.fd_step);
        let xr = reduced.encode(&blocks, &weights);
        let mut polish_trace = Vec::new();
        let (xp, fp) = run_local_search(&mut reduced, xr, config, &mut polish_trace);
        evaluations += reduced.evaluations;
        if fp.is_finite() {
            let best = trace.last().copied().unwrap_or(f64::NEG_INFINITY);
            trace.extend(polish_trace.into_iter().map(|v| v.max(best)));
            let (b2, w2) = reduced.decode(&xp);
            if let Some((b3, w3)) = prune_and_merge(b2, w2, &spec.bounds, config) {
                blocks = b3;
                weights = w3;
            }
        }
    }
    let design = match Design::normalized(blocks, weights).and_then(|d| canonicalize(&d)) {
        Ok(d) => d,
        Err(_) => return failed(trace, evaluations),
    };
    let objective = target.objective(spec, &design, evaluator).unwrap_or(f64::NEG_INFINITY);
    evaluations += points.len() * design.len();
    // Pruning can cost a little; the trace stays a best-so-far record of the search.
    StartOutcome { design: objective.is_finite().then_some(design), objective, trace, evaluations }
}

/// Multi-start design search. Starts run in parallel; the best objective
/// wins, ties going to the lowest start index.
pub fn optimize_design(spec: &ModelSpec, target: &Target, evaluator: &InfoEvaluator, config: &OptimizerConfig) -> Result<DesignSearchResult> {
    spec.validate()?;
    evaluator.validate(spec)?;
    config.validate(spec)?;
    target.validate(spec)?;
    for t in target.points() {
        evaluator.validate_point(spec, t)?;
    }
    let clock = Instant::now();
    let outcomes: Vec<StartOutcome> =
        (0..config.n_starts).into_par_iter().map(|s| run_start(spec, target, evaluator, config, s)).collect();
    let mut best: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if o.design.is_some() && best.is_none_or(|b| o.objective > outcomes[b].objective) {
            best = Some(i);
        }
    }
    let best_start = best.ok_or(DesignError::NoFeasibleDesign)?;
    let evaluations = outcomes.iter().map(|o| o.evaluations).sum();
    let start_objectives = outcomes.iter().map(|o| o.objective).collect();
    let objective = outcomes[best_start].objective;
    let mut outcomes = outcomes;
    let design = outcomes[best_start].design.take().expect("best start has a design");
    Ok(DesignSearchResult {
        design,
        objective,
        method: evaluator.method,
        rho: evaluator.rho,
        start_objectives,
        traces: outcomes.into_iter().map(|o| o.trace).collect(),
        best_start,
        evaluations,
        wall_time_secs: clock.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoSweepRow {
    pub rho: f64,
    pub design: Design,
    pub objective: f64,
    /// Local efficiency under the judging method.
    pub efficiency: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoSweep {
    pub rows: Vec<RhoSweepRow>,
    pub best: usize,
}

/// Optimizes a GEE-type method once per `ρ` and scores each design under
/// `judge`. Efficiencies are relative to `reference` when given, otherwise
/// to the best design in the sweep.
pub fn rho_tuning_sweep(
    spec: &ModelSpec,
    theta: &ParameterPoint,
    base: &InfoEvaluator,
    rho_grid: &[f64],
    config: &OptimizerConfig,
    judge: &InfoEvaluator,
    reference: Option<&Design>,
) -> Result<RhoSweep> {
    if rho_grid.is_empty() {
        return Err(DesignError::InvalidParameter("rho grid is empty".into()));
    }
    if !base.method.uses_rho() {
        return Err(DesignError::InvalidParameter(format!("method {} has no working correlation", base.method)));
    }
    let target = Target::Local(theta.clone());
    let mut designs = Vec::with_capacity(rho_grid.len());
    for &rho in rho_grid {
        let ev = base.clone().with_rho(rho);
        let res = optimize_design(spec, &target, &ev, config)?;
        designs.push((rho, res.design, res.objective));
    }
    let judged: Vec<f64> = designs
        .iter()
        .map(|(_, d, _)| objective_local(spec, d, theta, judge))
        .collect::<Result<_>>()?;
    let best = (0..judged.len()).fold(0, |b, i| if judged[i] > judged[b] { i } else { b });
    let fallback = designs[best].1.clone();
    let reference = reference.unwrap_or(&fallback);
    let rows = designs
        .into_iter()
        .map(|(rho, design, objective)| {
            let efficiency = efficiency_local(spec, &design, theta, reference, judge)?;
            Ok(RhoSweepRow { rho, design, objective, efficiency })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RhoSweep { rows, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Link;

    fn quick(n_starts: usize, seed: u64) -> OptimizerConfig {
        OptimizerConfig { n_starts, max_iterations: 200, seed, ..OptimizerConfig::default() }
    }

    #[test]
    fn box_mapping_round_trips() {
        for &x in &[-1.0, -0.3, 0.0, 0.77, 1.0] {
            assert!((to_box(from_box(x, (-1.0, 1.0)), (-1.0, 1.0)) - x).abs() < 1e-15);
        }
        for &x in &[2.0, 2.5, 5.0] {
            assert!((to_box(from_box(x, (2.0, 5.0)), (2.0, 5.0)) - x).abs() < 1e-14);
        }
        for z in [-50.0, -1.3, 0.2, 7.0, 1e3] {
            let x = to_box(z, (2.0, 5.0));
            assert!((2.0..=5.0).contains(&x));
        }
    }

    #[test]
    fn weight_logits_round_trip() {
        let w = vec![0.1, 0.2, 0.3, 0.4];
        let back = weights_from_logits(&logits_from_weights(&w));
        for (a, b) in w.iter().zip(&back) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(weights_from_logits(&[]), vec![1.0]);
        let big = weights_from_logits(&[800.0, -800.0]);
        assert!(big.iter().all(|x| x.is_finite()) && (big.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cached_objective_matches_direct_evaluation() {
        let spec = ModelSpec::two_factor(Link::Logit, 4);
        let theta = ParameterPoint::new(vec![0.2, 1.0, 1.5], 3.0).unwrap();
        let ev = InfoEvaluator::naive();
        let points = std::slice::from_ref(&theta);
        let mut problem = Problem::new(&spec, points, &ev, 3, 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_start(&problem, &mut rng);
        let (blocks, weights) = problem.decode(&x);
        let d = Design::new(blocks, weights).unwrap();
        let direct = objective_local(&spec, &d, &theta, &ev).unwrap();
        assert!((-problem.value(&x) - direct).abs() < 1e-12);
        // The gradient agrees with a plain finite difference on the full objective.
        let g = problem.gradient(&x);
        for i in [0, 5, x.len() - 1] {
            let h = 1e-5;
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (problem.value(&xp) - problem.value(&xm)) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-5 * fd.abs().max(1.0), "coordinate {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn traces_are_monotone_and_reported_objective_reproduces() {
        let spec = ModelSpec::two_factor(Link::Logit, 2);
        let theta = ParameterPoint::from_attenuated(&[0.0, 1.0, 1.0], 2.0).unwrap();
        let ev = InfoEvaluator::new(Method::AdjMql);
        let res = optimize_design(&spec, &Target::Local(theta.clone()), &ev, &quick(4, 1)).unwrap();
        for t in &res.traces {
            assert!(t.windows(2).all(|w| w[1] >= w[0]), "trace not monotone: {t:?}");
        }
        let again = objective_local(&spec, &res.design, &theta, &ev).unwrap();
        assert!((again - res.objective).abs() < 1e-9);
        assert!(res.design.len() <= spec.support_cap());
        assert_eq!(res.design, canonicalize(&res.design).unwrap());
    }

    #[test]
    fn identical_seeds_give_identical_results() {
        let spec = ModelSpec::two_factor(Link::Logit, 2);
        let theta = ParameterPoint::new(vec![0.5, 1.0, -1.0], 1.0).unwrap();
        let ev = InfoEvaluator::naive();
        let a = optimize_design(&spec, &Target::Local(theta.clone()), &ev, &quick(3, 7)).unwrap();
        let b = optimize_design(&spec, &Target::Local(theta), &ev, &quick(3, 7)).unwrap();
        assert!(a.same_outcome(&b));
    }

    #[test]
    fn independent_glm_optimum_is_the_factorial() {
        // σ² = 0 and β = 0 reduce to a linear model with weight 1/4, for which
        // the 2² factorial in a block of four is D-optimal: M = FᵀF/4 = I.
        let spec = ModelSpec::two_factor(Link::Logit, 4);
        let theta = ParameterPoint::new(vec![0.0; 3], 0.0).unwrap();
        let res = optimize_design(&spec, &Target::Local(theta), &InfoEvaluator::new(Method::Mql), &quick(3, 2)).unwrap();
        assert!(res.objective.abs() < 1e-8, "objective {}", res.objective);
    }

    #[test]
    fn prune_and_merge_collapses_duplicates() {
        let cfg = OptimizerConfig::default();
        let a = Block::new(vec![vec![1.0, 1.0], vec![-1.0, 0.5]]);
        let a_perm = Block::new(vec![vec![-1.0, 0.5 + 1e-5], vec![1.0, 1.0]]);
        let c = Block::new(vec![vec![0.0, 0.0], vec![0.5, 0.5]]);
        let (blocks, w) = prune_and_merge(vec![a, a_perm, c], vec![0.5, 0.49995, 0.00005], &[(-1.0, 1.0); 2], &cfg).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn infeasible_everywhere_is_an_error() {
        // A single unit per block cannot identify three parameters with one block;
        // capping support at one block makes every start singular.
        let spec = ModelSpec::two_factor(Link::Logit, 1);
        let theta = ParameterPoint::new(vec![0.0, 1.0, 1.0], 0.0).unwrap();
        let cfg = OptimizerConfig { support_cap: Some(1), ..quick(2, 0) };
        let err = optimize_design(&spec, &Target::Local(theta), &InfoEvaluator::new(Method::Mql), &cfg).unwrap_err();
        assert!(matches!(err, DesignError::NoFeasibleDesign));
    }

    #[test]
    fn config_validation() {
        let spec = ModelSpec::two_factor(Link::Logit, 2);
        assert!(OptimizerConfig::default().validate(&spec).is_ok());
        assert!(OptimizerConfig { support_cap: Some(8), ..Default::default() }.validate(&spec).is_err());
        assert!(OptimizerConfig { n_starts: 0, ..Default::default() }.validate(&spec).is_err());
    }
}
