//! D-optimality objectives, efficiencies and post-hoc diagnostics.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotic::{info_asymptotic_with, CConstantTable, DEFAULT_GAMMA};
use crate::closed_form::{
    block_info_adj_gee, block_info_adj_mql, block_info_gee, block_info_mql, block_info_quasi_poisson, WorkingCorrelation,
};
use crate::enumeration::{info_mc, info_naive_binary, MAX_ENUMERATION_M};
use crate::error::{DesignError, Result};
use crate::info::{info_design, InfoMatrix, Method};
use crate::model::{Block, Design, Link, ModelSpec, ParameterPoint};
use crate::quadrature::{gauss_hermite_cached, QuadratureRule};
use crate::surrogate::{info_interp, SurrogateBundle};

/// Relative jitter added on the single Cholesky retry.
const LOGDET_JITTER: f64 = 1e-10;
/// Squared Cholesky pivots below this fraction of the mean diagonal count as
/// a breakdown: such a matrix is singular to working precision.
const PIVOT_TOL: f64 = 1e-9;
pub const DEFAULT_MC_SAMPLES: usize = 10_000;

/// `log |M|` via Cholesky, retrying once with a small diagonal jitter.
/// Returns `-∞` when the matrix is singular or indefinite.
pub fn logdet_psd(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    if p == 0 || m.ncols() != p || m.iter().any(|x| !x.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    let scale = sym.trace() / p as f64;
    if !(scale > 0.0) {
        return f64::NEG_INFINITY;
    }
    let floor = PIVOT_TOL * scale;
    if let Some(ld) = chol_logdet(sym.clone(), floor) {
        return ld;
    }
    let mut j = sym;
    for i in 0..p {
        j[(i, i)] += LOGDET_JITTER * scale;
    }
    chol_logdet(j, floor).unwrap_or(f64::NEG_INFINITY)
}

fn chol_logdet(m: DMatrix<f64>, floor: f64) -> Option<f64> {
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    let mut ld = 0.0;
    for i in 0..l.nrows() {
        let d2 = l[(i, i)] * l[(i, i)];
        if !(d2 > floor) {
            return None;
        }
        ld += d2.ln();
    }
    ld.is_finite().then_some(ld)
}

/// Which Gauss–Hermite rule the enumeration methods integrate with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureChoice {
    /// `n = max(32, ceil(8σ))`.
    #[default]
    Adaptive,
    Fixed(usize),
    /// Composite Gauss–Legendre; slow, used as a high-accuracy reference.
    Composite,
}

impl QuadratureChoice {
    pub fn rule(self, sigma2: f64) -> Arc<QuadratureRule> {
        match self {
            QuadratureChoice::Adaptive => QuadratureRule::adaptive(sigma2),
            QuadratureChoice::Fixed(n) => gauss_hermite_cached(n),
            QuadratureChoice::Composite => Arc::new(QuadratureRule::composite_normal(sigma2.max(0.0).sqrt())),
        }
    }
}

/// A fully specified information approximation: the method plus whatever
/// settings it needs.
#[derive(Debug, Clone)]
pub struct InfoEvaluator {
    pub method: Method,
    pub rho: Option<f64>,
    pub bundle: Option<Arc<SurrogateBundle>>,
    pub mc_samples: usize,
    /// Every Monte Carlo evaluation restarts from this seed, so objective
    /// differences use common random numbers.
    pub mc_seed: u64,
    pub quadrature: QuadratureChoice,
    pub gamma: f64,
    table: Arc<CConstantTable>,
}

impl InfoEvaluator {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            rho: None,
            bundle: None,
            mc_samples: DEFAULT_MC_SAMPLES,
            mc_seed: 0,
            quadrature: QuadratureChoice::Adaptive,
            gamma: DEFAULT_GAMMA,
            table: CConstantTable::shared(),
        }
    }

    pub fn naive() -> Self {
        Self::new(Method::Naive)
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = Some(rho);
        self
    }

    pub fn with_bundle(mut self, bundle: Arc<SurrogateBundle>) -> Self {
        self.bundle = Some(bundle);
        self
    }

    pub fn with_mc(mut self, samples: usize, seed: u64) -> Self {
        self.mc_samples = samples;
        self.mc_seed = seed;
        self
    }

    pub fn with_quadrature(mut self, quadrature: QuadratureChoice) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Checks the method's preconditions against a model.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        spec.validate()?;
        let logit_only = |name: &str| -> Result<()> {
            if spec.link != Link::Logit {
                return Err(DesignError::InvalidParameter(format!("method {name} requires the logit link")));
            }
            Ok(())
        };
        match self.method {
            Method::Naive | Method::Asymptotic | Method::Interpolated => {
                logit_only(self.method.name())?;
                if spec.m > MAX_ENUMERATION_M {
                    return Err(DesignError::BlockTooLarge { m: spec.m, limit: MAX_ENUMERATION_M });
                }
            }
            Method::AdjMql | Method::AdjGee => logit_only(self.method.name())?,
            Method::QuasiDirect => {
                if spec.link != Link::Log {
                    return Err(DesignError::InvalidParameter("method quasi_direct requires the log link".into()));
                }
            }
            Method::MonteCarlo => {
                if self.mc_samples == 0 {
                    return Err(DesignError::InvalidParameter("Monte Carlo sample count must be positive".into()));
                }
            }
            Method::Mql | Method::Gee => {}
        }
        if self.method.uses_rho() {
            let rho = self.rho.ok_or_else(|| DesignError::InvalidParameter(format!("method {} needs rho", self.method)))?;
            WorkingCorrelation::new(rho, spec.m)?;
        }
        if self.method == Method::Interpolated {
            let bundle = self.bundle.as_ref().ok_or_else(|| DesignError::InvalidParameter("method interpolated needs a surrogate bundle".into()))?;
            if bundle.m() != spec.m {
                return Err(DesignError::SurrogateMismatch(format!("bundle trained for m = {}, model has m = {}", bundle.m(), spec.m)));
            }
        }
        if let QuadratureChoice::Fixed(n) = self.quadrature {
            if n == 0 || n > crate::quadrature::MAX_HERMITE_ORDER {
                return Err(DesignError::QuadratureOrder(n));
            }
        }
        Ok(())
    }

    /// Per-point checks that `validate` cannot make without a parameter value.
    pub fn validate_point(&self, spec: &ModelSpec, theta: &ParameterPoint) -> Result<()> {
        spec.check_beta(&theta.beta)?;
        match self.method {
            Method::Interpolated => match &self.bundle {
                Some(b) => b.check_matches(spec.m, theta.sigma2),
                None => Err(DesignError::InvalidParameter("method interpolated needs a surrogate bundle".into())),
            },
            Method::Asymptotic if theta.sigma2 <= 0.0 => {
                Err(DesignError::InvalidParameter("asymptotic approximation needs sigma2 > 0".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn block_info(&self, spec: &ModelSpec, block: &Block, theta: &ParameterPoint) -> Result<InfoMatrix> {
        let rho = || self.rho.ok_or_else(|| DesignError::InvalidParameter(format!("method {} needs rho", self.method)));
        match self.method {
            Method::Naive => info_naive_binary(spec, block, theta, &self.quadrature.rule(theta.sigma2)),
            Method::MonteCarlo => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.mc_seed);
                info_mc(spec, block, theta, self.mc_samples, &self.quadrature.rule(theta.sigma2), &mut rng)
            }
            Method::Mql => block_info_mql(spec, block, theta),
            Method::Gee => {
                let mut info = block_info_gee(spec, block, &theta.beta, rho()?)?;
                info.method = Method::Gee;
                Ok(info)
            }
            Method::AdjMql => block_info_adj_mql(spec, block, theta),
            Method::AdjGee => block_info_adj_gee(spec, block, theta, rho()?),
            Method::Asymptotic => info_asymptotic_with(spec, block, theta, &self.table, self.gamma),
            Method::Interpolated => {
                let bundle = self.bundle.as_ref().ok_or_else(|| DesignError::InvalidParameter("method interpolated needs a surrogate bundle".into()))?;
                info_interp(spec, block, theta, bundle)
            }
            Method::QuasiDirect => block_info_quasi_poisson(spec, block, theta),
        }
    }

    pub fn design_info(&self, spec: &ModelSpec, design: &Design, theta: &ParameterPoint) -> Result<InfoMatrix> {
        info_design(design, |b| self.block_info(spec, b, theta))
    }
}

pub fn objective_local(spec: &ModelSpec, design: &Design, theta: &ParameterPoint, evaluator: &InfoEvaluator) -> Result<f64> {
    Ok(logdet_psd(&evaluator.design_info(spec, design, theta)?.matrix))
}

/// Mean log-determinant over a prior sample.
pub fn objective_bayes(spec: &ModelSpec, design: &Design, prior: &[ParameterPoint], evaluator: &InfoEvaluator) -> Result<f64> {
    if prior.is_empty() {
        return Err(DesignError::InvalidParameter("prior sample is empty".into()));
    }
    let mut total = 0.0;
    for theta in prior {
        let v = objective_local(spec, design, theta, evaluator)?;
        if v == f64::NEG_INFINITY {
            return Ok(v);
        }
        total += v;
    }
    Ok(total / prior.len() as f64)
}

fn efficiency_from(value: f64, reference: f64, p: usize) -> Result<f64> {
    if !reference.is_finite() {
        return Err(DesignError::SingularReference("reference design has singular information".into()));
    }
    Ok(((value - reference) / p as f64).exp())
}

/// `{|M(ξ)| / |M(ξ_ref)|}^{1/p}` under `evaluator` (normally the naive method).
pub fn efficiency_local(
    spec: &ModelSpec,
    design: &Design,
    theta: &ParameterPoint,
    reference: &Design,
    evaluator: &InfoEvaluator,
) -> Result<f64> {
    let r = objective_local(spec, reference, theta, evaluator)?;
    let v = objective_local(spec, design, theta, evaluator)?;
    efficiency_from(v, r, spec.p())
}

/// `exp[{ψ(ξ) − ψ(ξ_ref)}/p]`.
pub fn efficiency_bayes(
    spec: &ModelSpec,
    design: &Design,
    prior: &[ParameterPoint],
    reference: &Design,
    evaluator: &InfoEvaluator,
) -> Result<f64> {
    let r = objective_bayes(spec, reference, prior, evaluator)?;
    let v = objective_bayes(spec, design, prior, evaluator)?;
    efficiency_from(v, r, spec.p())
}

fn inverse_pd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    Cholesky::new(sym)
        .map(|c| c.inverse())
        .ok_or_else(|| DesignError::NotPositiveDefinite("design information is singular".into()))
}

/// Approximate `sd(β̂_i)/|β_i|` for an experiment with `n_blocks` blocks.
/// Zero coefficients are scaled by the smallest nonzero `|β_i|`.
pub fn relative_estimation_error(
    spec: &ModelSpec,
    design: &Design,
    theta: &ParameterPoint,
    n_blocks: f64,
    evaluator: &InfoEvaluator,
) -> Result<Vec<f64>> {
    if !(n_blocks > 0.0) {
        return Err(DesignError::InvalidParameter(format!("number of blocks must be positive, got {n_blocks}")));
    }
    let smallest = theta
        .beta
        .iter()
        .map(|b| b.abs())
        .filter(|&b| b > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !smallest.is_finite() {
        return Err(DesignError::InvalidParameter("relative error undefined when every coefficient is zero".into()));
    }
    let inv = inverse_pd(&evaluator.design_info(spec, design, theta)?.matrix)?;
    Ok(theta
        .beta
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let scale = if b == 0.0 { smallest } else { b.abs() };
            inv[(i, i)].max(0.0).sqrt() / (n_blocks.sqrt() * scale)
        })
        .collect())
}

/// `trace(M(ξ)⁻¹ M(ζ))` for a single candidate block; equals `p` on the
/// support of a locally D-optimal design.
pub fn equivalence_trace(
    spec: &ModelSpec,
    design: &Design,
    theta: &ParameterPoint,
    evaluator: &InfoEvaluator,
    block: &Block,
) -> Result<f64> {
    let inv = inverse_pd(&evaluator.design_info(spec, design, theta)?.matrix)?;
    let mb = evaluator.block_info(spec, block, theta)?;
    Ok((inv * mb.matrix).trace())
}

/// Largest `trace(M(ξ)⁻¹ M(ζ)) − p` over random probe blocks drawn
/// uniformly from the box. Values near or below zero mean no probe improves
/// the design.
pub fn equivalence_diagnostic<R: Rng + ?Sized>(
    spec: &ModelSpec,
    design: &Design,
    theta: &ParameterPoint,
    evaluator: &InfoEvaluator,
    n_probe: usize,
    rng: &mut R,
) -> Result<f64> {
    let inv = inverse_pd(&evaluator.design_info(spec, design, theta)?.matrix)?;
    let p = spec.p() as f64;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..n_probe {
        let block = random_block(spec, rng);
        let mb = evaluator.block_info(spec, &block, theta)?;
        best = best.max((&inv * mb.matrix).trace() - p);
    }
    Ok(best)
}

pub(crate) fn random_block<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Block {
    Block::new(
        (0..spec.m)
            .map(|_| spec.bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect())
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonicalize;

    fn corner_block() -> Block {
        Block::new(vec![vec![1.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![-1.0, -1.0]])
    }

    fn other_block() -> Block {
        Block::new(vec![vec![0.5, 1.0], vec![-1.0, 0.2], vec![1.0, -0.3], vec![-0.4, -1.0]])
    }

    #[test]
    fn logdet_of_simple_matrices() {
        assert_eq!(logdet_psd(&DMatrix::identity(3, 3)), 0.0);
        let d = DMatrix::from_diagonal_element(3, 3, 2.0);
        assert!((logdet_psd(&d) - 3.0 * 2f64.ln()).abs() < 1e-14);
        let v = nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(logdet_psd(&(&v * v.transpose())), f64::NEG_INFINITY);
        assert_eq!(logdet_psd(&DMatrix::from_diagonal_element(2, 2, -1.0)), f64::NEG_INFINITY);
    }

    #[test]
    fn logdet_matches_eigenvalues() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let by_eig: f64 = a.clone().symmetric_eigenvalues().iter().map(|x: &f64| x.ln()).sum();
        assert!((logdet_psd(&a) - by_eig).abs() < 1e-12);
    }

    #[test]
    fn single_block_objective_is_block_logdet() {
        let spec = ModelSpec::two_factor(Link::Logit, 4);
        let theta = ParameterPoint::new(vec![0.0, 1.0, 1.0], 5.0).unwrap();
        let ev = InfoEvaluator::naive();
        let d = Design::single(corner_block());
        let direct = logdet_psd(&ev.block_info(&spec, &corner_block(), &theta).unwrap().matrix);
        assert!((objective_local(&spec, &d, &theta, &ev).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn objective_invariant_to_canonicalization_and_rescaling() {
        let spec = ModelSpec::two_factor(Link::Logit, 4);
        let theta = ParameterPoint::new(vec![0.5, 1.0, -1.0], 2.0).unwrap();
        let ev = InfoEvaluator::naive();
        let d = Design::new(vec![other_block(), corner_block()], vec![0.3, 0.7]).unwrap();
        let d2 = Design::normalized(d.blocks.clone(), vec![3.0, 7.0]).unwrap();
        let c = canonicalize(&d).unwrap();
        let a = objective_local(&spec, &d, &theta, &ev).unwrap();
        assert!((a - objective_local(&spec, &d2, &theta, &ev).unwrap()).abs() < 1e-12);
        assert!((a - objective_local(&spec, &c, &theta, &ev).unwrap()).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn bayes_objective_reduces_and_is_order_free() {
        let spec = ModelSpec::two_factor(Link::Logit, 4);
        let ev = InfoEvaluator::new(Method::AdjMql);
        let d = Design::single(other_block());
        let t1 = ParameterPoint::new(vec![0.0, 3.0, 2.0], 5.0).unwrap();
        let t2 = ParameterPoint::new(vec![0.3, 4.0, 8.0], 5.0).unwrap();
        let single = objective_bayes(&spec, &d, std::slice::from_ref(&t1), &ev).unwrap();
        assert_eq!(single, objective_local(&spec, &d, &t1, &ev).unwrap());
        let a = objective_bayes(&spec, &d, &[t1.clone(), t2.clone()], &ev).unwrap();
        let b = objective_bayes(&spec, &d, &[t2, t1], &ev).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!(objective_bayes(&spec, &d, &[], &ev).is_err());
    }

    #[test]
    fn bayes_objective_is_neg_inf_if_any_term_is() {
        let spec = ModelSpec::two_factor(Link::Logit, 2);
        let ev = InfoEvaluator::new(Method::Mql);
        let d = Design::single(Block::new(vec![vec![1.0, 1.0], vec![-1.0, 1.0]]));
        let t = ParameterPoint::new(vec![0.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(objective_bayes(&spec, &d, &[t.clone(), t], &ev).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn efficiency_of_self_and_of_halved_information() {
        let spec = ModelSpec::two_factor(Link::Logit, 4);
        let theta = ParameterPoint::new(vec![0.0, 1.0, 1.0], 1.0).unwrap();
        let ev = InfoEvaluator::new(Method::Mql);
        let d = Design::single(corner_block());
        assert!((efficiency_local(&spec, &d, &theta, &d, &ev).unwrap() - 1.0).abs() < 1e-14);
        let m = ev.design_info(&spec, &d, &theta).unwrap().matrix;
        let half = efficiency_from(logdet_psd(&(&m * 0.5)), logdet_psd(&m), 3).unwrap();
        assert!((half - 0.5).abs() < 1e-14);
        // Halving the determinant instead costs a factor 2^{-1/p}.
        let mut s = DMatrix::identity(3, 3);
        s[(0, 0)] = 0.5f64.sqrt();
        let m_half_det = &s * &m * &s;
        let e = efficiency_from(logdet_psd(&m_half_det), logdet_psd(&m), 3).unwrap();
        assert!((e - 0.5f64.powf(1.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn singular_reference_is_an_error() {
        let spec = ModelSpec::two_factor(Link::Logit, 2);
        let ev = InfoEvaluator::new(Method::Mql);
        let theta = ParameterPoint::new(vec![0.0, 1.0, 1.0], 1.0).unwrap();
        let d = Design::single(Block::new(vec![vec![1.0, 1.0], vec![-1.0, 1.0]]));
        let r = Design::single(Block::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]]));
        assert!(matches!(efficiency_local(&spec, &d, &theta, &r, &ev), Err(DesignError::SingularReference(_))));
    }

    #[test]
    fn relative_error_scaling() {
        let spec = ModelSpec::two_factor(Link::Logit, 4);
        let theta = ParameterPoint::new(vec![0.0, 1.0, 2.0], 1.0).unwrap();
        let ev = InfoEvaluator::naive();
        let d = Design::new(vec![corner_block(), other_block()], vec![0.5, 0.5]).unwrap();
        let a = relative_estimation_error(&spec, &d, &theta, 50.0, &ev).unwrap();
        let b = relative_estimation_error(&spec, &d, &theta, 100.0, &ev).unwrap();
        assert_eq!(a.len(), 3);
        for (x, y) in a.iter().zip(&b) {
            assert!((y / x - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
        // β0 = 0 is scaled by the smallest nonzero coefficient, |β1| = 1.
        let inv = inverse_pd(&ev.design_info(&spec, &d, &theta).unwrap().matrix).unwrap();
        assert!((a[0] - inv[(0, 0)].sqrt() / 50f64.sqrt()).abs() < 1e-12);
        let zero = ParameterPoint::new(vec![0.0; 3], 1.0).unwrap();
        assert!(relative_estimation_error(&spec, &d, &zero, 50.0, &ev).is_err());
    }

    #[test]
    fn validate_rejects_mismatched_methods() {
        let logit = ModelSpec::two_factor(Link::Logit, 4);
        let log = ModelSpec::two_factor(Link::Log, 3);
        assert!(InfoEvaluator::new(Method::Gee).validate(&logit).is_err());
        assert!(InfoEvaluator::new(Method::Gee).with_rho(0.3).validate(&logit).is_ok());
        assert!(InfoEvaluator::new(Method::AdjGee).with_rho(-0.5).validate(&logit).is_err());
        assert!(InfoEvaluator::new(Method::QuasiDirect).validate(&logit).is_err());
        assert!(InfoEvaluator::new(Method::QuasiDirect).validate(&log).is_ok());
        assert!(InfoEvaluator::naive().validate(&log).is_err());
        assert!(InfoEvaluator::new(Method::Interpolated).validate(&logit).is_err());
        assert!(InfoEvaluator::new(Method::Mql).validate(&log).is_ok());
    }

    #[test]
    fn own_support_traces_bound_probe_traces() {
        let spec = ModelSpec::two_factor(Link::Logit, 4);
        let theta = ParameterPoint::new(vec![0.0, 1.0, 1.0], 1.0).unwrap();
        let ev = InfoEvaluator::new(Method::Mql);
        let d = Design::new(vec![corner_block(), other_block()], vec![0.5, 0.5]).unwrap();
        // Weighted support traces always average to p.
        let t: f64 = d
            .blocks
            .iter()
            .zip(&d.weights)
            .map(|(b, w)| w * equivalence_trace(&spec, &d, &theta, &ev, b).unwrap())
            .sum();
        assert!((t - 3.0).abs() < 1e-10);
        let shrunk = Design::single(Block::new(other_block().treatments.iter().map(|x| x.iter().map(|v| 0.3 * v).collect()).collect()));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let diag = equivalence_diagnostic(&spec, &shrunk, &theta, &ev, 200, &mut rng).unwrap();
        assert!(diag > 0.0, "an arbitrary design should be improvable, got {diag}");
    }
}
