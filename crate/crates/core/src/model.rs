//! Model, block, design and parameter types for random-intercept GLMMs.
//!
//! A block holds `m` treatments that share a single `N(0, σ²)` intercept
//! draw. A design is a finite weighted set of support blocks with weights on
//! the simplex. Conditional responses are Bernoulli under the logit link and
//! Poisson under the log link.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::special::logistic;

/// Attenuation constant `c = 16√3 / (15π)`.
pub const ATTENUATION_C: f64 = 16.0 * 1.732_050_807_568_877_2 / (15.0 * std::f64::consts::PI);

const TREATMENT_TIE_TOL: f64 = 1e-9;
const BLOCK_EQUIV_TOL: f64 = 1e-7;
const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Log,
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Logit => "logit",
            Link::Log => "log",
        }
    }

    /// Inverse link `h`.
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logit => logistic(eta),
            Link::Log => eta.exp(),
        }
    }

    /// Variance function evaluated at the linear predictor with `u = 0`.
    /// Both links are canonical, so this also equals `dμ/dη`.
    pub fn variance_at(self, eta: f64) -> f64 {
        match self {
            Link::Logit => crate::special::logistic_deriv(eta),
            Link::Log => eta.exp(),
        }
    }
}

/// One regressor term of `f(x)`. Variable indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    Linear(usize),
    Interaction(usize, usize),
}

impl Term {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Intercept => 1.0,
            Term::Linear(i) => x[i],
            Term::Interaction(i, k) => x[i] * x[k],
        }
    }

    fn max_index(&self) -> Option<usize> {
        match *self {
            Term::Intercept => None,
            Term::Linear(i) => Some(i),
            Term::Interaction(i, k) => Some(i.max(k)),
        }
    }
}

/// Text form uses one-based variable names: `1`, `x1`, `x1*x2`.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Term::Intercept => write!(f, "1"),
            Term::Linear(i) => write!(f, "x{}", i + 1),
            Term::Interaction(i, k) => write!(f, "x{}*x{}", i + 1, k + 1),
        }
    }
}

impl FromStr for Term {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "1" {
            return Ok(Term::Intercept);
        }
        let var = |tok: &str| -> Result<usize> {
            let tok = tok.trim();
            let idx = tok
                .strip_prefix('x')
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&d| d >= 1)
                .ok_or_else(|| DesignError::InvalidModel(format!("unrecognised term `{s}`")))?;
            Ok(idx - 1)
        };
        match s.split_once(['*', ':']) {
            Some((a, b)) => Ok(Term::Interaction(var(a)?, var(b)?)),
            None => Ok(Term::Linear(var(s)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub link: Link,
    pub terms: Vec<Term>,
    /// Number of controllable variables.
    pub q: usize,
    /// Units per block.
    pub m: usize,
    /// Closed interval per variable.
    pub bounds: Vec<(f64, f64)>,
}

impl ModelSpec {
    pub fn new(link: Link, terms: Vec<Term>, q: usize, m: usize, bounds: Vec<(f64, f64)>) -> Result<Self> {
        let spec = Self { link, terms, q, m, bounds };
        spec.validate()?;
        Ok(spec)
    }

    /// Model with the default `[-1, 1]` box on every variable.
    pub fn with_unit_box(link: Link, terms: Vec<Term>, q: usize, m: usize) -> Result<Self> {
        Self::new(link, terms, q, m, vec![(-1.0, 1.0); q])
    }

    /// Main-effects model `β0 + β1 x1 + β2 x2` on `[-1, 1]²`.
    pub fn two_factor(link: Link, m: usize) -> Self {
        Self::with_unit_box(link, vec![Term::Intercept, Term::Linear(0), Term::Linear(1)], 2, m)
            .expect("static model is valid")
    }

    /// Four-factor model with the x1·x2, x1·x3, x1·x4 interactions.
    pub fn four_factor(link: Link, m: usize) -> Self {
        let terms = vec![
            Term::Intercept,
            Term::Linear(0),
            Term::Linear(1),
            Term::Linear(2),
            Term::Linear(3),
            Term::Interaction(0, 1),
            Term::Interaction(0, 2),
            Term::Interaction(0, 3),
        ];
        Self::with_unit_box(link, terms, 4, m).expect("static model is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(DesignError::InvalidModel("at least one term is required".into()));
        }
        if self.m == 0 {
            return Err(DesignError::InvalidModel("block size m must be at least 1".into()));
        }
        if self.q == 0 {
            return Err(DesignError::InvalidModel("q must be at least 1".into()));
        }
        if let Some(bad) = self.terms.iter().find(|t| t.max_index().is_some_and(|i| i >= self.q)) {
            return Err(DesignError::InvalidModel(format!("term {bad} references a variable beyond q = {}", self.q)));
        }
        if self.bounds.len() != self.q {
            return Err(DesignError::InvalidModel(format!(
                "{} bounds given for q = {} variables",
                self.bounds.len(),
                self.q
            )));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(DesignError::InvalidModel(format!("bounds for x{} must satisfy lo < hi", i + 1)));
            }
        }
        Ok(())
    }

    /// Number of fixed-effect parameters.
    pub fn p(&self) -> usize {
        self.terms.len()
    }

    /// Upper limit on distinct support blocks needed by a D-optimal design.
    pub fn support_cap(&self) -> usize {
        let p = self.p();
        p * (p + 1) / 2 + 1
    }

    /// `f(x)`.
    pub fn regressors(&self, x: &[f64]) -> Vec<f64> {
        self.terms.iter().map(|t| t.eval(x)).collect()
    }

    pub fn check_block(&self, block: &Block) -> Result<()> {
        if block.treatments.len() != self.m {
            return Err(DesignError::InvalidBlock(format!(
                "block has {} treatments, model expects m = {}",
                block.treatments.len(),
                self.m
            )));
        }
        for (j, x) in block.treatments.iter().enumerate() {
            if x.len() != self.q {
                return Err(DesignError::InvalidBlock(format!(
                    "treatment {j} has {} coordinates, expected q = {}",
                    x.len(),
                    self.q
                )));
            }
            for (v, (&xv, &(lo, hi))) in x.iter().zip(&self.bounds).enumerate() {
                if !(xv >= lo - 1e-9 && xv <= hi + 1e-9) {
                    return Err(DesignError::InvalidBlock(format!(
                        "treatment {j}, x{} = {xv} outside [{lo}, {hi}]",
                        v + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// `F = [f(x_1), …, f(x_m)]ᵀ`.
    pub fn model_matrix(&self, block: &Block) -> Result<DMatrix<f64>> {
        self.check_block(block)?;
        Ok(self.model_matrix_unchecked(block))
    }

    pub(crate) fn model_matrix_unchecked(&self, block: &Block) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(block.treatments.len(), p, |j, k| self.terms[k].eval(&block.treatments[j]))
    }

    /// `η_j = f(x_j)ᵀ β` for each unit of the block.
    pub fn linear_predictors(&self, block: &Block, beta: &[f64]) -> Result<Vec<f64>> {
        self.check_block(block)?;
        self.check_beta(beta)?;
        Ok(self.linear_predictors_unchecked(block, beta))
    }

    pub(crate) fn linear_predictors_unchecked(&self, block: &Block, beta: &[f64]) -> Vec<f64> {
        block
            .treatments
            .iter()
            .map(|x| self.terms.iter().zip(beta).map(|(t, b)| t.eval(x) * b).sum())
            .collect()
    }

    pub fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.p() {
            return Err(DesignError::InvalidParameter(format!(
                "beta has length {}, model has p = {}",
                beta.len(),
                self.p()
            )));
        }
        Ok(())
    }
}

/// Fixed effects `β` and random-intercept variance `σ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

impl ParameterPoint {
    pub fn new(beta: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(DesignError::InvalidParameter(format!("sigma2 = {sigma2} must be finite and >= 0")));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(DesignError::InvalidParameter("beta must be finite".into()));
        }
        Ok(Self { beta, sigma2 })
    }

    /// Build from marginal-scale coefficients by undoing the attenuation.
    pub fn from_attenuated(beta_att: &[f64], sigma2: f64) -> Result<Self> {
        Self::new(invert_attenuation(beta_att, sigma2), sigma2)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// `θ_adj = (β_att, σ²)`.
    pub fn attenuated(&self) -> ParameterPoint {
        ParameterPoint { beta: attenuate(&self.beta, self.sigma2), sigma2: self.sigma2 }
    }
}

/// `β_att = β (1 + c² σ²)^{-1/2}`.
pub fn attenuate(beta: &[f64], sigma2: f64) -> Vec<f64> {
    let s = (1.0 + ATTENUATION_C * ATTENUATION_C * sigma2).sqrt();
    beta.iter().map(|b| b / s).collect()
}

pub fn invert_attenuation(beta_att: &[f64], sigma2: f64) -> Vec<f64> {
    let s = (1.0 + ATTENUATION_C * ATTENUATION_C * sigma2).sqrt();
    beta_att.iter().map(|b| b * s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub treatments: Vec<Vec<f64>>,
}

impl Block {
    pub fn new(treatments: Vec<Vec<f64>>) -> Self {
        Self { treatments }
    }

    pub fn m(&self) -> usize {
        self.treatments.len()
    }

    /// Treatments sorted lexicographically (ties within 1e-9 per coordinate).
    pub fn canonical(&self) -> Block {
        let mut t = self.treatments.clone();
        insertion_sort_by(&mut t, |a, b| cmp_tolerant(a, b, TREATMENT_TIE_TOL));
        Block { treatments: t }
    }

    /// Max-norm distance between two blocks with the same treatment order.
    fn max_distance(&self, other: &Block) -> f64 {
        self.treatments
            .iter()
            .zip(&other.treatments)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Equivalent up to treatment permutation.
    pub fn equivalent(&self, other: &Block) -> bool {
        self.m() == other.m() && self.canonical().max_distance(&other.canonical()) < BLOCK_EQUIV_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub blocks: Vec<Block>,
    pub weights: Vec<f64>,
}

impl Design {
    /// Checked constructor: weights must be positive and sum to one.
    pub fn new(blocks: Vec<Block>, weights: Vec<f64>) -> Result<Self> {
        let d = Self { blocks, weights };
        d.validate_weights()?;
        Ok(d)
    }

    /// Normalizes positive weights onto the simplex.
    pub fn normalized(blocks: Vec<Block>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(DesignError::InvalidDesign("weights must be strictly positive".into()));
        }
        Self::new(blocks, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn single(block: Block) -> Self {
        Self { blocks: vec![block], weights: vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    fn validate_weights(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(DesignError::InvalidDesign("design has no blocks".into()));
        }
        if self.blocks.len() != self.weights.len() {
            return Err(DesignError::InvalidDesign(format!(
                "{} blocks but {} weights",
                self.blocks.len(),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(DesignError::InvalidDesign("weights must be strictly positive".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(DesignError::InvalidDesign(format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        self.validate_weights()?;
        self.blocks.iter().try_for_each(|b| spec.check_block(b))
    }
}

/// Sort treatments within blocks, merge equivalent blocks, renormalize, and
/// order blocks lexicographically.
pub fn canonicalize(design: &Design) -> Result<Design> {
    if design.blocks.is_empty() {
        return Err(DesignError::InvalidDesign("cannot canonicalize an empty design".into()));
    }
    if design.blocks.len() != design.weights.len() {
        return Err(DesignError::InvalidDesign("block and weight counts differ".into()));
    }
    let mut merged: Vec<(Block, f64)> = Vec::with_capacity(design.blocks.len());
    for (block, &w) in design.blocks.iter().zip(&design.weights) {
        if !(w > 0.0) {
            return Err(DesignError::InvalidDesign("weights must be strictly positive".into()));
        }
        let c = block.canonical();
        match merged.iter_mut().find(|(b, _)| b.m() == c.m() && b.max_distance(&c) < BLOCK_EQUIV_TOL) {
            Some((_, acc)) => *acc += w,
            None => merged.push((c, w)),
        }
    }
    insertion_sort_by(&mut merged, |a, b| {
        let fa: Vec<f64> = a.0.treatments.iter().flatten().copied().collect();
        let fb: Vec<f64> = b.0.treatments.iter().flatten().copied().collect();
        cmp_tolerant(&fa, &fb, TREATMENT_TIE_TOL)
    });
    let total: f64 = merged.iter().map(|(_, w)| w).sum();
    let (blocks, weights) = merged.into_iter().map(|(b, w)| (b, w / total)).unzip();
    Ok(Design { blocks, weights })
}

/// Prior over parameters for pseudo-Bayesian design: independent uniforms on
/// each coefficient with a known σ², or an explicit list of scenario points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSpec {
    Uniform { beta_bounds: Vec<(f64, f64)>, sigma2: f64 },
    Points(Vec<ParameterPoint>),
}

impl PriorSpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            PriorSpec::Uniform { beta_bounds, sigma2 } => {
                if beta_bounds.len() != p {
                    return Err(DesignError::InvalidParameter(format!("prior has {} coefficient ranges, model has p = {p}", beta_bounds.len())));
                }
                if beta_bounds.iter().any(|&(lo, hi)| !(lo <= hi && lo.is_finite() && hi.is_finite())) {
                    return Err(DesignError::InvalidParameter("prior ranges need finite lower <= upper".into()));
                }
                ParameterPoint::new(vec![0.0; p], *sigma2).map(|_| ())
            }
            PriorSpec::Points(points) => {
                if points.is_empty() {
                    return Err(DesignError::InvalidParameter("prior point list is empty".into()));
                }
                if points.iter().any(|t| t.beta.len() != p) {
                    return Err(DesignError::InvalidParameter(format!("prior points must have p = {p} coefficients")));
                }
                Ok(())
            }
        }
    }

    /// `n` Latin hypercube points for a uniform prior; scenario points as given.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<ParameterPoint>> {
        match self {
            PriorSpec::Uniform { beta_bounds, sigma2 } => {
                if n == 0 {
                    return Err(DesignError::InvalidParameter("prior sample size must be at least 1".into()));
                }
                crate::sampling::lhs_sample(beta_bounds, n, rng).into_iter().map(|b| ParameterPoint::new(b, *sigma2)).collect()
            }
            PriorSpec::Points(points) => Ok(points.clone()),
        }
    }
}

/// Draws one block of responses: a shared `u ~ N(0, σ²)`, then independent
/// Bernoulli or Poisson responses given `u`.
pub fn simulate_responses<R: Rng + ?Sized>(spec: &ModelSpec, block: &Block, theta: &ParameterPoint, rng: &mut R) -> Vec<u64> {
    let eta = spec.linear_predictors_unchecked(block, &theta.beta);
    simulate_from_eta(spec.link, &eta, theta.sigma(), rng)
}

pub(crate) fn simulate_from_eta<R: Rng + ?Sized>(link: Link, eta: &[f64], sigma: f64, rng: &mut R) -> Vec<u64> {
    let u = if sigma > 0.0 { Normal::new(0.0, sigma).expect("sigma is positive").sample(rng) } else { 0.0 };
    eta.iter()
        .map(|&e| match link {
            Link::Logit => {
                let p = logistic(e + u);
                u64::from(Bernoulli::new(p).expect("probability in [0, 1]").sample(rng))
            }
            Link::Log => {
                let mu = (e + u).exp();
                if mu <= 0.0 {
                    0
                } else {
                    Poisson::new(mu).expect("positive finite mean").sample(rng) as u64
                }
            }
        })
        .collect()
}

fn cmp_tolerant(a: &[f64], b: &[f64], tol: f64) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > tol {
            return x.partial_cmp(y).unwrap_or(Ordering::Equal);
        }
    }
    a.len().cmp(&b.len())
}

// The tolerant comparator is not a total order, so avoid the std sorts.
fn insertion_sort_by<T, F: Fn(&T, &T) -> Ordering>(v: &mut [T], cmp: F) {
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && cmp(&v[j - 1], &v[j]) == Ordering::Greater {
            v.swap(j - 1, j);
            j -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blk(t: &[&[f64]]) -> Block {
        Block::new(t.iter().map(|x| x.to_vec()).collect())
    }

    #[test]
    fn model_matrix_rows() {
        let spec = ModelSpec::two_factor(Link::Logit, 1);
        let f = spec.model_matrix(&blk(&[&[1.0, 1.0]])).unwrap();
        assert_eq!(f.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 1.0]);
        let f = spec.model_matrix(&blk(&[&[-1.0, 1.0]])).unwrap();
        assert_eq!(f.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, -1.0, 1.0]);

        let four = ModelSpec::four_factor(Link::Logit, 1);
        let f = four.model_matrix(&blk(&[&[1.0, 1.0, 1.0, 1.0]])).unwrap();
        assert!(f.iter().all(|&v| v == 1.0));
        assert_eq!(f.ncols(), 8);
    }

    #[test]
    fn model_matrix_dimension_mismatch() {
        let spec = ModelSpec::two_factor(Link::Logit, 2);
        assert!(matches!(spec.model_matrix(&blk(&[&[1.0, 1.0]])), Err(DesignError::InvalidBlock(_))));
        assert!(matches!(spec.model_matrix(&blk(&[&[1.0], &[0.0]])), Err(DesignError::InvalidBlock(_))));
        assert!(matches!(spec.model_matrix(&blk(&[&[1.0, 1.5], &[0.0, 0.0]])), Err(DesignError::InvalidBlock(_))));
    }

    #[test]
    fn linear_predictor_examples() {
        let spec = ModelSpec::two_factor(Link::Logit, 3);
        let b = blk(&[&[1.0, 1.0], &[-1.0, 1.0], &[1.0, -1.0]]);
        assert_eq!(spec.linear_predictors(&b, &[0.0, 1.0, 1.0]).unwrap(), vec![2.0, 0.0, 0.0]);
        assert_eq!(spec.linear_predictors(&b, &[0.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
        let spec1 = ModelSpec::two_factor(Link::Log, 1);
        assert_eq!(spec1.linear_predictors(&blk(&[&[1.0, 1.0]]), &[3.0, 1.0, 2.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn term_text_round_trip() {
        for s in ["1", "x1", "x3*x4"] {
            assert_eq!(s.parse::<Term>().unwrap().to_string(), s);
        }
        assert_eq!("x1:x2".parse::<Term>().unwrap(), Term::Interaction(0, 1));
        assert!("y2".parse::<Term>().is_err());
        assert!("x0".parse::<Term>().is_err());
    }

    #[test]
    fn attenuation_constant_and_examples() {
        let c = 16.0 * 3f64.sqrt() / (15.0 * std::f64::consts::PI);
        assert_eq!(ATTENUATION_C, c);
        assert_relative_eq!(ATTENUATION_C, 0.588_084_155_116_578, epsilon = 1e-14);
        assert_eq!(attenuate(&[1.0, -2.0], 0.0), vec![1.0, -2.0]);
        let att = attenuate(&[0.0, 5.0, 10.0], 5.0);
        let s = (1.0 + 5.0 * c * c).powf(-0.5);
        assert_relative_eq!(att[1], 5.0 * s, max_relative = 1e-15);
        assert_relative_eq!(att[2], 10.0 * s, max_relative = 1e-15);
    }

    #[test]
    fn invert_attenuation_closed_form() {
        let b = invert_attenuation(&[0.0, 1.0, 1.0], 50.0);
        let expect = (1.0 + 50.0 * ATTENUATION_C * ATTENUATION_C).sqrt();
        assert_relative_eq!(b[1], expect, max_relative = 1e-15);
        let back = attenuate(&b, 50.0);
        assert!((back[1] - 1.0).abs() < 1e-14);
        assert_eq!(invert_attenuation(&[0.3], 0.0), vec![0.3]);
    }

    #[test]
    fn canonicalize_merges_and_sorts() {
        let a = blk(&[&[1.0, 1.0], &[-1.0, 1.0]]);
        let a_perm = blk(&[&[-1.0, 1.0], &[1.0, 1.0]]);
        let d = canonicalize(&Design::new(vec![a.clone(), a.clone()], vec![0.3, 0.7]).unwrap()).unwrap();
        assert_eq!(d.len(), 1);
        assert_relative_eq!(d.weights[0], 1.0);
        assert_eq!(d.blocks[0], a_perm);
        assert!(a.equivalent(&a_perm));

        let d = canonicalize(&Design::new(vec![a.clone(), a_perm.clone()], vec![0.5, 0.5]).unwrap()).unwrap();
        assert_eq!(d.len(), 1);

        let b = blk(&[&[0.0, 0.0], &[0.5, 0.5]]);
        let d = canonicalize(&Design::new(vec![a_perm.clone(), b.clone()], vec![0.2, 0.8]).unwrap()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.weights, vec![0.2, 0.8]);

        let empty = Design { blocks: vec![], weights: vec![] };
        assert!(canonicalize(&empty).is_err());
    }

    #[test]
    fn design_weight_invariants() {
        let a = blk(&[&[1.0, 1.0]]);
        assert!(Design::new(vec![a.clone()], vec![0.9]).is_err());
        assert!(Design::new(vec![a.clone(), a.clone()], vec![1.0, 0.0]).is_err());
        let d = Design::normalized(vec![a.clone(), a], vec![2.0, 6.0]).unwrap();
        assert_eq!(d.weights, vec![0.25, 0.75]);
    }

    #[test]
    fn simulate_fair_coin() {
        let spec = ModelSpec::with_unit_box(Link::Logit, vec![Term::Intercept], 1, 1).unwrap();
        let theta = ParameterPoint::new(vec![0.0], 0.0).unwrap();
        let b = blk(&[&[0.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let s: u64 = (0..n).map(|_| simulate_responses(&spec, &b, &theta, &mut rng)[0]).sum();
        assert!((s as f64 / n as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn simulate_degenerate_low_probability() {
        let spec = ModelSpec::with_unit_box(Link::Logit, vec![Term::Intercept], 1, 3).unwrap();
        let theta = ParameterPoint::new(vec![-60.0], 0.0).unwrap();
        let b = blk(&[&[0.0], &[0.5], &[1.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(simulate_responses(&spec, &b, &theta, &mut rng), vec![0, 0, 0]);
        }
    }

    #[test]
    fn simulate_poisson_lognormal_mean() {
        // E[y] = exp(η + σ²/2) for the lognormal-Poisson mixture.
        let spec = ModelSpec::two_factor(Link::Log, 1);
        let theta = ParameterPoint::new(vec![3.0, 1.0, 2.0], 0.1).unwrap();
        let b = blk(&[&[1.0, 1.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let mean = (0..n).map(|_| simulate_responses(&spec, &b, &theta, &mut rng)[0] as f64).sum::<f64>() / n as f64;
        let expect = (6.05f64).exp();
        assert!((mean / expect - 1.0).abs() < 0.01, "mean {mean} vs {expect}");
    }
}
