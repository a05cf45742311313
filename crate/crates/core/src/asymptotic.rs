//! Large-σ² outcome enumeration for the logistic random-intercept model.
//!
//! Probabilities and η-derivatives of each outcome are replaced by their
//! leading-order expansions, with a greedy heuristic deciding which linear
//! predictors count as "close" to each unit.

use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::enumeration::MAX_ENUMERATION_M;
use crate::error::{DesignError, Result};
use crate::info::{sandwich, InfoMatrix, InfoMeta, Method};
use crate::model::{Block, Link, ModelSpec, ParameterPoint};
use crate::quadrature::{integrate_line, DEFAULT_HALF_WIDTH, DEFAULT_PANELS};
use crate::special::{beta_fn, logistic, logistic_deriv, norm_cdf, norm_pdf, norm_pdf_deriv};

/// Cutoff separating the two likelihood expansions.
pub const DEFAULT_GAMMA: f64 = 1.0;
/// Below this σ² the expansion is outside its intended regime.
pub const SIGMA2_MIN: f64 = 10.0;

/// `C1[I][J] = ∫ h' h^I (1-h)^J`, `C2` with an extra factor `t`, `C3` with
/// `h'` squared; all over the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct CConstantTable {
    pub max_index: usize,
    c1: Vec<f64>,
    c2: Vec<f64>,
    c3: Vec<f64>,
}

impl CConstantTable {
    pub fn new(max_index: usize) -> Self {
        let n = max_index + 1;
        let mut c1 = vec![0.0; n * n];
        let mut c2 = vec![0.0; n * n];
        let mut c3 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let base = move |t: f64| logistic_deriv(t) * logistic(t).powi(i as i32) * logistic(-t).powi(j as i32);
                c1[i * n + j] = integrate_line(base, DEFAULT_HALF_WIDTH, DEFAULT_PANELS);
                c2[i * n + j] = integrate_line(|t| t * base(t), DEFAULT_HALF_WIDTH, DEFAULT_PANELS);
                c3[i * n + j] = integrate_line(|t| logistic_deriv(t) * base(t), DEFAULT_HALF_WIDTH, DEFAULT_PANELS);
            }
        }
        Self { max_index, c1, c2, c3 }
    }

    /// Shared table covering every block size up to the enumeration limit.
    pub fn shared() -> Arc<CConstantTable> {
        static TABLE: OnceLock<Mutex<Option<Arc<CConstantTable>>>> = OnceLock::new();
        let cell = TABLE.get_or_init(|| Mutex::new(None));
        let mut guard = cell.lock().unwrap_or_else(|e| e.into_inner());
        guard.get_or_insert_with(|| Arc::new(CConstantTable::new(MAX_ENUMERATION_M))).clone()
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        assert!(i <= self.max_index && j <= self.max_index, "C-constant index ({i}, {j}) beyond table size {}", self.max_index);
        i * (self.max_index + 1) + j
    }

    pub fn c1(&self, i: usize, j: usize) -> f64 {
        self.c1[self.idx(i, j)]
    }

    pub fn c2(&self, i: usize, j: usize) -> f64 {
        self.c2[self.idx(i, j)]
    }

    pub fn c3(&self, i: usize, j: usize) -> f64 {
        self.c3[self.idx(i, j)]
    }

    /// `C1` in closed form: `B(I + 1, J + 1)`.
    pub fn c1_exact(i: usize, j: usize) -> f64 {
        beta_fn(i as f64 + 1.0, j as f64 + 1.0)
    }
}

pub fn c_constants(m: usize) -> Result<CConstantTable> {
    if m > MAX_ENUMERATION_M {
        return Err(DesignError::BlockTooLarge { m, limit: MAX_ENUMERATION_M });
    }
    Ok(CConstantTable::new(m))
}

/// Leading-order likelihood of an outcome. `None` marks an outcome whose
/// contribution is neglected.
pub fn approx_likelihood(y: &[u64], eta: &[f64], sigma: f64) -> Option<f64> {
    approx_likelihood_with(y, eta, sigma, DEFAULT_GAMMA)
}

pub fn approx_likelihood_with(y: &[u64], eta: &[f64], sigma: f64, gamma: f64) -> Option<f64> {
    let (mut lambda0, mut lambda1) = (f64::NEG_INFINITY, f64::INFINITY);
    for (&yj, &e) in y.iter().zip(eta) {
        if yj == 1 {
            lambda1 = lambda1.min(e);
        } else {
            lambda0 = lambda0.max(e);
        }
    }
    if lambda1 >= lambda0 + gamma {
        Some((norm_cdf(lambda1 / sigma) - norm_cdf(lambda0 / sigma)).max(0.0))
    } else if (lambda1 - lambda0).abs() <= gamma {
        Some(norm_pdf(lambda1 / sigma) / sigma)
    } else {
        None
    }
}

/// `∫ {1 - h(t)}^{n0} h(t)^{n1} dt`, the near-tie likelihood integral for a
/// close set holding `n0` zeros and `n1` ones (both at least one).
pub fn near_tie_integral(n0: usize, n1: usize) -> f64 {
    assert!(n0 >= 1 && n1 >= 1, "near-tie integral needs at least one zero and one one");
    integrate_line(|t| logistic(-t).powi(n0 as i32) * logistic(t).powi(n1 as i32), DEFAULT_HALF_WIDTH, DEFAULT_PANELS)
}

/// Neighbourhood sets of one unit: `n` below, `z` close to, `p` above.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub unit: usize,
    pub n: Vec<usize>,
    pub z: Vec<usize>,
    pub p: Vec<usize>,
    /// Ones and zeros in `z` other than the unit itself.
    pub i: usize,
    pub j: usize,
    /// Final coefficient of `φ(-η_j/σ)/σ` in the derivative expansion.
    pub c4: f64,
}

impl Partition {
    /// No unit below is a one and no unit above is a zero.
    pub fn is_quasi_increasing_for(&self, y: &[u64]) -> bool {
        self.n.iter().all(|&l| y[l] == 0) && self.p.iter().all(|&l| y[l] == 1)
    }
}

/// Greedy close-set construction for unit `unit`: the nearest remaining
/// predictor is proposed until a proposal fails the coefficient checks. Ties
/// in distance go to the smallest index.
pub fn partition_for_derivative(y: &[u64], eta: &[f64], unit: usize, table: &CConstantTable) -> Partition {
    let m = eta.len();
    let ej = eta[unit];
    let mut order: Vec<usize> = (0..m).filter(|&l| l != unit).collect();
    order.sort_by(|&a, &b| (eta[a] - ej).abs().total_cmp(&(eta[b] - ej).abs()).then(a.cmp(&b)));

    let mut z = vec![unit];
    let (mut i, mut j) = (0usize, 0usize);
    let (mut sum1, mut sum0) = (0.0, 0.0);
    let mut c4 = 1.0;
    for &l in &order {
        let delta = eta[l] - ej;
        let (ni, nj, ns1, ns0) = if y[l] == 1 { (i + 1, j, sum1 + delta, sum0) } else { (i, j + 1, sum1, sum0 + delta) };
        let c1 = table.c1(ni, nj);
        let mut cand = c1;
        if ni > 0 {
            cand += table.c3(ni - 1, nj) * ns1;
        }
        if nj > 0 {
            cand -= table.c3(ni, nj - 1) * ns0;
        }
        let cond_a = cand >= 0.0 && cand <= c4;
        let cond_b = (cand - c1).abs() <= (c4 - c1).abs();
        if !(cond_a && cond_b) {
            break;
        }
        z.push(l);
        (i, j, sum1, sum0, c4) = (ni, nj, ns1, ns0, cand);
    }

    let lo = z.iter().map(|&l| eta[l]).fold(f64::INFINITY, f64::min);
    let hi = z.iter().map(|&l| eta[l]).fold(f64::NEG_INFINITY, f64::max);
    let (mut n, mut p) = (Vec::new(), Vec::new());
    for l in 0..m {
        if z.contains(&l) {
            continue;
        }
        if eta[l] < lo {
            n.push(l);
        } else if eta[l] > hi {
            p.push(l);
        } else if eta[l] >= ej {
            // Exact tie with an extreme of the close set.
            p.push(l);
        } else {
            n.push(l);
        }
    }
    z.sort_unstable();
    Partition { unit, n, z, p, i, j, c4 }
}

/// Leading-order `∂P(Y)/∂η_j` for the unit owning `partition`.
pub fn approx_derivative(y: &[u64], eta: &[f64], sigma: f64, partition: &Partition, table: &CConstantTable) -> f64 {
    if !partition.is_quasi_increasing_for(y) {
        return 0.0;
    }
    let j = partition.unit;
    let x = -eta[j] / sigma;
    let value = norm_pdf(x) * partition.c4 / sigma + norm_pdf_deriv(x) * table.c2(partition.i, partition.j) / (sigma * sigma);
    let sign = if y[j] == 1 { 1.0 } else { -1.0 };
    sign * value.max(0.0)
}

/// Some unit splits the block so that lower predictors are zeros and higher
/// predictors are ones.
pub fn is_increasing(y: &[u64], eta: &[f64]) -> bool {
    (0..eta.len()).any(|k| eta.iter().zip(y).all(|(&e, &yl)| (e >= eta[k] || yl == 0) && (e <= eta[k] || yl == 1)))
}

/// Quasi-increasing with respect to the heuristic partitions.
pub fn is_quasi_increasing(y: &[u64], eta: &[f64], table: &CConstantTable) -> bool {
    (0..eta.len()).any(|k| partition_for_derivative(y, eta, k, table).is_quasi_increasing_for(y))
}

/// `Q` built from the leading-order probabilities and derivatives, with the
/// number of neglected outcomes.
pub fn q_matrix_asymptotic(eta: &[f64], sigma: f64, table: &CConstantTable, gamma: f64) -> Result<(DMatrix<f64>, usize)> {
    let m = eta.len();
    if m > MAX_ENUMERATION_M.min(table.max_index) {
        return Err(DesignError::BlockTooLarge { m, limit: MAX_ENUMERATION_M.min(table.max_index) });
    }
    let mut q = DMatrix::zeros(m, m);
    let mut skipped = 0;
    let mut y = vec![0u64; m];
    let mut g = vec![0.0; m];
    for mask in 0..(1usize << m) {
        for (k, yk) in y.iter_mut().enumerate() {
            *yk = ((mask >> k) & 1) as u64;
        }
        let p = match approx_likelihood_with(&y, eta, sigma, gamma) {
            Some(p) if p > 0.0 => p,
            _ => {
                skipped += 1;
                continue;
            }
        };
        for (k, gk) in g.iter_mut().enumerate() {
            let part = partition_for_derivative(&y, eta, k, table);
            *gk = approx_derivative(&y, eta, sigma, &part, table);
        }
        for a in 0..m {
            if g[a] == 0.0 {
                continue;
            }
            for b in 0..m {
                q[(a, b)] += g[a] * g[b] / p;
            }
        }
    }
    Ok((q, skipped))
}

/// Asymptotic outcome-enumeration information for one block.
pub fn info_asymptotic(spec: &ModelSpec, block: &Block, theta: &ParameterPoint) -> Result<InfoMatrix> {
    info_asymptotic_with(spec, block, theta, &CConstantTable::shared(), DEFAULT_GAMMA)
}

pub fn info_asymptotic_with(spec: &ModelSpec, block: &Block, theta: &ParameterPoint, table: &CConstantTable, gamma: f64) -> Result<InfoMatrix> {
    if spec.link != Link::Logit {
        return Err(DesignError::UnsupportedLink(spec.link.name()));
    }
    if theta.sigma2 <= 0.0 {
        return Err(DesignError::InvalidParameter("asymptotic approximation needs sigma2 > 0".into()));
    }
    let f = spec.model_matrix(block)?;
    let eta = spec.linear_predictors(block, &theta.beta)?;
    let (q, skipped) = q_matrix_asymptotic(&eta, theta.sigma(), table, gamma)?;
    let meta = InfoMeta { skipped, regime_warning: theta.sigma2 < SIGMA2_MIN, ..InfoMeta::default() };
    Ok(InfoMatrix::with_meta(sandwich(&f, &q), Method::Asymptotic, meta))
}
