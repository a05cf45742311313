//! Moment-based information approximations: marginal quasi-likelihood (MQL),
//! generalized estimating equations (GEE) with exchangeable working
//! correlation, their attenuation-adjusted forms, and the Poisson direct
//! quasi-likelihood approach built on exact lognormal-Poisson moments.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{DesignError, Result};
use crate::info::{combine, sandwich, InfoMatrix, InfoMeta, Method};
use crate::model::{Block, Design, Link, ModelSpec, ParameterPoint};

/// Exchangeable working correlation `R(ρ) = (1 - ρ) I + ρ 1 1ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkingCorrelation {
    pub rho: f64,
    pub m: usize,
}

impl WorkingCorrelation {
    pub fn new(rho: f64, m: usize) -> Result<Self> {
        let lower = if m > 1 { -1.0 / (m as f64 - 1.0) } else { -1.0 };
        if !(rho > lower && rho < 1.0) {
            return Err(DesignError::InvalidRho { rho, m });
        }
        Ok(Self { rho, m })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |a, b| if a == b { 1.0 } else { self.rho })
    }

    fn cholesky(&self) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        Cholesky::new(self.matrix()).ok_or(DesignError::InvalidRho { rho: self.rho, m: self.m })
    }
}

/// Block-level MQL information `Fᵀ V⁻¹ F`, `V = W⁻¹ + σ² 1 1ᵀ`.
pub fn block_info_mql(spec: &ModelSpec, block: &Block, theta: &ParameterPoint) -> Result<InfoMatrix> {
    let f = spec.model_matrix(block)?;
    let eta = spec.linear_predictors(block, &theta.beta)?;
    let m = eta.len();
    let mut v = DMatrix::from_element(m, m, theta.sigma2);
    for (j, &e) in eta.iter().enumerate() {
        let w = spec.link.variance_at(e);
        if !w.is_finite() {
            return Err(DesignError::Overflow { unit: j, detail: format!("variance function overflows at eta = {e}") });
        }
        let inv = 1.0 / w;
        if !inv.is_finite() {
            return Err(DesignError::SingularCovariance { unit: j, detail: format!("working weight underflows at eta = {e}") });
        }
        v[(j, j)] += inv;
    }
    let chol = Cholesky::new(v).ok_or_else(|| DesignError::SingularCovariance { unit: 0, detail: "V is not positive definite".into() })?;
    let vinv_f = chol.solve(&f);
    let info = f.transpose() * vinv_f;
    Ok(InfoMatrix::new((&info + info.transpose()) * 0.5, Method::Mql))
}

/// Block-level GEE information for a canonical link,
/// `Fᵀ V*^{1/2} R(ρ)⁻¹ V*^{1/2} F` with `V*` evaluated at `β*`.
pub fn block_info_gee(spec: &ModelSpec, block: &Block, beta_star: &[f64], rho: f64) -> Result<InfoMatrix> {
    let corr = WorkingCorrelation::new(rho, spec.m)?;
    block_info_gee_with(spec, block, beta_star, &corr.cholesky()?, rho)
}

fn block_info_gee_with(spec: &ModelSpec, block: &Block, beta_star: &[f64], chol: &Cholesky<f64, nalgebra::Dyn>, rho: f64) -> Result<InfoMatrix> {
    let mut f = spec.model_matrix(block)?;
    let eta = spec.linear_predictors(block, beta_star)?;
    for (j, &e) in eta.iter().enumerate() {
        let s = spec.link.variance_at(e).sqrt();
        if !s.is_finite() {
            return Err(DesignError::Overflow { unit: j, detail: format!("variance function overflows at eta = {e}") });
        }
        f.row_mut(j).scale_mut(s);
    }
    let info = sandwich(&f, &chol.inverse());
    let meta = InfoMeta { rho: Some(rho), ..InfoMeta::default() };
    Ok(InfoMatrix::with_meta(info, Method::Gee, meta))
}

pub fn block_info_adj_mql(spec: &ModelSpec, block: &Block, theta: &ParameterPoint) -> Result<InfoMatrix> {
    let mut info = block_info_mql(spec, block, &theta.attenuated())?;
    info.method = Method::AdjMql;
    Ok(info)
}

pub fn block_info_adj_gee(spec: &ModelSpec, block: &Block, theta: &ParameterPoint, rho: f64) -> Result<InfoMatrix> {
    let mut info = block_info_gee(spec, block, &theta.attenuated().beta, rho)?;
    info.method = Method::AdjGee;
    Ok(info)
}

pub fn info_mql(spec: &ModelSpec, design: &Design, theta: &ParameterPoint) -> Result<InfoMatrix> {
    design_sum(design, |b| block_info_mql(spec, b, theta))
}

pub fn info_gee(spec: &ModelSpec, design: &Design, beta_star: &[f64], rho: f64) -> Result<InfoMatrix> {
    let chol = WorkingCorrelation::new(rho, spec.m)?.cholesky()?;
    design_sum(design, |b| block_info_gee_with(spec, b, beta_star, &chol, rho))
}

pub fn info_adj_mql(spec: &ModelSpec, design: &Design, theta: &ParameterPoint) -> Result<InfoMatrix> {
    design_sum(design, |b| block_info_adj_mql(spec, b, theta))
}

pub fn info_adj_gee(spec: &ModelSpec, design: &Design, theta: &ParameterPoint, rho: f64) -> Result<InfoMatrix> {
    let mut info = info_gee(spec, design, &theta.attenuated().beta, rho)?;
    info.method = Method::AdjGee;
    Ok(info)
}

fn design_sum<F>(design: &Design, f: F) -> Result<InfoMatrix>
where
    F: Fn(&Block) -> Result<InfoMatrix>,
{
    let infos = design.blocks.iter().map(f).collect::<Result<Vec<_>>>()?;
    combine(&infos, &design.weights)
}

/// Exact marginal mean and covariance of a Poisson random-intercept block:
/// `μ_j = exp(η_j + σ²/2)`, `Cov(y_j, y_l) = μ_j μ_l (e^{σ²} - 1) + 1{j=l} μ_j`.
pub fn poisson_marginal_moments(spec: &ModelSpec, block: &Block, theta: &ParameterPoint) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if spec.link != Link::Log {
        return Err(DesignError::UnsupportedLink(spec.link.name()));
    }
    let eta = spec.linear_predictors(block, &theta.beta)?;
    moments_from_eta(&eta, theta.sigma2)
}

fn moments_from_eta(eta: &[f64], sigma2: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = eta.len();
    let mu = DVector::from_iterator(m, eta.iter().map(|e| (e + 0.5 * sigma2).exp()));
    if let Some(j) = mu.iter().position(|v| !v.is_finite()) {
        return Err(DesignError::Overflow { unit: j, detail: format!("marginal mean exp(eta + sigma2/2) overflows at eta = {}", eta[j]) });
    }
    let excess = sigma2.exp_m1();
    let mut cov = &mu * mu.transpose() * excess;
    for j in 0..m {
        cov[(j, j)] += mu[j];
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(DesignError::Overflow { unit: 0, detail: "marginal covariance overflows".into() });
    }
    Ok((mu, cov))
}

/// Block-level direct quasi-likelihood information `Dᵀ Σ⁻¹ D`, `D = diag(μ) F`.
pub fn block_info_quasi_poisson(spec: &ModelSpec, block: &Block, theta: &ParameterPoint) -> Result<InfoMatrix> {
    let (mu, cov) = poisson_marginal_moments(spec, block, theta)?;
    let mut d = spec.model_matrix(block)?;
    for j in 0..mu.len() {
        d.row_mut(j).scale_mut(mu[j]);
    }
    let chol = Cholesky::new(cov).ok_or_else(|| DesignError::SingularCovariance { unit: 0, detail: "marginal covariance is not positive definite".into() })?;
    let info = d.transpose() * chol.solve(&d);
    Ok(InfoMatrix::new((&info + info.transpose()) * 0.5, Method::QuasiDirect))
}

pub fn info_quasi_poisson(spec: &ModelSpec, design: &Design, theta: &ParameterPoint) -> Result<InfoMatrix> {
    design_sum(design, |b| block_info_quasi_poisson(spec, b, theta))
}
