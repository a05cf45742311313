//! Information-matrix container shared by every approximation.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::model::{Block, Design};

/// Which approximation produced an information matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    MonteCarlo,
    Mql,
    Gee,
    AdjMql,
    AdjGee,
    Asymptotic,
    Interpolated,
    QuasiDirect,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Naive,
        Method::MonteCarlo,
        Method::Mql,
        Method::Gee,
        Method::AdjMql,
        Method::AdjGee,
        Method::Asymptotic,
        Method::Interpolated,
        Method::QuasiDirect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::MonteCarlo => "mc",
            Method::Mql => "mql",
            Method::Gee => "gee",
            Method::AdjMql => "adj_mql",
            Method::AdjGee => "adj_gee",
            Method::Asymptotic => "asymptotic",
            Method::Interpolated => "interpolated",
            Method::QuasiDirect => "quasi_direct",
        }
    }

    pub fn uses_rho(self) -> bool {
        matches!(self, Method::Gee | Method::AdjGee)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s || (s == "monte_carlo" && *m == Method::MonteCarlo))
            .ok_or_else(|| DesignError::InvalidParameter(format!("unknown method `{s}`")))
    }
}

/// Provenance details recorded alongside a matrix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InfoMeta {
    pub quadrature_order: Option<usize>,
    pub samples: Option<usize>,
    pub rho: Option<f64>,
    /// Outcomes or samples skipped because `P(Y)` underflowed.
    pub skipped: usize,
    /// Set when an approximation is used outside its intended regime.
    pub regime_warning: bool,
    /// Entrywise Monte Carlo standard errors.
    pub std_errors: Option<DMatrix<f64>>,
    /// Surrogate predictions projected onto the PSD cone.
    pub psd_projections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoMatrix {
    pub matrix: DMatrix<f64>,
    pub method: Method,
    pub meta: InfoMeta,
}

impl InfoMatrix {
    pub fn new(matrix: DMatrix<f64>, method: Method) -> Self {
        Self { matrix, method, meta: InfoMeta::default() }
    }

    pub fn with_meta(matrix: DMatrix<f64>, method: Method, meta: InfoMeta) -> Self {
        Self { matrix, method, meta }
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest absolute asymmetry `|M_ab - M_ba|`.
    pub fn asymmetry(&self) -> f64 {
        let m = &self.matrix;
        (m - m.transpose()).amax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.matrix + self.matrix.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}

/// `F ᵀ Q F`, symmetrized.
pub(crate) fn sandwich(f: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let m = f.transpose() * q * f;
    (&m + m.transpose()) * 0.5
}

/// Weighted sum of per-block information matrices.
pub fn combine(infos: &[InfoMatrix], weights: &[f64]) -> Result<InfoMatrix> {
    let first = infos.first().ok_or_else(|| DesignError::InvalidDesign("no block information to combine".into()))?;
    if infos.len() != weights.len() {
        return Err(DesignError::InvalidDesign("block and weight counts differ".into()));
    }
    let p = first.p();
    let mut total = DMatrix::zeros(p, p);
    let mut meta = first.meta.clone();
    meta.skipped = 0;
    meta.psd_projections = 0;
    meta.std_errors = None;
    let mut var = first.meta.std_errors.as_ref().map(|_| DMatrix::<f64>::zeros(p, p));
    for (info, &w) in infos.iter().zip(weights) {
        if info.method != first.method || info.meta.rho != first.meta.rho {
            return Err(DesignError::MixedMethods(
                format!("{}{}", first.method, rho_tag(first.meta.rho)),
                format!("{}{}", info.method, rho_tag(info.meta.rho)),
            ));
        }
        total += &info.matrix * w;
        meta.skipped += info.meta.skipped;
        meta.psd_projections += info.meta.psd_projections;
        meta.regime_warning |= info.meta.regime_warning;
        if let (Some(v), Some(se)) = (var.as_mut(), info.meta.std_errors.as_ref()) {
            *v += se.component_mul(se) * (w * w);
        }
    }
    meta.std_errors = var.map(|v| v.map(f64::sqrt));
    Ok(InfoMatrix { matrix: total, method: first.method, meta })
}

fn rho_tag(rho: Option<f64>) -> String {
    rho.map(|r| format!("(rho={r})")).unwrap_or_default()
}

/// `M(ξ) = Σ_k w_k M(ζ_k)` with the per-block information supplied by `f`.
pub fn info_design<F>(design: &Design, mut f: F) -> Result<InfoMatrix>
where
    F: FnMut(&Block) -> Result<InfoMatrix>,
{
    let infos = design.blocks.iter().map(&mut f).collect::<Result<Vec<_>>>()?;
    combine(&infos, &design.weights)
}
