//! Interpolated outcome enumeration: Kriging surrogates of `Q(η)` at a fixed
//! σ², a bilinear grid for blocks of two, training-set generation and
//! persistence.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enumeration::q_matrix_eta;
use crate::error::{DesignError, Result};
use crate::info::{sandwich, InfoMatrix, InfoMeta, Method};
use crate::model::{Block, Link, ModelSpec, ParameterPoint};
use crate::quadrature::QuadratureRule;
pub use crate::sampling::lhs_sample;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_RANGE: f64 = 15.0;
pub const DEFAULT_NUGGET: f64 = 1e-8;
pub const DEFAULT_ETA_BOUND: f64 = 20.0;
/// Largest block size accepted for training.
pub const MAX_TRAINING_M: usize = 8;
/// Queries may leave the box by this fraction of its width.
const EXTRAPOLATION_MARGIN: f64 = 0.1;
const HOLDOUT_STRIDE: usize = 10;

/// Axis-aligned box `[lo_i, hi_i]`.
pub type Bounds = Vec<(f64, f64)>;

pub fn default_bounds(m: usize) -> Bounds {
    vec![(-DEFAULT_ETA_BOUND, DEFAULT_ETA_BOUND); m]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub sigma2: f64,
    pub m: usize,
    pub bounds: Bounds,
    pub points: Vec<Vec<f64>>,
    pub targets: Vec<DMatrix<f64>>,
    pub quadrature_order: usize,
}

/// Evaluate `Q` by outcome enumeration at an LHS sample of the box.
pub fn build_training_set<R: Rng + ?Sized>(
    spec: &ModelSpec,
    sigma2: f64,
    bounds: &[(f64, f64)],
    n: usize,
    rng: &mut R,
    rule: &QuadratureRule,
) -> Result<TrainingSet> {
    if spec.link != Link::Logit {
        return Err(DesignError::UnsupportedLink(spec.link.name()));
    }
    if spec.m > MAX_TRAINING_M {
        return Err(DesignError::BlockTooLarge { m: spec.m, limit: MAX_TRAINING_M });
    }
    if bounds.len() != spec.m || bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
        return Err(DesignError::InvalidParameter("training box must give lo < hi for each of the m coordinates".into()));
    }
    if n == 0 {
        return Err(DesignError::InvalidParameter("training set needs at least one point".into()));
    }
    let points = lhs_sample(bounds, n, rng);
    let targets = points.par_iter().map(|eta| q_matrix_eta(eta, sigma2, rule).map(|q| q.matrix)).collect::<Result<Vec<_>>>()?;
    Ok(TrainingSet { sigma2, m: spec.m, bounds: bounds.to_vec(), points, targets, quadrature_order: rule.len() })
}

/// Wendland correlation `(1 - d/θ)₊⁴ (1 + 4d/θ)`.
#[inline]
pub fn wendland(d: f64, range: f64) -> f64 {
    let r = d / range;
    if r >= 1.0 {
        0.0
    } else {
        let s = 1.0 - r;
        let s2 = s * s;
        s2 * s2 * (1.0 + 4.0 * r)
    }
}

fn upper_entries(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|a| (a..m).map(move |b| (a, b))).collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct KrigingSurrogate {
    pub m: usize,
    pub sigma2: f64,
    pub bounds: Bounds,
    pub range: f64,
    pub nugget: f64,
    pub quadrature_order: usize,
    pub points: Vec<Vec<f64>>,
    /// Solve coefficients, one row per training point and one column per
    /// upper-triangle entry of `Q` in row-major order.
    pub coefficients: Vec<Vec<f64>>,
    /// Held-out root mean squared error per upper-triangle entry.
    pub holdout_rmse: Vec<f64>,
    /// Range of held-out targets per upper-triangle entry.
    pub holdout_range: Vec<f64>,
    #[serde(skip)]
    psd_projections: AtomicUsize,
}

/// Bilinear interpolation of `Q` on a regular grid, blocks of two only.
#[derive(Debug, Serialize, Deserialize)]
pub struct GridSurrogate {
    pub sigma2: f64,
    pub bounds: Bounds,
    pub resolution: usize,
    pub quadrature_order: usize,
    /// `(q00, q01, q11)` at node `(i, j)`, stored at `i * resolution + j`.
    pub values: Vec<[f64; 3]>,
    #[serde(skip)]
    psd_projections: AtomicUsize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SurrogateBundle {
    Kriging(KrigingSurrogate),
    Grid(GridSurrogate),
}

fn kernel_matrix(points: &[&Vec<f64>], range: f64, nugget: f64) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        k[(a, a)] = 1.0 + nugget;
        for b in 0..a {
            let v = wendland(dist(points[a], points[b]), range);
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

#[inline]
fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn solve_coefficients(points: &[&Vec<f64>], targets: &[&DMatrix<f64>], entries: &[(usize, usize)], range: f64, nugget: f64) -> Result<DMatrix<f64>> {
    let k = kernel_matrix(points, range, nugget);
    let y = DMatrix::from_fn(points.len(), entries.len(), |i, e| targets[i][entries[e]]);
    let chol = Cholesky::new(k).ok_or(DesignError::IllConditioned { nugget })?;
    let a = chol.solve(&y);
    if a.iter().any(|v| !v.is_finite()) {
        return Err(DesignError::IllConditioned { nugget });
    }
    Ok(a)
}

fn kriging_predict(points: &[Vec<f64>], coefficients: &[Vec<f64>], range: f64, eta: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let r2 = range * range;
    for (x, a) in points.iter().zip(coefficients) {
        let d2: f64 = x.iter().zip(eta).map(|(p, q)| (p - q) * (p - q)).sum();
        if d2 >= r2 {
            continue;
        }
        let k = wendland(d2.sqrt(), range);
        for (o, c) in out.iter_mut().zip(a) {
            *o += k * c;
        }
    }
}

/// Fit one zero-mean Wendland-kernel interpolator per upper-triangle entry of
/// `Q`. Every tenth point is first held out to record prediction error, then
/// the final fit uses all points.
pub fn fit(training: &TrainingSet, range: f64, nugget: f64) -> Result<SurrogateBundle> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(DesignError::InvalidParameter(format!("kernel range {range} must be positive")));
    }
    if !(nugget >= 0.0 && nugget.is_finite()) {
        return Err(DesignError::InvalidParameter(format!("nugget {nugget} must be >= 0")));
    }
    let m = training.m;
    let entries = upper_entries(m);
    let n = training.points.len();

    let (train_idx, test_idx): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| n < HOLDOUT_STRIDE || i % HOLDOUT_STRIDE != HOLDOUT_STRIDE - 1);
    let mut holdout_rmse = vec![0.0; entries.len()];
    let mut holdout_range = vec![0.0; entries.len()];
    if !test_idx.is_empty() {
        let pts: Vec<&Vec<f64>> = train_idx.iter().map(|&i| &training.points[i]).collect();
        let tgs: Vec<&DMatrix<f64>> = train_idx.iter().map(|&i| &training.targets[i]).collect();
        let a = solve_coefficients(&pts, &tgs, &entries, range, nugget)?;
        let pts_owned: Vec<Vec<f64>> = pts.iter().map(|p| (*p).clone()).collect();
        let coef: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().copied().collect()).collect();
        let mut pred = vec![0.0; entries.len()];
        let mut lo = vec![f64::INFINITY; entries.len()];
        let mut hi = vec![f64::NEG_INFINITY; entries.len()];
        for &i in &test_idx {
            kriging_predict(&pts_owned, &coef, range, &training.points[i], &mut pred);
            for (e, &(a, b)) in entries.iter().enumerate() {
                let t = training.targets[i][(a, b)];
                holdout_rmse[e] += (pred[e] - t).powi(2);
                lo[e] = lo[e].min(t);
                hi[e] = hi[e].max(t);
            }
        }
        for e in 0..entries.len() {
            holdout_rmse[e] = (holdout_rmse[e] / test_idx.len() as f64).sqrt();
            holdout_range[e] = hi[e] - lo[e];
        }
    }

    let pts: Vec<&Vec<f64>> = training.points.iter().collect();
    let tgs: Vec<&DMatrix<f64>> = training.targets.iter().collect();
    let a = solve_coefficients(&pts, &tgs, &entries, range, nugget)?;
    Ok(SurrogateBundle::Kriging(KrigingSurrogate {
        m,
        sigma2: training.sigma2,
        bounds: training.bounds.clone(),
        range,
        nugget,
        quadrature_order: training.quadrature_order,
        points: training.points.clone(),
        coefficients: a.row_iter().map(|r| r.iter().copied().collect()).collect(),
        holdout_rmse,
        holdout_range,
        psd_projections: AtomicUsize::new(0),
    }))
}

/// Tabulate `Q` on a `resolution × resolution` grid over the box.
pub fn grid_interp_2d(spec: &ModelSpec, sigma2: f64, bounds: &[(f64, f64)], resolution: usize, rule: &QuadratureRule) -> Result<SurrogateBundle> {
    if spec.m != 2 {
        return Err(DesignError::InvalidParameter(format!("grid interpolation needs m = 2, got {}", spec.m)));
    }
    if spec.link != Link::Logit {
        return Err(DesignError::UnsupportedLink(spec.link.name()));
    }
    if resolution < 2 || bounds.len() != 2 || bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
        return Err(DesignError::InvalidParameter("grid needs resolution >= 2 and a valid 2-d box".into()));
    }
    let node = |d: usize, i: usize| bounds[d].0 + (bounds[d].1 - bounds[d].0) * i as f64 / (resolution - 1) as f64;
    let values = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| {
            let eta = [node(0, k / resolution), node(1, k % resolution)];
            let q = q_matrix_eta(&eta, sigma2, rule)?.matrix;
            Ok([q[(0, 0)], q[(0, 1)], q[(1, 1)]])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurrogateBundle::Grid(GridSurrogate {
        sigma2,
        bounds: bounds.to_vec(),
        resolution,
        quadrature_order: rule.len(),
        values,
        psd_projections: AtomicUsize::new(0),
    }))
}

impl GridSurrogate {
    fn raw(&self, eta: &[f64]) -> [f64; 3] {
        let r = self.resolution;
        let mut idx = [0usize; 2];
        let mut frac = [0.0; 2];
        for d in 0..2 {
            let (lo, hi) = self.bounds[d];
            let s = ((eta[d] - lo) / (hi - lo) * (r - 1) as f64).clamp(0.0, (r - 1) as f64);
            let i = (s.floor() as usize).min(r - 2);
            idx[d] = i;
            frac[d] = s - i as f64;
        }
        let v = |i: usize, j: usize| self.values[i * r + j];
        let (v00, v01, v10, v11) = (v(idx[0], idx[1]), v(idx[0], idx[1] + 1), v(idx[0] + 1, idx[1]), v(idx[0] + 1, idx[1] + 1));
        let (fx, fy) = (frac[0], frac[1]);
        std::array::from_fn(|e| (1.0 - fx) * ((1.0 - fy) * v00[e] + fy * v01[e]) + fx * ((1.0 - fy) * v10[e] + fy * v11[e]))
    }
}

impl SurrogateBundle {
    pub fn m(&self) -> usize {
        match self {
            SurrogateBundle::Kriging(k) => k.m,
            SurrogateBundle::Grid(_) => 2,
        }
    }

    pub fn sigma2(&self) -> f64 {
        match self {
            SurrogateBundle::Kriging(k) => k.sigma2,
            SurrogateBundle::Grid(g) => g.sigma2,
        }
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        match self {
            SurrogateBundle::Kriging(k) => &k.bounds,
            SurrogateBundle::Grid(g) => &g.bounds,
        }
    }

    pub fn quadrature_order(&self) -> usize {
        match self {
            SurrogateBundle::Kriging(k) => k.quadrature_order,
            SurrogateBundle::Grid(g) => g.quadrature_order,
        }
    }

    /// Number of predictions so far that needed projection onto the PSD cone.
    pub fn psd_projections(&self) -> usize {
        match self {
            SurrogateBundle::Kriging(k) => k.psd_projections.load(Ordering::Relaxed),
            SurrogateBundle::Grid(g) => g.psd_projections.load(Ordering::Relaxed),
        }
    }

    fn counter(&self) -> &AtomicUsize {
        match self {
            SurrogateBundle::Kriging(k) => &k.psd_projections,
            SurrogateBundle::Grid(g) => &g.psd_projections,
        }
    }

    fn check_in_box(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.m() {
            return Err(DesignError::SurrogateMismatch(format!("eta has length {}, surrogate has m = {}", eta.len(), self.m())));
        }
        for (d, (&e, &(lo, hi))) in eta.iter().zip(self.bounds()).enumerate() {
            let margin = EXTRAPOLATION_MARGIN * (hi - lo);
            if !(e >= lo - margin && e <= hi + margin) {
                return Err(DesignError::Extrapolation(format!("eta[{d}] = {e} outside [{lo}, {hi}] by more than 10% of the width")));
            }
        }
        Ok(())
    }

    /// Predicted `Q(η)`, symmetric and projected onto the PSD cone if needed.
    pub fn predict_q(&self, eta: &[f64]) -> Result<(DMatrix<f64>, bool)> {
        self.check_in_box(eta)?;
        let m = self.m();
        let mut q = DMatrix::zeros(m, m);
        match self {
            SurrogateBundle::Kriging(k) => {
                let entries = upper_entries(m);
                let mut out = vec![0.0; entries.len()];
                kriging_predict(&k.points, &k.coefficients, k.range, eta, &mut out);
                for (&(a, b), &v) in entries.iter().zip(&out) {
                    q[(a, b)] = v;
                    q[(b, a)] = v;
                }
            }
            SurrogateBundle::Grid(g) => {
                let [a, b, c] = g.raw(eta);
                q[(0, 0)] = a;
                q[(0, 1)] = b;
                q[(1, 0)] = b;
                q[(1, 1)] = c;
            }
        }
        if Cholesky::new(q.clone()).is_some() {
            return Ok((q, false));
        }
        let eig = q.clone().symmetric_eigen();
        if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
            return Ok((q, false));
        }
        self.counter().fetch_add(1, Ordering::Relaxed);
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let q = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        Ok(((&q + q.transpose()) * 0.5, true))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = BundleFile { format_version: FORMAT_VERSION, bundle: self };
        fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SurrogateBundle> {
        let text = fs::read_to_string(path)?;
        let header: BundleHeader = serde_json::from_str(&text)?;
        if header.format_version != FORMAT_VERSION {
            return Err(DesignError::FormatVersion { found: header.format_version, expected: FORMAT_VERSION });
        }
        let file: OwnedBundleFile = serde_json::from_str(&text)?;
        Ok(file.bundle)
    }

    /// Load and check the block size and σ² against expectations.
    pub fn load_for(path: &Path, m: usize, sigma2: f64) -> Result<SurrogateBundle> {
        let bundle = Self::load(path)?;
        bundle.check_matches(m, sigma2)?;
        Ok(bundle)
    }

    pub fn check_matches(&self, m: usize, sigma2: f64) -> Result<()> {
        if self.m() != m {
            return Err(DesignError::SurrogateMismatch(format!("surrogate trained for m = {}, model has m = {m}", self.m())));
        }
        if (self.sigma2() - sigma2).abs() > 1e-12 * sigma2.abs().max(1.0) {
            return Err(DesignError::SurrogateMismatch(format!("surrogate trained at sigma2 = {}, requested sigma2 = {sigma2}", self.sigma2())));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct BundleFile<'a> {
    format_version: u32,
    bundle: &'a SurrogateBundle,
}

#[derive(Deserialize)]
struct BundleHeader {
    format_version: u32,
}

#[derive(Deserialize)]
struct OwnedBundleFile {
    bundle: SurrogateBundle,
}

/// Interpolated outcome-enumeration information `Fᵀ Q̂(η) F`.
pub fn info_interp(spec: &ModelSpec, block: &Block, theta: &ParameterPoint, bundle: &SurrogateBundle) -> Result<InfoMatrix> {
    bundle.check_matches(spec.m, theta.sigma2)?;
    let f = spec.model_matrix(block)?;
    let eta = spec.linear_predictors(block, &theta.beta)?;
    let (q, projected) = bundle.predict_q(&eta)?;
    let meta = InfoMeta { quadrature_order: Some(bundle.quadrature_order()), psd_projections: projected as usize, ..InfoMeta::default() };
    Ok(InfoMatrix::with_meta(sandwich(&f, &q), Method::Interpolated, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_hermite;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_bundle(m: usize, n: usize, seed: u64) -> (TrainingSet, SurrogateBundle) {
        let spec = ModelSpec::with_unit_box(Link::Logit, vec![crate::model::Term::Intercept], 1, m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts = build_training_set(&spec, 2.0, &default_bounds(m), n, &mut rng, &gauss_hermite(32).unwrap()).unwrap();
        let b = fit(&ts, DEFAULT_RANGE, DEFAULT_NUGGET).unwrap();
        (ts, b)
    }

    #[test]
    fn wendland_endpoints() {
        assert_eq!(wendland(0.0, 15.0), 1.0);
        assert_eq!(wendland(15.0, 15.0), 0.0);
        assert_eq!(wendland(20.0, 15.0), 0.0);
        assert!(wendland(7.5, 15.0) > 0.0);
    }

    #[test]
    fn training_targets_have_shape_and_symmetry() {
        let (ts, _) = small_bundle(2, 100, 1);
        assert_eq!(ts.targets.len(), 100);
        for t in &ts.targets {
            assert_eq!(t.shape(), (2, 2));
            assert_eq!(t[(0, 1)], t[(1, 0)]);
        }
        let rule = gauss_hermite(32).unwrap();
        let q = q_matrix_eta(&[1.0, -3.0], 2.0, &rule).unwrap().matrix;
        let qs = q_matrix_eta(&[-3.0, 1.0], 2.0, &rule).unwrap().matrix;
        assert!((q[(0, 0)] - qs[(1, 1)]).abs() < 1e-14 && (q[(0, 1)] - qs[(1, 0)]).abs() < 1e-14);
    }

    #[test]
    fn interpolates_training_points() {
        let (ts, b) = small_bundle(2, 150, 2);
        for (p, t) in ts.points.iter().zip(&ts.targets) {
            let (q, _) = b.predict_q(p).unwrap();
            assert!((q - t).amax() < 10.0 * DEFAULT_NUGGET.max(1e-10) * 1e3, "interpolation error too large");
        }
    }

    #[test]
    fn prediction_is_continuous_and_bounded_to_box() {
        let (_, b) = small_bundle(2, 150, 3);
        let (q0, _) = b.predict_q(&[0.3, -1.1]).unwrap();
        let (q1, _) = b.predict_q(&[0.3 + 1e-7, -1.1]).unwrap();
        assert!((q0 - q1).amax() < 1e-6);
        assert!(b.predict_q(&[23.9, 0.0]).is_ok());
        assert!(matches!(b.predict_q(&[24.1, 0.0]), Err(DesignError::Extrapolation(_))));
    }

    #[test]
    fn sigma_and_size_mismatch_are_errors() {
        let (_, b) = small_bundle(2, 50, 5);
        let spec = ModelSpec::with_unit_box(Link::Logit, vec![crate::model::Term::Intercept], 1, 2).unwrap();
        let block = Block::new(vec![vec![0.0], vec![0.0]]);
        let theta = ParameterPoint::new(vec![0.0], 3.0).unwrap();
        assert!(matches!(info_interp(&spec, &block, &theta, &b), Err(DesignError::SurrogateMismatch(_))));
        assert!(b.check_matches(3, 2.0).is_err());
        let theta = ParameterPoint::new(vec![0.0], 2.0).unwrap();
        assert!(info_interp(&spec, &block, &theta, &b).is_ok());
    }

    #[test]
    fn grid_reproduces_nodes_and_linear_functions() {
        let spec = ModelSpec::two_factor(Link::Logit, 2);
        let rule = gauss_hermite(32).unwrap();
        let SurrogateBundle::Grid(mut g) = grid_interp_2d(&spec, 2.0, &default_bounds(2), 11, &rule).unwrap() else { unreachable!() };
        let direct = q_matrix_eta(&[-16.0, 4.0], 2.0, &rule).unwrap().matrix;
        let at = g.raw(&[-16.0, 4.0]);
        assert_eq!(at, g.values[11 + 6]);
        assert!((at[0] - direct[(0, 0)]).abs() < 1e-12);
        for (k, v) in g.values.iter_mut().enumerate() {
            let (x, y) = (-20.0 + 4.0 * (k / 11) as f64, -20.0 + 4.0 * (k % 11) as f64);
            *v = [2.0 * x - y + 1.0, 0.5 * y, x];
        }
        let p = g.raw(&[1.3, -7.7]);
        assert!((p[0] - (2.6 + 7.7 + 1.0)).abs() < 1e-12);
        assert!((p[1] + 3.85).abs() < 1e-12);
        assert!((p[2] - 1.3).abs() < 1e-12);
    }

    #[test]
    fn grid_refinement_converges() {
        let spec = ModelSpec::two_factor(Link::Logit, 2);
        let rule = gauss_hermite(32).unwrap();
        let bounds = vec![(-4.0, 4.0), (-4.0, 4.0)];
        let max_err = |res: usize| {
            let g = grid_interp_2d(&spec, 2.0, &bounds, res, &rule).unwrap();
            let mut worst: f64 = 0.0;
            for a in 0..17 {
                for b in 0..17 {
                    let eta = [-3.9 + 0.47 * a as f64, -3.85 + 0.46 * b as f64];
                    let q = q_matrix_eta(&eta, 2.0, &rule).unwrap().matrix;
                    worst = worst.max((g.predict_q(&eta).unwrap().0 - q).amax());
                }
            }
            worst
        };
        let coarse = max_err(9);
        let fine = max_err(17);
        assert!(fine * 2.0 <= coarse, "coarse {coarse} fine {fine}");
    }

    #[test]
    fn save_load_round_trip() {
        let (_, b) = small_bundle(2, 60, 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.json");
        b.save(&path).unwrap();
        let back = SurrogateBundle::load(&path).unwrap();
        for eta in [[0.1, 0.2], [-12.0, 7.5], [19.0, -19.0]] {
            assert_eq!(b.predict_q(&eta).unwrap().0, back.predict_q(&eta).unwrap().0);
        }
        assert!(matches!(SurrogateBundle::load_for(&path, 4, 2.0), Err(DesignError::SurrogateMismatch(_))));
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"quadrature_order\":32") && text.contains("\"range\":15.0") && text.contains("\"nugget\""));
        fs::write(&path, text.replacen("\"format_version\":1", "\"format_version\":9", 1)).unwrap();
        assert!(matches!(SurrogateBundle::load(&path), Err(DesignError::FormatVersion { found: 9, .. })));
        fs::write(&path, "{ not json").unwrap();
        assert!(SurrogateBundle::load(&path).is_err());
    }

    #[test]
    fn kernel_matrix_exact_zero_beyond_range() {
        let a = vec![0.0, 0.0];
        let b = vec![15.0, 0.0];
        let c = vec![3.0, 4.0];
        let k = kernel_matrix(&[&a, &b, &c], 15.0, 0.0);
        assert_eq!(k[(0, 1)], 0.0);
        assert!(k[(0, 2)] > 0.0);
    }
}
