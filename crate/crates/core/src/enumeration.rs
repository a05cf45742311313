//! Marginal likelihoods, their η-gradients, the Q matrix, and the reference
//! information matrices: full outcome enumeration for binary responses and
//! Monte Carlo over sampled outcomes for Poisson responses.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{DesignError, Result};
use crate::info::{sandwich, InfoMatrix, InfoMeta, Method};
use crate::model::{simulate_from_eta, Block, Link, ModelSpec, ParameterPoint};
use crate::quadrature::{QuadratureRule, RuleKind};
use crate::special::{ln_factorial, logistic};

/// Largest block size handled by outcome enumeration (4096 outcomes).
pub const MAX_ENUMERATION_M: usize = 12;
/// Outcomes with `P(Y)` below this are dropped from `Q`.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;
/// Above this `σ²`, Poisson likelihoods use a composite rule instead of
/// recentred Gauss–Hermite.
pub const POISSON_RECENTRE_MAX_SIGMA2: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Likelihood {
    pub value: f64,
    pub underflow: bool,
}

/// `Q(η, σ²) = Σ_Y P_Y⁻¹ (∂P_Y/∂η)(∂P_Y/∂η)ᵀ` with a count of skipped outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    pub matrix: DMatrix<f64>,
    pub skipped: usize,
}

fn check_binary(y: &[u64], m: usize) -> Result<()> {
    if y.len() != m {
        return Err(DesignError::InvalidParameter(format!("outcome has length {}, block has m = {m}", y.len())));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(DesignError::InvalidParameter("binary outcome entries must be 0 or 1".into()));
    }
    Ok(())
}

/// `P(Y | θ, ζ)` by quadrature over the random intercept.
pub fn marginal_likelihood(spec: &ModelSpec, block: &Block, theta: &ParameterPoint, y: &[u64], rule: &QuadratureRule) -> Result<Likelihood> {
    let eta = spec.linear_predictors(block, &theta.beta)?;
    let (value, _) = match spec.link {
        Link::Logit => {
            check_binary(y, spec.m)?;
            binary_likelihood_and_grad(&eta, theta.sigma(), y, rule)
        }
        Link::Log => {
            check_len(y, spec.m)?;
            poisson_likelihood_and_grad(&eta, theta.sigma(), y, rule)
        }
    };
    Ok(Likelihood { value, underflow: value == 0.0 })
}

/// `∂P(Y | θ, ζ)/∂η` by quadrature.
pub fn likelihood_grad_eta(spec: &ModelSpec, block: &Block, theta: &ParameterPoint, y: &[u64], rule: &QuadratureRule) -> Result<Vec<f64>> {
    let eta = spec.linear_predictors(block, &theta.beta)?;
    let (_, grad) = match spec.link {
        Link::Logit => {
            check_binary(y, spec.m)?;
            binary_likelihood_and_grad(&eta, theta.sigma(), y, rule)
        }
        Link::Log => {
            check_len(y, spec.m)?;
            poisson_likelihood_and_grad(&eta, theta.sigma(), y, rule)
        }
    };
    Ok(grad)
}

fn check_len(y: &[u64], m: usize) -> Result<()> {
    if y.len() != m {
        return Err(DesignError::InvalidParameter(format!("outcome has length {}, block has m = {m}", y.len())));
    }
    Ok(())
}

/// Binary logit likelihood and gradient at the linear-predictor level.
pub fn binary_likelihood_and_grad(eta: &[f64], sigma: f64, y: &[u64], rule: &QuadratureRule) -> (f64, Vec<f64>) {
    let m = eta.len();
    let mut p = 0.0;
    let mut g = vec![0.0; m];
    let mut a = vec![0.0; m];
    for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
        let mut prod = w;
        for j in 0..m {
            let t = eta[j] + sigma * u;
            a[j] = logistic(t);
            prod *= if y[j] == 1 { a[j] } else { logistic(-t) };
        }
        p += prod;
        for j in 0..m {
            g[j] += (y[j] as f64 - a[j]) * prod;
        }
    }
    (p, g)
}

/// Poisson likelihood and gradient. The quadrature nodes are recentred and
/// rescaled to the mode of the integrand, which is sharply peaked for large
/// counts; all accumulation is in log space.
pub fn poisson_likelihood_and_grad(eta: &[f64], sigma: f64, y: &[u64], rule: &QuadratureRule) -> (f64, Vec<f64>) {
    let (log_p, score) = poisson_log_likelihood_and_score(eta, sigma, y, rule);
    let p = log_p.exp();
    (p, score.iter().map(|s| s * p).collect())
}

/// `(log P(Y), ∂ log P(Y)/∂η)` for the Poisson random-intercept model.
pub fn poisson_log_likelihood_and_score(eta: &[f64], sigma: f64, y: &[u64], rule: &QuadratureRule) -> (f64, Vec<f64>) {
    let log_fact: f64 = y.iter().map(|&k| ln_factorial(k)).sum();
    let ysum: f64 = y.iter().map(|&k| k as f64).sum();
    if sigma == 0.0 {
        let lp = eta.iter().zip(y).map(|(&e, &k)| k as f64 * e - e.exp()).sum::<f64>() - log_fact;
        let s = eta.iter().zip(y).map(|(&e, &k)| k as f64 - e.exp()).collect();
        return (lp, s);
    }
    // g(u) = Σ_j [y_j (η_j + σu) - exp(η_j + σu)] - u²/2, concave in u.
    let sum_mu = |u: f64| eta.iter().map(|&e| (e + sigma * u).exp()).sum::<f64>();
    let g = |u: f64| ysum * sigma * u + eta.iter().zip(y).map(|(&e, &k)| k as f64 * e).sum::<f64>() - sum_mu(u) - 0.5 * u * u;
    let dg = |u: f64| sigma * (ysum - sum_mu(u)) - u;
    let d2g = |u: f64| -sigma * sigma * sum_mu(u) - 1.0;

    // Safeguarded Newton on the strictly decreasing dg.
    let (mut lo, mut hi) = (-1.0, 1.0);
    while dg(lo) < 0.0 {
        lo *= 2.0;
    }
    while dg(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut u = 0.0f64.clamp(lo, hi);
    for _ in 0..200 {
        let d = dg(u);
        if d > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let mut next = u - d / d2g(u);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() < 1e-13 * (1.0 + u.abs()) {
            u = next;
            break;
        }
        u = next;
    }
    // Recentring only suits a near-Gaussian integrand. For larger σ with few
    // counts the integrand has a sharp threshold instead, so a composite rule
    // on the original scale replaces Gauss–Hermite.
    let composite;
    let (rule, mode, scale) = if rule.kind == RuleKind::GaussHermiteProbabilist && sigma * sigma > POISSON_RECENTRE_MAX_SIGMA2 {
        composite = QuadratureRule::composite_normal(sigma * (1.0 + ysum).sqrt());
        (&composite, 0.0, 1.0)
    } else {
        (rule, u, 1.0 / (-d2g(u)).sqrt())
    };

    let m = eta.len();
    let mut log_terms = Vec::with_capacity(rule.len());
    for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
        let lt = match rule.kind {
            // Gauss–Hermite weights already carry φ(z).
            RuleKind::GaussHermiteProbabilist => w.ln() + g(mode + scale * z) + 0.5 * z * z,
            RuleKind::CompositeRealLine => w.ln() + g(mode + scale * z) + 0.5 * z * z,
        };
        log_terms.push(lt);
    }
    let max_lt = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    let mut score = vec![0.0; m];
    for (&z, &lt) in rule.nodes.iter().zip(&log_terms) {
        let r = (lt - max_lt).exp();
        denom += r;
        let u = mode + scale * z;
        for j in 0..m {
            score[j] += r * (y[j] as f64 - (eta[j] + sigma * u).exp());
        }
    }
    score.iter_mut().for_each(|s| *s /= denom);
    let log_p = max_lt + denom.ln() + scale.ln() - log_fact;
    (log_p, score)
}

/// Likelihoods and η-gradients of all `2^m` binary outcomes. Outcome `Y` is
/// indexed by the bitmask with bit `j` set when `y_j = 1`.
pub fn enumerate_outcomes(eta: &[f64], sigma: f64, rule: &QuadratureRule) -> (Vec<f64>, Vec<f64>) {
    let m = eta.len();
    let n_out = 1usize << m;
    let mut probs = vec![0.0; n_out];
    let mut grads = vec![0.0; n_out * m];
    let mut prod = vec![0.0; n_out];
    let mut a = vec![0.0; m];
    for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
        prod[0] = w;
        let mut len = 1;
        for j in 0..m {
            let t = eta[j] + sigma * u;
            a[j] = logistic(t);
            let b = logistic(-t);
            for mask in 0..len {
                let base = prod[mask];
                prod[mask] = base * b;
                prod[mask | len] = base * a[j];
            }
            len <<= 1;
        }
        for (mask, &pr) in prod.iter().enumerate() {
            probs[mask] += pr;
            let row = &mut grads[mask * m..(mask + 1) * m];
            for j in 0..m {
                let yj = ((mask >> j) & 1) as f64;
                row[j] += (yj - a[j]) * pr;
            }
        }
    }
    (probs, grads)
}

/// The outcome-enumeration kernel `Q(η, σ²)` for the logit link.
pub fn q_matrix(spec: &ModelSpec, eta: &[f64], sigma2: f64, rule: &QuadratureRule) -> Result<QMatrix> {
    if spec.link != Link::Logit {
        return Err(DesignError::UnsupportedLink(spec.link.name()));
    }
    if eta.len() != spec.m {
        return Err(DesignError::InvalidParameter(format!("eta has length {}, m = {}", eta.len(), spec.m)));
    }
    q_matrix_eta(eta, sigma2, rule)
}

pub(crate) fn q_matrix_eta(eta: &[f64], sigma2: f64, rule: &QuadratureRule) -> Result<QMatrix> {
    let m = eta.len();
    if m > MAX_ENUMERATION_M {
        return Err(DesignError::BlockTooLarge { m, limit: MAX_ENUMERATION_M });
    }
    let (probs, grads) = enumerate_outcomes(eta, sigma2.sqrt(), rule);
    let mut q = DMatrix::zeros(m, m);
    let mut skipped = 0;
    for (mask, &p) in probs.iter().enumerate() {
        if !(p >= UNDERFLOW_FLOOR) {
            skipped += 1;
            continue;
        }
        let g = &grads[mask * m..(mask + 1) * m];
        for a in 0..m {
            let ga = g[a] / p;
            for b in a..m {
                q[(a, b)] += ga * g[b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            q[(a, b)] = q[(b, a)];
        }
    }
    Ok(QMatrix { matrix: q, skipped })
}

/// Naive outcome-enumeration information `Fᵀ Q F` for one block.
pub fn info_naive_binary(spec: &ModelSpec, block: &Block, theta: &ParameterPoint, rule: &QuadratureRule) -> Result<InfoMatrix> {
    if spec.link != Link::Logit {
        return Err(DesignError::UnsupportedLink(spec.link.name()));
    }
    let f = spec.model_matrix(block)?;
    let eta = spec.linear_predictors(block, &theta.beta)?;
    let q = q_matrix_eta(&eta, theta.sigma2, rule)?;
    let meta = InfoMeta { quadrature_order: Some(rule.len()), skipped: q.skipped, ..InfoMeta::default() };
    Ok(InfoMatrix::with_meta(sandwich(&f, &q.matrix), Method::Naive, meta))
}

/// Monte Carlo information `Fᵀ E[s sᵀ] F`, `s = ∂ log P(Y)/∂η`, with
/// entrywise standard errors.
pub fn info_mc<R: Rng + ?Sized>(
    spec: &ModelSpec,
    block: &Block,
    theta: &ParameterPoint,
    n_samples: usize,
    rule: &QuadratureRule,
    rng: &mut R,
) -> Result<InfoMatrix> {
    let f = spec.model_matrix(block)?;
    let eta = spec.linear_predictors(block, &theta.beta)?;
    let p = spec.p();
    let sigma = theta.sigma();
    let mut sum = DMatrix::<f64>::zeros(p, p);
    let mut sum_sq = DMatrix::<f64>::zeros(p, p);
    let mut used = 0usize;
    let mut dropped = 0usize;
    let mut v = vec![0.0; p];
    for _ in 0..n_samples {
        let y = simulate_from_eta(spec.link, &eta, sigma, rng);
        let score = match spec.link {
            Link::Logit => {
                let (pr, g) = binary_likelihood_and_grad(&eta, sigma, &y, rule);
                if !(pr >= UNDERFLOW_FLOOR) {
                    dropped += 1;
                    continue;
                }
                g.into_iter().map(|gj| gj / pr).collect::<Vec<_>>()
            }
            Link::Log => {
                let (lp, s) = poisson_log_likelihood_and_score(&eta, sigma, &y, rule);
                if !lp.is_finite() || s.iter().any(|x| !x.is_finite()) {
                    dropped += 1;
                    continue;
                }
                s
            }
        };
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = (0..spec.m).map(|j| f[(j, k)] * score[j]).sum();
        }
        for a in 0..p {
            for b in 0..p {
                let x = v[a] * v[b];
                sum[(a, b)] += x;
                sum_sq[(a, b)] += x * x;
            }
        }
        used += 1;
    }
    if used == 0 {
        return Err(DesignError::InvalidParameter("every Monte Carlo sample underflowed".into()));
    }
    let n = used as f64;
    let mean = &sum / n;
    let se = DMatrix::from_fn(p, p, |a, b| {
        let var = (sum_sq[(a, b)] / n - mean[(a, b)].powi(2)).max(0.0);
        (var / n).sqrt()
    });
    let meta = InfoMeta {
        quadrature_order: Some(rule.len()),
        samples: Some(used),
        skipped: dropped,
        std_errors: Some(se),
        ..InfoMeta::default()
    };
    Ok(InfoMatrix::with_meta(mean, Method::MonteCarlo, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Term;
    use crate::quadrature::{gauss_hermite, QuadratureRule};
    use crate::special::{logistic_deriv, norm_pdf};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blk(t: &[&[f64]]) -> Block {
        Block::new(t.iter().map(|x| x.to_vec()).collect())
    }

    fn intercept_only(m: usize) -> ModelSpec {
        ModelSpec::with_unit_box(Link::Logit, vec![Term::Intercept], 1, m).unwrap()
    }

    #[test]
    fn single_unit_fair_coin() {
        let spec = intercept_only(1);
        let theta = ParameterPoint::new(vec![0.0], 0.0).unwrap();
        let rule = gauss_hermite(32).unwrap();
        let l = marginal_likelihood(&spec, &blk(&[&[0.0]]), &theta, &[1], &rule).unwrap();
        assert_relative_eq!(l.value, 0.5, epsilon = 1e-15);
        let g = likelihood_grad_eta(&spec, &blk(&[&[0.0]]), &theta, &[1], &rule).unwrap();
        assert_relative_eq!(g[0], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn total_probability_and_gradient_sum() {
        let rule = QuadratureRule::adaptive(5.0);
        let eta = [0.3, -1.2, 2.5, 0.0];
        let (probs, grads) = enumerate_outcomes(&eta, 5f64.sqrt(), &rule);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..4 {
            let s: f64 = (0..16).map(|mask| grads[mask * 4 + j]).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_matches_direct_per_outcome() {
        let rule = gauss_hermite(40).unwrap();
        let eta = [0.7, -0.4, 1.9];
        let (probs, grads) = enumerate_outcomes(&eta, 1.3, &rule);
        for mask in 0..8usize {
            let y: Vec<u64> = (0..3).map(|j| ((mask >> j) & 1) as u64).collect();
            let (p, g) = binary_likelihood_and_grad(&eta, 1.3, &y, &rule);
            assert_relative_eq!(probs[mask], p, max_relative = 1e-13);
            for j in 0..3 {
                assert_relative_eq!(grads[mask * 3 + j], g[j], max_relative = 1e-12, epsilon = 1e-16);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rule = gauss_hermite(48).unwrap();
        let eta = [0.5, -2.0, 1.0];
        let y = [1, 0, 1];
        let (_, g) = binary_likelihood_and_grad(&eta, 2.0, &y, &rule);
        let d = 1e-5;
        for j in 0..3 {
            let mut ep = eta;
            let mut em = eta;
            ep[j] += d;
            em[j] -= d;
            let fd = (binary_likelihood_and_grad(&ep, 2.0, &y, &rule).0 - binary_likelihood_and_grad(&em, 2.0, &y, &rule).0) / (2.0 * d);
            assert!((fd - g[j]).abs() < 1e-6f64.max(1e-4 * g[j].abs()));
        }
    }

    #[test]
    fn tied_pair_scales_like_inverse_sigma() {
        // P(0,1) σ / φ(0) → ∫ h(t)(1 - h(t)) dt = 1 as σ grows, with error O(1/σ²).
        let mut last = f64::INFINITY;
        for sigma2 in [100.0, 400.0, 1600.0] {
            let sigma: f64 = f64::sqrt(sigma2);
            let rule = QuadratureRule::composite_normal(sigma);
            let (p, _) = binary_likelihood_and_grad(&[0.0, 0.0], sigma, &[0, 1], &rule);
            let ratio = p * sigma / norm_pdf(0.0);
            assert!((ratio - 1.0).abs() < last);
            last = (ratio - 1.0).abs();
        }
        assert!(last < 1.1e-3);
    }

    #[test]
    fn q_matrix_limits_and_symmetry() {
        let spec = intercept_only(1);
        let rule = gauss_hermite(32).unwrap();
        let q = q_matrix(&spec, &[0.0], 1e-12, &rule).unwrap();
        assert_relative_eq!(q.matrix[(0, 0)], 0.25, epsilon = 1e-10);

        let spec3 = intercept_only(3);
        let rule = QuadratureRule::adaptive(2.0);
        let q = q_matrix(&spec3, &[0.5, -1.0, 2.0], 2.0, &rule).unwrap().matrix;
        let qp = q_matrix(&spec3, &[2.0, 0.5, -1.0], 2.0, &rule).unwrap().matrix;
        let perm = [2usize, 0, 1];
        for a in 0..3 {
            for b in 0..3 {
                assert_relative_eq!(qp[(a, b)], q[(perm[a], perm[b])], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn q_matrix_quadrature_refinement() {
        let spec = intercept_only(2);
        let q64 = q_matrix(&spec, &[0.0, 0.0], 1.0, &gauss_hermite(64).unwrap()).unwrap().matrix;
        let q128 = q_matrix(&spec, &[0.0, 0.0], 1.0, &gauss_hermite(128).unwrap()).unwrap().matrix;
        assert!((q64 - q128).amax() < 1e-7);
    }

    #[test]
    fn naive_info_reduces_to_glm_without_random_effect() {
        let spec = ModelSpec::two_factor(Link::Logit, 4);
        let b = blk(&[&[1.0, 1.0], &[-1.0, 0.5], &[0.2, -1.0], &[0.0, 0.0]]);
        let beta = vec![0.5, 1.0, -0.7];
        let theta = ParameterPoint::new(beta.clone(), 1e-10).unwrap();
        let info = info_naive_binary(&spec, &b, &theta, &gauss_hermite(32).unwrap()).unwrap();
        let f = spec.model_matrix(&b).unwrap();
        let eta = spec.linear_predictors(&b, &beta).unwrap();
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(4, eta.iter().map(|&e| logistic_deriv(e))));
        let glm = f.transpose() * w * &f;
        assert!((info.matrix - glm).amax() < 1e-6);
    }

    #[test]
    fn naive_info_single_unit_rank_one() {
        let spec = ModelSpec::two_factor(Link::Logit, 1);
        let theta = ParameterPoint::new(vec![0.4, 1.0, 1.0], 2.0).unwrap();
        let rule = QuadratureRule::adaptive(2.0);
        let info = info_naive_binary(&spec, &blk(&[&[0.0, 0.0]]), &theta, &rule).unwrap();
        let q = q_matrix(&spec, &[0.4], 2.0, &rule).unwrap().matrix[(0, 0)];
        // f = (1, 0, 0) so only the (0, 0) entry is nonzero.
        assert_relative_eq!(info.matrix[(0, 0)], q, max_relative = 1e-14);
        assert_eq!(info.matrix.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn permutation_leaves_determinant_unchanged() {
        let spec = ModelSpec::two_factor(Link::Logit, 4);
        let b = blk(&[&[1.0, 1.0], &[-1.0, 0.5], &[0.2, -1.0], &[0.0, 0.3]]);
        let bp = blk(&[&[0.2, -1.0], &[1.0, 1.0], &[0.0, 0.3], &[-1.0, 0.5]]);
        let theta = ParameterPoint::new(vec![0.5, 2.0, -1.0], 5.0).unwrap();
        let rule = QuadratureRule::adaptive(5.0);
        let d1 = info_naive_binary(&spec, &b, &theta, &rule).unwrap().matrix.determinant();
        let d2 = info_naive_binary(&spec, &bp, &theta, &rule).unwrap().matrix.determinant();
        assert_relative_eq!(d1, d2, max_relative = 1e-9);
    }

    #[test]
    fn poisson_without_random_effect_is_glm() {
        let spec = ModelSpec::with_unit_box(Link::Log, vec![Term::Intercept], 1, 1).unwrap();
        let theta = ParameterPoint::new(vec![1.2], 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let info = info_mc(&spec, &blk(&[&[0.0]]), &theta, 40_000, &gauss_hermite(20).unwrap(), &mut rng).unwrap();
        assert_relative_eq!(info.matrix[(0, 0)], 1.2f64.exp(), max_relative = 0.02);
    }

    #[test]
    fn poisson_score_matches_finite_differences() {
        let rule = gauss_hermite(24).unwrap();
        let eta = [6.0, 2.0, 4.0];
        let y = [410, 8, 52];
        let (lp, s) = poisson_log_likelihood_and_score(&eta, 0.3, &y, &rule);
        assert!(lp.is_finite());
        let d = 1e-5;
        for j in 0..3 {
            let mut ep = eta;
            let mut em = eta;
            ep[j] += d;
            em[j] -= d;
            let fd = (poisson_log_likelihood_and_score(&ep, 0.3, &y, &rule).0 - poisson_log_likelihood_and_score(&em, 0.3, &y, &rule).0) / (2.0 * d);
            assert!((fd - s[j]).abs() < 1e-5 * (1.0 + s[j].abs()), "j={j} fd={fd} s={}", s[j]);
        }
    }

    #[test]
    fn poisson_likelihood_sums_to_one() {
        let rule = gauss_hermite(32).unwrap();
        let eta = [0.3];
        let total: f64 = (0..200u64).map(|k| poisson_likelihood_and_grad(&eta, 0.5, &[k], &rule).0).sum();
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn monte_carlo_matches_enumeration_for_binary() {
        let spec = ModelSpec::two_factor(Link::Logit, 2);
        let b = blk(&[&[1.0, -0.5], &[-1.0, 1.0]]);
        let theta = ParameterPoint::new(vec![0.2, 1.0, 0.8], 1.5).unwrap();
        let rule = QuadratureRule::adaptive(1.5);
        let exact = info_naive_binary(&spec, &b, &theta, &rule).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mc = info_mc(&spec, &b, &theta, 100_000, &rule, &mut rng).unwrap();
        let se = mc.meta.std_errors.as_ref().unwrap();
        for a in 0..3 {
            for c in 0..3 {
                let z = (mc.matrix[(a, c)] - exact.matrix[(a, c)]).abs() / se[(a, c)];
                assert!(z < 3.0, "entry ({a},{c}) z = {z}");
            }
        }
    }

    #[test]
    fn monte_carlo_standard_errors_shrink() {
        let spec = ModelSpec::two_factor(Link::Log, 3);
        let b = blk(&[&[1.0, 1.0], &[-1.0, 1.0], &[1.0, -0.1]]);
        let theta = ParameterPoint::new(vec![3.0, 1.0, 2.0], 0.05).unwrap();
        let rule = gauss_hermite(20).unwrap();
        let se = |n, seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            info_mc(&spec, &b, &theta, n, &rule, &mut rng).unwrap().meta.std_errors.unwrap()
        };
        let s1 = se(4000, 1);
        let s2 = se(8000, 2);
        let ratio = s2[(0, 0)] / s1[(0, 0)];
        assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.1, "ratio {ratio}");
    }
}
