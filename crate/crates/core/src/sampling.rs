//! Space-filling samples over boxes.

use rand::Rng;

/// Latin hypercube sample: along every coordinate each of the `n` equal-width
/// strata holds exactly one point.
pub fn lhs_sample<R: Rng + ?Sized>(bounds: &[(f64, f64)], n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; bounds.len()]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        for i in (1..n).rev() {
            strata.swap(i, rng.random_range(0..=i));
        }
        for (point, &s) in points.iter_mut().zip(&strata) {
            let u = (s as f64 + rng.random::<f64>()) / n as f64;
            point[d] = lo + (hi - lo) * u;
        }
    }
    points
}
