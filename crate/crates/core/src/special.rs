//! Scalar special functions shared by the likelihood code.

use statrs::function::gamma::ln_gamma;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Logistic inverse link `h(t) = 1 / (1 + e^{-t})`.
#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `h'(t) = h(t) (1 - h(t))`, evaluated without cancellation.
#[inline]
pub fn logistic_deriv(t: f64) -> f64 {
    let e = (-t.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Derivative of the standard normal density, `φ'(x) = -x φ(x)`.
#[inline]
pub fn norm_pdf_deriv(x: f64) -> f64 {
    -x * norm_pdf(x)
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[inline]
pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// Beta function `B(a, b)` for positive integer-valued arguments.
pub fn beta_fn(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}
