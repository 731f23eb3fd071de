//! The probit (standard normal CDF) link and the per-response log-likelihood
//! terms shared by the IRT-family objectives.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Default floor applied to probabilities before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Standard normal cumulative distribution function.
#[inline]
pub fn probit(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Log-likelihood of one binary response under `P(correct) = probit(x)`,
/// together with its first and second derivatives with respect to `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseTerm {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// `r log Φ(x) + (1 - r) log(1 - Φ(x))` with the probability clipped to
/// `[floor, 1 - floor]`. Where the clip is active the term is constant, so
/// both derivatives are zero.
#[inline]
pub fn response_term(x: f64, correct: bool, floor: f64) -> ResponseTerm {
    // 1 - Φ(x) = Φ(-x), so an incorrect response is a correct one at -x.
    let (u, sign) = if correct { (x, 1.0) } else { (-x, -1.0) };
    let p = probit(u);
    if p < floor {
        return ResponseTerm { value: floor.ln(), d1: 0.0, d2: 0.0 };
    }
    if p > 1.0 - floor {
        return ResponseTerm { value: (1.0 - floor).ln(), d1: 0.0, d2: 0.0 };
    }
    let mills = normal_pdf(u) / p;
    ResponseTerm {
        value: p.ln(),
        d1: sign * mills,
        d2: -mills * (u + mills),
    }
}
