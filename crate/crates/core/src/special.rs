//! Special functions not covered by `statrs`: Bessel J0, gamma quantiles and
//! truncated gamma moments used by the grid construction.

use crate::error::{Error, Result};
use statrs::function::gamma::gamma_lr;

/// Bessel function of the first kind, order zero.
///
/// Evaluated from `J0(x) = (1/π) ∫₀^π cos(x sin θ) dθ` with the trapezoid
/// rule, which converges geometrically for this periodic integrand.
pub fn bessel_j0(x: f64) -> f64 {
    let n = 64 + 2 * x.abs().ceil() as usize;
    let h = std::f64::consts::PI / n as f64;
    let mut acc = 0.5 * (1.0 + (x * std::f64::consts::PI.sin()).cos());
    for k in 1..n {
        acc += (x * (k as f64 * h).sin()).cos();
    }
    acc / n as f64
}

/// Lag-one correlation of a Clarke-spectrum process at normalized Doppler `f_d`.
pub fn clarke_correlation(doppler: f64) -> f64 {
    bessel_j0(2.0 * std::f64::consts::PI * doppler)
}

/// CDF of Gamma(shape, 1).
pub fn gamma_cdf(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(shape, x)
    }
}

/// Quantile of Gamma(shape, 1) by bracketing and bisection.
pub fn gamma_quantile(shape: f64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(f64::INFINITY);
    }
    let mut hi = shape.max(1.0);
    let mut guard = 0;
    while gamma_cdf(shape, hi) < p {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::QuantileNotConverged { p });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_cdf(shape, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            return Ok(0.5 * (lo + hi));
        }
    }
    let mid = 0.5 * (lo + hi);
    if (gamma_cdf(shape, mid) - p).abs() < 1e-12 {
        Ok(mid)
    } else {
        Err(Error::QuantileNotConverged { p })
    }
}

/// `E[g · 1{a ≤ g < b}]` for g ~ Gamma(shape, 1).
pub fn gamma_partial_mean(shape: f64, a: f64, b: f64) -> f64 {
    shape * (gamma_cdf(shape + 1.0, b) - gamma_cdf(shape + 1.0, a))
}

/// `E[φ(g) · 1{a ≤ g < b}]` for g ~ Gamma(shape, 1) and smooth φ, by
/// composite Simpson quadrature. The upper limit is truncated where the
/// remaining tail mass is below 1e-16.
pub fn gamma_partial_expectation(shape: f64, a: f64, b: f64, phi: impl Fn(f64) -> f64) -> f64 {
    let cap = gamma_quantile(shape, 1.0 - 1e-16).unwrap_or(shape + 60.0);
    let b = b.min(cap);
    if b <= a {
        return 0.0;
    }
    let ln_norm = statrs::function::gamma::ln_gamma(shape);
    let density = |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            ((shape - 1.0) * x.ln() - x - ln_norm).exp()
        }
    };
    let n = 4000;
    let h = (b - a) / n as f64;
    let f = |x: f64| {
        let d = density(x);
        if d == 0.0 {
            0.0
        } else {
            phi(x) * d
        }
    };
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let x = a + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}
