use super::waterfill::golden;
use crate::error::{domain, Error, Result};
use crate::special::{gamma_cdf, gamma_partial_expectation};

/// Split of a receiver's feedback budget across its interfering links.
#[derive(Debug, Clone, PartialEq)]
pub struct RateAllocation {
    pub rates: Vec<f64>,
    /// Water level over the active links.
    pub eta: f64,
    /// Rates before clamping at zero, from the all-links water level.
    pub unclamped: Vec<f64>,
    pub distances: Vec<f64>,
    pub alpha: f64,
}

fn check_inputs(distances: &[f64], alpha: f64, b_bar: f64) -> Result<()> {
    if distances.is_empty() || distances.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return domain("distances must be positive and finite");
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return domain("path-loss exponent must be finite and nonnegative");
    }
    if !(b_bar >= 0.0) || !b_bar.is_finite() {
        return Err(Error::InfeasibleBudget(format!("budget {b_bar} must be finite and nonnegative")));
    }
    Ok(())
}

/// Water-filling split for exponential interference curves:
/// `b_n = η - α(L-1)·log2 d_n`, clamped at zero with η recomputed over the
/// links that stay active.
pub fn allocate_rates_closed_form(
    distances: &[f64],
    alpha: f64,
    antennas: usize,
    b_bar: f64,
) -> Result<RateAllocation> {
    check_inputs(distances, alpha, b_bar)?;
    let slope = alpha * (antennas as f64 - 1.0);
    let offsets: Vec<f64> = distances.iter().map(|d| slope * d.log2()).collect();
    let level = |active: &[bool]| {
        let count = active.iter().filter(|&&a| a).count() as f64;
        let sum: f64 = offsets.iter().zip(active).filter(|(_, &a)| a).map(|(o, _)| o).sum();
        (b_bar + sum) / count
    };
    let mut active = vec![true; distances.len()];
    let eta0 = level(&active);
    let unclamped = offsets.iter().map(|o| eta0 - o).collect();
    let mut eta = eta0;
    loop {
        let mut changed = false;
        for (a, o) in active.iter_mut().zip(&offsets) {
            if *a && eta - o < 0.0 {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        eta = level(&active);
    }
    let rates = offsets
        .iter()
        .zip(&active)
        .map(|(o, &a)| if a { eta - o } else { 0.0 })
        .collect();
    Ok(RateAllocation {
        rates,
        eta,
        unclamped,
        distances: distances.to_vec(),
        alpha,
    })
}

/// Piecewise-linear interpolation of a sampled curve, held flat beyond the
/// last sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCurve {
    pub rates: Vec<f64>,
    pub values: Vec<f64>,
}

impl TabulatedCurve {
    pub fn new(rates: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if rates.len() < 2 || rates.len() != values.len() || rates.windows(2).any(|w| w[0] >= w[1]) {
            return domain("tabulated curve needs at least two increasing abscissae");
        }
        Ok(Self { rates, values })
    }

    pub fn eval(&self, b: f64) -> f64 {
        let k = self.rates.partition_point(|&r| r <= b);
        if k == 0 {
            return self.values[0];
        }
        if k == self.rates.len() {
            return *self.values.last().unwrap();
        }
        let (r0, r1) = (self.rates[k - 1], self.rates[k]);
        let t = (b - r0) / (r1 - r0);
        self.values[k - 1] * (1.0 - t) + self.values[k] * t
    }
}

/// Splits `b_bar` across links with general per-link minimum-interference
/// curves by bisection on the budget multiplier.
///
/// Each curve must be convex and nonincreasing on `[0, b_bar]`; this is
/// checked on a sample grid.
pub fn allocate_rates_general(
    distances: &[f64],
    alpha: f64,
    b_bar: f64,
    curves: &[&dyn Fn(f64) -> f64],
) -> Result<RateAllocation> {
    check_inputs(distances, alpha, b_bar)?;
    if curves.len() != distances.len() {
        return domain("one curve per link is required");
    }
    let k = distances.len();
    if b_bar == 0.0 {
        return Ok(RateAllocation {
            rates: vec![0.0; k],
            eta: 0.0,
            unclamped: vec![0.0; k],
            distances: distances.to_vec(),
            alpha,
        });
    }
    for (link, curve) in curves.iter().enumerate() {
        check_convex(link, curve, b_bar)?;
    }
    let weights: Vec<f64> = distances.iter().map(|d| d.powf(-alpha)).collect();
    let respond = |nu: f64| -> Vec<f64> {
        (0..k)
            .map(|i| {
                let f = |b: f64| weights[i] * curves[i](b) + nu * b;
                let x = golden(f, 0.0, b_bar, 100);
                // golden section never lands exactly on the interval ends
                [0.0, x, b_bar]
                    .into_iter()
                    .min_by(|a, b| f(*a).total_cmp(&f(*b)))
                    .unwrap()
            })
            .collect()
    };
    let total = |r: &[f64]| r.iter().sum::<f64>();

    let at_zero = respond(0.0);
    if total(&at_zero) <= b_bar {
        return Ok(finish(at_zero, 0.0, distances, alpha));
    }
    let mut hi = 1e-6;
    while total(&respond(hi)) > b_bar {
        hi *= 2.0;
        if hi > 1e12 {
            return domain("multiplier search diverged");
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(&respond(mid)) > b_bar {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    // blend the two bracketing responses so the budget is met exactly
    let (rl, rh) = (respond(lo), respond(hi));
    let (tl, th) = (total(&rl), total(&rh));
    let theta = if tl > th { (b_bar - th) / (tl - th) } else { 0.0 };
    let rates = rl
        .iter()
        .zip(&rh)
        .map(|(a, b)| theta * a + (1.0 - theta) * b)
        .collect();
    Ok(finish(rates, hi, distances, alpha))
}

fn finish(rates: Vec<f64>, nu: f64, distances: &[f64], alpha: f64) -> RateAllocation {
    RateAllocation {
        unclamped: rates.clone(),
        rates,
        eta: nu,
        distances: distances.to_vec(),
        alpha,
    }
}

fn check_convex(link: usize, curve: &dyn Fn(f64) -> f64, b_bar: f64) -> Result<()> {
    let n = 64;
    let v: Vec<f64> = (0..=n).map(|i| curve(b_bar * i as f64 / n as f64)).collect();
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
    let tol = 1e-9 * scale;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonConvexCurve {
            link,
            detail: "non-finite value".into(),
        });
    }
    if let Some(i) = v.windows(2).position(|w| w[1] > w[0] + tol) {
        return Err(Error::NonConvexCurve {
            link,
            detail: format!("increases at sample {i}"),
        });
    }
    if let Some(i) = v.windows(3).position(|w| w[0] - 2.0 * w[1] + w[2] < -tol) {
        return Err(Error::NonConvexCurve {
            link,
            detail: format!("negative second difference at sample {}", i + 1),
        });
    }
    Ok(())
}

/// Two-tier water-filling feedback size
/// `η' - α(L-1)·log2 d - (L-1)·log2(1/g)`, floored at zero.
pub fn two_tier_bits(g: f64, distance: f64, alpha: f64, antennas: usize, eta_prime: f64) -> Result<f64> {
    if !(g > 0.0) || !(distance > 0.0) {
        return domain("gain and distance must be positive");
    }
    let l1 = antennas as f64 - 1.0;
    Ok((eta_prime - alpha * l1 * distance.log2() + l1 * g.log2()).max(0.0))
}

/// `E[two_tier_bits]` for `g ~ Gamma(L, 1)`.
pub fn expected_two_tier_bits(distance: f64, alpha: f64, antennas: usize, eta_prime: f64) -> f64 {
    let l = antennas as f64;
    let l1 = l - 1.0;
    let a = eta_prime - alpha * l1 * distance.log2();
    // bits are positive for g > 2^(-a/(L-1))
    let t = (-a / l1).exp2();
    let tail = 1.0 - gamma_cdf(l, t);
    a * tail + l1 * gamma_partial_expectation(l, t, f64::INFINITY, |g| g.log2())
}

/// Level `η'` at which the two-tier sizes summed over links spend `b_bar`
/// bits per slot on average.
pub fn calibrate_two_tier(distances: &[f64], alpha: f64, antennas: usize, b_bar: f64) -> Result<f64> {
    check_inputs(distances, alpha, b_bar)?;
    let total = |eta: f64| -> f64 {
        distances
            .iter()
            .map(|&d| expected_two_tier_bits(d, alpha, antennas, eta))
            .sum()
    };
    let (mut lo, mut hi) = (-200.0, 200.0);
    if total(hi) < b_bar {
        return Err(Error::InfeasibleBudget(format!("budget {b_bar} beyond calibration range")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < b_bar {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Jensen upper bound on the per-user throughput loss from residual
/// interference: `log2(1 + Ī/σ²)`.
pub fn throughput_loss_bound(avg_interference: f64, sigma2: f64) -> Result<f64> {
    if !(avg_interference >= 0.0) || !(sigma2 > 0.0) {
        return domain("interference must be nonnegative and noise power positive");
    }
    Ok((avg_interference / sigma2).ln_1p() / std::f64::consts::LN_2)
}
