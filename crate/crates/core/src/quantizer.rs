//! CSI quantization models.
//!
//! The quantization error of a fed-back direction `ŝ` for the true direction
//! `s` is `ε = 1 - |ŝ† s|²`. Two analytic error laws are provided (the
//! sphere-cap model and random vector quantization, RVQ), plus a concrete RVQ
//! quantizer that searches a freshly drawn codebook of `2^B` isotropic
//! codewords.

use crate::cvec::{self, CVec};
use crate::error::{domain, Error, Result};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Largest codebook the explicit RVQ quantizer will search.
pub const MAX_CODEBOOK_BITS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerKind {
    SphereCap,
    RvqAnalytic,
    RvqCodebook,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerModel {
    pub kind: QuantizerKind,
    pub antennas: usize,
    /// Seed of the codebook stream; only meaningful for [`QuantizerKind::RvqCodebook`].
    pub seed: u64,
}

/// Result of one feedback decision.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantizationOutcome {
    /// `B = 0`: nothing is sent and the transmitter keeps its CSIT.
    NoFeedback,
    Quantized {
        direction: CVec,
        error: f64,
        bits: u32,
    },
}

impl QuantizationOutcome {
    pub fn bits(&self) -> u32 {
        match self {
            QuantizationOutcome::NoFeedback => 0,
            QuantizationOutcome::Quantized { bits, .. } => *bits,
        }
    }
}

fn check_antennas(antennas: usize) -> Result<()> {
    if antennas < 2 {
        return domain(format!("antenna count {antennas} < 2"));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return domain(format!("threshold {tau} outside [0, 1]"));
    }
    Ok(())
}

/// Sphere-cap CDF `Pr(ε ≤ τ | B) = 2^B τ^(L-1)` on the cap, 1 beyond it.
pub fn sphere_cap_cdf(tau: f64, bits: u32, antennas: usize) -> Result<f64> {
    check_antennas(antennas)?;
    check_tau(tau)?;
    let exponent = (antennas - 1) as f64;
    let log2_val = bits as f64 + exponent * tau.log2();
    Ok(if log2_val >= 0.0 { 1.0 } else { log2_val.exp2() })
}

/// Sphere-cap mean error `((L-1)/L) 2^(-B/(L-1))`.
pub fn sphere_cap_mean(bits: u32, antennas: usize) -> Result<f64> {
    check_antennas(antennas)?;
    let l = antennas as f64;
    Ok((l - 1.0) / l * (-(bits as f64) / (l - 1.0)).exp2())
}

/// RVQ tail `Pr(ε ≥ τ | B) = (1 - τ^(L-1))^(2^B)`.
pub fn rvq_tail(tau: f64, bits: u32, antennas: usize) -> Result<f64> {
    check_antennas(antennas)?;
    check_tau(tau)?;
    let c = tau.powi(antennas as i32 - 1);
    if c >= 1.0 {
        return Ok(0.0);
    }
    let n = (bits as f64).exp2();
    Ok((n * (-c).ln_1p()).exp())
}

/// RVQ mean error `2^B · beta(2^B, L/(L-1))`, evaluated in log space.
pub fn rvq_mean(bits: u32, antennas: usize) -> Result<f64> {
    check_antennas(antennas)?;
    if bits > 64 {
        return domain(format!("{bits} bits exceeds the supported range of 64"));
    }
    let n = (bits as f64).exp2();
    let a = antennas as f64 / (antennas as f64 - 1.0);
    // ln Γ(n+a) - ln Γ(n), expanded for large n to avoid cancellation
    let ln_ratio = if bits >= 16 {
        let c1 = a * (a - 1.0) / 2.0;
        let c2 = a * (a - 1.0) * (a - 2.0) * (3.0 * a - 1.0) / 24.0;
        a * n.ln() + (c1 / n + c2 / (n * n)).ln_1p()
    } else {
        ln_gamma(n + a) - ln_gamma(n)
    };
    Ok((n.ln() + ln_gamma(a) - ln_ratio).exp())
}

impl QuantizerModel {
    pub fn new(kind: QuantizerKind, antennas: usize) -> Result<Self> {
        check_antennas(antennas)?;
        Ok(Self {
            kind,
            antennas,
            seed: 0,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `E[ε | B]`.
    pub fn mean_error(&self, bits: u32) -> f64 {
        match self.kind {
            QuantizerKind::SphereCap => sphere_cap_mean(bits, self.antennas),
            QuantizerKind::RvqAnalytic | QuantizerKind::RvqCodebook => {
                rvq_mean(bits, self.antennas)
            }
        }
        .expect("antenna count validated at construction")
    }

    /// `Pr(ε ≤ τ | B)`.
    pub fn error_cdf(&self, tau: f64, bits: u32) -> Result<f64> {
        match self.kind {
            QuantizerKind::SphereCap => sphere_cap_cdf(tau, bits, self.antennas),
            QuantizerKind::RvqAnalytic | QuantizerKind::RvqCodebook => {
                Ok(1.0 - rvq_tail(tau, bits, self.antennas)?)
            }
        }
    }

    /// Draws one quantization error for a `B`-bit quantizer. For `B = 0` this
    /// is the error of a single random codeword (uniform on the full sphere),
    /// which is what a quantizer with one codeword would produce.
    pub fn sample_error<R: Rng + ?Sized>(&self, bits: u32, rng: &mut R) -> Result<f64> {
        let inv = 1.0 / (self.antennas as f64 - 1.0);
        match self.kind {
            QuantizerKind::SphereCap => {
                let u: f64 = rng.random();
                Ok(u.powf(inv) * (-(bits as f64) * inv).exp2())
            }
            QuantizerKind::RvqAnalytic => {
                // invert the tail: V = (1 - τ^(L-1))^N
                let v: f64 = 1.0 - rng.random::<f64>();
                let n = (bits as f64).exp2();
                let c = -(v.ln() / n).exp_m1();
                Ok(c.clamp(0.0, 1.0).powf(inv))
            }
            QuantizerKind::RvqCodebook => {
                let s = cvec::random_unit(self.antennas, rng);
                let (_, err) = self.search_codebook(&s, bits, rng)?;
                Ok(err)
            }
        }
    }

    fn search_codebook<R: Rng + ?Sized>(
        &self,
        direction: &[Complex64],
        bits: u32,
        rng: &mut R,
    ) -> Result<(CVec, f64)> {
        if bits > MAX_CODEBOOK_BITS {
            return Err(Error::CodebookTooLarge {
                bits,
                limit: MAX_CODEBOOK_BITS,
            });
        }
        let mut best = cvec::random_unit(self.antennas, rng);
        let mut best_gain = cvec::inner(&best, direction).norm_sqr();
        for _ in 1..(1u64 << bits) {
            let w = cvec::random_unit(self.antennas, rng);
            let gain = cvec::inner(&w, direction).norm_sqr();
            if gain > best_gain {
                best_gain = gain;
                best = w;
            }
        }
        Ok((best, (1.0 - best_gain).clamp(0.0, 1.0)))
    }

    /// Quantizes `direction` with `bits` bits.
    ///
    /// `RvqCodebook` searches `2^B` isotropic codewords drawn from `rng`; the
    /// analytic kinds draw `ε` from their error law and place the returned
    /// direction at exactly that chordal distance along a random orthogonal
    /// residual.
    pub fn quantize<R: Rng + ?Sized>(
        &self,
        direction: &[Complex64],
        bits: u32,
        rng: &mut R,
    ) -> Result<QuantizationOutcome> {
        if direction.len() != self.antennas {
            return domain(format!(
                "direction has length {}, expected {}",
                direction.len(),
                self.antennas
            ));
        }
        if bits == 0 {
            return Ok(QuantizationOutcome::NoFeedback);
        }
        let (q, error) = match self.kind {
            QuantizerKind::RvqCodebook => self.search_codebook(direction, bits, rng)?,
            _ => {
                let eps = self.sample_error(bits, rng)?;
                let q = cvec::at_chordal_distance(direction, eps, rng);
                let err = cvec::chordal_sq(direction, &q);
                (q, err)
            }
        };
        Ok(QuantizationOutcome::Quantized {
            direction: q,
            error,
            bits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `∫₀¹ (1 - F(τ)) dτ` by Simpson's rule on a fine grid.
    fn mean_from_cdf(cdf: impl Fn(f64) -> f64) -> f64 {
        let n = 200_000;
        let h = 1.0 / n as f64;
        let mut acc = (1.0 - cdf(0.0)) + (1.0 - cdf(1.0));
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * (1.0 - cdf(k as f64 * h));
        }
        acc * h / 3.0
    }

    #[test]
    fn sphere_cap_cdf_examples() {
        let edge = (-4.0f64 / 3.0).exp2();
        assert_eq!(sphere_cap_cdf(edge, 4, 4).unwrap(), 1.0);
        assert!((sphere_cap_cdf(0.5, 0, 4).unwrap() - 0.125).abs() < 1e-15);
        assert!(sphere_cap_cdf(1.5, 0, 4).is_err());
        assert!(sphere_cap_cdf(0.5, 0, 1).is_err());
    }

    #[test]
    fn sphere_cap_cdf_matches_sampler() {
        // oracle: empirical CDF of 10^6 inverse-CDF draws
        let model = QuantizerModel::new(QuantizerKind::SphereCap, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let below = (0..n)
            .filter(|_| model.sample_error(2, &mut rng).unwrap() <= 0.25)
            .count();
        let emp = below as f64 / n as f64;
        let exact = sphere_cap_cdf(0.25, 2, 3).unwrap();
        assert!((emp - exact).abs() < 0.01, "{emp} vs {exact}");
    }

    #[test]
    fn sphere_cap_mean_examples() {
        assert!((sphere_cap_mean(0, 4).unwrap() - 0.75).abs() < 1e-15);
        assert!((sphere_cap_mean(3, 4).unwrap() - 0.375).abs() < 1e-15);
        assert!(sphere_cap_mean(60, 4).unwrap() < 1e-6);
        assert!(sphere_cap_mean(3, 1).is_err());
    }

    #[test]
    fn rvq_tail_examples() {
        assert_eq!(rvq_tail(1.0, 5, 4).unwrap(), 0.0);
        assert_eq!(rvq_tail(0.0, 5, 4).unwrap(), 1.0);
        assert!((rvq_tail(0.5, 2, 3).unwrap() - 0.316_406_25).abs() < 1e-14);
        assert!(rvq_tail(-0.1, 2, 3).is_err());
    }

    #[test]
    fn rvq_mean_matches_log_gamma_and_tail_integral() {
        // Γ(1)Γ(2)/Γ(3) = 1/2 and 2·Γ(2)Γ(2)/Γ(4) = 1/3
        assert!((rvq_mean(0, 2).unwrap() - 0.5).abs() < 1e-14);
        assert!((rvq_mean(1, 2).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!((rvq_mean(0, 4).unwrap() - 0.75).abs() < 1e-14);
        for l in 2..=5 {
            for b in [0u32, 1, 3, 6, 10] {
                let integral = mean_from_cdf(|t| 1.0 - rvq_tail(t, b, l).unwrap());
                assert!(
                    (integral - rvq_mean(b, l).unwrap()).abs() < 1e-6,
                    "L={l} B={b}"
                );
            }
        }
        assert!(rvq_mean(64, 4).unwrap().is_finite());
        assert!(rvq_mean(65, 4).is_err());
    }

    #[test]
    fn rvq_mean_is_not_convex_at_zero_bits_for_four_antennas() {
        // m(0) = 3/4, m(1) = 18/28, m(2) = 1944/3640
        let d2 = 0.75 - 2.0 * 18.0 / 28.0 + 1944.0 / 3640.0;
        assert!(d2 < 0.0);
        let m = |b| rvq_mean(b, 4).unwrap();
        assert!((m(0) - 2.0 * m(1) + m(2) - d2).abs() < 1e-12);
    }

    #[test]
    fn rvq_mean_asymptote_is_exponential_in_bits() {
        // The asymptotic constant is fitted rather than assumed: the ratio of
        // successive means converges to 2^(-1/(L-1)).
        let l = 4;
        let r = rvq_mean(41, l).unwrap() / rvq_mean(40, l).unwrap();
        assert!((r - (-1.0f64 / 3.0).exp2()).abs() < 1e-6);
        let a = rvq_mean(40, l).unwrap() * (40.0f64 / 3.0).exp2();
        for b in [30u32, 50, 60] {
            let approx = a * (-(b as f64) / 3.0).exp2();
            assert!((approx / rvq_mean(b, l).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sphere_cap_cdf_integrates_to_mean() {
        for l in 2..=5 {
            for b in [0u32, 2, 5, 9] {
                let integral = mean_from_cdf(|t| sphere_cap_cdf(t, b, l).unwrap());
                assert!((integral - sphere_cap_mean(b, l).unwrap()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_bits_is_no_feedback() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = cvec::random_unit(4, &mut rng);
        for kind in [
            QuantizerKind::SphereCap,
            QuantizerKind::RvqAnalytic,
            QuantizerKind::RvqCodebook,
        ] {
            let model = QuantizerModel::new(kind, 4).unwrap();
            assert_eq!(
                model.quantize(&s, 0, &mut rng).unwrap(),
                QuantizationOutcome::NoFeedback
            );
        }
    }

    fn empirical_mean(model: &QuantizerModel, bits: u32, trials: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = cvec::random_unit(model.antennas, &mut rng);
        let mut acc = 0.0;
        for _ in 0..trials {
            match model.quantize(&s, bits, &mut rng).unwrap() {
                QuantizationOutcome::Quantized {
                    direction, error, ..
                } => {
                    assert!((cvec::norm(&direction) - 1.0).abs() < 1e-12);
                    assert!((0.0..=1.0).contains(&error));
                    acc += error;
                }
                QuantizationOutcome::NoFeedback => unreachable!(),
            }
        }
        acc / trials as f64
    }

    #[test]
    fn codebook_quantizer_matches_rvq_mean() {
        let model = QuantizerModel::new(QuantizerKind::RvqCodebook, 4)
            .unwrap()
            .with_seed(5);
        let m = empirical_mean(&model, 8, 100_000, 5);
        let exact = rvq_mean(8, 4).unwrap();
        assert!((m / exact - 1.0).abs() < 0.02, "{m} vs {exact}");
    }

    #[test]
    fn sphere_cap_quantizer_matches_mean() {
        let model = QuantizerModel::new(QuantizerKind::SphereCap, 4).unwrap();
        let m = empirical_mean(&model, 8, 100_000, 9);
        let exact = sphere_cap_mean(8, 4).unwrap();
        assert!((m / exact - 1.0).abs() < 0.02, "{m} vs {exact}");
    }

    #[test]
    fn codebook_errors_follow_rvq_tail_within_dkw_band() {
        // DKW: sup |F_n - F| ≤ sqrt(ln(2/α) / 2n) with probability 1 - α
        let n = 100_000;
        let alpha: f64 = 1e-3;
        let band = ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt();
        let model = QuantizerModel::new(QuantizerKind::RvqCodebook, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut errs: Vec<f64> = (0..n)
            .map(|_| model.sample_error(4, &mut rng).unwrap())
            .collect();
        errs.sort_by(f64::total_cmp);
        let mut sup: f64 = 0.0;
        for (i, &e) in errs.iter().enumerate() {
            let f = 1.0 - rvq_tail(e, 4, 3).unwrap();
            sup = sup
                .max((f - i as f64 / n as f64).abs())
                .max((f - (i + 1) as f64 / n as f64).abs());
        }
        assert!(sup < band, "KS distance {sup} exceeds DKW band {band}");
    }

    #[test]
    fn analytic_rvq_sampler_matches_rvq_mean() {
        let model = QuantizerModel::new(QuantizerKind::RvqAnalytic, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for b in [0u32, 3, 12] {
            let n = 100_000;
            let m: f64 = (0..n)
                .map(|_| model.sample_error(b, &mut rng).unwrap())
                .sum::<f64>()
                / n as f64;
            assert!((m / rvq_mean(b, 4).unwrap() - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn rvq_tail_convex_in_bits_once_past_inflection() {
        // (1-c)^(2^B) = exp(-a 2^B) with a = -ln(1-c) is convex in B exactly
        // where a·2^B ≥ 1; below that it is concave, so convexity over the
        // integer grid is only asserted past the inflection.
        for l in 2..=5 {
            for k in 1..50 {
                let tau = k as f64 / 50.0;
                let a = -(-(tau.powi(l as i32 - 1))).ln_1p();
                for b in 0u32..30 {
                    if a * (b as f64).exp2() < 1.0 {
                        continue;
                    }
                    let t0 = rvq_tail(tau, b, l).unwrap();
                    let t1 = rvq_tail(tau, b + 1, l).unwrap();
                    let t2 = rvq_tail(tau, b + 2, l).unwrap();
                    assert!(t0 - 2.0 * t1 + t2 >= -1e-15);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn sphere_cap_mean_is_decreasing_and_convex(b in 0u32..60, l in 2usize..9) {
            let m0 = sphere_cap_mean(b, l).unwrap();
            let m1 = sphere_cap_mean(b + 1, l).unwrap();
            let m2 = sphere_cap_mean(b + 2, l).unwrap();
            prop_assert!(m1 < m0);
            prop_assert!(m0 - 2.0 * m1 + m2 >= 0.0);
        }

        #[test]
        fn rvq_mean_is_decreasing_and_convex(b in 0u32..40, l in 2usize..9) {
            let m0 = rvq_mean(b, l).unwrap();
            let m1 = rvq_mean(b + 1, l).unwrap();
            let m2 = rvq_mean(b + 2, l).unwrap();
            prop_assert!(m1 < m0);
            // convexity holds from one bit on for L ≤ 7, and from B = 0 only for L ≤ 3
            if (b >= 1 && l <= 7) || l <= 3 {
                prop_assert!(m0 - 2.0 * m1 + m2 >= -1e-15);
            }
        }

        #[test]
        fn rvq_tail_is_monotone(tau in 0.0f64..=1.0, b in 0u32..30, l in 2usize..9) {
            let t = rvq_tail(tau, b, l).unwrap();
            prop_assert!(rvq_tail(tau, b + 1, l).unwrap() <= t);
            prop_assert!(rvq_tail((tau + 0.01).min(1.0), b, l).unwrap() <= t);
        }

        #[test]
        fn sphere_cap_cdf_is_monotone(tau in 0.0f64..0.99, b in 0u32..30, l in 2usize..9) {
            prop_assert!(sphere_cap_cdf(tau, b, l).unwrap() <= sphere_cap_cdf(tau + 0.01, b, l).unwrap());
        }
    }
}
