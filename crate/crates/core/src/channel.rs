//! Temporally correlated MISO channels, transmitter-side CSIT tracking and
//! the decomposition of a channel direction relative to the CSIT.

use crate::cvec::{self, CVec};
use crate::quantizer::QuantizationOutcome;
use crate::special::clarke_correlation;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One L×1 channel vector `h`, with gain `g = ‖h‖²` and direction `s = h/‖h‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    pub h: CVec,
}

impl ChannelVector {
    pub fn gain(&self) -> f64 {
        cvec::norm_sqr(&self.h)
    }

    pub fn direction(&self) -> CVec {
        // a CN(0, I) draw is zero with probability zero
        cvec::normalized(&self.h).unwrap_or_else(|| {
            let mut e = vec![Complex64::new(0.0, 0.0); self.h.len()];
            e[0] = Complex64::new(1.0, 0.0);
            e
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum FadingMode {
    /// Independent draws every slot (high mobility).
    BlockIid,
    /// `h' = ρ h + sqrt(1-ρ²) w`.
    Ar1 { rho: f64 },
}

impl FadingMode {
    /// First-order Gauss–Markov process whose lag-one correlation equals
    /// Clarke's `J0(2π f_d)`.
    pub fn clarke(doppler: f64) -> Self {
        FadingMode::Ar1 {
            rho: clarke_correlation(doppler),
        }
    }

    pub fn correlation(&self) -> f64 {
        match *self {
            FadingMode::BlockIid => 0.0,
            FadingMode::Ar1 { rho } => rho,
        }
    }
}

/// A single link's fading process. Owns its random stream.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    mode: FadingMode,
    state: ChannelVector,
    rng: ChaCha8Rng,
}

impl FadingProcess {
    /// Starts in the stationary distribution CN(0, I).
    pub fn new(antennas: usize, mode: FadingMode, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cvec::gaussian(antennas, &mut rng);
        Self {
            mode,
            state: ChannelVector { h },
            rng,
        }
    }

    pub fn mode(&self) -> FadingMode {
        self.mode
    }

    pub fn current(&self) -> &ChannelVector {
        &self.state
    }

    pub fn advance(&mut self) -> &ChannelVector {
        let w = cvec::gaussian(self.state.h.len(), &mut self.rng);
        match self.mode {
            FadingMode::BlockIid => self.state.h = w,
            FadingMode::Ar1 { rho } => {
                let k = (1.0 - rho * rho).max(0.0).sqrt();
                for (h, wi) in self.state.h.iter_mut().zip(&w) {
                    *h = *h * rho + wi * k;
                }
            }
        }
        &self.state
    }
}

/// Transmitter-side CSIT for one cross link and its error against the
/// current true direction.
#[derive(Debug, Clone, PartialEq)]
pub struct CsitState {
    pub u: CVec,
    /// `δ = 1 - |s† u|²`.
    pub delta: f64,
}

impl CsitState {
    pub fn new(u: CVec, s: &[Complex64]) -> Self {
        let delta = cvec::chordal_sq(s, &u);
        Self { u, delta }
    }

    /// Data-phase CSIT after this slot's feedback decision: the fed-back
    /// direction when bits were sent, otherwise the old CSIT unchanged.
    /// The returned `delta` is `δ̌` (the quantization error after feedback).
    pub fn apply_feedback(&self, outcome: &QuantizationOutcome) -> CsitState {
        match outcome {
            QuantizationOutcome::NoFeedback => self.clone(),
            QuantizationOutcome::Quantized {
                direction, error, ..
            } => CsitState {
                u: direction.clone(),
                delta: *error,
            },
        }
    }

    /// Carries the CSIT into the next slot, re-measuring the error.
    pub fn observe(&self, new_s: &[Complex64]) -> CsitState {
        CsitState::new(self.u.clone(), new_s)
    }
}

/// Applies a feedback outcome and moves to the next slot. Returns the
/// data-phase state (holding `δ̌`) and the next slot's state.
pub fn update_csit(
    state: &CsitState,
    outcome: &QuantizationOutcome,
    new_s: &[Complex64],
) -> (CsitState, CsitState) {
    let data = state.apply_feedback(outcome);
    let next = data.observe(new_s);
    (data, next)
}

/// `s = sqrt(1-δ)·e^{jθ}·u + sqrt(δ)·q` with `q ⊥ u`, `s†q ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoDecomposition {
    pub delta: f64,
    /// `β = |f† q|²`; zero when `δ = 0` (q undefined).
    pub beta: f64,
    pub q: Option<CVec>,
}

pub fn decompose(s: &[Complex64], u: &[Complex64], f: &[Complex64]) -> OrthoDecomposition {
    let c = cvec::inner(u, s);
    let residual: CVec = s.iter().zip(u).map(|(si, ui)| si - c * ui).collect();
    let delta = cvec::chordal_sq(s, u);
    // s†r = 1 - |u†s|² ≥ 0, so the normalized residual already has the phase convention
    match cvec::normalized(&residual) {
        Some(q) if delta > 0.0 => {
            let beta = cvec::inner(f, &q).norm_sqr().clamp(0.0, 1.0);
            OrthoDecomposition {
                delta,
                beta,
                q: Some(q),
            }
        }
        _ => OrthoDecomposition {
            delta: 0.0,
            beta: 0.0,
            q: None,
        },
    }
}
