//! Experiment configuration file (JSON). Every field has a default, so an
//! empty object `{}` describes the reference setup: four antennas, three
//! users, feedback sizes 0, 2, …, 30, a 16-segment gain grid and 13 dB SNR.

use crate::CliError;
use fbctl_core::channel::FadingMode;
use fbctl_core::highmob::SearchOptions;
use fbctl_core::mdp::{BudgetOptions, KernelOptions};
use fbctl_core::quantizer::QuantizerKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub antennas: usize,
    pub users: usize,
    /// Allowed feedback sizes; must start at 0 and increase.
    pub bits: Vec<u32>,
    /// Number of gain segments M. The error axis has one point per feedback size.
    pub gain_segments: usize,
    pub quantizer: QuantizerKind,
    pub snr_db: f64,
    pub fading: FadingSpec,
    /// Average sum-feedback rate per receiver, bits/slot.
    pub b_bar: f64,
    pub kernel: KernelSpec,
    pub solver: SolverSpec,
    pub network: NetworkSpec,
    pub waterfill: WaterfillSpec,
    pub schemes: Vec<SchemeSpec>,
    pub sweep: Option<SweepSpec>,
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            antennas: 4,
            users: 3,
            bits: (0..16).map(|k| 2 * k).collect(),
            gain_segments: 16,
            quantizer: QuantizerKind::SphereCap,
            snr_db: 13.0,
            fading: FadingSpec::Clarke { doppler: 1e-2 },
            b_bar: 12.0,
            kernel: KernelSpec::default(),
            solver: SolverSpec::default(),
            network: NetworkSpec::default(),
            waterfill: WaterfillSpec::default(),
            schemes: vec![
                SchemeSpec::Controlled,
                SchemeSpec::Simple { bits: 8 },
                SchemeSpec::Differential { bits: 8, nu: None },
                SchemeSpec::PerfectCsit,
            ],
            sweep: None,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "mode")]
pub enum FadingSpec {
    /// Gauss–Markov fading with Clarke's lag-one correlation for this
    /// normalized Doppler frequency.
    Clarke { doppler: f64 },
    Ar1 { rho: f64 },
    BlockIid,
}

impl FadingSpec {
    pub fn mode(&self) -> FadingMode {
        match *self {
            FadingSpec::Clarke { doppler } => FadingMode::clarke(doppler),
            FadingSpec::Ar1 { rho } => FadingMode::Ar1 { rho },
            FadingSpec::BlockIid => FadingMode::BlockIid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSpec {
    pub samples: usize,
    pub smoothing: f64,
    pub drift: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        let k = KernelOptions::default();
        Self {
            samples: k.samples,
            smoothing: k.smoothing,
            drift: k.drift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub rate_tol: f64,
    pub lambda_tol: f64,
    pub max_policy_iter: usize,
    /// Discount factor for value iteration in `verify-structure`.
    pub discount: f64,
    pub vi_tol: f64,
    pub vi_max_iter: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let b = BudgetOptions::default();
        Self {
            rate_tol: b.rate_tol,
            lambda_tol: b.lambda_tol,
            max_policy_iter: b.max_policy_iter,
            discount: 0.99,
            vi_tol: 1e-10,
            vi_max_iter: 100_000,
        }
    }
}

impl SolverSpec {
    pub fn budget_options(&self) -> BudgetOptions {
        BudgetOptions {
            rate_tol: self.rate_tol,
            lambda_tol: self.lambda_tol,
            max_policy_iter: self.max_policy_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSpec {
    /// Distances from each receiver to its K-1 interferers, in cyclic order.
    pub interferer_distances: Vec<f64>,
    pub alpha: f64,
    pub slots: usize,
    pub warmup: usize,
    pub trials: usize,
    /// Candidate steps for tuning the differential scheme.
    pub nu_grid: Vec<f64>,
    /// Slots per trial used while tuning ν.
    pub tuning_slots: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            interferer_distances: vec![1.0, 1.0],
            alpha: 3.0,
            slots: 10_000,
            warmup: 100,
            trials: 4,
            nu_grid: vec![0.02, 0.05, 0.1, 0.2, 0.35, 0.5],
            tuning_slots: 2_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaterfillSpec {
    pub cells: usize,
    pub restarts: usize,
    pub max_sweeps: usize,
    pub mc_samples: usize,
}

impl Default for WaterfillSpec {
    fn default() -> Self {
        let s = SearchOptions::default();
        Self {
            cells: s.cells,
            restarts: s.restarts,
            max_sweeps: s.max_sweeps,
            mc_samples: 100_000,
        }
    }
}

impl WaterfillSpec {
    pub fn search_options(&self, seed: u64) -> SearchOptions {
        SearchOptions {
            cells: self.cells,
            restarts: self.restarts,
            max_sweeps: self.max_sweeps,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum SchemeSpec {
    /// Policy table from the budgeted MDP.
    Controlled,
    /// Per-slot water-filling (meant for block fading).
    Waterfill,
    Simple { bits: u32 },
    /// `nu: null` tunes the step over `network.nu_grid`.
    Differential { bits: u32, nu: Option<f64> },
    PerfectCsit,
}

impl SchemeSpec {
    pub fn label(&self) -> String {
        match self {
            SchemeSpec::Controlled => "controlled".into(),
            SchemeSpec::Waterfill => "waterfill".into(),
            SchemeSpec::Simple { bits } => format!("simple_{bits}"),
            SchemeSpec::Differential { bits, .. } => format!("differential_{bits}"),
            SchemeSpec::PerfectCsit => "perfect_csit".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Snr,
    BBar,
    FD,
}

impl SweepAxis {
    pub fn column(&self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr_db",
            SweepAxis::BBar => "b_bar",
            SweepAxis::FD => "f_d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// One point of a sweep: the configuration with the swept field replaced.
#[derive(Debug, Clone)]
pub struct Point {
    pub index: usize,
    pub axis: &'static str,
    pub value: f64,
    pub config: ExperimentConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}:{msg}", path.display())),
            other => other,
        })
    }

    /// Parses and validates; errors carry `line:column`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("{}:{}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.users < 2 {
            return bad(format!("users = {} but at least 2 are needed", self.users));
        }
        if self.antennas < self.users {
            return bad(format!(
                "antennas = {} cannot null interference at {} users",
                self.antennas, self.users
            ));
        }
        if self.bits.len() < 2 || self.bits[0] != 0 || self.bits.windows(2).any(|w| w[0] >= w[1]) {
            return bad("bits must start at 0, increase strictly and hold a positive size".into());
        }
        if self.gain_segments < 2 {
            return bad("gain_segments must be at least 2".into());
        }
        if !(self.b_bar >= 0.0) || !self.b_bar.is_finite() {
            return bad(format!("b_bar = {} must be finite and nonnegative", self.b_bar));
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite".into());
        }
        match self.fading {
            FadingSpec::Clarke { doppler } if !(doppler >= 0.0) || !doppler.is_finite() => {
                return bad(format!("doppler = {doppler} must be finite and nonnegative"));
            }
            FadingSpec::Ar1 { rho } if !(0.0..=1.0).contains(&rho) => {
                return bad(format!("rho = {rho} must lie in [0, 1]"));
            }
            _ => {}
        }
        let net = &self.network;
        if net.interferer_distances.len() != self.users - 1 {
            return bad(format!(
                "network.interferer_distances needs {} entries",
                self.users - 1
            ));
        }
        if net.interferer_distances.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return bad("interferer distances must be positive".into());
        }
        if net.trials == 0 || net.slots < 10 || net.tuning_slots < 10 {
            return bad("need at least one trial and 10 slots".into());
        }
        if net.nu_grid.is_empty() || net.nu_grid.iter().any(|nu| !(0.0..=1.0).contains(nu)) {
            return bad("nu_grid must be nonempty with entries in [0, 1]".into());
        }
        if !(self.solver.discount > 0.0 && self.solver.discount < 1.0) {
            return bad("solver.discount must lie in (0, 1)".into());
        }
        if self.kernel.samples == 0 {
            return bad("kernel.samples must be positive".into());
        }
        if self.schemes.is_empty() {
            return bad("schemes must not be empty".into());
        }
        for s in &self.schemes {
            if let SchemeSpec::Differential { nu: Some(nu), .. } = s {
                if !(0.0..=1.0).contains(nu) {
                    return bad(format!("differential nu = {nu} must lie in [0, 1]"));
                }
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return bad("sweep.values must not be empty".into());
            }
            if sw.values.iter().any(|v| !v.is_finite()) || sw.values.windows(2).any(|w| w[0] >= w[1]) {
                return bad("sweep.values must be finite and strictly increasing".into());
            }
            if sw.axis != SweepAxis::Snr && sw.values[0] < 0.0 {
                return bad("sweep.values must be nonnegative on this axis".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Sweep points in order; a single point at the configured values when
    /// there is no sweep.
    pub fn points(&self) -> Vec<Point> {
        match &self.sweep {
            None => vec![Point {
                index: 0,
                axis: "b_bar",
                value: self.b_bar,
                config: self.clone(),
            }],
            Some(sw) => sw
                .values
                .iter()
                .enumerate()
                .map(|(index, &value)| {
                    let mut config = self.clone();
                    match sw.axis {
                        SweepAxis::Snr => config.snr_db = value,
                        SweepAxis::BBar => config.b_bar = value,
                        SweepAxis::FD => config.fading = FadingSpec::Clarke { doppler: value },
                    }
                    config.sweep = None;
                    Point {
                        index,
                        axis: sw.axis.column(),
                        value,
                        config,
                    }
                })
                .collect(),
        }
    }

    /// Seed for sweep point `index`.
    pub fn point_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add((index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}
