//! Slot-level simulation of the K-user MISO interference channel with
//! zero-forcing beamforming from fed-back CSIT.
//!
//! Receiver `m` feeds back the direction of its cross channel `h[mn]` to
//! every interferer `n ≠ m`. Transmitter `n` steers its beam into the null
//! space of the CSIT it holds for the other receivers, choosing within that
//! space the direction with the largest direct-link gain.

use crate::channel::{decompose, CsitState, FadingMode, FadingProcess};
use crate::cvec::{self, CVec};
use crate::error::{domain, Result};
use crate::highmob::WaterfillPolicy;
use crate::mdp::{Policy, StateGrid};
use crate::quantizer::{QuantizationOutcome, QuantizerModel};
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeSet;
use std::sync::Arc;

/// Batches per trial used for the standard-error estimate.
const BATCHES_PER_TRIAL: usize = 10;

/// How feedback sizes are chosen for the controlled scheme. Vectors hold
/// either one entry shared by all links or one per link in
/// [`NetworkConfig::link_index`] order.
#[derive(Debug, Clone)]
pub enum Controller {
    Table {
        policies: Vec<Arc<Policy>>,
        grid: Arc<StateGrid>,
    },
    Waterfill {
        policies: Vec<Arc<WaterfillPolicy>>,
    },
}

#[derive(Debug, Clone)]
pub enum Scheme {
    Controlled(Controller),
    /// `bits` every slot on every link.
    Simple { bits: u32 },
    /// Rotation of the previous CSIT by a quantized matrix.
    Differential { bits: u32, nu: f64 },
    PerfectCsit,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Controlled(_) => "controlled",
            Scheme::Simple { .. } => "simple",
            Scheme::Differential { .. } => "differential",
            Scheme::PerfectCsit => "perfect_csit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub users: usize,
    pub antennas: usize,
    pub snr_db: f64,
    pub fading: FadingMode,
    /// `distances[m][n]` from transmitter `n` to receiver `m`; the diagonal is ignored.
    pub distances: Vec<Vec<f64>>,
    pub alpha: f64,
    pub quantizer: QuantizerModel,
    pub scheme: Scheme,
    pub slots: usize,
    pub warmup: usize,
    pub trials: usize,
    pub seed: u64,
}

impl NetworkConfig {
    /// Unit distances, 100 warm-up slots.
    pub fn new(
        users: usize,
        antennas: usize,
        snr_db: f64,
        fading: FadingMode,
        quantizer: QuantizerModel,
        scheme: Scheme,
    ) -> Self {
        Self {
            users,
            antennas,
            snr_db,
            fading,
            distances: vec![vec![1.0; users]; users],
            alpha: 0.0,
            quantizer,
            scheme,
            slots: 10_000,
            warmup: 100,
            trials: 4,
            seed: 0,
        }
    }

    /// Gives receiver `m` the interferer distances `row`, assigned to
    /// transmitters `m+1, m+2, …` (cyclically).
    pub fn with_interferer_distances(mut self, row: &[f64], alpha: f64) -> Self {
        let k = self.users;
        for m in 0..k {
            for (j, &d) in row.iter().enumerate().take(k - 1) {
                self.distances[m][(m + 1 + j) % k] = d;
            }
        }
        self.alpha = alpha;
        self
    }

    pub fn sigma2(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn links(&self) -> usize {
        self.users * (self.users - 1)
    }

    /// Position of cross link (receiver `m`, transmitter `n`).
    pub fn link_index(&self, m: usize, n: usize) -> usize {
        m * (self.users - 1) + if n < m { n } else { n - 1 }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.users;
        if k < 2 {
            return domain("need at least two users");
        }
        if self.antennas < k {
            return domain(format!("{} antennas cannot null {} users", self.antennas, k));
        }
        if self.quantizer.antennas != self.antennas {
            return domain("quantizer antenna count differs from the network");
        }
        if self.distances.len() != k || self.distances.iter().any(|r| r.len() != k) {
            return domain("distance matrix must be K×K");
        }
        if self.distances.iter().flatten().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return domain("distances must be positive");
        }
        if !self.alpha.is_finite() || !self.snr_db.is_finite() {
            return domain("alpha and SNR must be finite");
        }
        if self.slots < BATCHES_PER_TRIAL || self.trials == 0 {
            return domain(format!("need at least {BATCHES_PER_TRIAL} slots and one trial"));
        }
        let links = self.links();
        let per_link = |n: usize| n == 1 || n == links;
        match &self.scheme {
            Scheme::Controlled(Controller::Table { policies, grid }) => {
                if !per_link(policies.len()) {
                    return domain("need one policy or one per link");
                }
                if policies.iter().any(|p| p.rows() != grid.m() || p.cols() != grid.n()) {
                    return domain("policy table does not match the state grid");
                }
            }
            Scheme::Controlled(Controller::Waterfill { policies }) => {
                if !per_link(policies.len()) {
                    return domain("need one policy or one per link");
                }
                if policies.iter().any(|p| p.antennas() != self.antennas) {
                    return domain("water-filling policy built for another antenna count");
                }
            }
            Scheme::Differential { nu, .. } if !(0.0..=1.0).contains(nu) => {
                return domain("differential step ν must lie in [0, 1]");
            }
            _ => {}
        }
        Ok(())
    }
}

/// Unit beamformer orthogonal to every vector in `csit`.
///
/// Within the null space the beam follows the projection of `direct`; if
/// that is absent or vanishes, an isotropic direction in the null space is
/// used instead.
pub fn zf_beamformer<R: Rng + ?Sized>(
    csit: &[CVec],
    direct: Option<&[Complex64]>,
    antennas: usize,
    rng: &mut R,
) -> Result<CVec> {
    let basis = cvec::orthonormal_basis(csit, 1e-10);
    if basis.len() >= antennas {
        return domain("CSIT spans the whole space; no null direction");
    }
    if let Some(h) = direct {
        if let Some(f) = cvec::normalized(&cvec::project_out(&cvec::project_out(h, &basis), &basis)) {
            if cvec::norm_sqr(&cvec::project_out(h, &basis)) > 1e-24 * cvec::norm_sqr(h) {
                return Ok(f);
            }
        }
    }
    loop {
        let g = cvec::gaussian(antennas, rng);
        if let Some(f) = cvec::normalized(&cvec::project_out(&cvec::project_out(&g, &basis), &basis)) {
            return Ok(f);
        }
    }
}

/// Random `L×L` matrices with i.i.d. CN(0, 1) entries, indexed by the
/// `bits`-bit feedback word.
#[derive(Debug, Clone)]
pub struct DifferentialCodebook {
    pub antennas: usize,
    pub bits: u32,
    /// Row-major matrices.
    pub matrices: Vec<CVec>,
}

impl DifferentialCodebook {
    pub fn new(antennas: usize, bits: u32, seed: u64) -> Result<Self> {
        if bits > 16 {
            return domain(format!("differential codebook of {bits} bits is too large"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrices = (0..1usize << bits)
            .map(|_| cvec::gaussian(antennas * antennas, &mut rng))
            .collect();
        Ok(Self {
            antennas,
            bits,
            matrices,
        })
    }

    fn apply(&self, k: usize, nu: f64, prev: &[Complex64]) -> CVec {
        let l = self.antennas;
        let a = (1.0 - nu * nu).max(0.0).sqrt();
        let m = &self.matrices[k];
        (0..l)
            .map(|i| {
                let row: Complex64 = (0..l).map(|j| m[i * l + j] * prev[j]).sum();
                prev[i] * a + row * nu
            })
            .collect()
    }
}

/// One differential-feedback step: the codeword `Λ` minimizing the error of
/// `normalize((sqrt(1-ν²)·I + ν·Λ)·prev)` against `s`. Returns the new
/// CSIT and the chosen index.
pub fn differential_feedback_update(
    prev: &[Complex64],
    s: &[Complex64],
    nu: f64,
    codebook: &DifferentialCodebook,
) -> (CVec, usize) {
    let mut best: Option<(f64, CVec, usize)> = None;
    for k in 0..codebook.matrices.len() {
        let Some(u) = cvec::normalized(&codebook.apply(k, nu, prev)) else {
            continue;
        };
        let err = cvec::chordal_sq(s, &u);
        if best.as_ref().is_none_or(|b| err < b.0) {
            best = Some((err, u, k));
        }
    }
    match best {
        Some((_, u, k)) => (u, k),
        None => (prev.to_vec(), 0),
    }
}

/// Per-link values for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkReport {
    pub rx: usize,
    pub tx: usize,
    pub gain: f64,
    /// CSIT error before this slot's feedback.
    pub delta: f64,
    /// CSIT error during data transmission, `δ̌`.
    pub delta_data: f64,
    pub beta: f64,
    pub bits: u32,
    /// `g·|f†s|²`, without path loss.
    pub interference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotReport {
    /// Path-loss weighted interference at each receiver.
    pub interference: Vec<f64>,
    pub signal: Vec<f64>,
    pub rate: Vec<f64>,
    pub links: Vec<LinkReport>,
}

/// A single trial's network: fading processes, CSIT and random streams.
pub struct Network {
    config: NetworkConfig,
    direct: Vec<FadingProcess>,
    cross: Vec<FadingProcess>,
    csit: Vec<CsitState>,
    codebook: Option<Arc<DifferentialCodebook>>,
    rng: ChaCha8Rng,
}

impl Network {
    /// Builds trial `trial` of `config`; each trial has its own stream.
    pub fn new(config: NetworkConfig, trial: u64) -> Result<Self> {
        config.validate()?;
        let codebook = match config.scheme {
            Scheme::Differential { bits, .. } => Some(Arc::new(DifferentialCodebook::new(
                config.antennas,
                bits,
                config.seed ^ 0xd1ff_c0de,
            )?)),
            _ => None,
        };
        Self::with_codebook(config, trial, codebook)
    }

    fn with_codebook(
        config: NetworkConfig,
        trial: u64,
        codebook: Option<Arc<DifferentialCodebook>>,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(trial);
        let l = config.antennas;
        let direct = (0..config.users)
            .map(|_| FadingProcess::new(l, config.fading, rng.next_u64()))
            .collect();
        let cross: Vec<FadingProcess> = (0..config.links())
            .map(|_| FadingProcess::new(l, config.fading, rng.next_u64()))
            .collect();
        let csit = cross
            .iter()
            .map(|p| CsitState::new(cvec::random_unit(l, &mut rng), &p.current().direction()))
            .collect();
        Ok(Self {
            config,
            direct,
            cross,
            csit,
            codebook,
            rng,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    fn decide(&self, link: usize, g: f64, delta: f64) -> Result<u32> {
        let pick = |n: usize| if n == 1 { 0 } else { link };
        Ok(match &self.config.scheme {
            Scheme::Controlled(Controller::Table { policies, grid }) => {
                policies[pick(policies.len())].get(grid.g_index(g), grid.d_index(delta))
            }
            Scheme::Controlled(Controller::Waterfill { policies }) => {
                let b = policies[pick(policies.len())].bits(g, delta)?;
                b.floor().min(u32::MAX as f64) as u32
            }
            Scheme::Simple { bits } | Scheme::Differential { bits, .. } => *bits,
            Scheme::PerfectCsit => 0,
        })
    }

    /// Runs one slot: feedback, beamforming, measurement, then fading moves on.
    pub fn step(&mut self) -> Result<SlotReport> {
        let k = self.config.users;
        let l = self.config.antennas;
        let links = self.config.links();
        let mut data = Vec::with_capacity(links);
        let mut bits = Vec::with_capacity(links);
        let mut directions = Vec::with_capacity(links);
        for link in 0..links {
            let ch = self.cross[link].current();
            let (g, s) = (ch.gain(), ch.direction());
            let state = &self.csit[link];
            let b = self.decide(link, g, state.delta)?;
            let next = match &self.config.scheme {
                Scheme::PerfectCsit => CsitState { u: s.clone(), delta: 0.0 },
                Scheme::Differential { nu, .. } => {
                    let cb = self.codebook.as_ref().expect("differential scheme has a codebook");
                    let (u, _) = differential_feedback_update(&state.u, &s, *nu, cb);
                    CsitState::new(u, &s)
                }
                _ => {
                    let outcome = self.config.quantizer.quantize(&s, b, &mut self.rng)?;
                    match outcome {
                        QuantizationOutcome::NoFeedback => state.clone(),
                        _ => state.apply_feedback(&outcome),
                    }
                }
            };
            data.push(next);
            bits.push(b);
            directions.push((g, s));
        }

        let mut beams = Vec::with_capacity(k);
        for n in 0..k {
            let constraints: Vec<CVec> = (0..k)
                .filter(|&m| m != n)
                .map(|m| data[self.config.link_index(m, n)].u.clone())
                .collect();
            let h = &self.direct[n].current().h;
            beams.push(zf_beamformer(&constraints, Some(h), l, &mut self.rng)?);
        }

        let sigma2 = self.config.sigma2();
        let mut interference = vec![0.0; k];
        let mut signal = vec![0.0; k];
        let mut reports = Vec::with_capacity(links);
        for m in 0..k {
            signal[m] = cvec::inner(&beams[m], &self.direct[m].current().h).norm_sqr();
            for n in (0..k).filter(|&n| n != m) {
                let link = self.config.link_index(m, n);
                let (g, s) = &directions[link];
                let i = g * cvec::inner(&beams[n], s).norm_sqr();
                interference[m] += self.config.distances[m][n].powf(-self.config.alpha) * i;
                let dec = decompose(s, &data[link].u, &beams[n]);
                reports.push(LinkReport {
                    rx: m,
                    tx: n,
                    gain: *g,
                    delta: self.csit[link].delta,
                    delta_data: data[link].delta,
                    beta: dec.beta,
                    bits: bits[link],
                    interference: i,
                });
            }
        }
        let rate = (0..k)
            .map(|m| (signal[m] / (sigma2 + interference[m])).ln_1p() / std::f64::consts::LN_2)
            .collect();

        for p in self.direct.iter_mut() {
            p.advance();
        }
        for (link, p) in self.cross.iter_mut().enumerate() {
            let s = p.advance().direction();
            self.csit[link] = data[link].observe(&s);
        }
        Ok(SlotReport {
            interference,
            signal,
            rate,
            links: reports,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub scheme: String,
    /// Mean over receivers of the average interference power.
    pub avg_interference_per_rx: f64,
    pub interference_by_rx: Vec<f64>,
    pub throughput_per_user: f64,
    /// CSI bits per slot per receiver, summed over its interferers.
    pub csi_rate: f64,
    /// `⌈log2 D⌉` per receiver for the controlled scheme, else 0.
    pub overhead_rate: f64,
    pub avg_feedback_rate: f64,
    /// Number of distinct feedback sizes used.
    pub distinct_decisions: usize,
    pub mean_csit_error: f64,
    /// 95% half-widths from batch means.
    pub interference_halfwidth: f64,
    pub throughput_halfwidth: f64,
    /// Throughput batch means in trial order; schemes run with the same
    /// seed see the same fading, so these pair up across runs.
    pub throughput_batches: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct TrialStats {
    interference: Vec<f64>,
    throughput: f64,
    bits: f64,
    error: f64,
    batch_interference: Vec<f64>,
    batch_throughput: Vec<f64>,
    decisions: BTreeSet<u32>,
}

fn run_trial(
    config: &NetworkConfig,
    trial: u64,
    codebook: Option<Arc<DifferentialCodebook>>,
) -> Result<TrialStats> {
    let mut net = Network::with_codebook(config.clone(), trial, codebook)?;
    for _ in 0..config.warmup {
        net.step()?;
    }
    let k = config.users as f64;
    let batch = config.slots / BATCHES_PER_TRIAL;
    let mut st = TrialStats {
        interference: vec![0.0; config.users],
        ..Default::default()
    };
    let (mut bi, mut bt) = (0.0, 0.0);
    let used = batch * BATCHES_PER_TRIAL;
    for t in 0..used {
        let r = net.step()?;
        let i_mean = r.interference.iter().sum::<f64>() / k;
        let t_mean = r.rate.iter().sum::<f64>() / k;
        for (acc, x) in st.interference.iter_mut().zip(&r.interference) {
            *acc += x;
        }
        st.throughput += t_mean;
        for lr in &r.links {
            st.bits += lr.bits as f64;
            st.error += lr.delta_data;
            st.decisions.insert(lr.bits);
        }
        bi += i_mean;
        bt += t_mean;
        if (t + 1) % batch == 0 {
            st.batch_interference.push(bi / batch as f64);
            st.batch_throughput.push(bt / batch as f64);
            bi = 0.0;
            bt = 0.0;
        }
    }
    let n = used as f64;
    st.interference.iter_mut().for_each(|x| *x /= n);
    st.throughput /= n;
    st.bits /= n * k;
    st.error /= n * config.links() as f64;
    Ok(st)
}

fn halfwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.96 * (var / n).sqrt()
}

/// Runs all trials (in parallel) and averages them in trial order, so the
/// result does not depend on the thread count.
pub fn run_simulation(config: &NetworkConfig) -> Result<SimResult> {
    config.validate()?;
    let codebook = match config.scheme {
        Scheme::Differential { bits, .. } => Some(Arc::new(DifferentialCodebook::new(
            config.antennas,
            bits,
            config.seed ^ 0xd1ff_c0de,
        )?)),
        _ => None,
    };
    let trials: Vec<TrialStats> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(config, t, codebook.clone()))
        .collect::<Result<_>>()?;

    let nt = trials.len() as f64;
    let k = config.users;
    let mut by_rx = vec![0.0; k];
    let (mut thr, mut bits, mut err) = (0.0, 0.0, 0.0);
    let mut decisions = BTreeSet::new();
    let (mut bi, mut bt) = (Vec::new(), Vec::new());
    for st in &trials {
        for (a, x) in by_rx.iter_mut().zip(&st.interference) {
            *a += x / nt;
        }
        thr += st.throughput / nt;
        bits += st.bits / nt;
        err += st.error / nt;
        decisions.extend(st.decisions.iter().copied());
        bi.extend_from_slice(&st.batch_interference);
        bt.extend_from_slice(&st.batch_throughput);
    }
    let distinct = match &config.scheme {
        Scheme::Controlled(Controller::Table { policies, .. }) => {
            let mut all: BTreeSet<u32> = BTreeSet::new();
            for p in policies {
                all.extend(p.table.iter().flatten().copied());
            }
            all.len()
        }
        _ => decisions.len(),
    };
    let overhead = match config.scheme {
        Scheme::Controlled(_) => (distinct.max(1) as f64).log2().ceil(),
        _ => 0.0,
    };
    Ok(SimResult {
        scheme: config.scheme.name().to_string(),
        avg_interference_per_rx: by_rx.iter().sum::<f64>() / k as f64,
        interference_by_rx: by_rx,
        throughput_per_user: thr,
        csi_rate: bits,
        overhead_rate: overhead,
        avg_feedback_rate: bits + overhead,
        distinct_decisions: distinct,
        mean_csit_error: err,
        interference_halfwidth: halfwidth(&bi),
        throughput_halfwidth: halfwidth(&bt),
        throughput_batches: bt,
    })
}

/// Grid search for the differential step `ν` that maximizes throughput.
/// Returns the best `ν` and its result.
pub fn tune_differential_nu(config: &NetworkConfig, bits: u32, grid: &[f64]) -> Result<(f64, SimResult)> {
    let mut best: Option<(f64, SimResult)> = None;
    for &nu in grid {
        let mut c = config.clone();
        c.scheme = Scheme::Differential { bits, nu };
        let r = run_simulation(&c)?;
        if best
            .as_ref()
            .is_none_or(|(_, b)| r.throughput_per_user > b.throughput_per_user)
        {
            best = Some((nu, r));
        }
    }
    best.ok_or_else(|| crate::Error::Domain("empty ν grid".into()))
}
