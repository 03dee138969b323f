use crate::error::{domain, Error, Result};
use crate::special::{gamma_cdf, gamma_partial_expectation, gamma_partial_mean, gamma_quantile};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use std::f64::consts::LN_2;

/// Per-cell moments of the gain distribution on the threshold grid.
///
/// Cell `i` covers `[edges[i], edges[i+1])`, the last one unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct CellModel {
    pub antennas: usize,
    pub edges: Vec<f64>,
    /// `Pr(g ∈ cell)`.
    pub prob: Vec<f64>,
    /// `E[g · 1{g ∈ cell}]`.
    pub gain: Vec<f64>,
    /// `E[log2(1/g) · 1{g ∈ cell}]`.
    pub log_inv: Vec<f64>,
}

impl CellModel {
    /// Gamma(L, 1) gains on `cells` cells: the first starts at 0, the next
    /// edges are log-spaced between the 1e-4 and 1 - 1e-4 quantiles.
    pub fn gamma(antennas: usize, cells: usize) -> Result<Self> {
        if antennas < 2 {
            return domain("need at least two antennas");
        }
        if cells < 2 {
            return domain("need at least two threshold cells");
        }
        let shape = antennas as f64;
        let lo = gamma_quantile(shape, 1e-4)?.ln();
        let hi = gamma_quantile(shape, 1.0 - 1e-4)?.ln();
        let mut edges = vec![0.0];
        for k in 0..cells - 1 {
            let t = if cells == 2 { 0.5 } else { k as f64 / (cells - 2) as f64 };
            edges.push((lo + t * (hi - lo)).exp());
        }
        let upper = |i: usize| edges.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let prob = (0..cells)
            .map(|i| gamma_cdf(shape, upper(i)) - gamma_cdf(shape, edges[i]))
            .collect();
        let gain = (0..cells)
            .map(|i| gamma_partial_mean(shape, edges[i], upper(i)))
            .collect();
        let log_inv = (0..cells)
            .map(|i| gamma_partial_expectation(shape, edges[i], upper(i), |g| -g.log2()))
            .collect();
        Self::from_moments(antennas, edges, prob, gain, log_inv)
    }

    /// A cell model with explicitly supplied moments.
    pub fn from_moments(
        antennas: usize,
        edges: Vec<f64>,
        prob: Vec<f64>,
        gain: Vec<f64>,
        log_inv: Vec<f64>,
    ) -> Result<Self> {
        let n = edges.len();
        if n == 0 || prob.len() != n || gain.len() != n || log_inv.len() != n {
            return domain("cell moment vectors must have equal nonzero length");
        }
        if edges[0] != 0.0 || edges.windows(2).any(|w| w[0] >= w[1]) {
            return domain("cell edges must start at 0 and increase");
        }
        if (prob.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return domain("cell probabilities must sum to 1");
        }
        Ok(Self {
            antennas,
            edges,
            prob,
            gain,
            log_inv,
        })
    }

    pub fn cells(&self) -> usize {
        self.edges.len()
    }

    pub fn cell_of(&self, g: f64) -> usize {
        self.edges.partition_point(|&e| e <= g).saturating_sub(1)
    }

    fn l1(&self) -> f64 {
        self.antennas as f64 - 1.0
    }

    fn c(&self) -> f64 {
        self.l1() / self.antennas as f64
    }

    /// Water level, feedback probability and interference of a threshold
    /// vector under per-link budget `b`. `None` when the threshold violates
    /// the usefulness constraint or is not a nonincreasing function in [0, 1].
    pub fn evaluate(&self, psi: &[f64], b: f64) -> Option<Evaluation> {
        if psi.len() != self.cells()
            || psi.iter().any(|p| !(0.0..=1.0).contains(p))
            || psi.windows(2).any(|w| w[1] > w[0])
        {
            return None;
        }
        let l1 = self.l1();
        let c = self.c();
        let mut pr = 0.0;
        let mut log_f = 0.0;
        let mut no_fb = 0.0;
        for i in 0..self.cells() {
            let fb = 1.0 - psi[i].powf(l1);
            pr += self.prob[i] * fb;
            log_f += self.log_inv[i] * fb;
            // E[δ; δ < ψ] = ((L-1)/L) ψ^L for δ ~ Beta(L-1, 1)
            no_fb += self.gain[i] * c * psi[i].powf(l1 + 1.0);
        }
        if pr <= 0.0 {
            return Some(Evaluation {
                upsilon: 0.0,
                pr_feedback: 0.0,
                interference: no_fb / l1,
            });
        }
        let upsilon = b / pr + l1 * log_f / pr;
        let first = psi.iter().position(|&p| p < 1.0)?;
        let g0 = self.edges[first];
        if g0 <= 0.0 {
            return None;
        }
        let need = (l1 * (c / g0).log2()).max(0.0);
        if upsilon - l1 * (1.0 / g0).log2() < need - 1e-12 {
            return None;
        }
        Some(Evaluation {
            upsilon,
            pr_feedback: pr,
            interference: (c * (-upsilon / l1).exp2() * pr + no_fb) / l1,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub upsilon: f64,
    pub pr_feedback: f64,
    pub interference: f64,
}

/// Water-filling policy for one link.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillPolicy {
    pub upsilon: f64,
    /// Threshold per cell, nonincreasing.
    pub psi: Vec<f64>,
    pub b_per_link: f64,
    pub pr_feedback: f64,
    /// Analytic average interference from this link.
    pub interference: f64,
    pub cells: CellModel,
}

impl WaterfillPolicy {
    /// Builds the policy for an explicit threshold vector.
    pub fn from_threshold(cells: CellModel, psi: Vec<f64>, b_per_link: f64) -> Result<Self> {
        let e = cells.evaluate(&psi, b_per_link).ok_or_else(|| {
            Error::InfeasibleBudget("threshold violates the water-level constraint".into())
        })?;
        Ok(Self {
            upsilon: e.upsilon,
            psi,
            b_per_link,
            pr_feedback: e.pr_feedback,
            interference: e.interference,
            cells,
        })
    }

    pub fn antennas(&self) -> usize {
        self.cells.antennas
    }

    pub fn psi_at(&self, g: f64) -> f64 {
        self.psi[self.cells.cell_of(g)]
    }

    /// Real-valued feedback size in state `(g, δ)`.
    pub fn bits(&self, g: f64, delta: f64) -> Result<f64> {
        if !(g > 0.0) {
            return domain(format!("channel gain {g} must be positive"));
        }
        if self.pr_feedback <= 0.0 || delta < self.psi_at(g) {
            return Ok(0.0);
        }
        Ok((self.upsilon + self.cells.l1() * g.log2()).max(0.0))
    }

    /// Expected feedback size, computed cell by cell.
    pub fn expected_bits(&self) -> f64 {
        if self.pr_feedback <= 0.0 {
            return 0.0;
        }
        let l1 = self.cells.l1();
        (0..self.cells.cells())
            .map(|i| {
                let fb = 1.0 - self.psi[i].powf(l1);
                fb * (self.upsilon * self.cells.prob[i] - l1 * self.cells.log_inv[i])
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub cells: usize,
    pub restarts: usize,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            cells: 64,
            restarts: 8,
            max_sweeps: 60,
            seed: 0,
        }
    }
}

/// Finds the threshold function minimizing the average interference of one
/// link for a per-receiver budget `b_bar` shared by `K - 1` links.
pub fn search_threshold(
    antennas: usize,
    users: usize,
    b_bar: f64,
    opts: &SearchOptions,
) -> Result<WaterfillPolicy> {
    let cells = CellModel::gamma(antennas, opts.cells)?;
    search_threshold_on(cells, users, b_bar, opts)
}

/// [`search_threshold`] on a prepared cell model.
pub fn search_threshold_on(
    cells: CellModel,
    users: usize,
    b_bar: f64,
    opts: &SearchOptions,
) -> Result<WaterfillPolicy> {
    if users < 2 {
        return domain("need at least two users");
    }
    if !(b_bar >= 0.0) || !b_bar.is_finite() {
        return Err(Error::InfeasibleBudget(format!(
            "average feedback rate {b_bar} must be finite and nonnegative"
        )));
    }
    let b = b_bar / (users - 1) as f64;
    let n = cells.cells();
    if b == 0.0 {
        return WaterfillPolicy::from_threshold(cells, vec![1.0; n], 0.0);
    }
    let objective = |psi: &[f64]| cells.evaluate(psi, b).map_or(f64::INFINITY, |e| e.interference);

    // Lagrangian family: bits (L-1)·log2(g ln2/(μL)), threshold μ((L-1)/ln2 + bits)/g
    let l1 = cells.l1();
    let reps: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 < n {
                (cells.edges[i].max(1e-300) * cells.edges[i + 1]).sqrt()
            } else {
                cells.gain[i] / cells.prob[i].max(1e-300)
            }
        })
        .collect();
    let family = |ln_mu: f64| -> Vec<f64> {
        let mu = ln_mu.exp();
        let mut psi: Vec<f64> = reps
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let bits = l1 * (g * LN_2 / (mu * cells.antennas as f64)).log2();
                if i == 0 || bits <= 0.0 {
                    1.0
                } else {
                    (mu * (l1 / LN_2 + bits) / g).min(1.0)
                }
            })
            .collect();
        monotone(&mut psi);
        psi
    };
    const SCAN: usize = 2000;
    let step = 70.0 / SCAN as f64;
    let scan: Vec<f64> = (0..=SCAN)
        .map(|k| objective(&family(-60.0 + step * k as f64)))
        .collect();
    if scan.iter().all(|v| !v.is_finite()) {
        return Err(Error::InfeasibleBudget(format!(
            "no threshold satisfies the water-level constraint at b̄ = {b_bar}"
        )));
    }
    // The objective along the family can have several local minima; refine
    // the best few.
    let mut minima: Vec<usize> = (0..=SCAN)
        .filter(|&k| {
            scan[k].is_finite()
                && (k == 0 || scan[k] <= scan[k - 1])
                && (k == SCAN || scan[k] <= scan[k + 1])
        })
        .collect();
    minima.sort_by(|&a, &b| scan[a].total_cmp(&scan[b]));
    minima.truncate(4);
    let mut best = Vec::new();
    let mut best_obj = f64::INFINITY;
    let mut ln_mu = 0.0;
    for &k in &minima {
        let centre = -60.0 + step * k as f64;
        let x = golden(|x| objective(&family(x)), centre - step, centre + step, 60);
        let start = if objective(&family(x)) <= scan[k] {
            x
        } else {
            centre
        };
        let cand = coordinate_descent(&objective, family(start), opts.max_sweeps);
        let v = objective(&cand);
        if v < best_obj {
            best_obj = v;
            best = cand;
            ln_mu = start;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let shift: f64 = rng.random_range(-1.0..1.0);
        let mut psi = family(ln_mu + shift);
        for p in psi.iter_mut().skip(1) {
            *p = (*p + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
        }
        monotone(&mut psi);
        if !objective(&psi).is_finite() {
            continue;
        }
        let cand = coordinate_descent(&objective, psi, opts.max_sweeps);
        let v = objective(&cand);
        if v < best_obj {
            best_obj = v;
            best = cand;
        }
    }
    WaterfillPolicy::from_threshold(cells, best, b)
}

fn monotone(psi: &mut [f64]) {
    if let Some(first) = psi.first_mut() {
        *first = 1.0;
    }
    for i in 1..psi.len() {
        psi[i] = psi[i].min(psi[i - 1]);
    }
}

fn coordinate_descent(objective: &impl Fn(&[f64]) -> f64, mut psi: Vec<f64>, sweeps: usize) -> Vec<f64> {
    let n = psi.len();
    let mut current = objective(&psi);
    for _ in 0..sweeps {
        let before = current;
        for i in 1..n {
            let hi = psi[i - 1];
            let lo = if i + 1 < n { psi[i + 1] } else { 0.0 };
            if hi <= lo {
                continue;
            }
            let mut trial = psi.clone();
            let x = golden(
                |v| {
                    trial[i] = v;
                    objective(&trial)
                },
                lo,
                hi,
                60,
            );
            for cand in [x, lo, hi] {
                trial[i] = cand;
                let v = objective(&trial);
                if v < current {
                    current = v;
                    psi[i] = cand;
                }
            }
        }
        // Runs of equal thresholds move together; single-cell moves cannot
        // split or shift them.
        let mut i = 1;
        while i < n {
            let mut j = i;
            while j + 1 < n && psi[j + 1] == psi[i] {
                j += 1;
            }
            let hi = psi[i - 1];
            let lo = if j + 1 < n { psi[j + 1] } else { 0.0 };
            if j > i && hi > lo {
                let mut trial = psi.clone();
                let x = golden(
                    |v| {
                        trial[i..=j].iter_mut().for_each(|p| *p = v);
                        objective(&trial)
                    },
                    lo,
                    hi,
                    60,
                );
                for cand in [x, lo, hi] {
                    trial[i..=j].iter_mut().for_each(|p| *p = cand);
                    let v = objective(&trial);
                    if v < current {
                        current = v;
                        psi[i..=j].iter_mut().for_each(|p| *p = cand);
                    }
                }
            }
            i = j + 1;
        }
        if before - current <= 1e-14 * before.abs() {
            break;
        }
    }
    psi
}

/// Golden-section minimizer on `[a, b]`.
pub(crate) fn golden(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceEstimate {
    pub analytic: f64,
    pub monte_carlo: f64,
    pub std_error: f64,
    /// Monte Carlo interference when the bits are rounded down to integers.
    pub floored: f64,
    pub floored_std_error: f64,
    /// Monte Carlo mean of the (real-valued) feedback size.
    pub mean_bits: f64,
}

/// Average interference of one link under the policy, by Monte Carlo over
/// `g ~ Gamma(L, 1)` and `δ ~ Beta(L-1, 1)`, alongside the analytic value.
pub fn min_interference<R: Rng + ?Sized>(
    policy: &WaterfillPolicy,
    samples: usize,
    rng: &mut R,
) -> Result<InterferenceEstimate> {
    if samples < 2 {
        return domain("need at least two samples");
    }
    let l = policy.antennas() as f64;
    let l1 = l - 1.0;
    let c = l1 / l;
    let gamma = Gamma::new(l, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let (mut s, mut s2, mut f, mut f2, mut bits_sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let g: f64 = gamma.sample(rng);
        let u: f64 = rng.random();
        let delta = u.powf(1.0 / l1);
        let bits = policy.bits(g, delta)?;
        let fed = policy.pr_feedback > 0.0 && delta >= policy.psi_at(g);
        let (x, y) = if fed {
            (
                g * c * (-bits / l1).exp2() / l1,
                g * c * (-bits.floor() / l1).exp2() / l1,
            )
        } else {
            (g * delta / l1, g * delta / l1)
        };
        s += x;
        s2 += x * x;
        f += y;
        f2 += y * y;
        bits_sum += bits;
    }
    let n = samples as f64;
    let se = |sum: f64, sq: f64| ((sq / n - (sum / n).powi(2)).max(0.0) / (n - 1.0)).sqrt();
    Ok(InterferenceEstimate {
        analytic: policy.interference,
        monte_carlo: s / n,
        std_error: se(s, s2),
        floored: f / n,
        floored_std_error: se(f, f2),
        mean_bits: bits_sum / n,
    })
}
