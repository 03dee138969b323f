use super::grid::StateGrid;
use crate::channel::FadingMode;
use crate::cvec;
use crate::error::{domain, Result};
use crate::quantizer::{QuantizerKind, QuantizerModel};
use num_complex::Complex64;
use crate::special::gamma_cdf;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Product kernel over the state grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    /// M×M gain chain.
    pub g: DMatrix<f64>,
    /// N×N error chain without feedback.
    pub d_nofb: DMatrix<f64>,
    /// Next-error law after feedback; row `j - 1` belongs to `bits[j]`.
    pub d_fb: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    /// Monte Carlo draws per estimated chain.
    pub samples: usize,
    /// Mass added to every entry before renormalizing.
    pub smoothing: f64,
    pub seed: u64,
    /// Let the fading move for one slot between feedback and the next
    /// decision. When false, the post-feedback row is the binned
    /// quantization error itself.
    pub drift: bool,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            smoothing: 1e-6,
            seed: 0,
            drift: true,
        }
    }
}

impl TransitionKernel {
    pub fn new(g: DMatrix<f64>, d_nofb: DMatrix<f64>, d_fb: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() || !d_nofb.is_square() || d_fb.ncols() != d_nofb.ncols() {
            return domain("kernel dimensions are inconsistent");
        }
        for (name, mat) in [("gain", &g), ("error", &d_nofb), ("feedback", &d_fb)] {
            for (r, row) in mat.row_iter().enumerate() {
                if row.iter().any(|&p| !(p >= 0.0)) || (row.sum() - 1.0).abs() > 1e-9 {
                    return domain(format!("{name} kernel row {r} is not a distribution"));
                }
            }
        }
        Ok(Self { g, d_nofb, d_fb })
    }

    pub fn m(&self) -> usize {
        self.g.nrows()
    }

    pub fn n(&self) -> usize {
        self.d_nofb.nrows()
    }

    /// Next-error distribution from error index `n` under action index `j`.
    pub fn d_row(&self, n: usize, j: usize) -> Vec<f64> {
        let row = if j == 0 {
            self.d_nofb.row(n)
        } else {
            self.d_fb.row(j - 1)
        };
        row.iter().copied().collect()
    }

    /// Largest violation of first-order stochastic monotonicity across the
    /// rows of `mat`: how much a tail sum of row r exceeds that of row r+1.
    pub fn monotonicity_gap(mat: &DMatrix<f64>) -> f64 {
        let tails = tail_sums(mat);
        let mut gap: f64 = 0.0;
        for r in 0..mat.nrows().saturating_sub(1) {
            for c in 0..mat.ncols() {
                gap = gap.max(tails[(r, c)] - tails[(r + 1, c)]);
            }
        }
        gap
    }
}

fn tail_sums(mat: &DMatrix<f64>) -> DMatrix<f64> {
    let mut t = mat.clone();
    for r in 0..mat.nrows() {
        for c in (0..mat.ncols().saturating_sub(1)).rev() {
            t[(r, c)] += t[(r, c + 1)];
        }
    }
    t
}

/// Estimates the product kernel.
///
/// The gain chain and the no-feedback error chain are simulated under
/// correlated fading and computed in closed form under block fading. The
/// post-feedback rows start from the quantization error law and, with
/// [`KernelOptions::drift`], follow the channel for one more slot.
pub fn estimate_kernel(
    grid: &StateGrid,
    mode: FadingMode,
    model: &QuantizerModel,
    opts: &KernelOptions,
) -> Result<TransitionKernel> {
    if grid.bits.len() < 2 {
        return domain("need at least one positive feedback size");
    }
    let l = model.antennas;
    let (m, n) = (grid.m(), grid.n());

    let mut d_fb = DMatrix::zeros(grid.bits.len() - 1, n);
    for (j, &b) in grid.bits.iter().enumerate().skip(1) {
        for k in 0..n {
            let lo = model.error_cdf(grid.d_edges[k], b)?;
            let hi = model.error_cdf(grid.d_upper(k), b)?;
            d_fb[(j - 1, k)] = (hi - lo).max(0.0);
        }
    }

    let (g, d_nofb) = match mode {
        FadingMode::BlockIid => {
            let gm: Vec<f64> = (0..m)
                .map(|k| gamma_cdf(l as f64, grid.g_upper(k)) - gamma_cdf(l as f64, grid.g_edges[k]))
                .collect();
            // a fixed CSIT against a fresh isotropic direction: Pr(δ ≤ τ) = τ^(L-1)
            let dm: Vec<f64> = (0..n)
                .map(|k| grid.d_upper(k).powi(l as i32 - 1) - grid.d_edges[k].powi(l as i32 - 1))
                .collect();
            if opts.drift {
                d_fb = DMatrix::from_fn(d_fb.nrows(), n, |_, c| dm[c]);
            }
            (
                DMatrix::from_fn(m, m, |_, c| gm[c]),
                DMatrix::from_fn(n, n, |_, c| dm[c]),
            )
        }
        FadingMode::Ar1 { rho } => {
            if opts.samples == 0 {
                return domain("kernel estimation needs samples");
            }
            let (g, d, fb) = simulate_chains(grid, model, rho, opts)?;
            if let Some(fb) = fb {
                d_fb = fb;
            }
            (g, d)
        }
    };

    let smooth = |mut mat: DMatrix<f64>| {
        for mut row in mat.row_iter_mut() {
            row.add_scalar_mut(opts.smoothing);
            let s = row.sum();
            row /= s;
        }
        mat
    };
    TransitionKernel::new(smooth(g), smooth(d_nofb), smooth(d_fb))
}

/// Simulates the gain and no-feedback error transitions under AR(1) fading.
///
/// Every error row reuses the same channel draws, so differences between rows
/// reflect the starting error only.
fn simulate_chains(
    grid: &StateGrid,
    model: &QuantizerModel,
    rho: f64,
    opts: &KernelOptions,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Option<DMatrix<f64>>)> {
    let l = model.antennas;
    let (m, n) = (grid.m(), grid.n());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sigma = (1.0 - rho * rho).max(0.0).sqrt();
    let mut g_counts = DMatrix::<f64>::zeros(m, m);
    let mut d_counts = DMatrix::<f64>::zeros(n, n);
    let fb_bits = &grid.bits[1..];
    let mut fb_counts = DMatrix::<f64>::zeros(fb_bits.len(), n);
    // same error law as an explicit codebook, without the search
    let law = match model.kind {
        QuantizerKind::RvqCodebook => QuantizerModel {
            kind: QuantizerKind::RvqAnalytic,
            ..*model
        },
        _ => *model,
    };
    let weights: Vec<(f64, f64)> = grid
        .d_points
        .iter()
        .map(|&d| ((1.0 - d).sqrt(), d.sqrt()))
        .collect();
    let next_error = |a: Complex64, b: Complex64, ws: f64, wq: f64| (1.0 - (a * ws + b * wq).norm_sqr()).clamp(0.0, 1.0);

    for _ in 0..opts.samples {
        let h = cvec::gaussian(l, &mut rng);
        let w = cvec::gaussian(l, &mut rng);
        let h_next: Vec<_> = h.iter().zip(&w).map(|(a, b)| a * rho + b * sigma).collect();
        let (g0, g1) = (cvec::norm_sqr(&h), cvec::norm_sqr(&h_next));
        g_counts[(grid.g_index(g0), grid.g_index(g1))] += 1.0;

        let (Some(s), Some(s_next)) = (cvec::normalized(&h), cvec::normalized(&h_next)) else {
            continue;
        };
        let q = cvec::random_orthogonal_unit(&s, &mut rng);
        let a = cvec::inner(&s_next, &s);
        let b = cvec::inner(&s_next, &q);
        for (row, &(ws, wq)) in weights.iter().enumerate() {
            // CSIT u = sqrt(1-δ) s + sqrt(δ) q sits at error δ from s
            d_counts[(row, grid.d_index(next_error(a, b, ws, wq)))] += 1.0;
        }
        if opts.drift {
            for (row, &bits) in fb_bits.iter().enumerate() {
                let eps = law.sample_error(bits, &mut rng)?;
                let d_next = next_error(a, b, (1.0 - eps).sqrt(), eps.sqrt());
                fb_counts[(row, grid.d_index(d_next))] += 1.0;
            }
        }
    }

    for (r, mut row) in g_counts.row_iter_mut().enumerate() {
        let total = row.sum();
        if total < 100.0 {
            log::warn!("gain kernel row {r} has only {total} samples");
        }
        if total > 0.0 {
            row /= total;
        } else {
            row.fill(1.0 / m as f64);
        }
    }
    for mut row in d_counts.row_iter_mut().chain(fb_counts.row_iter_mut()) {
        let total = row.sum();
        if total > 0.0 {
            row /= total;
        }
    }
    Ok((g_counts, d_counts, opts.drift.then_some(fb_counts)))
}
