use crate::error::{domain, Result};
use crate::quantizer::QuantizerModel;
use crate::special::{gamma_partial_mean, gamma_quantile};
use serde::{Deserialize, Serialize};

/// Discretization of the controller state space.
///
/// Segment `m` of the gain axis is `[g_edges[m], g_edges[m+1])`, the last one
/// unbounded. The error axis is laid out the same way on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub g_edges: Vec<f64>,
    pub g_points: Vec<f64>,
    pub d_edges: Vec<f64>,
    pub d_points: Vec<f64>,
    /// Feedback sizes 𝔹, ascending, starting with 0.
    pub bits: Vec<u32>,
}

impl StateGrid {
    /// Assembles a grid from explicit parts and checks its invariants.
    pub fn from_parts(
        g_edges: Vec<f64>,
        g_points: Vec<f64>,
        d_edges: Vec<f64>,
        d_points: Vec<f64>,
        bits: Vec<u32>,
    ) -> Result<Self> {
        check_axis("gain", &g_edges, &g_points, f64::INFINITY)?;
        check_axis("error", &d_edges, &d_points, 1.0)?;
        if bits.first() != Some(&0) || bits.windows(2).any(|w| w[0] >= w[1]) {
            return domain("feedback sizes must be strictly increasing and start at 0");
        }
        Ok(Self {
            g_edges,
            g_points,
            d_edges,
            d_points,
            bits,
        })
    }

    /// Equal-probability gain segments for Gamma(L, 1) with conditional-mean
    /// grid points, and error points at the expected quantization error of
    /// each feedback size.
    pub fn build(antennas: usize, bits: &[u32], m: usize, model: &QuantizerModel) -> Result<Self> {
        if m < 2 {
            return domain(format!("need at least two gain segments, got {m}"));
        }
        if model.antennas != antennas {
            return domain("quantizer antenna count does not match the grid");
        }
        let mut bits = bits.to_vec();
        bits.sort_unstable();
        bits.dedup();
        if bits.first() != Some(&0) {
            return domain("feedback sizes must include 0");
        }
        let shape = antennas as f64;
        let mut g_edges = Vec::with_capacity(m);
        for k in 0..m {
            g_edges.push(gamma_quantile(shape, k as f64 / m as f64)?);
        }
        let g_points = (0..m)
            .map(|k| {
                let hi = g_edges.get(k + 1).copied().unwrap_or(f64::INFINITY);
                gamma_partial_mean(shape, g_edges[k], hi) * m as f64
            })
            .collect();

        let mut d_points: Vec<f64> = bits.iter().map(|&b| model.mean_error(b)).collect();
        d_points.sort_by(f64::total_cmp);
        let mut d_edges = vec![0.0];
        d_edges.extend(d_points.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        Self::from_parts(g_edges, g_points, d_edges, d_points, bits)
    }

    pub fn m(&self) -> usize {
        self.g_points.len()
    }

    pub fn n(&self) -> usize {
        self.d_points.len()
    }

    pub fn g_index(&self, g: f64) -> usize {
        self.g_edges.partition_point(|&e| e <= g).saturating_sub(1)
    }

    pub fn d_index(&self, delta: f64) -> usize {
        self.d_edges.partition_point(|&e| e <= delta).saturating_sub(1)
    }

    /// Upper edge of error segment `n`.
    pub fn d_upper(&self, n: usize) -> f64 {
        self.d_edges.get(n + 1).copied().unwrap_or(1.0)
    }

    pub fn g_upper(&self, m: usize) -> f64 {
        self.g_edges.get(m + 1).copied().unwrap_or(f64::INFINITY)
    }

    pub fn bit_index(&self, b: u32) -> Option<usize> {
        self.bits.binary_search(&b).ok()
    }
}

fn check_axis(name: &str, edges: &[f64], points: &[f64], top: f64) -> Result<()> {
    if edges.is_empty() || edges.len() != points.len() {
        return domain(format!("{name} axis: edge and point counts differ"));
    }
    if edges[0] != 0.0 {
        return domain(format!("{name} axis must start at 0"));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return domain(format!("{name} edges not strictly increasing"));
    }
    if *edges.last().unwrap() >= top {
        return domain(format!("{name} axis: last edge must be below {top}"));
    }
    for (k, &p) in points.iter().enumerate() {
        let hi = edges.get(k + 1).copied().unwrap_or(top);
        if !(p >= edges[k] && p < hi) {
            return domain(format!("{name} point {k} = {p} outside its segment"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::QuantizerKind;
    use crate::special::gamma_cdf;

    fn reference_bits() -> Vec<u32> {
        (0..16).map(|n| 2 * n).collect()
    }

    #[test]
    fn gain_segments_are_equiprobable() {
        let model = QuantizerModel::new(QuantizerKind::SphereCap, 4).unwrap();
        let grid = StateGrid::build(4, &reference_bits(), 16, &model).unwrap();
        for m in 0..16 {
            let p = gamma_cdf(4.0, grid.g_upper(m)) - gamma_cdf(4.0, grid.g_edges[m]);
            assert!((p - 1.0 / 16.0).abs() < 1e-12);
            assert!(grid.g_points[m] > grid.g_edges[m] && grid.g_points[m] < grid.g_upper(m));
        }
    }

    #[test]
    fn error_axis_follows_expected_quantization_error() {
        let model = QuantizerModel::new(QuantizerKind::SphereCap, 4).unwrap();
        let grid = StateGrid::build(4, &reference_bits(), 16, &model).unwrap();
        assert_eq!(grid.n(), 16);
        assert_eq!(*grid.d_points.last().unwrap(), 0.75);
        assert!(grid.d_upper(15) == 1.0 && grid.d_edges[15] < 1.0);
        for n in 0..16 {
            assert_eq!(grid.d_index(grid.d_points[n]), n);
        }
    }

    #[test]
    fn two_segments_split_at_the_median() {
        let model = QuantizerModel::new(QuantizerKind::SphereCap, 4).unwrap();
        let grid = StateGrid::build(4, &[0, 2], 2, &model).unwrap();
        // independent oracle: bisection on the regularized gamma function
        let (mut lo, mut hi) = (0.0, 20.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if statrs::function::gamma::gamma_lr(4.0, mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((grid.g_edges[1] - lo).abs() < 1e-9);
        // conditional means average back to E[g] = L
        assert!((0.5 * (grid.g_points[0] + grid.g_points[1]) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn index_lookup() {
        let model = QuantizerModel::new(QuantizerKind::SphereCap, 4).unwrap();
        let grid = StateGrid::build(4, &reference_bits(), 16, &model).unwrap();
        assert_eq!(grid.g_index(0.0), 0);
        assert_eq!(grid.g_index(1e9), 15);
        assert_eq!(grid.d_index(0.0), 0);
        assert_eq!(grid.d_index(1.0), 15);
        assert_eq!(grid.bit_index(6), Some(3));
        assert_eq!(grid.bit_index(7), None);
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = QuantizerModel::new(QuantizerKind::SphereCap, 4).unwrap();
        assert!(StateGrid::build(4, &[0, 2], 1, &model).is_err());
        assert!(StateGrid::build(4, &[2, 4], 4, &model).is_err());
        assert!(StateGrid::from_parts(
            vec![0.0, 1.0],
            vec![0.5, 0.7],
            vec![0.0],
            vec![0.5],
            vec![0]
        )
        .is_err());
    }
}
