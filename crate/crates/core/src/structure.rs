//! Checks of the monotone threshold structure of optimal feedback policies
//! and of the value-function properties behind it.
//!
//! For every gain row the optimal policy should (P1) send nothing below some
//! CSIT-error threshold, (P2) send one fixed size above it, and (P3) send
//! more bits for larger gains.

use crate::error::{domain, Result};
use crate::mdp::{FeedbackMdp, Policy, StateGrid, ValueFunction, ValueKind};
use nalgebra::DMatrix;
use serde::Serialize;
use std::fmt;

/// Slack on every inequality.
pub const SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Property {
    /// No-feedback states form a down-set in δ.
    ZeroDownSet,
    /// The positive decision is constant in δ.
    ConstantAbove,
    /// Positive decisions are nondecreasing in g.
    IncreasingInGain,
}

impl Property {
    pub fn label(&self) -> &'static str {
        match self {
            Property::ZeroDownSet => "P1",
            Property::ConstantAbove => "P2",
            Property::IncreasingInGain => "P3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub property: Property,
    pub g_index: usize,
    pub d_index: usize,
    pub detail: String,
}

/// Value-function statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueStatistics {
    /// Smallest mixed second difference of V.
    pub f_min: f64,
    /// Smallest second difference of Z in B over the positive sizes.
    pub z_convexity_min: f64,
    /// Largest increase of Z between consecutive positive sizes.
    pub z_increase_max: f64,
    /// Largest spread of Z across δ for a positive size.
    pub z_spread_max: f64,
}

impl ValueStatistics {
    pub fn f_ok(&self) -> bool {
        self.f_min >= -SLACK
    }

    pub fn z_ok(&self) -> bool {
        self.z_convexity_min >= -SLACK && self.z_increase_max <= SLACK && self.z_spread_max < 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub p1_ok: bool,
    pub p2_ok: bool,
    pub p3_ok: bool,
    pub violations: Vec<Violation>,
    /// First δ-index with feedback in each gain row.
    pub thresholds: Vec<Option<usize>>,
    /// Whether the feedback threshold moves to smaller δ as g grows. Reported
    /// only; not part of the verified properties.
    pub threshold_nonincreasing: bool,
    pub value_stats: Option<ValueStatistics>,
}

impl StructureReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks P1–P3 on a policy table.
pub fn verify_theorem1(policy: &Policy, grid: &StateGrid) -> StructureReport {
    let (m_len, n_len) = (policy.rows(), policy.cols());
    debug_assert!(m_len == grid.m() && n_len == grid.n());
    let mut violations = Vec::new();
    let mut thresholds = Vec::with_capacity(m_len);

    for m in 0..m_len {
        let row = &policy.table[m];
        let first = row.iter().position(|&b| b > 0);
        thresholds.push(first);
        let Some(n0) = first else { continue };
        for n in n0 + 1..n_len {
            if row[n] == 0 {
                violations.push(Violation {
                    property: Property::ZeroDownSet,
                    g_index: m,
                    d_index: n,
                    detail: format!("no feedback above feedback at δ-index {n0}"),
                });
            } else if row[n] != row[n0] {
                violations.push(Violation {
                    property: Property::ConstantAbove,
                    g_index: m,
                    d_index: n,
                    detail: format!("{} bits differs from {} bits at δ-index {n0}", row[n], row[n0]),
                });
            }
        }
    }

    for n in 0..n_len {
        let mut running: Option<(usize, u32)> = None;
        for m in 0..m_len {
            let b = policy.table[m][n];
            if b == 0 {
                continue;
            }
            match running {
                Some((a, prev)) if b < prev => violations.push(Violation {
                    property: Property::IncreasingInGain,
                    g_index: m,
                    d_index: n,
                    detail: format!("{b} bits below {prev} bits at smaller gain index {a}"),
                }),
                Some((_, prev)) if b == prev => {}
                _ => running = Some((m, b)),
            }
        }
    }

    let has = |p| violations.iter().any(|v: &Violation| v.property == p);
    let defined: Vec<usize> = thresholds.iter().flatten().copied().collect();
    StructureReport {
        p1_ok: !has(Property::ZeroDownSet),
        p2_ok: !has(Property::ConstantAbove),
        p3_ok: !has(Property::IncreasingInGain),
        threshold_nonincreasing: defined.windows(2).all(|w| w[1] <= w[0]),
        violations,
        thresholds,
        value_stats: None,
    }
}

/// Mixed second difference of `V` over the grid, with `V` taken as zero
/// just outside the lower edges of both axes.
pub fn compute_f(values: &DMatrix<f64>) -> DMatrix<f64> {
    let at = |k: usize, l: usize, dk: usize, dl: usize| {
        if k < dk || l < dl {
            0.0
        } else {
            values[(k - dk, l - dl)]
        }
    };
    DMatrix::from_fn(values.nrows(), values.ncols(), |k, l| {
        at(k, l, 0, 0) - at(k, l, 0, 1) - at(k, l, 1, 0) + at(k, l, 1, 1)
    })
}

/// Q-values of a converged discounted value function, one table per entry
/// of the feedback set.
pub fn compute_z(mdp: &FeedbackMdp, value: &ValueFunction, lambda: f64) -> Result<Vec<DMatrix<f64>>> {
    let ValueKind::Discounted(rho) = value.kind else {
        return domain("Z needs a discounted value function");
    };
    Ok(mdp.q_values(&value.values, lambda, rho))
}

pub fn value_statistics(mdp: &FeedbackMdp, value: &ValueFunction, lambda: f64) -> Result<ValueStatistics> {
    let z = compute_z(mdp, value, lambda)?;
    let f = compute_f(&value.values);
    let mut stats = ValueStatistics {
        f_min: f.min(),
        z_convexity_min: f64::INFINITY,
        z_increase_max: f64::NEG_INFINITY,
        z_spread_max: 0.0,
    };
    for m in 0..mdp.m() {
        for n in 0..mdp.n() {
            let zs: Vec<f64> = z.iter().skip(1).map(|t| t[(m, n)]).collect();
            for w in zs.windows(2) {
                stats.z_increase_max = stats.z_increase_max.max(w[1] - w[0]);
            }
            for w in zs.windows(3) {
                stats.z_convexity_min = stats.z_convexity_min.min(w[0] - 2.0 * w[1] + w[2]);
            }
        }
        for t in z.iter().skip(1) {
            let row = t.row(m);
            stats.z_spread_max = stats.z_spread_max.max(row.max() - row.min());
        }
    }
    Ok(stats)
}

impl fmt::Display for StructureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |ok: bool| if ok { "ok" } else { "VIOLATED" };
        writeln!(f, "P1 (no feedback below a threshold in δ): {}", mark(self.p1_ok))?;
        writeln!(f, "P2 (constant size above the threshold): {}", mark(self.p2_ok))?;
        writeln!(f, "P3 (size nondecreasing in g): {}", mark(self.p3_ok))?;
        writeln!(f, "violations: {}", self.violations.len())?;
        let th: Vec<String> = self
            .thresholds
            .iter()
            .map(|t| t.map_or("-".to_string(), |n| n.to_string()))
            .collect();
        writeln!(f, "feedback threshold per gain row: {}", th.join(" "))?;
        writeln!(f, "threshold nonincreasing in g (not asserted): {}", self.threshold_nonincreasing)?;
        if let Some(s) = &self.value_stats {
            writeln!(f, "min mixed difference f: {:.3e} ({})", s.f_min, mark(s.f_ok()))?;
            writeln!(f, "min second difference of Z in B: {:.3e}", s.z_convexity_min)?;
            writeln!(f, "max increase of Z in B: {:.3e}", s.z_increase_max)?;
            writeln!(f, "max spread of Z across δ for B > 0: {:.3e}", s.z_spread_max)?;
        }
        for v in &self.violations {
            writeln!(
                f,
                "  {} at (g {}, δ {}): {}",
                v.property.label(),
                v.g_index,
                v.d_index,
                v.detail
            )?;
        }
        Ok(())
    }
}
