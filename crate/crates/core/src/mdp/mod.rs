//! Discretized feedback-control MDP for one interfering link.
//!
//! The controller state is the pair (channel gain `g`, CSIT error `δ`),
//! quantized to an M×N grid. Actions are feedback sizes `B ∈ 𝔹`. The
//! transition kernel factors into a gain chain and a CSIT-error chain whose
//! law depends on the action.

mod budget;
mod grid;
mod kernel;
mod solver;

pub use budget::{solve_budgeted, BudgetedPolicy, BudgetOptions};
pub use grid::StateGrid;
pub use kernel::{estimate_kernel, KernelOptions, TransitionKernel};
pub use solver::{
    FeedbackMdp, PolicyIterationOutcome, ValueFunction, ValueIterationOutcome, ValueKind,
};

use serde::{Deserialize, Serialize};

/// A deterministic stationary policy: `table[m][n]` is the number of bits fed
/// back in grid state (g-segment m, δ-segment n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub table: Vec<Vec<u32>>,
    /// Multiplier used when the policy was computed.
    pub lambda: f64,
    /// Stationary average of `B` under the closed-loop chain.
    pub avg_rate: f64,
}

impl Policy {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            table: vec![vec![0; n]; m],
            lambda: 0.0,
            avg_rate: 0.0,
        }
    }

    pub fn rows(&self) -> usize {
        self.table.len()
    }

    pub fn cols(&self) -> usize {
        self.table.first().map_or(0, Vec::len)
    }

    pub fn get(&self, m: usize, n: usize) -> u32 {
        self.table[m][n]
    }

    /// Number of distinct decisions `D` appearing in the table.
    pub fn distinct_decisions(&self) -> usize {
        let mut seen: Vec<u32> = self.table.iter().flatten().copied().collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}
