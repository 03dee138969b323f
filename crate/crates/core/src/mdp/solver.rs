use super::grid::StateGrid;
use super::kernel::TransitionKernel;
use super::Policy;
use crate::error::{domain, Error, Result};
use crate::quantizer::QuantizerModel;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ValueKind {
    /// Relative values of the average-cost problem, pinned to zero at state (0, 0).
    Differential,
    /// Discounted cost-to-go with the given discount factor.
    Discounted(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    /// M×N table indexed like the grid.
    pub values: DMatrix<f64>,
    pub kind: ValueKind,
    /// Average cost per slot. For a discounted function this is
    /// `(1 - ρ)·V(0, 0)`.
    pub avg_cost: f64,
}

#[derive(Debug, Clone)]
pub struct ValueIterationOutcome {
    pub value: ValueFunction,
    pub policy: Policy,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct PolicyIterationOutcome {
    pub policy: Policy,
    pub value: ValueFunction,
    pub iterations: usize,
    pub converged: bool,
    /// Average cost after each evaluation step.
    pub cost_history: Vec<f64>,
}

/// The discretized control problem for one link.
#[derive(Debug, Clone)]
pub struct FeedbackMdp {
    pub grid: StateGrid,
    pub kernel: TransitionKernel,
    /// `E[ε | B]` for each entry of `grid.bits`.
    pub mean_error: Vec<f64>,
}

impl FeedbackMdp {
    pub fn new(grid: StateGrid, kernel: TransitionKernel, model: &QuantizerModel) -> Result<Self> {
        let mean_error = grid.bits.iter().map(|&b| model.mean_error(b)).collect();
        Self::with_mean_errors(grid, kernel, mean_error)
    }

    pub fn with_mean_errors(
        grid: StateGrid,
        kernel: TransitionKernel,
        mean_error: Vec<f64>,
    ) -> Result<Self> {
        if kernel.m() != grid.m() || kernel.n() != grid.n() {
            return domain("kernel and grid dimensions differ");
        }
        if kernel.d_fb.nrows() + 1 != grid.bits.len() || mean_error.len() != grid.bits.len() {
            return domain("feedback rows do not match the feedback sizes");
        }
        Ok(Self {
            grid,
            kernel,
            mean_error,
        })
    }

    pub fn m(&self) -> usize {
        self.grid.m()
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn actions(&self) -> usize {
        self.grid.bits.len()
    }

    /// Cost per stage for action index `j` in state `(m, n)`.
    pub fn cost(&self, m: usize, n: usize, j: usize, lambda: f64) -> f64 {
        let g = self.grid.g_points[m];
        if self.grid.bits[j] == 0 {
            g * self.grid.d_points[n]
        } else {
            g * self.mean_error[j] + lambda * self.grid.bits[j] as f64
        }
    }

    /// Q-values `G(x, B) + ρ E[V(x') | x, B]`, one M×N table per action index.
    pub fn q_values(&self, v: &DMatrix<f64>, lambda: f64, rho: f64) -> Vec<DMatrix<f64>> {
        let k = &self.kernel;
        let w0 = &k.g * (v * k.d_nofb.transpose());
        let wfb = &k.g * (v * k.d_fb.transpose());
        (0..self.actions())
            .map(|j| {
                DMatrix::from_fn(self.m(), self.n(), |m, n| {
                    let future = if j == 0 { w0[(m, n)] } else { wfb[(m, j - 1)] };
                    self.cost(m, n, j, lambda) + rho * future
                })
            })
            .collect()
    }

    /// One application of the dynamic-programming operator. Ties go to the
    /// smallest feedback size.
    pub fn bellman_backup(
        &self,
        v: &DMatrix<f64>,
        lambda: f64,
        rho: f64,
    ) -> (DMatrix<f64>, Vec<Vec<usize>>) {
        let q = self.q_values(v, lambda, rho);
        let mut values = DMatrix::zeros(self.m(), self.n());
        let mut actions = vec![vec![0; self.n()]; self.m()];
        for m in 0..self.m() {
            for n in 0..self.n() {
                let (j, best) = argmin_first(q.iter().map(|t| t[(m, n)]));
                values[(m, n)] = best;
                actions[m][n] = j;
            }
        }
        (values, actions)
    }

    /// Iterates the DP operator from zero until the sup-norm change drops
    /// below `tol` or `max_iter` is reached.
    pub fn value_iteration(
        &self,
        lambda: f64,
        rho: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<ValueIterationOutcome> {
        if !(rho > 0.0 && rho < 1.0) {
            return domain(format!("discount factor {rho} outside (0, 1)"));
        }
        if !(tol > 0.0) {
            return domain("tolerance must be positive");
        }
        let mut v = DMatrix::zeros(self.m(), self.n());
        let mut actions = vec![vec![0; self.n()]; self.m()];
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iter {
            let (next, a) = self.bellman_backup(&v, lambda, rho);
            residual = (&next - &v).abs().max();
            v = next;
            actions = a;
            iterations += 1;
            if residual < tol {
                break;
            }
        }
        let converged = residual < tol;
        if !converged {
            log::warn!("value iteration stopped after {iterations} rounds, residual {residual:e}");
        }
        let policy = self.policy_from_actions(&actions, lambda)?;
        let avg_cost = (1.0 - rho) * v[(0, 0)];
        Ok(ValueIterationOutcome {
            value: ValueFunction {
                values: v,
                kind: ValueKind::Discounted(rho),
                avg_cost,
            },
            policy,
            iterations,
            converged,
            residual,
        })
    }

    /// Howard policy iteration for the average-cost problem, started from the
    /// zero policy.
    pub fn policy_iteration(&self, lambda: f64, max_iter: usize) -> Result<PolicyIterationOutcome> {
        let mut actions = vec![vec![0; self.n()]; self.m()];
        let mut history = Vec::new();
        let mut iterations = 0;
        loop {
            let (avg_cost, u) = self.evaluate_actions(&actions, lambda)?;
            history.push(avg_cost);
            iterations += 1;
            let (_, next) = self.bellman_backup(&u, lambda, 1.0);
            let done = next == actions;
            if done || iterations >= max_iter {
                let converged = done;
                if !converged {
                    log::warn!("policy iteration stopped after {iterations} rounds");
                }
                let policy = self.policy_from_actions(&actions, lambda)?;
                return Ok(PolicyIterationOutcome {
                    policy,
                    value: ValueFunction {
                        values: u,
                        kind: ValueKind::Differential,
                        avg_cost,
                    },
                    iterations,
                    converged,
                    cost_history: history,
                });
            }
            actions = next;
        }
    }

    /// Average cost and differential values of a policy.
    pub fn evaluate(&self, policy: &Policy) -> Result<(f64, DMatrix<f64>)> {
        let actions = self.actions_of(policy)?;
        self.evaluate_actions(&actions, policy.lambda)
    }

    /// Stationary distribution of the closed-loop chain as an M×N table.
    pub fn stationary(&self, policy: &Policy) -> Result<DMatrix<f64>> {
        let actions = self.actions_of(policy)?;
        self.stationary_actions(&actions)
    }

    /// Stationary mean of the number of feedback bits.
    pub fn average_rate(&self, policy: &Policy) -> Result<f64> {
        let pi = self.stationary(policy)?;
        Ok(self.rate_under(&pi, &self.actions_of(policy)?))
    }

    /// Full closed-loop transition matrix over flattened states `m·N + n`.
    pub fn closed_loop_matrix(&self, actions: &[Vec<usize>]) -> DMatrix<f64> {
        let (m_len, n_len) = (self.m(), self.n());
        let s = m_len * n_len;
        let mut p = DMatrix::zeros(s, s);
        for m in 0..m_len {
            for n in 0..n_len {
                let row = self.kernel.d_row(n, actions[m][n]);
                for k in 0..m_len {
                    let pg = self.kernel.g[(m, k)];
                    for (l, &pd) in row.iter().enumerate() {
                        p[(m * n_len + n, k * n_len + l)] = pg * pd;
                    }
                }
            }
        }
        p
    }

    fn evaluate_actions(&self, actions: &[Vec<usize>], lambda: f64) -> Result<(f64, DMatrix<f64>)> {
        let n_len = self.n();
        let p = self.closed_loop_matrix(actions);
        let s = p.nrows();
        // unknowns: [L, U_1, ..., U_{S-1}] with U_0 = 0
        let mut a = DMatrix::identity(s, s) - &p;
        a.column_mut(0).fill(1.0);
        let c = DVector::from_fn(s, |i, _| {
            self.cost(i / n_len, i % n_len, actions[i / n_len][i % n_len], lambda)
        });
        let x = a.lu().solve(&c).ok_or(Error::ReducibleChain)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::ReducibleChain);
        }
        let avg = x[0];
        let u = DMatrix::from_fn(self.m(), n_len, |m, n| {
            let i = m * n_len + n;
            if i == 0 {
                0.0
            } else {
                x[i]
            }
        });
        Ok((avg, u))
    }

    fn stationary_actions(&self, actions: &[Vec<usize>]) -> Result<DMatrix<f64>> {
        let p = self.closed_loop_matrix(actions);
        let s = p.nrows();
        let mut a = p.transpose() - DMatrix::identity(s, s);
        a.row_mut(s - 1).fill(1.0);
        let mut rhs = DVector::zeros(s);
        rhs[s - 1] = 1.0;
        let pi = a.lu().solve(&rhs).ok_or(Error::ReducibleChain)?;
        if pi.iter().any(|v| !v.is_finite() || *v < -1e-9) {
            return Err(Error::ReducibleChain);
        }
        Ok(DMatrix::from_fn(self.m(), self.n(), |m, n| {
            pi[m * self.n() + n].max(0.0)
        }))
    }

    fn rate_under(&self, pi: &DMatrix<f64>, actions: &[Vec<usize>]) -> f64 {
        let mut rate = 0.0;
        for m in 0..self.m() {
            for n in 0..self.n() {
                rate += pi[(m, n)] * self.grid.bits[actions[m][n]] as f64;
            }
        }
        rate
    }

    fn policy_from_actions(&self, actions: &[Vec<usize>], lambda: f64) -> Result<Policy> {
        let pi = self.stationary_actions(actions)?;
        Ok(Policy {
            table: actions
                .iter()
                .map(|row| row.iter().map(|&j| self.grid.bits[j]).collect())
                .collect(),
            lambda,
            avg_rate: self.rate_under(&pi, actions),
        })
    }

    pub(crate) fn actions_of(&self, policy: &Policy) -> Result<Vec<Vec<usize>>> {
        if policy.rows() != self.m() || policy.cols() != self.n() {
            return domain("policy shape does not match the grid");
        }
        policy
            .table
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&b| {
                        self.grid
                            .bit_index(b)
                            .ok_or_else(|| Error::Domain(format!("{b} bits not in the feedback set")))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Index and value of the minimum; near-ties resolve to the first index.
fn argmin_first(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let v: Vec<f64> = values.collect();
    let best = v.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * best.abs().max(1.0);
    let j = v.iter().position(|&x| x <= best + tol).unwrap_or(0);
    (j, best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FadingMode;
    use crate::mdp::{estimate_kernel, KernelOptions};
    use crate::quantizer::QuantizerKind;

    fn small_block_mdp() -> FeedbackMdp {
        let model = QuantizerModel::new(QuantizerKind::SphereCap, 4).unwrap();
        let grid = StateGrid::build(4, &[0, 2, 4, 8], 4, &model).unwrap();
        let kernel =
            estimate_kernel(&grid, FadingMode::BlockIid, &model, &KernelOptions::default()).unwrap();
        FeedbackMdp::new(grid, kernel, &model).unwrap()
    }

    #[test]
    fn cost_per_stage_cases() {
        let model = QuantizerModel::new(QuantizerKind::SphereCap, 4).unwrap();
        let grid = StateGrid::from_parts(
            vec![0.0, 1.0],
            vec![0.5, 2.0],
            vec![0.0, 0.5],
            vec![0.375, 0.75],
            vec![0, 3],
        )
        .unwrap();
        let kernel = TransitionKernel::new(
            DMatrix::from_element(2, 2, 0.5),
            DMatrix::from_element(2, 2, 0.5),
            DMatrix::from_element(1, 2, 0.5),
        )
        .unwrap();
        let mdp = FeedbackMdp::new(grid, kernel, &model).unwrap();
        assert!((mdp.cost(1, 1, 1, 0.1) - 1.05).abs() < 1e-12);
        assert_eq!(mdp.cost(1, 1, 0, 123.0), 2.0 * 0.75);
    }

    #[test]
    fn free_feedback_prefers_the_largest_codebook() {
        let mdp = small_block_mdp();
        let last = mdp.actions() - 1;
        for m in 0..mdp.m() {
            for n in 0..mdp.n() {
                if mdp.grid.d_points[n] > mdp.mean_error[last] {
                    let c = mdp.cost(m, n, last, 0.0);
                    assert!((0..mdp.actions()).all(|j| mdp.cost(m, n, j, 0.0) >= c));
                }
            }
        }
    }

    #[test]
    fn backup_without_future_is_myopic() {
        let mdp = small_block_mdp();
        let v = DMatrix::from_element(mdp.m(), mdp.n(), 7.0);
        let (_, a0) = mdp.bellman_backup(&v, 0.05, 1e-12);
        let (_, a1) = mdp.bellman_backup(&DMatrix::zeros(mdp.m(), mdp.n()), 0.05, 0.5);
        for m in 0..mdp.m() {
            for n in 0..mdp.n() {
                let costs = (0..mdp.actions()).map(|j| mdp.cost(m, n, j, 0.05));
                let (j, _) = argmin_first(costs);
                assert_eq!(a0[m][n], j);
                assert_eq!(a1[m][n], j);
            }
        }
    }

    #[test]
    fn huge_multiplier_turns_feedback_off() {
        let mdp = small_block_mdp();
        let top = mdp.grid.g_points.last().unwrap() * mdp.grid.d_points.last().unwrap();
        let vi = mdp.value_iteration(top, 0.9, 1e-10, 10_000).unwrap();
        assert!(vi.policy.table.iter().flatten().all(|&b| b == 0));
        assert_eq!(vi.policy.avg_rate, 0.0);
    }

    #[test]
    fn zero_multiplier_under_block_fading_feeds_back_max() {
        let mdp = small_block_mdp();
        let pi = mdp.policy_iteration(0.0, 50).unwrap();
        let last = mdp.actions() - 1;
        for m in 0..mdp.m() {
            for n in 0..mdp.n() {
                let want = if mdp.grid.d_points[n] > mdp.mean_error[last] {
                    mdp.grid.bits[last]
                } else {
                    0
                };
                assert_eq!(pi.policy.get(m, n), want, "state ({m},{n})");
            }
        }
    }

    #[test]
    fn evaluation_solves_the_poisson_equation() {
        let model = QuantizerModel::new(QuantizerKind::SphereCap, 4).unwrap();
        let bits: Vec<u32> = (0..16).map(|k| 2 * k).collect();
        let grid = StateGrid::build(4, &bits, 16, &model).unwrap();
        let opts = KernelOptions {
            samples: 100_000,
            ..Default::default()
        };
        let kernel = estimate_kernel(&grid, FadingMode::clarke(0.01), &model, &opts).unwrap();
        let mdp = FeedbackMdp::new(grid, kernel, &model).unwrap();
        let out = mdp.policy_iteration(0.02, 50).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 20);
        assert!(out.cost_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let actions = mdp.actions_of(&out.policy).unwrap();
        let p = mdp.closed_loop_matrix(&actions);
        let u = &out.value.values;
        assert_eq!(u[(0, 0)], 0.0);
        let n = mdp.n();
        for s in 0..p.nrows() {
            let (m, d) = (s / n, s % n);
            let expect: f64 = (0..p.ncols()).map(|t| p[(s, t)] * u[(t / n, t % n)]).sum();
            let lhs = u[(m, d)] + out.value.avg_cost;
            let rhs = mdp.cost(m, d, actions[m][d], 0.02) + expect;
            assert!((lhs - rhs).abs() < 1e-8);
        }
        let pi = mdp.stationary(&out.policy).unwrap();
        assert!((pi.sum() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_foreign_policies() {
        let mdp = small_block_mdp();
        let mut p = Policy::zeros(mdp.m(), mdp.n());
        p.table[0][0] = 3;
        assert!(mdp.evaluate(&p).is_err());
        assert!(mdp.evaluate(&Policy::zeros(2, 2)).is_err());
    }
}
