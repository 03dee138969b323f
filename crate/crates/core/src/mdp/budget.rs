use super::solver::{FeedbackMdp, PolicyIterationOutcome};
use super::Policy;
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetOptions {
    /// Accept a feasible policy whose rate is this close to the target.
    pub rate_tol: f64,
    /// Stop bisecting once the multiplier interval is this narrow.
    pub lambda_tol: f64,
    pub max_policy_iter: usize,
}

impl Default for BudgetOptions {
    fn default() -> Self {
        Self {
            rate_tol: 0.05,
            lambda_tol: 1e-6,
            max_policy_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BudgetedPolicy {
    pub policy: Policy,
    pub outcome: PolicyIterationOutcome,
    /// The target exceeds the rate of the unpriced policy, so the budget
    /// cannot be spent in full.
    pub saturated: bool,
    /// Number of policy-iteration solves performed.
    pub probes: usize,
}

/// Finds the multiplier whose optimal policy uses at most `target` bits per
/// slot on average while coming as close to it as the bisection allows.
pub fn solve_budgeted(mdp: &FeedbackMdp, target: f64, opts: &BudgetOptions) -> Result<BudgetedPolicy> {
    if !(target >= 0.0) || !target.is_finite() {
        return domain(format!("feedback budget {target} must be finite and nonnegative"));
    }
    let mut probes = 0;
    let mut solve = |lambda: f64| {
        probes += 1;
        mdp.policy_iteration(lambda, opts.max_policy_iter)
    };

    let free = solve(0.0)?;
    if free.policy.avg_rate <= target + 1e-12 {
        let saturated = free.policy.avg_rate < target - opts.rate_tol;
        return Ok(BudgetedPolicy {
            policy: free.policy.clone(),
            outcome: free,
            saturated,
            probes,
        });
    }

    let top = mdp.grid.g_points.last().unwrap() * mdp.grid.d_points.last().unwrap();
    let mut hi = top.max(1e-9);
    let mut best = solve(hi)?;
    let mut doublings = 0;
    while best.policy.avg_rate > target + 1e-12 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return domain("no multiplier brings the feedback rate under the budget");
        }
        best = solve(hi)?;
    }
    let mut lo = 0.0;
    while hi - lo > opts.lambda_tol && target - best.policy.avg_rate > opts.rate_tol {
        let mid = 0.5 * (lo + hi);
        let out = solve(mid)?;
        if out.policy.avg_rate <= target + 1e-12 {
            hi = mid;
            if out.policy.avg_rate >= best.policy.avg_rate {
                best = out;
            }
        } else {
            lo = mid;
        }
    }
    Ok(BudgetedPolicy {
        policy: best.policy.clone(),
        outcome: best,
        saturated: false,
        probes,
    })
}
