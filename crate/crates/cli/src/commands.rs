//! The five subcommands.

use crate::config::{ExperimentConfig, Point, SchemeSpec};
use crate::output::{num, write_policy, Provenance, Table};
use crate::CliError;
use fbctl_core::highmob::{
    allocate_rates_closed_form, calibrate_two_tier, expected_two_tier_bits, min_interference,
    search_threshold, WaterfillPolicy,
};
use fbctl_core::mdp::{estimate_kernel, solve_budgeted, FeedbackMdp, KernelOptions, Policy, StateGrid};
use fbctl_core::netsim::{
    run_simulation, tune_differential_nu, Controller, NetworkConfig, Scheme, SimResult,
};
use fbctl_core::quantizer::QuantizerModel;
use fbctl_core::structure::{value_statistics, verify_theorem1, StructureReport};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub allow_violations: bool,
}

impl Context {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.config.hash(),
            seed: self.config.seed,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn model(cfg: &ExperimentConfig, seed: u64) -> Result<QuantizerModel, CliError> {
    Ok(QuantizerModel::new(cfg.quantizer, cfg.antennas)?.with_seed(seed))
}

fn build_mdp(cfg: &ExperimentConfig, seed: u64) -> Result<FeedbackMdp, CliError> {
    let q = model(cfg, seed)?;
    let grid = StateGrid::build(cfg.antennas, &cfg.bits, cfg.gain_segments, &q)?;
    let opts = KernelOptions {
        samples: cfg.kernel.samples,
        smoothing: cfg.kernel.smoothing,
        seed,
        drift: cfg.kernel.drift,
    };
    let kernel = estimate_kernel(&grid, cfg.fading.mode(), &q, &opts)?;
    Ok(FeedbackMdp::new(grid, kernel, &q)?)
}

/// Per-link budgets for interferers `0..K-1` of a receiver.
fn link_budgets(cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    let net = &cfg.network;
    Ok(allocate_rates_closed_form(&net.interferer_distances, net.alpha, cfg.antennas, cfg.b_bar)?.rates)
}

/// Targets with their interferer slots, equal targets merged.
fn distinct_targets(budgets: &[f64]) -> Vec<(f64, Vec<usize>)> {
    let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
    for (j, &b) in budgets.iter().enumerate() {
        match out.iter_mut().find(|(t, _)| *t == b) {
            Some((_, js)) => js.push(j),
            None => out.push((b, vec![j])),
        }
    }
    out
}

struct Solved {
    policy: Policy,
    values: Option<Vec<Vec<f64>>>,
    saturated: bool,
}

fn solve_link(mdp: &FeedbackMdp, target: f64, cfg: &ExperimentConfig) -> Result<Solved, CliError> {
    if target <= 0.0 {
        let mut policy = Policy::zeros(mdp.m(), mdp.n());
        policy.lambda = f64::INFINITY;
        return Ok(Solved {
            policy,
            values: None,
            saturated: false,
        });
    }
    let b = solve_budgeted(mdp, target, &cfg.solver.budget_options())?;
    let v = &b.outcome.value.values;
    let values = (0..v.nrows())
        .map(|m| (0..v.ncols()).map(|n| v[(m, n)]).collect())
        .collect();
    Ok(Solved {
        policy: b.policy,
        values: Some(values),
        saturated: b.saturated,
    })
}

fn violation_summary(report: &StructureReport) -> String {
    report
        .violations
        .iter()
        .take(5)
        .map(|v| format!("{} at ({}, {}): {}", v.property.label(), v.g_index, v.d_index, v.detail))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn solve_policy(ctx: &Context) -> Result<(), CliError> {
    let prov = ctx.provenance();
    let points = ctx.config.points();
    let mut summary = Table::new(&[
        "point", "axis", "value", "link", "distance", "target", "lambda", "avg_rate", "saturated",
        "distinct_decisions", "p1", "p2", "p3", "violations", "file",
    ]);
    let mut failures = Vec::new();
    let jobs: Vec<(Point, FeedbackMdp, Vec<(f64, Vec<usize>)>)> = points
        .into_iter()
        .map(|p| {
            let seed = ctx.config.point_seed(p.index);
            let mdp = build_mdp(&p.config, seed)?;
            let targets = distinct_targets(&link_budgets(&p.config)?);
            Ok((p, mdp, targets))
        })
        .collect::<Result<_, CliError>>()?;
    let single = jobs.len() == 1 && jobs[0].2.len() == 1;
    for (p, mdp, targets) in &jobs {
        let solved: Vec<Solved> = targets
            .par_iter()
            .map(|(t, _)| solve_link(mdp, *t, &p.config))
            .collect::<Result<_, _>>()?;
        for ((target, links), s) in targets.iter().zip(solved) {
            let file = if single {
                "policy.csv".to_string()
            } else {
                format!("policy_{}_{}.csv", p.index, links[0])
            };
            write_policy(&ctx.path(&file), &prov, &s.policy, &mdp.grid, s.values.as_deref())?;
            let report = verify_theorem1(&s.policy, &mdp.grid);
            let text_path = ctx.path(&file.replace(".csv", "_structure.txt"));
            std::fs::write(&text_path, format!("{}\n{report}", prov.line()))
                .map_err(|e| CliError::Io(format!("{}: {e}", text_path.display())))?;
            log::info!(
                "{}={} target {target}: avg rate {:.4}, lambda {}, {} violations",
                p.axis,
                p.value,
                s.policy.avg_rate,
                s.policy.lambda,
                report.violations.len()
            );
            if !report.is_clean() {
                failures.push(format!("{file}: {}", violation_summary(&report)));
            }
            for &j in links {
                summary.push(vec![
                    num(p.index),
                    p.axis.to_string(),
                    num(p.value),
                    num(j),
                    num(p.config.network.interferer_distances[j]),
                    num(*target),
                    num(s.policy.lambda),
                    num(s.policy.avg_rate),
                    num(s.saturated),
                    num(s.policy.distinct_decisions()),
                    num(report.p1_ok),
                    num(report.p2_ok),
                    num(report.p3_ok),
                    num(report.violations.len()),
                    file.clone(),
                ]);
            }
        }
    }
    summary.write(&ctx.path("policies.csv"), &prov)?;
    finish(ctx, failures)
}

fn finish(ctx: &Context, failures: Vec<String>) -> Result<(), CliError> {
    if failures.is_empty() {
        return Ok(());
    }
    let msg = failures.join("\n");
    if ctx.allow_violations {
        log::warn!("structure violations allowed:\n{msg}");
        Ok(())
    } else {
        Err(CliError::Verification(msg))
    }
}

pub fn verify_structure(ctx: &Context) -> Result<(), CliError> {
    let prov = ctx.provenance();
    let mut table = Table::new(&[
        "point", "axis", "value", "target", "solver", "lambda", "avg_rate", "p1", "p2", "p3",
        "violations", "threshold_nonincreasing", "f_min", "z_convexity_min", "z_increase_max",
        "z_spread_max", "f_ok", "z_ok",
    ]);
    let mut violations = Table::new(&[
        "point", "axis", "value", "target", "solver", "property", "g_index", "d_index", "detail",
    ]);
    let rows: Vec<PointRows> = ctx
        .config
        .points()
        .into_par_iter()
        .map(|p| verify_point(ctx, &p))
        .collect::<Result<_, _>>()?;
    let mut failures = Vec::new();
    for r in rows {
        r.summary.into_iter().for_each(|row| table.push(row));
        r.violations.into_iter().for_each(|row| violations.push(row));
        failures.extend(r.failures);
    }
    table.write(&ctx.path("structure.csv"), &prov)?;
    violations.write(&ctx.path("violations.csv"), &prov)?;
    finish(ctx, failures)
}

struct PointRows {
    summary: Vec<Vec<String>>,
    violations: Vec<Vec<String>>,
    failures: Vec<String>,
}

fn verify_point(ctx: &Context, p: &Point) -> Result<PointRows, CliError> {
    let cfg = &p.config;
    let mdp = build_mdp(cfg, ctx.config.point_seed(p.index))?;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let mut failures = Vec::new();
    for (target, _) in distinct_targets(&link_budgets(cfg)?) {
        let pi = solve_link(&mdp, target, cfg)?;
        let lambda = if pi.policy.lambda.is_finite() {
            pi.policy.lambda
        } else {
            // Large enough that no feedback pays off.
            1e6
        };
        let vi = mdp.value_iteration(lambda, cfg.solver.discount, cfg.solver.vi_tol, cfg.solver.vi_max_iter)?;
        let stats = value_statistics(&mdp, &vi.value, lambda)?;
        for (name, policy) in [("pi", &pi.policy), ("vi", &vi.policy)] {
            let mut report = verify_theorem1(policy, &mdp.grid);
            if name == "vi" {
                report.value_stats = Some(stats);
            }
            if !report.is_clean() {
                failures.push(format!(
                    "{}={} target {target} ({name}): {}",
                    p.axis,
                    p.value,
                    violation_summary(&report)
                ));
            }
            for v in &report.violations {
                violations.push(vec![
                    num(p.index),
                    p.axis.to_string(),
                    num(p.value),
                    num(target),
                    name.to_string(),
                    v.property.label().to_string(),
                    num(v.g_index),
                    num(v.d_index),
                    v.detail.clone(),
                ]);
            }
            let stat = |f: fn(&fbctl_core::structure::ValueStatistics) -> String| {
                report.value_stats.as_ref().map_or_else(String::new, f)
            };
            rows.push(vec![
                num(p.index),
                p.axis.to_string(),
                num(p.value),
                num(target),
                name.to_string(),
                num(policy.lambda),
                num(policy.avg_rate),
                num(report.p1_ok),
                num(report.p2_ok),
                num(report.p3_ok),
                num(report.violations.len()),
                num(report.threshold_nonincreasing),
                stat(|l| num(l.f_min)),
                stat(|l| num(l.z_convexity_min)),
                stat(|l| num(l.z_increase_max)),
                stat(|l| num(l.z_spread_max)),
                stat(|l| num(l.f_ok())),
                stat(|l| num(l.z_ok())),
            ]);
        }
    }
    Ok(PointRows {
        summary: rows,
        violations,
        failures,
    })
}

/// Index of interferer slot for cross link (receiver `m`, transmitter `n`).
fn slot(users: usize, m: usize, n: usize) -> usize {
    (n + users - m - 1) % users
}

/// Expands per-slot items to one per cross link in link-index order.
fn per_link<T: Clone>(net: &NetworkConfig, by_slot: &[T]) -> Vec<T> {
    let k = net.users;
    let mut out: Vec<Option<T>> = vec![None; net.links()];
    for m in 0..k {
        for n in (0..k).filter(|&n| n != m) {
            out[net.link_index(m, n)] = Some(by_slot[slot(k, m, n)].clone());
        }
    }
    out.into_iter().map(|x| x.expect("every link assigned")).collect()
}

fn network(cfg: &ExperimentConfig, seed: u64, scheme: Scheme) -> Result<NetworkConfig, CliError> {
    let mut net = NetworkConfig::new(
        cfg.users,
        cfg.antennas,
        cfg.snr_db,
        cfg.fading.mode(),
        model(cfg, seed)?,
        scheme,
    )
    .with_interferer_distances(&cfg.network.interferer_distances, cfg.network.alpha);
    net.slots = cfg.network.slots;
    net.warmup = cfg.network.warmup;
    net.trials = cfg.network.trials;
    net.seed = seed;
    Ok(net)
}

fn run_scheme(
    cfg: &ExperimentConfig,
    seed: u64,
    spec: &SchemeSpec,
    mdp: &mut Option<Arc<FeedbackMdp>>,
) -> Result<(Option<f64>, SimResult), CliError> {
    let scheme = match *spec {
        SchemeSpec::Controlled => {
            if mdp.is_none() {
                *mdp = Some(Arc::new(build_mdp(cfg, seed)?));
            }
            let mdp = mdp.as_ref().unwrap();
            let budgets = link_budgets(cfg)?;
            let policies = budgets
                .iter()
                .map(|&b| Ok(Arc::new(solve_link(mdp, b, cfg)?.policy)))
                .collect::<Result<Vec<_>, CliError>>()?;
            let probe = network(cfg, seed, Scheme::PerfectCsit)?;
            Scheme::Controlled(Controller::Table {
                policies: per_link(&probe, &policies),
                grid: Arc::new(mdp.grid.clone()),
            })
        }
        SchemeSpec::Waterfill => {
            let opts = cfg.waterfill.search_options(seed);
            let policies = link_budgets(cfg)?
                .iter()
                .map(|&b| Ok(Arc::new(search_threshold(cfg.antennas, 2, b, &opts)?)))
                .collect::<Result<Vec<Arc<WaterfillPolicy>>, CliError>>()?;
            let probe = network(cfg, seed, Scheme::PerfectCsit)?;
            Scheme::Controlled(Controller::Waterfill {
                policies: per_link(&probe, &policies),
            })
        }
        SchemeSpec::Simple { bits } => Scheme::Simple { bits },
        SchemeSpec::Differential { bits, nu: Some(nu) } => Scheme::Differential { bits, nu },
        SchemeSpec::Differential { bits, nu: None } => {
            let mut tune = network(cfg, seed, Scheme::PerfectCsit)?;
            tune.slots = cfg.network.tuning_slots;
            tune.trials = tune.trials.min(2);
            let (nu, _) = tune_differential_nu(&tune, bits, &cfg.network.nu_grid)?;
            log::info!("differential {bits} bits: tuned nu = {nu}");
            Scheme::Differential { bits, nu }
        }
        SchemeSpec::PerfectCsit => Scheme::PerfectCsit,
    };
    let nu = match scheme {
        Scheme::Differential { nu, .. } => Some(nu),
        _ => None,
    };
    Ok((nu, run_simulation(&network(cfg, seed, scheme)?)?))
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let prov = ctx.provenance();
    let mut table = Table::new(&[
        "point", "axis", "value", "scheme", "nu", "throughput", "throughput_hw", "interference",
        "interference_hw", "csi_rate", "overhead_rate", "feedback_rate", "distinct_decisions",
        "mean_csit_error",
    ]);
    for p in ctx.config.points() {
        let seed = ctx.config.point_seed(p.index);
        let mut mdp = None;
        for spec in &p.config.schemes {
            let (nu, r) = run_scheme(&p.config, seed, spec, &mut mdp)?;
            log::info!(
                "{}={} {}: throughput {:.4} ± {:.4}, feedback {:.3}",
                p.axis,
                p.value,
                spec.label(),
                r.throughput_per_user,
                r.throughput_halfwidth,
                r.avg_feedback_rate
            );
            table.push(vec![
                num(p.index),
                p.axis.to_string(),
                num(p.value),
                spec.label(),
                nu.map_or_else(String::new, num),
                num(r.throughput_per_user),
                num(r.throughput_halfwidth),
                num(r.avg_interference_per_rx),
                num(r.interference_halfwidth),
                num(r.csi_rate),
                num(r.overhead_rate),
                num(r.avg_feedback_rate),
                num(r.distinct_decisions),
                num(r.mean_csit_error),
            ]);
        }
    }
    table.write(&ctx.path("simulate.csv"), &prov)
}

pub fn waterfill(ctx: &Context) -> Result<(), CliError> {
    let prov = ctx.provenance();
    let mut summary = Table::new(&[
        "point", "axis", "value", "b_bar", "upsilon", "pr_feedback", "interference",
        "interference_mc", "std_error", "interference_floored", "mean_bits", "expected_bits",
    ]);
    let mut cells = Table::new(&["point", "cell", "g_lower", "psi"]);
    let results: Vec<(Point, WaterfillPolicy, fbctl_core::highmob::InterferenceEstimate)> = ctx
        .config
        .points()
        .into_par_iter()
        .map(|p| {
            let cfg = &p.config;
            let seed = ctx.config.point_seed(p.index);
            let policy = search_threshold(cfg.antennas, cfg.users, cfg.b_bar, &cfg.waterfill.search_options(seed))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let est = min_interference(&policy, cfg.waterfill.mc_samples, &mut rng)?;
            Ok((p, policy, est))
        })
        .collect::<Result<_, CliError>>()?;
    for (p, policy, est) in &results {
        summary.push(vec![
            num(p.index),
            p.axis.to_string(),
            num(p.value),
            num(p.config.b_bar),
            num(policy.upsilon),
            num(policy.pr_feedback),
            num(policy.interference),
            num(est.monte_carlo),
            num(est.std_error),
            num(est.floored),
            num(est.mean_bits),
            num(policy.expected_bits()),
        ]);
        for (i, (&g, &psi)) in policy.cells.edges.iter().zip(&policy.psi).enumerate() {
            cells.push(vec![num(p.index), num(i), num(g), num(psi)]);
        }
    }
    summary.write(&ctx.path("waterfill.csv"), &prov)?;
    cells.write(&ctx.path("waterfill_thresholds.csv"), &prov)
}

pub fn allocate_rates(ctx: &Context) -> Result<(), CliError> {
    let prov = ctx.provenance();
    let mut table = Table::new(&[
        "point", "axis", "value", "b_bar", "link", "distance", "rate", "unclamped", "eta",
        "eta_prime", "two_tier_mean_bits",
    ]);
    for p in ctx.config.points() {
        let cfg = &p.config;
        let net = &cfg.network;
        let alloc = allocate_rates_closed_form(&net.interferer_distances, net.alpha, cfg.antennas, cfg.b_bar)?;
        let eta_prime = calibrate_two_tier(&net.interferer_distances, net.alpha, cfg.antennas, cfg.b_bar)?;
        for (j, &d) in net.interferer_distances.iter().enumerate() {
            table.push(vec![
                num(p.index),
                p.axis.to_string(),
                num(p.value),
                num(cfg.b_bar),
                num(j),
                num(d),
                num(alloc.rates[j]),
                num(alloc.unclamped[j]),
                num(alloc.eta),
                num(eta_prime),
                num(expected_two_tier_bits(d, net.alpha, cfg.antennas, eta_prime)),
            ]);
        }
    }
    table.write(&ctx.path("rates.csv"), &prov)
}

/// Creates the output directory.
pub fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}
