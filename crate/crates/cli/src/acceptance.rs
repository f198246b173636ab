//! The acceptance battery: twelve end-to-end checks with pinned tolerances.
//!
//! Each check returns a [`CriterionResult`]; nothing here panics on a failed
//! check, so a battery run always reports every line.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use resist_core::attack::{
    map_byzantine, select_links, AttackPlan, AttackStrategy, CompromisedLinkSet,
};
use resist_core::data::{gaussian_blobs, local_logistic, partition_data, BlobSpec, PartitionMode};
use resist_core::graph::{count_tau, generate_erdos_renyi, min_in_degree, DirectedGraph};
use resist_core::metrics::{compute_metrics, fit_geometric_rate, fit_loglog, MetricsLog, Weights};
use resist_core::mixing::{beta, verify_geometric_mixing};
use resist_core::objectives::{
    centralized_solve, estimate_pl_constant, estimate_smoothness, find_near_stationary,
    make_pl_sine, make_pl_sum_counterexample, make_quadratic, SharedObjective, SolveMethod,
};
use resist_core::rng::{substream, Stream};
use resist_core::runner::{
    run_dgd_multistep, run_resist, ByzantineNodes, Recording, RunConfig, StepSchedule, Trajectory,
};
use resist_core::screening::{
    build_mixing_matrix, build_mixing_row_oracle, cwtm, Message, TieBreak,
};

use crate::config::parse_suite;
use crate::suite::{distance_to_optimum, run_suite, tail_mean, SuiteOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

type Check = fn() -> Result<(bool, String), String>;

pub const CRITERIA: [(usize, &str, Check); 12] = [
    (1, "mixing-matrix equivalence", mixing_equivalence),
    (2, "worked-example golden rows", golden_rows),
    (3, "geometric mixing", geometric_mixing),
    (4, "exact convergence, identical locals", exact_convergence),
    (5, "O(h) consensus ball", consensus_ball),
    (
        6,
        "screening vs plain averaging under attack",
        resist_vs_dgd,
    ),
    (7, "byzantine-to-link mapping", byzantine_mapping),
    (8, "PL function-gap decay", pl_decay),
    (9, "nonconvex diminishing-step rate", nonconvex_rate),
    (10, "PL counterexample certificate", pl_counterexample),
    (11, "sample-size scaling", sample_scaling),
    (12, "determinism", determinism),
];

pub fn run_criterion(id: usize) -> Option<CriterionResult> {
    let (id, name, check) = CRITERIA.iter().copied().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(CriterionResult {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Run every criterion in order, calling `report` after each one.
pub fn run_all(mut report: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .filter_map(|c| {
            let r = run_criterion(c.0)?;
            report(&r);
            Some(r)
        })
        .collect()
}

fn core<T>(r: resist_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn deliver(
    g: &DirectedGraph,
    states: &DMatrix<f64>,
    set: &CompromisedLinkSet,
    plan: &AttackPlan,
    t: usize,
) -> Vec<Vec<(usize, Vec<f64>)>> {
    (0..g.node_count())
        .map(|j| {
            g.in_neighbors(j)
                .iter()
                .map(|&i| {
                    let m: Vec<f64> = states.row(i).iter().copied().collect();
                    let m = if set.contains(i, j) {
                        plan.corrupt_link(&m, t, i, j)
                    } else {
                        m
                    };
                    (i, m)
                })
                .collect()
        })
        .collect()
}

#[allow(clippy::needless_range_loop)]
fn mixing_equivalence() -> Result<(bool, String), String> {
    const ROUNDS: usize = 1000;
    const D: usize = 2;
    let mut worst_eq: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut nonzero_bad = 0usize;
    let mut beta_bad = 0usize;
    for round in 0..ROUNDS {
        let mut rng = substream(2024, Stream::Data, &[round as u64]);
        let b = rng.random_range(1..=2usize);
        let m = rng.random_range(if b == 1 { 5 } else { 6 }..=10usize);
        let er = generate_erdos_renyi(m, 0.9, round as u64).ok();
        let g = match er {
            Some(g) if min_in_degree(&g) > 2 * b => g,
            _ => core(DirectedGraph::complete(m))?,
        };
        let states = DMatrix::from_fn(m, D, |_, _| rng.random_range(-5.0..5.0));
        let strategy = if rng.random_bool(0.5) {
            AttackStrategy::RandomValue { range: 20.0 }
        } else {
            AttackStrategy::SignFlip
        };
        let count = rng.random_range(0..=m * b / 2);
        let plan = core(AttackPlan::dynamic(count, strategy, round as u64))?;
        let set = core(select_links(&plan, &g, b, round))?;
        let inbox = deliver(&g, &states, &set, &plan, round);
        let outputs: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let own: Vec<f64> = states.row(j).iter().copied().collect();
                let msgs: Vec<Message<'_>> =
                    inbox[j].iter().map(|(i, v)| (*i, v.as_slice())).collect();
                core(cwtm(&own, &msgs, b))
            })
            .collect::<Result<_, _>>()?;
        let alpha = 1.0 / (m - 2 * b + 1) as f64;
        let beta = alpha / (4 * b) as f64;
        for k in 0..D {
            let y = core(build_mixing_matrix(&states, &inbox, &set, b, k, |_| {
                TieBreak::SmallestId
            }))?;
            let yw = &y * states.column(k);
            for j in 0..m {
                worst_eq = worst_eq.max((yw[j] - outputs[j][k]).abs());
                worst_sum = worst_sum.max((y.row(j).sum() - 1.0).abs());
                nonzero_bad += set
                    .compromised_sources(j)
                    .iter()
                    .filter(|&&i| y[(j, i)] != 0.0)
                    .count();
                let honest = g.in_degree(j) - set.incoming_count(j);
                let big = y.row(j).iter().filter(|&&w| w >= beta).count();
                if big + b < honest + 1 {
                    beta_bad += 1;
                }
            }
        }
    }
    let passed = worst_eq <= 1e-10 && worst_sum <= 1e-12 && nonzero_bad == 0 && beta_bad == 0;
    Ok((
        passed,
        format!(
            "{ROUNDS} rounds: max |Yw - cwtm| = {worst_eq:.2e}, max |row sum - 1| = {worst_sum:.2e}, \
             weight on attacked links {nonzero_bad}, rows short of beta entries {beta_bad}"
        ),
    ))
}

fn golden_rows() -> Result<(bool, String), String> {
    // A=0, B=1, C=2, D=3, E=4
    let truth = [1.0, 4.0, 3.0, 2.0, 5.0];
    let at_a = [(1, 3.0), (2, 3.0), (3, 2.0), (4, 5.0)];
    let at_b = [(0, 10.0), (2, 3.0), (3, 2.0)];
    let row_a = core(build_mixing_row_oracle(
        0,
        0,
        truth[0],
        &at_a,
        &truth,
        &[1],
        1,
        TieBreak::SmallestId,
    ))?;
    let row_b = core(build_mixing_row_oracle(
        1,
        0,
        truth[1],
        &at_b,
        &truth,
        &[0],
        1,
        TieBreak::SmallestId,
    ))?;
    let want_a = [1.0 / 3.0, 0.0, 1.0 / 6.0, 1.0 / 3.0, 1.0 / 6.0];
    let want_b = [0.0, 0.5, 0.5, 0.0, 0.0];
    let err = |got: &[f64], want: &[f64]| {
        got.iter()
            .zip(want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let (ea, eb) = (err(&row_a.weights, &want_a), err(&row_b.weights, &want_b));
    Ok((
        ea <= 1e-12 && eb <= 1e-12,
        format!(
            "row A {:?} (err {ea:.1e}), row B {:?} (err {eb:.1e})",
            fmt_row(&row_a.weights),
            fmt_row(&row_b.weights)
        ),
    ))
}

fn fmt_row(r: &[f64]) -> Vec<String> {
    r.iter().map(|v| format!("{v:.4}")).collect()
}

fn geometric_mixing() -> Result<(bool, String), String> {
    const ROUNDS: usize = 200;
    let (m, b) = (5, 1);
    let g = core(DirectedGraph::complete(m))?;
    let objs = core(make_quadratic(&vec![vec![0.0]; m], 0.0))?;
    // one block longer than the run: rounds 0..200 are all consensus rounds
    let mut cfg = RunConfig::new(
        g.clone(),
        b,
        ROUNDS + 1,
        StepSchedule::Constant(0.1),
        ROUNDS,
        11,
    );
    cfg.t_max = ROUNDS + 1;
    cfg.attack = core(AttackPlan::dynamic(
        3,
        AttackStrategy::RandomValue { range: 100.0 },
        11,
    ))?;
    cfg.recording = Recording::Full;
    let traj = core(run_resist(&cfg, &objs))?;
    let rounds = &traj.mixing.as_ref().ok_or("no mixing record")?.rounds;
    let ys: Vec<DMatrix<f64>> = rounds
        .iter()
        .take(ROUNDS)
        .map(|(_, y)| y[0].clone())
        .collect();
    if ys.len() != ROUNDS {
        return Err(format!("recorded {} rounds", ys.len()));
    }
    let tau = core(count_tau(&g, b))?;
    let rep = core(verify_geometric_mixing(&ys, core(beta(m, b))?, &tau, m))?;
    let slope = rep.fitted_rate.unwrap_or(f64::NAN);
    let r2 = rep.fit_r2.unwrap_or(f64::NAN);
    let passed =
        rep.monotone && rep.final_delta < 1e-8 && slope < 0.0 && r2 > 0.95 && rep.bound_holds;
    Ok((
        passed,
        format!(
            "monotone {}, delta(200) = {:.2e}, slope {slope:.3} (r2 {r2:.3}), bound holds {} (tau = {tau}, vacuous below t = {})",
            rep.monotone,
            rep.final_delta,
            rep.bound_holds,
            &tau * m
        ),
    ))
}

fn metrics_for(
    traj: &Trajectory,
    objs: &[SharedObjective],
    w_star: &[f64],
    f_star: f64,
) -> Result<MetricsLog, String> {
    core(compute_metrics(
        traj,
        objs,
        w_star,
        f_star,
        Weights::default(),
        false,
    ))
}

fn exact_convergence() -> Result<(bool, String), String> {
    const S: usize = 500;
    let (m, j, h) = (10, 11, 0.1);
    let target = vec![1.0, -1.0];
    let objs = core(make_quadratic(&vec![target.clone(); m], 0.0))?;
    let g = core(DirectedGraph::complete(m))?;
    // extra blocks so the consensus vector at s = 500 is available
    let mut cfg = RunConfig::new(g, 1, j, StepSchedule::Constant(h), j * (S + 30), 4);
    cfg.attack = core(AttackPlan::dynamic(
        5,
        AttackStrategy::RandomValue { range: 100.0 },
        4,
    ))?;
    cfg.recording = Recording::Blocks;
    let traj = core(run_resist(&cfg, &objs))?;
    let log = metrics_for(&traj, &objs, &target, 0.0)?;
    let xi6 = log.series(|r| r.xi6);
    let at = *xi6.get(S).ok_or("metrics stop before s = 500")?;
    let fit_end = xi6.iter().position(|&v| v < 1e-9).unwrap_or(xi6.len());
    let fit = fit_geometric_rate(&xi6[..fit_end], 1).ok_or("no rate fit")?;
    let want = (1.0 - h).ln();
    let rel = (fit.slope - want).abs() / want.abs();
    Ok((
        at < 1e-8 && rel <= 0.25,
        format!(
            "xi6(500) = {at:.2e}, slope {:.4} vs ln(1 - h) = {want:.4} ({:.1}% off, fit over s < {fit_end})",
            fit.slope,
            100.0 * rel
        ),
    ))
}

fn heterogeneous_quadratics(m: usize, seed: u64) -> resist_core::Result<Vec<SharedObjective>> {
    let mut rng = substream(seed, Stream::Data, &[7]);
    let t: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    make_quadratic(&t, 0.0)
}

fn consensus_ball() -> Result<(bool, String), String> {
    let (m, j, h, steps) = (10, 3, 0.1, 300);
    let ratios: Vec<f64> = (0..5u64)
        .into_par_iter()
        .map(|seed| -> Result<f64, String> {
            let objs = core(heterogeneous_quadratics(m, seed))?;
            let (w_star, f_star) = core(centralized_solve(&objs, SolveMethod::Auto))?;
            let tail = |h: f64| -> Result<f64, String> {
                let g = core(DirectedGraph::complete(m))?;
                let mut cfg = RunConfig::new(g, 1, j, StepSchedule::Constant(h), j * steps, seed);
                cfg.attack = core(AttackPlan::dynamic(
                    5,
                    AttackStrategy::RandomValue { range: 100.0 },
                    seed,
                ))?;
                cfg.recording = Recording::Blocks;
                let traj = core(run_resist(&cfg, &objs))?;
                let log = metrics_for(&traj, &objs, &w_star, f_star)?;
                tail_mean(&log.series(|r| r.xi1_max())).ok_or_else(|| "empty metrics".to_string())
            };
            Ok(tail(h)? / tail(h / 2.0)?)
        })
        .collect::<Result<_, _>>()?;
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok((
        (1.5..=2.6).contains(&mean),
        format!(
            "mean xi1 ratio h vs h/2 = {mean:.3} over 5 seeds {:?}",
            fmt_row(&ratios)
        ),
    ))
}

fn resist_vs_dgd() -> Result<(bool, String), String> {
    let (m, j, h, steps) = (10, 4, 0.05, 300);
    let t: Vec<Vec<f64>> = (0..m).map(|i| vec![i as f64, -(i as f64) * 0.5]).collect();
    let objs = core(make_quadratic(&t, 0.0))?;
    let (w_star, _) = core(centralized_solve(&objs, SolveMethod::Auto))?;
    let g = core(DirectedGraph::complete(m))?;
    let clean = RunConfig::new(g.clone(), 1, j, StepSchedule::Constant(h), j * steps, 1);
    let mut hit = clean.clone();
    hit.attack = core(AttackPlan::fixed(
        vec![(0, 1)],
        AttackStrategy::RandomValue { range: 100.0 },
        1,
        &g,
        1,
    ))?;
    let dist = |tr: Trajectory| distance_to_optimum(&tr.final_state, &w_star);
    let dgd_clean = dist(core(run_dgd_multistep(&clean, &objs))?);
    let dgd_hit = dist(core(run_dgd_multistep(&hit, &objs))?);
    let res_clean = dist(core(run_resist(&clean, &objs))?);
    let res_hit = dist(core(run_resist(&hit, &objs))?);
    Ok((
        dgd_hit > 10.0 * dgd_clean && res_hit <= 3.0 * res_clean,
        format!(
            "averaging {dgd_clean:.3e} -> {dgd_hit:.3e} ({:.1}x), screening {res_clean:.3e} -> {res_hit:.3e} ({:.2}x)",
            dgd_hit / dgd_clean,
            res_hit / res_clean
        ),
    ))
}

fn byzantine_mapping() -> Result<(bool, String), String> {
    const ROUNDS: usize = 300;
    let m = 7;
    let bad = 3;
    let g = core(DirectedGraph::complete(m))?;
    let t: Vec<Vec<f64>> = (0..m).map(|i| vec![i as f64, -(i as f64) * 0.5]).collect();
    let objs = core(make_quadratic(&t, 0.0))?;
    let strategy = AttackStrategy::RandomValue { range: 40.0 };
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for seed in 0..3u64 {
        let mut node_level =
            RunConfig::new(g.clone(), 1, 4, StepSchedule::Constant(0.1), ROUNDS, seed);
        node_level.stride = 1;
        node_level.byzantine = Some(ByzantineNodes {
            nodes: vec![bad],
            strategy: strategy.clone(),
            seed: 100 + seed,
        });
        let mut mapped = node_level.clone();
        mapped.byzantine = None;
        mapped.attack = core(map_byzantine(&[bad], &g, 1, strategy.clone(), 100 + seed))?;
        let a = core(run_resist(&node_level, &objs))?;
        let b = core(run_resist(&mapped, &objs))?;
        if a.snapshots.len() != b.snapshots.len() {
            return Ok((false, "snapshot counts differ".into()));
        }
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            for j in (0..m).filter(|&j| j != bad) {
                for k in 0..2 {
                    worst = worst.max((sa.1[(j, k)] - sb.1[(j, k)]).abs());
                }
            }
            compared += 1;
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max regular-node difference {worst:.1e} over {compared} snapshots, 3 seeds"),
    ))
}

fn pl_decay() -> Result<(bool, String), String> {
    let (m, j, h, steps) = (5, 5, 0.1, 300);
    let f = make_pl_sine();
    let objs = vec![f.clone(); m];
    let mu = estimate_pl_constant(f.as_ref(), 0.0, -2.0, 6.0, 161, 1e-6);
    let l = estimate_smoothness(f.as_ref(), -2.0, 6.0, 161);
    let g = core(DirectedGraph::complete(m))?;
    let mut cfg = RunConfig::new(g, 1, j, StepSchedule::Constant(h), j * steps, 8);
    cfg.attack = core(AttackPlan::dynamic(
        2,
        AttackStrategy::RandomValue { range: 100.0 },
        8,
    ))?;
    cfg.recording = Recording::Blocks;
    let traj = core(run_resist(&cfg, &objs))?;
    let log = metrics_for(&traj, &objs, &[0.0, 0.0], 0.0)?;
    let gap = log.series(|r| r.fgap);
    let last = gap.last().copied().ok_or("empty metrics")?;
    let fit_end = gap.iter().position(|&v| v < 1e-20).unwrap_or(gap.len());
    let fit = fit_geometric_rate(&gap[..fit_end], 1).ok_or("no rate fit")?;
    let bound = (1.0 - mu * h * (2.0 - l * h)).ln();
    Ok((
        last < 1e-6 && fit.slope <= 0.75 * bound,
        format!(
            "final gap {last:.2e}, slope {:.4} vs bound {:.4} with slack (mu = {mu:.4}, L = {l:.3})",
            fit.slope,
            0.75 * bound
        ),
    ))
}

fn nonconvex_rate() -> Result<(bool, String), String> {
    let (m, j, omega) = (5, 5, 0.6);
    let (s_lo, s_hi) = (100, 400);
    let pair = make_pl_sum_counterexample();
    let l = estimate_smoothness(pair.as_ref(), -2.0, 6.0, 161);
    let objs = vec![pair.clone(); m];
    let found = find_near_stationary(pair.as_ref(), -2.0, 6.0, 161);
    let f_star = found.first().ok_or("no stationary point found")?.value;
    let g = core(DirectedGraph::complete(m))?;
    let schedule = StepSchedule::Diminishing {
        p: 1.0 / (2.0 * l),
        omega,
    };
    let mut cfg = RunConfig::new(g, 1, j, schedule, j * (s_hi + 20), 3);
    cfg.attack = core(AttackPlan::dynamic(
        2,
        AttackStrategy::RandomValue { range: 100.0 },
        3,
    ))?;
    cfg.recording = Recording::Blocks;
    let traj = core(run_resist(&cfg, &objs))?;
    let log = metrics_for(&traj, &objs, &[0.0, 0.0], f_star)?;
    let mg = log.series(|r| r.min_gradnorm2);
    if mg.len() <= s_hi {
        return Err("metrics stop before s = 400".into());
    }
    let ratio = mg[s_hi] / mg[s_lo];
    let xs: Vec<f64> = (1..=s_hi).map(|s| s as f64).collect();
    let fit = fit_loglog(&xs, &mg[1..=s_hi]).ok_or("no log-log fit")?;
    // omega = 1/2 + eps, so the expected exponent is -(1/2 - eps)
    let target = -(1.0 - omega);
    let ok_exp = (fit.slope - target).abs() <= 0.5 * target.abs();
    Ok((
        ratio <= 0.5 && ok_exp,
        format!(
            "min |grad|^2 ratio S=400/S=100 = {ratio:.3}, log-log exponent {:.3} vs {target:.2} +- 50% (L = {l:.3})",
            fit.slope
        ),
    ))
}

fn pl_counterexample() -> Result<(bool, String), String> {
    let pair = make_pl_sum_counterexample();
    let found = find_near_stationary(pair.as_ref(), -2.0, 6.0, 161);
    let global = found.first().ok_or("no stationary point found")?;
    let cert = found
        .iter()
        .find(|p| p.grad_norm < 1e-3 && p.value - global.value > 0.05);
    Ok(match cert {
        Some(c) => {
            let gap = c.value - global.value;
            let falsified = 0.5 * c.grad_norm * c.grad_norm < 1e-4 * gap;
            (
                falsified,
                format!(
                    "point ({:.4}, {:.4}) with |grad| = {:.1e}, gap {gap:.4} above min {:.4}",
                    c.point[0], c.point[1], c.grad_norm, global.value
                ),
            )
        }
        None => (
            false,
            format!("no certificate among {} stationary points", found.len()),
        ),
    })
}

fn logistic_tail_xi6(per_node: usize, seed: u64) -> Result<f64, String> {
    let (m, classes, j, h, steps) = (10, 3, 3, 0.5, 300);
    let spec = BlobSpec {
        classes,
        dim: 2,
        samples_per_class: per_node * m / classes,
        separation: 1.0,
        spread: 1.0,
    };
    let data = core(gaussian_blobs(&spec, seed))?;
    let part = core(partition_data(&data, m, PartitionMode::Iid, seed))?;
    let objs = core(local_logistic(&data, &part, 0.1, &[]))?;
    let (w_star, f_star) = core(centralized_solve(&objs, SolveMethod::Auto))?;
    let g = core(DirectedGraph::complete(m))?;
    let mut cfg = RunConfig::new(g, 1, j, StepSchedule::Constant(h), j * steps, seed);
    cfg.attack = core(AttackPlan::dynamic(
        5,
        AttackStrategy::RandomValue { range: 100.0 },
        seed,
    ))?;
    cfg.recording = Recording::Blocks;
    let traj = core(run_resist(&cfg, &objs))?;
    let log = metrics_for(&traj, &objs, &w_star, f_star)?;
    tail_mean(&log.series(|r| r.xi6)).ok_or_else(|| "empty metrics".into())
}

fn sample_scaling() -> Result<(bool, String), String> {
    let n = 60;
    let ratios: Vec<f64> = (0..10u64)
        .into_par_iter()
        .map(|seed| Ok(logistic_tail_xi6(n, seed)? / logistic_tail_xi6(4 * n, seed)?))
        .collect::<Result<_, String>>()?;
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok((
        (1.4..=2.8).contains(&mean),
        format!(
            "mean tail xi6 ratio N={n} vs N={} = {mean:.3} over 10 seeds",
            4 * n
        ),
    ))
}

static SCRATCH: AtomicUsize = AtomicUsize::new(0);

struct ScratchDir(PathBuf);

impl ScratchDir {
    fn new() -> std::io::Result<Self> {
        let n = SCRATCH.fetch_add(1, Ordering::Relaxed);
        let p = std::env::temp_dir().join(format!("resist-acceptance-{}-{n}", std::process::id()));
        if p.exists() {
            std::fs::remove_dir_all(&p)?;
        }
        std::fs::create_dir_all(&p)?;
        Ok(Self(p))
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

const DETERMINISM_SUITE: &str = r#"
[suite]
mode = "resist_vs_dgd"
seeds = [5, 6]

[run.quad]
graph = { kind = "erdos_renyi", nodes = 8, rho = 0.9 }
b = 1
j = 3
t_max = 240
tie = "seeded"
step = { kind = "constant", h = 0.1 }
attack = { kind = "dynamic", count = 3, strategy = "random" }
objective = { kind = "quadratic", targets = "random", dim = 2 }
dump_phi = true
"#;

fn determinism() -> Result<(bool, String), String> {
    let suite = parse_suite(DETERMINISM_SUITE).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for parallel in [Some(1), Some(4)] {
        let dir = ScratchDir::new().map_err(|e| e.to_string())?;
        let opts = SuiteOptions {
            out: dir.0.clone(),
            parallel,
            ..Default::default()
        };
        let rep = run_suite(&suite, &opts).map_err(|e| e.to_string())?;
        let mut files: Vec<PathBuf> = rep.metric_files.into_iter().chain(rep.phi_files).collect();
        files.push(rep.summary);
        let mut bytes = Vec::new();
        for f in &files {
            let name = f
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            bytes.push((name, std::fs::read(f).map_err(|e| e.to_string())?));
        }
        outputs.push(bytes);
    }
    let same = outputs[0] == outputs[1];
    let total: usize = outputs[0].iter().map(|(_, b)| b.len()).sum();
    Ok((
        same,
        format!(
            "{} files, {total} bytes, identical across repeats: {same}",
            outputs[0].len()
        ),
    ))
}
