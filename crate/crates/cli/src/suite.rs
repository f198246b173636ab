//! Seeded experiment suites: expand configs into jobs, run them, write CSVs.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use resist_core::graph::{
    count_tau, verify_sufficient_connectivity, ConnectivityMode, ConnectivityReport,
};
use resist_core::metrics::{compute_metrics, MetricsLog, Weights};
use resist_core::mixing::{delta_ergodicity, transition_product};
use resist_core::runner::{run_dgd_multistep, run_resist, Recording, Trajectory};
use resist_core::stats::mean_std;

use crate::config::{BuiltRun, ComparisonMode, RunSpec, SuiteFile};
use crate::error::{SimError, SimResult};

/// Filtered graphs checked when `tau` is too large to enumerate.
pub const SAMPLED_GRAPH_BUDGET: u64 = 2_000;

pub const METRICS_HEADER: &str =
    "s,t,xi1_max,xi5_max,xi6,fgap,gradnorm2,min_gradnorm2,frob_triplet";
pub const SUMMARY_HEADER: &str = "run,variant,metric,mean,stddev,count";

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub out: PathBuf,
    /// Replaces the seed list of the suite file.
    pub seeds: Option<Vec<u64>>,
    /// Worker threads; `None` uses rayon's default.
    pub parallel: Option<usize>,
    /// Directory that relative paths in the config resolve against.
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Algo {
    Resist,
    Dgd,
}

struct Job {
    run: String,
    variant: &'static str,
    seed: u64,
    algo: Algo,
    spec: RunSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub metric_files: Vec<PathBuf>,
    pub phi_files: Vec<PathBuf>,
    pub summary: PathBuf,
}

fn variants(spec: &RunSpec, mode: ComparisonMode) -> SimResult<Vec<(&'static str, Algo, RunSpec)>> {
    Ok(match mode {
        ComparisonMode::Single => vec![("resist", Algo::Resist, spec.clone())],
        ComparisonMode::ResistVsDgd => vec![
            ("resist", Algo::Resist, spec.clone()),
            ("dgd", Algo::Dgd, spec.clone()),
        ],
        ComparisonMode::HVsHalf => {
            let mut half = spec.clone();
            half.step = spec.step.halved()?;
            vec![
                ("h", Algo::Resist, spec.clone()),
                ("h_half", Algo::Resist, half),
            ]
        }
        ComparisonMode::NVs4n => {
            let mut big = spec.clone();
            big.objective = spec.objective.quadrupled()?;
            vec![("n", Algo::Resist, spec.clone()), ("n4", Algo::Resist, big)]
        }
    })
}

fn expand(suite: &SuiteFile, seeds: &[u64]) -> SimResult<Vec<Job>> {
    let mut jobs = Vec::new();
    for (name, spec) in &suite.run {
        let vs = variants(spec, suite.suite.mode)
            .map_err(|e| SimError::Config(format!("run {name}: {e}")))?;
        for (variant, algo, spec) in vs {
            for &seed in seeds {
                jobs.push(Job {
                    run: name.clone(),
                    variant,
                    seed,
                    algo,
                    spec: spec.clone(),
                });
            }
        }
    }
    Ok(jobs)
}

/// Create `dir/stem.ext`, or `dir/stem_1.ext`, `dir/stem_2.ext`, ... if taken.
pub fn create_unique(dir: &Path, stem: &str, ext: &str) -> SimResult<(PathBuf, File)> {
    for i in 0u32.. {
        let name = if i == 0 {
            format!("{stem}.{ext}")
        } else {
            format!("{stem}_{i}.{ext}")
        };
        let path = dir.join(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => return Ok((path, f)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(SimError::io(&path, e)),
        }
    }
    unreachable!()
}

fn write_file(dir: &Path, stem: &str, ext: &str, body: &str) -> SimResult<PathBuf> {
    let (path, mut f) = create_unique(dir, stem, ext)?;
    f.write_all(body.as_bytes())
        .map_err(|e| SimError::io(&path, e))?;
    Ok(path)
}

pub fn metrics_csv(log: &MetricsLog) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in &log.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.s,
            r.t,
            r.xi1_max(),
            r.xi5_max(),
            r.xi6,
            r.fgap,
            r.gradnorm2,
            r.min_gradnorm2,
            r.frob_triplet
        );
    }
    out
}

/// Prefix products of the coordinate-0 blocks, long format.
pub fn phi_csv(traj: &Trajectory) -> resist_core::Result<String> {
    let mut out = String::from("s,delta,row,col,value\n");
    let Some(rec) = traj.mixing.as_ref() else {
        return Ok(out);
    };
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(rec.blocks.len());
    for (s, b) in rec.blocks.iter().enumerate() {
        blocks.push(b[0].clone());
        let phi = transition_product(&blocks)?.matrix;
        let delta = delta_ergodicity(&phi)?;
        for i in 0..phi.nrows() {
            for j in 0..phi.ncols() {
                let _ = writeln!(out, "{s},{delta},{i},{j},{}", phi[(i, j)]);
            }
        }
    }
    Ok(out)
}

/// `||W - 1 w*^T||_F` of the final state.
pub fn distance_to_optimum(w: &DMatrix<f64>, w_star: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..w.nrows() {
        for (k, ws) in w_star.iter().enumerate() {
            acc += (w[(i, k)] - ws).powi(2);
        }
    }
    acc.sqrt()
}

/// Terminal and tail-averaged metrics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub values: Vec<(&'static str, f64)>,
}

/// Mean over the last quarter of a series.
pub fn tail_mean(series: &[f64]) -> Option<f64> {
    if series.is_empty() {
        return None;
    }
    let start = series.len() - series.len().div_ceil(4);
    let tail = &series[start..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

fn summarize(log: &MetricsLog, traj: &Trajectory, w_star: &[f64]) -> RunSummary {
    let mut values = vec![(
        "final_dist_to_opt",
        distance_to_optimum(&traj.final_state, w_star),
    )];
    if let Some(last) = log.rows.last() {
        values.extend([
            ("final_xi1_max", last.xi1_max()),
            ("final_xi5_max", last.xi5_max()),
            ("final_xi6", last.xi6),
            ("final_fgap", last.fgap),
            ("final_min_gradnorm2", last.min_gradnorm2),
        ]);
    }
    if let Some(v) = tail_mean(&log.series(|r| r.xi1_max())) {
        values.push(("tail_xi1_max", v));
    }
    if let Some(v) = tail_mean(&log.series(|r| r.xi6)) {
        values.push(("tail_xi6", v));
    }
    if let Some(h) = &log.heterogeneity {
        values.push(("delta_heterogeneity", h.delta));
        values.push(("c0_estimate", h.c0_estimate));
    }
    RunSummary { values }
}

struct JobOutput {
    csv: String,
    phi: Option<String>,
    summary: RunSummary,
}

fn execute(job: &Job, built: &BuiltRun, tol: f64) -> resist_core::Result<JobOutput> {
    let traj = match job.algo {
        Algo::Resist => run_resist(&built.config, &built.objectives)?,
        Algo::Dgd => run_dgd_multistep(&built.config, &built.objectives)?,
    };
    let weights = if traj.mixing.is_some() {
        Weights::Estimated { tol }
    } else {
        Weights::Uniform
    };
    let log = compute_metrics(
        &traj,
        &built.objectives,
        &built.w_star,
        built.f_star,
        weights,
        false,
    )?;
    if log.truncated > 0 {
        log::info!(
            "{}/{} seed {}: last {} steps lack a consensus vector",
            job.run,
            job.variant,
            job.seed,
            log.truncated
        );
    }
    let phi = if job.spec.dump_phi {
        Some(phi_csv(&traj)?)
    } else {
        None
    };
    Ok(JobOutput {
        csv: metrics_csv(&log),
        phi,
        summary: summarize(&log, &traj, &built.w_star),
    })
}

fn build_job(job: &Job, base: &Path) -> SimResult<BuiltRun> {
    let mut built = job.spec.build(&job.run, job.seed, base)?;
    if job.algo == Algo::Dgd && built.config.attack.links_per_round() > 0 {
        built.config.recording = Recording::Off;
    }
    Ok(built)
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> SimResult<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SimError::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Summary table over seeds, one row per `(run, variant, metric)`.
pub fn summary_csv(rows: &[(String, &'static str, RunSummary)]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    let mut i = 0;
    while i < rows.len() {
        let (run, variant) = (&rows[i].0, rows[i].1);
        let mut j = i;
        while j < rows.len() && rows[j].0 == *run && rows[j].1 == variant {
            j += 1;
        }
        let mut metrics: Vec<&'static str> = Vec::new();
        for (_, _, s) in &rows[i..j] {
            for (m, _) in &s.values {
                if !metrics.contains(m) {
                    metrics.push(m);
                }
            }
        }
        for m in metrics {
            let vals: Vec<f64> = rows[i..j]
                .iter()
                .filter_map(|(_, _, s)| s.values.iter().find(|(n, _)| *n == m).map(|(_, v)| *v))
                .collect();
            let (mean, std) = mean_std(&vals);
            let _ = writeln!(out, "{run},{variant},{m},{mean},{std},{}", vals.len());
        }
        i = j;
    }
    out
}

/// Validate every job, run them, and write one metrics CSV per job plus
/// `summary.csv`. Existing files are never overwritten.
pub fn run_suite(suite: &SuiteFile, opts: &SuiteOptions) -> SimResult<SuiteReport> {
    let seeds = opts
        .seeds
        .clone()
        .unwrap_or_else(|| suite.suite.seeds.clone());
    if seeds.is_empty() && !suite.run.is_empty() {
        return Err(SimError::Config("no seeds given".into()));
    }
    if !(suite.suite.consensus_tol > 0.0 && suite.suite.consensus_tol < 1.0) {
        return Err(SimError::Config("consensus_tol must lie in (0, 1)".into()));
    }
    let jobs = expand(suite, &seeds)?;
    let base = opts.base_dir.as_path();
    let built: Vec<SimResult<BuiltRun>> = in_pool(opts.parallel, || {
        jobs.par_iter().map(|j| build_job(j, base)).collect()
    })?;
    let built: Vec<BuiltRun> = built.into_iter().collect::<SimResult<_>>()?;
    log::info!("validated {} jobs", jobs.len());

    fs::create_dir_all(&opts.out).map_err(|e| SimError::io(&opts.out, e))?;
    let tol = suite.suite.consensus_tol;
    let outputs: Vec<resist_core::Result<JobOutput>> = in_pool(opts.parallel, || {
        jobs.par_iter()
            .zip(built.par_iter())
            .map(|(j, b)| execute(j, b, tol))
            .collect()
    })?;

    let mut report = SuiteReport {
        metric_files: Vec::new(),
        phi_files: Vec::new(),
        summary: PathBuf::new(),
    };
    let mut rows = Vec::new();
    let mut first_failure = None;
    for (job, out) in jobs.iter().zip(outputs) {
        let stem = format!("{}_{}_seed{}", job.run, job.variant, job.seed);
        match out {
            Ok(o) => {
                report
                    .metric_files
                    .push(write_file(&opts.out, &stem, "csv", &o.csv)?);
                if let Some(phi) = o.phi {
                    report.phi_files.push(write_file(
                        &opts.out,
                        &format!("{stem}_phi"),
                        "csv",
                        &phi,
                    )?);
                }
                rows.push((job.run.clone(), job.variant, o.summary));
            }
            Err(source) => {
                log::error!("{stem}: {source}");
                first_failure.get_or_insert(SimError::Run {
                    run: format!("{}/{}", job.run, job.variant),
                    seed: job.seed,
                    source,
                });
            }
        }
    }
    report.summary = write_file(&opts.out, "summary", "csv", &summary_csv(&rows))?;
    match first_failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphCheck {
    pub run: String,
    pub seed: u64,
    pub nodes: usize,
    pub edges: usize,
    pub report: ConnectivityReport,
}

/// Connectivity report for the graph of every run at the first seed.
pub fn check_graphs(
    suite: &SuiteFile,
    base: &Path,
    seeds: Option<&[u64]>,
) -> SimResult<Vec<GraphCheck>> {
    let seed = seeds
        .and_then(|s| s.first().copied())
        .or_else(|| suite.suite.seeds.first().copied())
        .unwrap_or(0);
    let mut out = Vec::new();
    for (name, spec) in &suite.run {
        let g = spec.graph.build(seed, base)?;
        let err = |e: resist_core::Error| SimError::Config(format!("run {name}: {e}"));
        let tau = count_tau(&g, spec.b).map_err(err)?;
        let mode = ConnectivityMode::auto(&tau);
        let budget = match mode {
            ConnectivityMode::Exhaustive => resist_core::graph::EXHAUSTIVE_DEFAULT_LIMIT,
            ConnectivityMode::Sampled => SAMPLED_GRAPH_BUDGET,
        };
        let report = verify_sufficient_connectivity(&g, spec.b, mode, budget, seed).map_err(err)?;
        out.push(GraphCheck {
            run: name.clone(),
            seed,
            nodes: g.node_count(),
            edges: g.edge_count(),
            report,
        });
    }
    Ok(out)
}
