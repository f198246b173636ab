//! Error sequences and rate fits computed from trajectories.
//!
//! `xi5_k` is the distance of coordinate `k` from its plain average, `xi1_k`
//! the distance from its consensus-weighted average and `xi6` the distance
//! of the consensus-weighted average `w_hat` from the optimum.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::mixing::{estimate_consensus_vector, ConsensusEstimate, CONSENSUS_TOL};
use crate::objectives::{centralized_solve, Average, SharedObjective, SolveMethod};
use crate::runner::Trajectory;
use crate::stats::linear_fit_r2;

fn column_norm_from(w: &DMatrix<f64>, k: usize, center: f64) -> f64 {
    libm::sqrt(
        w.column(k)
            .iter()
            .map(|v| (v - center) * (v - center))
            .sum(),
    )
}

/// `|(1 1^T / M) W_k - W_k|`.
pub fn compute_xi5(w: &DMatrix<f64>, k: usize) -> f64 {
    let mean = w.column(k).sum() / w.nrows() as f64;
    column_norm_from(w, k, mean)
}

/// `c_k^T W_k` for every coordinate.
pub fn compute_what(w: &DMatrix<f64>, chat: &[Vec<f64>]) -> Vec<f64> {
    (0..w.ncols())
        .map(|k| w.column(k).iter().zip(&chat[k]).map(|(v, c)| v * c).sum())
        .collect()
}

/// `|1 c_k^T W_k - W_k|`.
pub fn compute_xi1(w: &DMatrix<f64>, chat_k: &[f64], k: usize) -> f64 {
    let center: f64 = w.column(k).iter().zip(chat_k).map(|(v, c)| v * c).sum();
    column_norm_from(w, k, center)
}

/// `|w_star - w_hat|`.
pub fn compute_xi6(what: &[f64], w_star: &[f64]) -> f64 {
    libm::sqrt(
        what.iter()
            .zip(w_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum(),
    )
}

/// `|W - W_bar|_F + |W_star - W_hat|_F + |W - W_hat|_F`, with every row of
/// `W_bar`, `W_star` and `W_hat` equal to the mean, `w_star` and `w_hat`.
pub fn frobenius_triplet(w: &DMatrix<f64>, what: &[f64], w_star: &[f64]) -> f64 {
    let m = w.nrows();
    let d = w.ncols();
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for k in 0..d {
        let mean = w.column(k).sum() / m as f64;
        for j in 0..m {
            let v = w[(j, k)];
            a += (v - mean) * (v - mean);
            b += (w_star[k] - what[k]) * (w_star[k] - what[k]);
            c += (v - what[k]) * (v - what[k]);
        }
    }
    libm::sqrt(a) + libm::sqrt(b) + libm::sqrt(c)
}

/// The same triplet rebuilt from the error sequences.
pub fn triplet_from_xi(xi5: &[f64], xi1: &[f64], xi6: f64, m: usize) -> f64 {
    let sq = |v: &[f64]| libm::sqrt(v.iter().map(|x| x * x).sum());
    sq(xi5) + libm::sqrt(m as f64) * xi6 + sq(xi1)
}

/// `sum_k |grad_k f(w) - sum_i c_k[i] grad_k f_i(w)|`.
pub fn c0_term(objectives: &[SharedObjective], w: &[f64], chat: &[Vec<f64>]) -> f64 {
    let avg = Average(objectives).grad(w);
    let grads: Vec<Vec<f64>> = objectives.iter().map(|o| o.grad(w)).collect();
    (0..w.len())
        .map(|k| {
            let weighted: f64 = grads.iter().zip(&chat[k]).map(|(g, c)| c * g[k]).sum();
            (avg[k] - weighted).abs()
        })
        .sum()
}

/// Heterogeneity residuals of a set of local objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heterogeneity {
    /// `sum_i |w_star - w_i_star|`.
    pub delta: f64,
    /// Largest [`c0_term`] over the visited points; an estimate, not a supremum.
    pub c0_estimate: f64,
}

/// `visits` holds `(w_hat(s), c(s + 1))` pairs along a trajectory.
pub fn compute_heterogeneity(
    objectives: &[SharedObjective],
    w_star: &[f64],
    visits: &[(Vec<f64>, Vec<Vec<f64>>)],
) -> Result<Heterogeneity> {
    let mut delta = 0.0;
    for o in objectives {
        let (wi, _) = centralized_solve(core::slice::from_ref(o), SolveMethod::Auto)?;
        delta += compute_xi6(&wi, w_star);
    }
    let c0_estimate = visits
        .iter()
        .map(|(w, c)| c0_term(objectives, w, c))
        .fold(0.0, f64::max);
    Ok(Heterogeneity { delta, c0_estimate })
}

/// Least-squares fit of `ln(series)` against the index, after `burn_in`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub r2: f64,
}

/// `None` when fewer than two points remain or any remaining value is not
/// positive.
pub fn fit_geometric_rate(series: &[f64], burn_in: usize) -> Option<RateFit> {
    let tail = series.get(burn_in..)?;
    if tail
        .iter()
        .any(|&v| v.is_nan() || v <= 0.0 || !v.is_finite())
    {
        return None;
    }
    let xs: Vec<f64> = (burn_in..series.len()).map(|s| s as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|v| libm::log(*v)).collect();
    linear_fit_r2(&xs, &ys).map(|(slope, _, r2)| RateFit { slope, r2 })
}

/// Slope of `ln y` against `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<RateFit> {
    if xs.iter().chain(ys).any(|&v| v.is_nan() || v <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| libm::log(*v)).collect();
    let ly: Vec<f64> = ys.iter().map(|v| libm::log(*v)).collect();
    linear_fit_r2(&lx, &ly).map(|(slope, _, r2)| RateFit { slope, r2 })
}

/// Where the consensus weights come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weights {
    /// From recorded block products, multiplied until `delta < tol`.
    Estimated { tol: f64 },
    /// `1/M` everywhere; use for runs without recorded matrices.
    Uniform,
}

impl Default for Weights {
    fn default() -> Self {
        Weights::Estimated { tol: CONSENSUS_TOL }
    }
}

/// Consensus vectors `c_k(s)` per gradient step, `None` where the recorded
/// tail was too short.
pub fn consensus_vectors(
    traj: &Trajectory,
    weights: Weights,
) -> Result<Vec<Option<Vec<Vec<f64>>>>> {
    let m = traj.final_state.nrows();
    let d = traj.final_state.ncols();
    let steps = traj.states.len();
    let tol = match weights {
        Weights::Uniform => return Ok(vec![Some(vec![vec![1.0 / m as f64; m]; d]); steps]),
        Weights::Estimated { tol } => tol,
    };
    let Some(rec) = traj.mixing.as_ref() else {
        return Ok(vec![None; steps]);
    };
    let mut out = Vec::with_capacity(steps);
    for s in 0..steps {
        let mut per_k = Vec::with_capacity(d);
        for k in 0..d {
            let tail: Vec<DMatrix<f64>> = rec.blocks.iter().skip(s).map(|b| b[k].clone()).collect();
            match estimate_consensus_vector(&tail, tol)? {
                ConsensusEstimate::Converged { c, .. } => per_k.push(c),
                ConsensusEstimate::NotConverged { .. } => break,
            }
        }
        out.push((per_k.len() == d).then_some(per_k));
    }
    Ok(out)
}

/// Metrics at one gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub s: usize,
    pub t: usize,
    pub xi1: Vec<f64>,
    pub xi5: Vec<f64>,
    pub xi6: f64,
    pub fgap: f64,
    pub gradnorm2: f64,
    pub min_gradnorm2: f64,
    pub frob_triplet: f64,
    pub w_hat: Vec<f64>,
}

impl MetricsRow {
    pub fn xi1_max(&self) -> f64 {
        self.xi1.iter().copied().fold(0.0, f64::max)
    }

    pub fn xi5_max(&self) -> f64 {
        self.xi5.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
    /// Gradient steps dropped at the end for lack of a consensus vector.
    pub truncated: usize,
    pub heterogeneity: Option<Heterogeneity>,
}

impl MetricsLog {
    pub fn series<F: Fn(&MetricsRow) -> f64>(&self, f: F) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

/// Metrics for every gradient step that has a consensus vector.
///
/// Rows stop at the first step whose consensus vector is unavailable.
pub fn compute_metrics(
    traj: &Trajectory,
    objectives: &[SharedObjective],
    w_star: &[f64],
    f_star: f64,
    weights: Weights,
    with_heterogeneity: bool,
) -> Result<MetricsLog> {
    let chats = consensus_vectors(traj, weights)?;
    let d = traj.final_state.ncols();
    let avg = Average(objectives);
    let mut rows = Vec::new();
    let mut min_g = f64::INFINITY;
    for (s, w) in traj.states.iter().enumerate() {
        let Some(chat) = chats[s].as_ref() else { break };
        let what = compute_what(w, chat);
        let xi5: Vec<f64> = (0..d).map(|k| compute_xi5(w, k)).collect();
        let xi1: Vec<f64> = (0..d).map(|k| compute_xi1(w, &chat[k], k)).collect();
        let g = avg.grad(&what);
        let gradnorm2: f64 = g.iter().map(|x| x * x).sum();
        min_g = min_g.min(gradnorm2);
        rows.push(MetricsRow {
            s,
            t: s * traj.j,
            xi6: compute_xi6(&what, w_star),
            fgap: avg.eval(&what) - f_star,
            gradnorm2,
            min_gradnorm2: min_g,
            frob_triplet: frobenius_triplet(w, &what, w_star),
            xi1,
            xi5,
            w_hat: what,
        });
    }
    let heterogeneity = if with_heterogeneity {
        let visits: Vec<(Vec<f64>, Vec<Vec<f64>>)> = rows
            .iter()
            .filter_map(|r| {
                chats
                    .get(r.s + 1)
                    .and_then(|c| c.clone())
                    .map(|c| (r.w_hat.clone(), c))
            })
            .collect();
        Some(compute_heterogeneity(objectives, w_star, &visits)?)
    } else {
        None
    };
    Ok(MetricsLog {
        truncated: traj.states.len() - rows.len(),
        rows,
        heterogeneity,
    })
}
