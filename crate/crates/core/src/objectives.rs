//! Local objectives, reference solvers and numerical oracles.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Which convergence regime an objective belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveClass {
    StronglyConvex,
    Pl,
    Nonconvex,
}

/// A differentiable local loss `f_j`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, w: &[f64]) -> f64;
    /// Write the gradient at `w` into `out`.
    fn grad_into(&self, w: &[f64], out: &mut [f64]);
    fn class(&self) -> ObjectiveClass;
    /// Strong-convexity and smoothness constants `(mu, L)` when known.
    fn constants(&self) -> Option<(f64, f64)> {
        None
    }
    /// `(target, l2)` for objectives of the form `0.5 |w - a|^2 + 0.5 l2 |w|^2`.
    fn quadratic_parts(&self) -> Option<(&[f64], f64)> {
        None
    }

    fn grad(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.grad_into(w, &mut g);
        g
    }
}

pub type SharedObjective = Arc<dyn Objective>;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `0.5 |w - a|^2 + 0.5 l2 |w|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub target: Vec<f64>,
    pub l2: f64,
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn eval(&self, w: &[f64]) -> f64 {
        let r: f64 = w
            .iter()
            .zip(&self.target)
            .map(|(x, a)| (x - a) * (x - a))
            .sum();
        0.5 * r + 0.5 * self.l2 * norm2(w)
    }

    fn grad_into(&self, w: &[f64], out: &mut [f64]) {
        for ((o, x), a) in out.iter_mut().zip(w).zip(&self.target) {
            *o = (x - a) + self.l2 * x;
        }
    }

    fn class(&self) -> ObjectiveClass {
        ObjectiveClass::StronglyConvex
    }

    fn constants(&self) -> Option<(f64, f64)> {
        Some((1.0 + self.l2, 1.0 + self.l2))
    }

    fn quadratic_parts(&self) -> Option<(&[f64], f64)> {
        Some((&self.target, self.l2))
    }
}

/// One quadratic per target vector.
pub fn make_quadratic(targets: &[Vec<f64>], l2: f64) -> Result<Vec<SharedObjective>> {
    let d = targets.first().map(Vec::len).unwrap_or(0);
    if d == 0 {
        return Err(Error::InvalidParameter("quadratic targets need d >= 1"));
    }
    if l2 < 0.0 || !l2.is_finite() {
        return Err(Error::InvalidParameter("l2 must be finite and nonnegative"));
    }
    targets
        .iter()
        .map(|a| {
            if a.len() != d {
                Err(Error::DimensionMismatch {
                    expected: d,
                    found: a.len(),
                })
            } else {
                Ok(Arc::new(Quadratic {
                    target: a.clone(),
                    l2,
                }) as SharedObjective)
            }
        })
        .collect()
}

/// Multinomial logistic regression with an L2 penalty.
///
/// The weight vector is `classes x features`, row-major: class `c` owns
/// `w[c * features .. (c + 1) * features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    /// Row-major `samples x features`.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub n_features: usize,
    pub classes: usize,
    pub l2: f64,
}

impl SoftmaxRegression {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        n_features: usize,
        classes: usize,
        l2: f64,
    ) -> Result<Self> {
        if l2 <= 0.0 || !l2.is_finite() {
            return Err(Error::InvalidParameter("logistic l2 must be positive"));
        }
        if n_features == 0 || classes < 2 {
            return Err(Error::InvalidParameter(
                "logistic needs features and >= 2 classes",
            ));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * n_features,
                found: features.len(),
            });
        }
        if labels.iter().any(|&l| l >= classes) {
            return Err(Error::InvalidParameter("label out of range"));
        }
        Ok(Self {
            features,
            labels,
            n_features,
            classes,
            l2,
        })
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    /// Logits of sample `n` into `z`, returning the log-sum-exp.
    fn logits(&self, w: &[f64], n: usize, z: &mut [f64]) -> f64 {
        let p = self.n_features;
        let x = &self.features[n * p..(n + 1) * p];
        let mut max = f64::NEG_INFINITY;
        for (c, zc) in z.iter_mut().enumerate() {
            *zc = w[c * p..(c + 1) * p]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
            max = max.max(*zc);
        }
        let s: f64 = z.iter().map(|v| libm::exp(v - max)).sum();
        max + libm::log(s)
    }
}

impl Objective for SoftmaxRegression {
    fn dim(&self) -> usize {
        self.classes * self.n_features
    }

    fn eval(&self, w: &[f64]) -> f64 {
        let mut z = vec![0.0; self.classes];
        let n = self.samples();
        let mut loss = 0.0;
        for i in 0..n {
            let lse = self.logits(w, i, &mut z);
            loss += lse - z[self.labels[i]];
        }
        let data = if n == 0 { 0.0 } else { loss / n as f64 };
        data + 0.5 * self.l2 * norm2(w)
    }

    fn grad_into(&self, w: &[f64], out: &mut [f64]) {
        let p = self.n_features;
        let n = self.samples();
        out.iter_mut().zip(w).for_each(|(o, x)| *o = self.l2 * x);
        if n == 0 {
            return;
        }
        let inv = 1.0 / n as f64;
        let mut z = vec![0.0; self.classes];
        for i in 0..n {
            let lse = self.logits(w, i, &mut z);
            let x = &self.features[i * p..(i + 1) * p];
            for (c, zc) in z.iter().enumerate() {
                let mut coef = libm::exp(zc - lse);
                if c == self.labels[i] {
                    coef -= 1.0;
                }
                coef *= inv;
                for (o, xv) in out[c * p..(c + 1) * p].iter_mut().zip(x) {
                    *o += coef * xv;
                }
            }
        }
    }

    fn class(&self) -> ObjectiveClass {
        ObjectiveClass::StronglyConvex
    }
}

/// `f(x, y) = 0.5 (y - sin x)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SineValley;

/// `f + g` with `g(x, y) = 0.25 (y - 3 - sin(x - 3))^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SineValleyPair;

fn sine_parts(w: &[f64]) -> (f64, f64, f64, f64) {
    let (x, y) = (w[0], w[1]);
    let r1 = y - libm::sin(x);
    let r2 = y - 3.0 - libm::sin(x - 3.0);
    (x, y, r1, r2)
}

impl Objective for SineValley {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, w: &[f64]) -> f64 {
        let (_, _, r1, _) = sine_parts(w);
        0.5 * r1 * r1
    }

    fn grad_into(&self, w: &[f64], out: &mut [f64]) {
        let (x, _, r1, _) = sine_parts(w);
        out[0] = -r1 * libm::cos(x);
        out[1] = r1;
    }

    fn class(&self) -> ObjectiveClass {
        ObjectiveClass::Pl
    }
}

impl Objective for SineValleyPair {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, w: &[f64]) -> f64 {
        let (_, _, r1, r2) = sine_parts(w);
        0.5 * r1 * r1 + 0.25 * r2 * r2
    }

    fn grad_into(&self, w: &[f64], out: &mut [f64]) {
        let (x, _, r1, r2) = sine_parts(w);
        out[0] = -r1 * libm::cos(x) - 0.5 * r2 * libm::cos(x - 3.0);
        out[1] = r1 + 0.5 * r2;
    }

    fn class(&self) -> ObjectiveClass {
        ObjectiveClass::Nonconvex
    }
}

pub fn make_pl_sine() -> SharedObjective {
    Arc::new(SineValley)
}

pub fn make_pl_sum_counterexample() -> SharedObjective {
    Arc::new(SineValleyPair)
}

/// The average `(1/M) sum_j f_j`.
pub struct Average<'a>(pub &'a [SharedObjective]);

impl Average<'_> {
    pub fn dim(&self) -> usize {
        self.0.first().map(|o| o.dim()).unwrap_or(0)
    }

    pub fn eval(&self, w: &[f64]) -> f64 {
        self.0.iter().map(|o| o.eval(w)).sum::<f64>() / self.0.len() as f64
    }

    pub fn grad(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        let mut tmp = vec![0.0; self.dim()];
        for o in self.0 {
            o.grad_into(w, &mut tmp);
            g.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
        }
        let m = self.0.len() as f64;
        g.iter_mut().for_each(|a| *a /= m);
        g
    }
}

/// How [`centralized_solve`] finds the minimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMethod {
    /// Closed form for quadratics, otherwise gradient descent from zero.
    Auto,
    /// Gradient descent from the given start.
    GradientDescent { max_iter: usize },
}

/// Gradient-norm tolerance of the iterative solver.
pub const SOLVE_TOL: f64 = 1e-10;

/// Minimizer and minimum of the average of `objectives`.
pub fn centralized_solve(
    objectives: &[SharedObjective],
    method: SolveMethod,
) -> Result<(Vec<f64>, f64)> {
    if objectives.is_empty() {
        return Err(Error::InvalidParameter("no objectives"));
    }
    let avg = Average(objectives);
    if method == SolveMethod::Auto {
        if let Some(w) = quadratic_minimizer(objectives) {
            let f = avg.eval(&w);
            return Ok((w, f));
        }
    }
    let max_iter = match method {
        SolveMethod::GradientDescent { max_iter } => max_iter,
        SolveMethod::Auto => 200_000,
    };
    centralized_solve_from(objectives, vec![0.0; avg.dim()], max_iter)
}

/// Gradient descent on the average of `objectives` from `start`.
pub fn centralized_solve_from(
    objectives: &[SharedObjective],
    start: Vec<f64>,
    max_iter: usize,
) -> Result<(Vec<f64>, f64)> {
    let avg = Average(objectives);
    let w = gradient_descent(|w| avg.eval(w), |w| avg.grad(w), start, SOLVE_TOL, max_iter)?;
    let f = avg.eval(&w);
    Ok((w, f))
}

fn quadratic_minimizer(objectives: &[SharedObjective]) -> Option<Vec<f64>> {
    let d = objectives[0].dim();
    let mut num = vec![0.0; d];
    let mut den = 0.0;
    for o in objectives {
        let (a, l2) = o.quadratic_parts()?;
        num.iter_mut().zip(a).for_each(|(n, x)| *n += x);
        den += 1.0 + l2;
    }
    Some(num.into_iter().map(|n| n / den).collect())
}

/// Gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.
pub fn gradient_descent<F, G>(
    f: F,
    grad: G,
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut w = start;
    let mut g = grad(&w);
    let mut fw = f(&w);
    let mut step = 1.0;
    let mut trial = vec![0.0; w.len()];
    for _ in 0..max_iter {
        let gn2 = norm2(&g);
        if !gn2.is_finite() || !fw.is_finite() {
            return Err(Error::NonFinite);
        }
        if libm::sqrt(gn2) < tol {
            return Ok(w);
        }
        let mut h = step;
        loop {
            for ((t, x), gi) in trial.iter_mut().zip(&w).zip(&g) {
                *t = x - h * gi;
            }
            let ft = f(&trial);
            // the slack absorbs roundoff in f once the decrease is below resolution
            let slack = 1e-15 * fw.abs().max(1.0);
            if ft <= fw - 1e-4 * h * gn2 + slack || h < 1e-20 {
                break;
            }
            h *= 0.5;
        }
        let g_new = grad(&trial);
        let (mut sy, mut ss) = (0.0, 0.0);
        for i in 0..w.len() {
            let s = trial[i] - w[i];
            let y = g_new[i] - g[i];
            sy += s * y;
            ss += s * s;
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-10, 1e10)
        } else {
            (2.0 * h).min(1e10)
        };
        core::mem::swap(&mut w, &mut trial);
        fw = f(&w);
        g = g_new;
        if h < 1e-20 && libm::sqrt(norm2(&g)) >= tol {
            // no further progress is possible at this precision
            return Ok(w);
        }
    }
    Ok(w)
}

/// Differences smaller than this count as exact in [`finite_diff_check`].
pub const FD_ABS_FLOOR: f64 = 1e-8;

/// Largest relative error between the analytic gradient and central
/// differences with step `eps`, over all points and coordinates.
///
/// Absolute discrepancies below [`FD_ABS_FLOOR`] count as zero; otherwise
/// the error is relative to the larger of the two magnitudes.
pub fn finite_diff_check(obj: &dyn Objective, points: &[Vec<f64>], eps: f64) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::InvalidParameter(
            "finite-difference step must be positive",
        ));
    }
    let mut worst: f64 = 0.0;
    for p in points {
        let g = obj.grad(p);
        let mut x = p.clone();
        for k in 0..p.len() {
            x[k] = p[k] + eps;
            let up = obj.eval(&x);
            x[k] = p[k] - eps;
            let down = obj.eval(&x);
            x[k] = p[k];
            let fd = (up - down) / (2.0 * eps);
            let diff = (fd - g[k]).abs();
            if diff > FD_ABS_FLOOR {
                worst = worst.max(diff / fd.abs().max(g[k].abs()));
            }
        }
    }
    Ok(worst)
}

/// Hessian by central differences of the gradient, symmetrized.
pub fn fd_hessian(obj: &dyn Objective, w: &[f64], eps: f64) -> DMatrix<f64> {
    let d = w.len();
    let mut h = DMatrix::zeros(d, d);
    let mut x = w.to_vec();
    for k in 0..d {
        x[k] = w[k] + eps;
        let up = obj.grad(&x);
        x[k] = w[k] - eps;
        let down = obj.grad(&x);
        x[k] = w[k];
        for i in 0..d {
            h[(i, k)] = (up[i] - down[i]) / (2.0 * eps);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Newton iteration on `grad = 0` with a finite-difference Hessian.
///
/// Converges to saddles as well as minima, which is what the counterexample
/// search needs.
pub fn refine_critical_point(obj: &dyn Objective, start: &[f64], iters: usize) -> Vec<f64> {
    let mut w = start.to_vec();
    for _ in 0..iters {
        let g = DVector::from_vec(obj.grad(&w));
        if g.norm() < 1e-14 {
            break;
        }
        let h = fd_hessian(obj, &w, 1e-5);
        let Some(step) = h.lu().solve(&g) else { break };
        for (x, s) in w.iter_mut().zip(step.iter()) {
            *x -= s;
        }
    }
    w
}

/// Axis-aligned grid of `n` points per side over `[lo, hi]^2`.
fn grid2(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = [f64; 2]> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).flat_map(move |i| (0..n).map(move |k| [lo + i as f64 * step, lo + k as f64 * step]))
}

/// A near-stationary point found by [`find_near_stationary`].
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPoint {
    pub point: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
}

/// Grid search over `[lo, hi]^2` for local minima of the gradient norm,
/// each refined by Newton iteration. Results are sorted by value.
pub fn find_near_stationary(
    obj: &dyn Objective,
    lo: f64,
    hi: f64,
    n: usize,
) -> Vec<StationaryPoint> {
    let pts: Vec<[f64; 2]> = grid2(lo, hi, n).collect();
    let gn: Vec<f64> = pts.iter().map(|p| norm2(&obj.grad(p))).collect();
    let mut out: Vec<StationaryPoint> = Vec::new();
    for i in 0..n {
        for k in 0..n {
            let c = gn[i * n + k];
            let is_min = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
                .iter()
                .all(|(di, dk)| {
                    let (a, b) = (i as i64 + di, k as i64 + dk);
                    a < 0
                        || b < 0
                        || a >= n as i64
                        || b >= n as i64
                        || gn[a as usize * n + b as usize] >= c
                });
            if !is_min {
                continue;
            }
            let w = refine_critical_point(obj, &pts[i * n + k], 50);
            let g = libm::sqrt(norm2(&obj.grad(&w)));
            if !g.is_finite() || w.iter().any(|x| !x.is_finite()) {
                continue;
            }
            let dup = out
                .iter()
                .any(|p| p.point.iter().zip(&w).all(|(a, b)| (a - b).abs() < 1e-6));
            if !dup {
                out.push(StationaryPoint {
                    value: obj.eval(&w),
                    point: w,
                    grad_norm: g,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        a.value
            .partial_cmp(&b.value)
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    out
}

/// `min 0.5 |grad f|^2 / (f - f_star)` over grid points with a positive gap.
pub fn estimate_pl_constant(
    obj: &dyn Objective,
    f_star: f64,
    lo: f64,
    hi: f64,
    n: usize,
    min_gap: f64,
) -> f64 {
    grid2(lo, hi, n)
        .filter_map(|p| {
            let gap = obj.eval(&p) - f_star;
            (gap > min_gap).then(|| 0.5 * norm2(&obj.grad(&p)) / gap)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Largest Hessian spectral norm over a grid on `[lo, hi]^2`.
pub fn estimate_smoothness(obj: &dyn Objective, lo: f64, hi: f64, n: usize) -> f64 {
    grid2(lo, hi, n)
        .map(|p| {
            let h = fd_hessian(obj, &p, 1e-5);
            SymmetricEigen::new(h)
                .eigenvalues
                .iter()
                .fold(0.0f64, |m, e| m.max(e.abs()))
        })
        .fold(0.0, f64::max)
}
