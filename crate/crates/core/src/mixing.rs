//! Products of mixing matrices, ergodicity coefficients and consensus
//! vectors.
//!
//! Products are backward: the later matrix multiplies on the left, so the
//! product of `[Y(0), Y(1), Y(2)]` is `Y(2) Y(1) Y(0)`.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::stats::linear_fit_r2;

/// Row-sum drift beyond which a product row is renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-12;
/// Tolerance used when checking that inputs are row-stochastic.
pub const STOCHASTIC_TOL: f64 = 1e-9;
/// Default ergodicity tolerance for consensus-vector estimation.
pub const CONSENSUS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionProduct {
    pub matrix: DMatrix<f64>,
    /// Number of matrices multiplied.
    pub len: usize,
}

fn check_stochastic(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    for (r, row) in a.row_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        if !sum.is_finite() || (sum - 1.0).abs() > STOCHASTIC_TOL || min < -STOCHASTIC_TOL {
            return Err(Error::NotStochastic { row: r, sum, min });
        }
    }
    Ok(())
}

fn renormalize(p: &mut DMatrix<f64>) {
    for mut row in p.row_iter_mut() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_TOL && sum > 0.0 {
            row /= sum;
        }
    }
}

/// `acc <- y * acc`, with drift correction.
fn push_left(acc: &mut DMatrix<f64>, y: &DMatrix<f64>) {
    *acc = y * &*acc;
    renormalize(acc);
}

/// Backward product of row-stochastic matrices given in chronological order.
pub fn transition_product(matrices: &[DMatrix<f64>]) -> Result<TransitionProduct> {
    let first = matrices
        .first()
        .ok_or(Error::InvalidParameter("empty matrix sequence"))?;
    let m = first.nrows();
    let mut acc = DMatrix::identity(m, m);
    for y in matrices {
        if y.nrows() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: y.nrows(),
            });
        }
        check_stochastic(y)?;
        push_left(&mut acc, y);
    }
    Ok(TransitionProduct {
        matrix: acc,
        len: matrices.len(),
    })
}

fn delta_raw(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.max() - c.min())
        .fold(0.0, f64::max)
}

fn lambda_raw(a: &DMatrix<f64>) -> f64 {
    let m = a.nrows();
    let mut min_overlap = f64::INFINITY;
    for i1 in 0..m {
        for i2 in i1 + 1..m {
            let s: f64 = (0..a.ncols()).map(|j| a[(i1, j)].min(a[(i2, j)])).sum();
            min_overlap = min_overlap.min(s);
        }
    }
    if m < 2 {
        return 0.0;
    }
    (1.0 - min_overlap).clamp(0.0, 1.0)
}

/// `max_j max_{i1,i2} |A[i1,j] - A[i2,j]|`.
pub fn delta_ergodicity(a: &DMatrix<f64>) -> Result<f64> {
    check_stochastic(a)?;
    Ok(delta_raw(a))
}

/// `1 - min_{i1,i2} sum_j min(A[i1,j], A[i2,j])`.
pub fn lambda_ergodicity(a: &DMatrix<f64>) -> Result<f64> {
    check_stochastic(a)?;
    Ok(lambda_raw(a))
}

/// Every pair of rows shares some column where both are positive.
pub fn is_scrambling(a: &DMatrix<f64>) -> bool {
    lambda_raw(a) < 1.0
}

/// Result of estimating a consensus vector from a tail of matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum ConsensusEstimate {
    Converged { c: Vec<f64>, rounds_used: usize },
    NotConverged { rounds_available: usize, delta: f64 },
}

impl ConsensusEstimate {
    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            Self::Converged { c, .. } => Some(c),
            Self::NotConverged { .. } => None,
        }
    }
}

fn row_average(p: &DMatrix<f64>) -> Vec<f64> {
    let m = p.nrows() as f64;
    let mut c: Vec<f64> = p.column_iter().map(|col| col.sum() / m).collect();
    let total: f64 = c.iter().sum();
    c.iter_mut().for_each(|x| *x /= total);
    c
}

/// Multiply `matrices` (chronological, starting at the round of interest)
/// until the product's rows agree within `tol`, then average the rows.
pub fn estimate_consensus_vector(matrices: &[DMatrix<f64>], tol: f64) -> Result<ConsensusEstimate> {
    let Some(first) = matrices.first() else {
        return Ok(ConsensusEstimate::NotConverged {
            rounds_available: 0,
            delta: 1.0,
        });
    };
    let m = first.nrows();
    let mut acc = DMatrix::identity(m, m);
    let mut delta = 1.0;
    for (n, y) in matrices.iter().enumerate() {
        check_stochastic(y)?;
        push_left(&mut acc, y);
        delta = delta_raw(&acc);
        if delta < tol {
            return Ok(ConsensusEstimate::Converged {
                c: row_average(&acc),
                rounds_used: n + 1,
            });
        }
    }
    Ok(ConsensusEstimate::NotConverged {
        rounds_available: matrices.len(),
        delta,
    })
}

/// `alpha / (4b)` with `alpha = 1 / (M - 2b + 1)`.
pub fn beta(m: usize, b: usize) -> Result<f64> {
    if b == 0 {
        return Err(Error::InvalidParameter("beta is undefined for b = 0"));
    }
    if m <= 2 * b {
        return Err(Error::InvalidParameter("beta needs M > 2b"));
    }
    let alpha = 1.0 / (m - 2 * b + 1) as f64;
    Ok(alpha / (4 * b) as f64)
}

/// The geometric bound `(1 - beta^(tau M))^floor(t / (tau M))`.
///
/// Evaluated in log space; `tau` is arbitrary precision.
pub fn geometric_bound(beta: f64, tau: &BigUint, m: usize, t: usize) -> f64 {
    let window = tau * BigUint::from(m);
    if window == BigUint::from(0u32) {
        return 1.0;
    }
    let periods = BigUint::from(t) / &window;
    if periods == BigUint::from(0u32) {
        return 1.0;
    }
    let beta_pow = libm::exp(to_f64(&window) * libm::log(beta));
    if beta_pow <= 0.0 {
        return 1.0;
    }
    libm::exp(to_f64(&periods) * libm::log1p(-beta_pow)).min(1.0)
}

fn to_f64(x: &BigUint) -> f64 {
    let digits = x.to_u64_digits();
    let mut v = 0.0;
    for d in digits.iter().rev() {
        v = v * 18446744073709551616.0 + *d as f64;
    }
    v
}

/// One checkpoint of a geometric-mixing check.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingCheckpoint {
    pub t: usize,
    pub delta: f64,
    /// `max_{j,i} |Phi(t,0)[j,i] - c[i]|`.
    pub deviation: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMixingReport {
    pub checkpoints: Vec<MixingCheckpoint>,
    /// The formal bound held at every checkpoint.
    pub bound_holds: bool,
    /// Slope of `ln delta` against `t` over checkpoints with `delta > FIT_FLOOR`.
    pub fitted_rate: Option<f64>,
    /// Coefficient of determination of that fit.
    pub fit_r2: Option<f64>,
    /// `delta` never increased along prefix products.
    pub monotone: bool,
    pub final_delta: f64,
    /// The reference vector came from a converged estimate.
    pub consensus_converged: bool,
}

/// Floor below which `delta` values are excluded from the rate fit.
pub const FIT_FLOOR: f64 = 1e-12;

/// Check the geometric-mixing statement on a recorded sequence.
pub fn verify_geometric_mixing(
    matrices: &[DMatrix<f64>],
    beta: f64,
    tau: &BigUint,
    m: usize,
) -> Result<GeometricMixingReport> {
    let product = transition_product(matrices)?;
    let estimate = estimate_consensus_vector(matrices, CONSENSUS_TOL)?;
    let consensus_converged = estimate.vector().is_some();
    let c = match estimate {
        ConsensusEstimate::Converged { c, .. } => c,
        ConsensusEstimate::NotConverged { .. } => row_average(&product.matrix),
    };

    let mut acc = DMatrix::identity(m, m);
    let mut checkpoints = Vec::with_capacity(matrices.len());
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for (n, y) in matrices.iter().enumerate() {
        push_left(&mut acc, y);
        let t = n + 1;
        let delta = delta_raw(&acc);
        if delta > prev + 1e-12 {
            monotone = false;
        }
        prev = delta;
        let mut deviation: f64 = 0.0;
        for row in acc.row_iter() {
            for (i, v) in row.iter().enumerate() {
                deviation = deviation.max((v - c[i]).abs());
            }
        }
        checkpoints.push(MixingCheckpoint {
            t,
            delta,
            deviation,
            bound: geometric_bound(beta, tau, m, t),
        });
    }
    let bound_holds = checkpoints.iter().all(|c| c.deviation <= c.bound + 1e-12);
    let (xs, ys): (Vec<f64>, Vec<f64>) = checkpoints
        .iter()
        .filter(|c| c.delta > FIT_FLOOR)
        .map(|c| (c.t as f64, libm::log(c.delta)))
        .unzip();
    let fit = linear_fit_r2(&xs, &ys);
    Ok(GeometricMixingReport {
        bound_holds,
        fitted_rate: fit.map(|f| f.0),
        fit_r2: fit.map(|f| f.2),
        monotone,
        final_delta: prev,
        consensus_converged,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::Rng;

    use crate::rng::{substream, Stream};

    fn m2(a: [[f64; 2]; 2]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]])
    }

    fn random_stochastic(m: usize, seed: u64, zero_prob: f64) -> DMatrix<f64> {
        let mut rng = substream(seed, Stream::Data, &[m as u64]);
        let mut a = DMatrix::from_fn(m, m, |i, j| {
            if i == j || rng.random::<f64>() > zero_prob {
                rng.random::<f64>()
            } else {
                0.0
            }
        });
        for mut row in a.row_iter_mut() {
            let s: f64 = row.iter().sum();
            row /= s;
        }
        a
    }

    /// Left Perron vector by solving `(Y^T - I) c = 0` with `sum c = 1`.
    fn perron_oracle(y: &DMatrix<f64>) -> DVector<f64> {
        let m = y.nrows();
        let mut a = y.transpose() - DMatrix::identity(m, m);
        for j in 0..m {
            a[(m - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(m);
        rhs[m - 1] = 1.0;
        a.lu().solve(&rhs).unwrap()
    }

    #[test]
    fn products_basic() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(
            transition_product(&[id.clone(), id.clone()])
                .unwrap()
                .matrix,
            id
        );
        let a = m2([[0.5, 0.5], [0.25, 0.75]]);
        assert_eq!(transition_product(&[a.clone()]).unwrap().matrix, a);

        // later matrix on the left: product of [A, B] is B A
        let b = m2([[1.0, 0.0], [0.5, 0.5]]);
        let p = transition_product(&[a.clone(), b.clone()]).unwrap().matrix;
        let hand = m2([[0.5, 0.5], [0.375, 0.625]]);
        assert_abs_diff_eq!(p, hand, epsilon = 1e-15);
        assert!((p.clone() - &a * &b).abs().max() > 1e-3);

        assert!(transition_product(&[a, DMatrix::identity(3, 3)]).is_err());
    }

    #[test]
    fn ergodicity_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(delta_ergodicity(&id).unwrap(), 1.0);
        assert_eq!(lambda_ergodicity(&id).unwrap(), 1.0);
        let rank1 = m2([[0.3, 0.7], [0.3, 0.7]]);
        assert_eq!(delta_ergodicity(&rank1).unwrap(), 0.0);
        assert_abs_diff_eq!(lambda_ergodicity(&rank1).unwrap(), 0.0, epsilon = 1e-15);
        let a = m2([[0.5, 0.5], [0.25, 0.75]]);
        assert_abs_diff_eq!(delta_ergodicity(&a).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(lambda_ergodicity(&a).unwrap(), 0.25, epsilon = 1e-15);
        assert!(delta_ergodicity(&m2([[0.5, 0.6], [0.5, 0.5]])).is_err());
    }

    #[test]
    fn scrambling_examples() {
        assert!(!is_scrambling(&DMatrix::identity(4, 4)));
        let perm = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!(!is_scrambling(&perm));
        let mut col = random_stochastic(5, 3, 0.9) * 0.5;
        for i in 0..5 {
            col[(i, 2)] += 0.5;
        }
        assert!(is_scrambling(&col));
    }

    #[test]
    fn consensus_doubly_stochastic() {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5]);
        let seq = alloc::vec![a; 60];
        let c = estimate_consensus_vector(&seq, 1e-10).unwrap();
        for v in c.vector().unwrap() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn consensus_rank_one() {
        let c = [0.2, 0.3, 0.5];
        let a = DMatrix::from_fn(3, 3, |_, j| c[j]);
        match estimate_consensus_vector(&[a], 1e-10).unwrap() {
            ConsensusEstimate::Converged {
                c: got,
                rounds_used,
            } => {
                assert_eq!(rounds_used, 1);
                for (g, w) in got.iter().zip(c) {
                    assert_abs_diff_eq!(*g, w, epsilon = 1e-15);
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn consensus_not_converged_is_explicit() {
        let seq = alloc::vec![DMatrix::<f64>::identity(3, 3); 5];
        assert!(matches!(
            estimate_consensus_vector(&seq, 1e-10).unwrap(),
            ConsensusEstimate::NotConverged {
                rounds_available: 5,
                ..
            }
        ));
        assert!(matches!(
            estimate_consensus_vector(&[], 1e-10).unwrap(),
            ConsensusEstimate::NotConverged {
                rounds_available: 0,
                ..
            }
        ));
    }

    #[test]
    fn beta_examples() {
        assert_abs_diff_eq!(beta(5, 1).unwrap(), 1.0 / 16.0);
        assert_abs_diff_eq!(beta(50, 2).unwrap(), 1.0 / 376.0);
        assert!(beta(5, 0).is_err());
    }

    #[test]
    fn bound_is_vacuous_for_large_tau() {
        let tau = BigUint::from(7776u32);
        assert_eq!(geometric_bound(1.0 / 16.0, &tau, 5, 1000), 1.0);
        // a tiny window gives a real bound: (1 - 0.5^2)^5
        let b = geometric_bound(0.5, &BigUint::from(1u32), 2, 10);
        assert_abs_diff_eq!(b, 0.75f64.powi(5), epsilon = 1e-14);
    }

    #[test]
    fn uniform_mixing_is_immediate() {
        let u = DMatrix::from_element(5, 5, 0.2);
        let rep =
            verify_geometric_mixing(&alloc::vec![u; 4], 1.0 / 16.0, &BigUint::from(7776u32), 5)
                .unwrap();
        assert_eq!(rep.checkpoints[0].delta, 0.0);
        assert!(rep.bound_holds && rep.monotone && rep.consensus_converged);
    }

    proptest! {
        #[test]
        fn perron_vector_matches(seed in 0u64..5000, m in 2usize..7) {
            let y = random_stochastic(m, seed, 0.0);
            let seq = alloc::vec![y.clone(); 5000];
            let want = perron_oracle(&y);
            let got = estimate_consensus_vector(&seq, CONSENSUS_TOL).unwrap();
            let got = got.vector().unwrap();
            for i in 0..m {
                prop_assert!((got[i] - want[i]).abs() < 1e-8);
            }
        }

        #[test]
        fn delta_submultiplicative(seed in 0u64..5000, m in 2usize..7) {
            let a = random_stochastic(m, seed, 0.5);
            let b = random_stochastic(m, seed + 7919, 0.5);
            let ab = &a * &b;
            prop_assert!(delta_raw(&ab) <= lambda_raw(&a) * delta_raw(&b) + 1e-12);
            prop_assert!(check_stochastic(&transition_product(&[a, b]).unwrap().matrix).is_ok());
        }

        #[test]
        fn estimate_is_left_invariant(seed in 0u64..5000) {
            let seq: Vec<DMatrix<f64>> = (0..300).map(|i| random_stochastic(4, seed * 1000 + i, 0.6)).collect();
            let est = estimate_consensus_vector(&seq[1..], CONSENSUS_TOL).unwrap();
            let Some(next) = est.vector() else { return Ok(()); };
            let s0 = estimate_consensus_vector(&seq, CONSENSUS_TOL).unwrap();
            let s0 = s0.vector().unwrap();
            prop_assert!((next.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(next.iter().all(|&x| x >= 0.0));
            // c(s)^T = c(s+1)^T Y(s)
            let pulled = DVector::from_column_slice(next).transpose() * &seq[0];
            for i in 0..4 {
                prop_assert!((pulled[i] - s0[i]).abs() < 2.0 * CONSENSUS_TOL);
            }
        }
    }
}
