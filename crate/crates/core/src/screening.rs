//! Robust aggregation rules and the mixing-matrix oracle.
//!
//! Every rule takes the node's own vector and the messages it received as
//! `(sender, vector)` pairs. The oracle reconstructs, from ground truth the
//! simulator knows, a row-stochastic matrix whose product with the true
//! states reproduces one coordinate of the trimmed-mean update.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::DMatrix;
use rand::RngCore;

use crate::attack::CompromisedLinkSet;
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// A received message: sender id and its vector.
pub type Message<'a> = (usize, &'a [f64]);

/// How equal values are ordered when choosing the trimmed sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Smallest node id goes first.
    #[default]
    SmallestId,
    /// Ties are ordered by a keyed random draw per `(coordinate, node)`.
    Seeded(u64),
}

impl TieBreak {
    fn rank(self, coord: usize, node: usize) -> u64 {
        match self {
            TieBreak::SmallestId => 0,
            TieBreak::Seeded(key) => {
                substream(key, Stream::TieBreak, &[coord as u64, node as u64]).next_u64()
            }
        }
    }
}

/// Lower, upper and center sets of one coordinate at one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrimSets {
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
    pub center: Vec<usize>,
}

/// Split `values` into the `b` smallest, the `b` largest and the rest.
///
/// The lower set is chosen first by `(value asc, tie)`, then the upper set
/// from what remains by `(value desc, tie)`.
pub fn trim_sets(
    values: &[(usize, f64)],
    b: usize,
    tie: TieBreak,
    coord: usize,
) -> Result<TrimSets> {
    check_trim(values.len(), b)?;
    if values.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut keyed: Vec<(f64, u64, usize)> = values
        .iter()
        .map(|&(id, v)| (v, tie.rank(coord, id), id))
        .collect();
    keyed.sort_by(|a, b| cmp_f(a.0, b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let lower: Vec<usize> = keyed[..b].iter().map(|x| x.2).collect();
    let mut rest = keyed.split_off(b);
    rest.sort_by(|a, b| cmp_f(b.0, a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let upper: Vec<usize> = rest[..b].iter().map(|x| x.2).collect();
    let mut center: Vec<usize> = rest[b..].iter().map(|x| x.2).collect();
    center.sort_unstable();
    Ok(TrimSets {
        lower,
        upper,
        center,
    })
}

fn cmp_f(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

fn check_trim(received: usize, b: usize) -> Result<()> {
    if 2 * b > received {
        Err(Error::InsufficientCandidates {
            required: 2 * b,
            available: received,
        })
    } else {
        Ok(())
    }
}

fn check_dims(self_value: &[f64], received: &[Message<'_>]) -> Result<()> {
    let d = self_value.len();
    for (_, v) in received {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: v.len(),
            });
        }
    }
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if !finite(self_value) || received.iter().any(|(_, v)| !finite(v)) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn column(received: &[Message<'_>], k: usize) -> Vec<(usize, f64)> {
    received.iter().map(|&(id, v)| (id, v[k])).collect()
}

/// Coordinate-wise trimmed mean with smallest-id tie-breaking.
pub fn cwtm(self_value: &[f64], received: &[Message<'_>], b: usize) -> Result<Vec<f64>> {
    cwtm_with(self_value, received, b, TieBreak::SmallestId)
}

/// Coordinate-wise trimmed mean: per coordinate, drop the `b` smallest and
/// `b` largest received values and average the rest together with the
/// node's own value.
pub fn cwtm_with(
    self_value: &[f64],
    received: &[Message<'_>],
    b: usize,
    tie: TieBreak,
) -> Result<Vec<f64>> {
    check_trim(received.len(), b)?;
    check_dims(self_value, received)?;
    let n_prime = (received.len() - 2 * b + 1) as f64;
    let mut out = Vec::with_capacity(self_value.len());
    for (k, &own) in self_value.iter().enumerate() {
        let col = column(received, k);
        let sets = trim_sets(&col, b, tie, k)?;
        let mut sum = own;
        for &(id, v) in &col {
            if sets.center.binary_search(&id).is_ok() {
                sum += v;
            }
        }
        out.push(sum / n_prime);
    }
    Ok(out)
}

/// Per-coordinate median of the received values and the node's own.
pub fn coordinate_median(self_value: &[f64], received: &[Message<'_>]) -> Result<Vec<f64>> {
    check_dims(self_value, received)?;
    let mut buf = Vec::with_capacity(received.len() + 1);
    Ok((0..self_value.len())
        .map(|k| {
            buf.clear();
            buf.push(self_value[k]);
            buf.extend(received.iter().map(|(_, v)| v[k]));
            buf.sort_by(|a, b| cmp_f(*a, *b));
            let n = buf.len();
            if n % 2 == 1 {
                buf[n / 2]
            } else {
                0.5 * (buf[n / 2 - 1] + buf[n / 2])
            }
        })
        .collect())
}

/// Plain average of the received vectors and the node's own.
pub fn mean(self_value: &[f64], received: &[Message<'_>]) -> Result<Vec<f64>> {
    check_dims(self_value, received)?;
    let n = (received.len() + 1) as f64;
    let mut out = self_value.to_vec();
    for (_, v) in received {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Candidates ordered with self first (id "-1"), then by sender id.
fn candidates<'a>(self_value: &'a [f64], received: &[Message<'a>]) -> Vec<&'a [f64]> {
    let mut rec: Vec<Message<'a>> = received.to_vec();
    rec.sort_by_key(|m| m.0);
    core::iter::once(self_value)
        .chain(rec.into_iter().map(|m| m.1))
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the Krum choice among `pool`; the first minimum wins.
fn krum_index(pool: &[&[f64]], b: usize) -> usize {
    let n = pool.len();
    if n == 1 {
        return 0;
    }
    let neighbors = n.saturating_sub(b + 2).clamp(1, n - 1);
    let mut best = (f64::INFINITY, 0);
    let mut dists = Vec::with_capacity(n);
    for i in 0..n {
        dists.clear();
        dists.extend(
            (0..n)
                .filter(|&l| l != i)
                .map(|l| sq_dist(pool[i], pool[l])),
        );
        dists.sort_by(|a, b| cmp_f(*a, *b));
        let score: f64 = dists[..neighbors].iter().sum();
        if score < best.0 {
            best = (score, i);
        }
    }
    best.1
}

/// Krum: the candidate with the smallest summed squared distance to its
/// `n - b - 2` nearest other candidates.
pub fn krum(self_value: &[f64], received: &[Message<'_>], b: usize) -> Result<Vec<f64>> {
    check_dims(self_value, received)?;
    let pool = candidates(self_value, received);
    if pool.len() < 2 * b + 3 {
        return Err(Error::InsufficientCandidates {
            required: 2 * b + 3,
            available: pool.len(),
        });
    }
    Ok(pool[krum_index(&pool, b)].to_vec())
}

/// Bulyan: repeatedly Krum-select `2b + 3` candidates, then take their
/// coordinate-wise mean after trimming `b` from each end.
pub fn bulyan(self_value: &[f64], received: &[Message<'_>], b: usize) -> Result<Vec<f64>> {
    check_dims(self_value, received)?;
    let mut pool = candidates(self_value, received);
    if pool.len() < 4 * b + 3 {
        return Err(Error::InsufficientCandidates {
            required: 4 * b + 3,
            available: pool.len(),
        });
    }
    let keep = 2 * b + 3;
    let mut chosen = Vec::with_capacity(keep);
    while chosen.len() < keep {
        let i = krum_index(&pool, b);
        chosen.push(pool.remove(i));
    }
    let mut col = Vec::with_capacity(keep);
    Ok((0..self_value.len())
        .map(|k| {
            col.clear();
            col.extend(chosen.iter().map(|v| v[k]));
            col.sort_by(|a, b| cmp_f(*a, *b));
            let mid = &col[b..keep - b];
            mid.iter().sum::<f64>() / mid.len() as f64
        })
        .collect())
}

/// Aggregation rule applied in consensus rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScreeningRule {
    #[default]
    Cwtm,
    Median,
    Krum,
    Bulyan,
    /// Unscreened average, the plain consensus baseline.
    Mean,
}

impl ScreeningRule {
    pub fn apply(
        self,
        self_value: &[f64],
        received: &[Message<'_>],
        b: usize,
        tie: TieBreak,
    ) -> Result<Vec<f64>> {
        match self {
            ScreeningRule::Cwtm => cwtm_with(self_value, received, b, tie),
            ScreeningRule::Median => coordinate_median(self_value, received),
            ScreeningRule::Krum => krum(self_value, received, b),
            ScreeningRule::Bulyan => bulyan(self_value, received, b),
            ScreeningRule::Mean => mean(self_value, received),
        }
    }
}

/// How one center member's mass is routed through an honest extreme pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSplit {
    pub member: usize,
    pub upper: usize,
    pub lower: usize,
    pub theta: f64,
}

/// One row of the mixing matrix for node `node` and coordinate `coord`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingRow {
    pub node: usize,
    pub coord: usize,
    pub weights: Vec<f64>,
    /// `b - b_star + b_k`.
    pub q: usize,
    /// Compromised in-links at this node.
    pub b_star: usize,
    /// Compromised in-links that landed in the center set.
    pub b_k: usize,
    pub thetas: Vec<ThetaSplit>,
}

const THETA_EPS: f64 = 1e-15;

fn theta(v: f64, hi: f64, lo: f64) -> f64 {
    let span = hi - lo;
    let t = if span == 0.0 { 0.5 } else { (v - lo) / span };
    t.clamp(THETA_EPS, 1.0 - THETA_EPS)
}

/// Reconstruct the mixing row of node `node` at coordinate `coord`.
///
/// `received` holds the values as delivered (corrupted on compromised
/// links), `true_values` the senders' actual states indexed by node id, and
/// `compromised` the senders whose link into `node` is attacked.
///
/// With `q = 0` the row is uniform on the node and its center set. Otherwise
/// the `q` most extreme honest upper-set nodes are paired index by index with
/// the `q` most extreme honest lower-set nodes. A compromised center member
/// routes `1/(q n')` through every pair, split so the pair reproduces its
/// delivered value. An honest center member keeps `1/(2n')` and routes the
/// other half the same way.
#[allow(clippy::too_many_arguments)]
pub fn build_mixing_row_oracle(
    node: usize,
    coord: usize,
    self_value: f64,
    received: &[(usize, f64)],
    true_values: &[f64],
    compromised: &[usize],
    b: usize,
    tie: TieBreak,
) -> Result<MixingRow> {
    if !self_value.is_finite() {
        return Err(Error::NonFinite);
    }
    let m = true_values.len();
    let sets = trim_sets(received, b, tie, coord)?;
    let n_prime = (received.len() - 2 * b + 1) as f64;
    let is_bad = |i: usize| compromised.contains(&i);
    let value_of = |i: usize| {
        received
            .iter()
            .find(|r| r.0 == i)
            .map(|r| r.1)
            .unwrap_or(0.0)
    };

    let b_star = received.iter().filter(|r| is_bad(r.0)).count();
    let b_k = sets.center.iter().filter(|&&i| is_bad(i)).count();
    let q = b - b_star + b_k;

    let mut weights = vec![0.0; m];
    weights[node] = 1.0 / n_prime;
    let mut thetas = Vec::new();

    if q == 0 {
        for &i in &sets.center {
            weights[i] += 1.0 / n_prime;
        }
    } else {
        // the sets come out already sorted from most to least extreme
        let honest_upper: Vec<usize> = sets.upper.iter().copied().filter(|&i| !is_bad(i)).collect();
        let honest_lower: Vec<usize> = sets.lower.iter().copied().filter(|&i| !is_bad(i)).collect();
        if honest_upper.len() < q {
            return Err(Error::MissingHonestExtreme {
                node,
                coord,
                side: "upper",
            });
        }
        if honest_lower.len() < q {
            return Err(Error::MissingHonestExtreme {
                node,
                coord,
                side: "lower",
            });
        }
        let qf = q as f64;
        for &i in &sets.center {
            let v = value_of(i);
            let routed = if is_bad(i) {
                1.0 / (qf * n_prime)
            } else {
                weights[i] += 0.5 / n_prime;
                0.5 / (qf * n_prime)
            };
            for l in 0..q {
                let (hi, lo) = (honest_upper[l], honest_lower[l]);
                let th = theta(v, true_values[hi], true_values[lo]);
                weights[hi] += th * routed;
                weights[lo] += (1.0 - th) * routed;
                thetas.push(ThetaSplit {
                    member: i,
                    upper: hi,
                    lower: lo,
                    theta: th,
                });
            }
        }
    }

    Ok(MixingRow {
        node,
        coord,
        weights,
        q,
        b_star,
        b_k,
        thetas,
    })
}

/// Stack the oracle rows of every node for coordinate `coord`.
///
/// `states` is the `M x d` matrix of true states and `inbox[j]` the messages
/// node `j` received this round; `tie(j)` gives node `j`'s tie rule.
pub fn build_mixing_matrix<F>(
    states: &DMatrix<f64>,
    inbox: &[Vec<(usize, Vec<f64>)>],
    compromised: &CompromisedLinkSet,
    b: usize,
    coord: usize,
    tie: F,
) -> Result<DMatrix<f64>>
where
    F: Fn(usize) -> TieBreak,
{
    let m = states.nrows();
    let truth: Vec<f64> = states.column(coord).iter().copied().collect();
    let mut y = DMatrix::zeros(m, m);
    for (j, msgs) in inbox.iter().enumerate() {
        let col: Vec<(usize, f64)> = msgs.iter().map(|(i, v)| (*i, v[coord])).collect();
        let bad = compromised.compromised_sources(j);
        let row = build_mixing_row_oracle(j, coord, truth[j], &col, &truth, &bad, b, tie(j))?;
        for (i, w) in row.weights.into_iter().enumerate() {
            y[(j, i)] = w;
        }
    }
    Ok(y)
}

/// Check row sums and nonnegativity within `tol`.
pub fn check_row_stochastic(y: &DMatrix<f64>, tol: f64) -> Result<()> {
    for (r, row) in y.row_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        if (sum - 1.0).abs() > tol || min < -tol {
            return Err(Error::NotStochastic { row: r, sum, min });
        }
    }
    Ok(())
}
