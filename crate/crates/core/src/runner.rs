//! Round-by-round execution of consensus gradient descent over an attacked
//! network.
//!
//! Rounds alternate in blocks of `J`: `J - 1` consensus rounds in which
//! every node broadcasts and aggregates, then one gradient round in which
//! every node steps on its own objective. `W(s)` is the state at `t = sJ`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::attack::{corrupt, select_links, AttackPlan, AttackStrategy, CompromisedLinkSet};
use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::objectives::SharedObjective;
use crate::rng::{derive_key, substream, Stream};
use crate::screening::{build_mixing_row_oracle, Message, ScreeningRule, TieBreak};

/// Step-size schedule indexed by the gradient-step counter `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `p / (s + 1)^omega`.
    Diminishing {
        p: f64,
        omega: f64,
    },
    /// `1 / sqrt(S)` for a horizon of `S` gradient steps.
    FixedHorizon {
        steps: usize,
    },
}

impl StepSchedule {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant(h) => h > 0.0 && h.is_finite(),
            StepSchedule::Diminishing { p, omega } => {
                p > 0.0 && p.is_finite() && omega.is_finite() && omega >= 0.0
            }
            StepSchedule::FixedHorizon { steps } => steps > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "step size must be positive and finite",
            ))
        }
    }
}

pub fn stepsize(schedule: &StepSchedule, s: usize) -> f64 {
    match *schedule {
        StepSchedule::Constant(h) => h,
        StepSchedule::Diminishing { p, omega } => p / libm::pow((s + 1) as f64, omega),
        StepSchedule::FixedHorizon { steps } => 1.0 / libm::sqrt(steps as f64),
    }
}

/// How equal values are ordered during trimming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieMode {
    #[default]
    SmallestId,
    /// Keyed by `(seed, TieBreak, [t, node])`.
    Seeded,
}

/// Order in which nodes are processed within a round. Results never depend
/// on it; the option exists to check that.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeOrder {
    #[default]
    Natural,
    Shuffled(u64),
}

/// Which mixing matrices a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    #[default]
    Off,
    /// Per gradient step, the product of that block's consensus matrices.
    Blocks,
    /// Every consensus round's matrices as well as the block products.
    Full,
}

/// Nodes that emit arbitrary values on every outgoing link.
///
/// Node `u` sends `corrupt(w_u, strategy)` to `j` at round `t` with the
/// generator keyed `(seed, AttackValues, [t, u, j])`, the same key a static
/// link attack on `u -> j` uses. Its own state is redrawn every round.
#[derive(Debug, Clone, PartialEq)]
pub struct ByzantineNodes {
    pub nodes: Vec<usize>,
    pub strategy: AttackStrategy,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub graph: DirectedGraph,
    /// Screening parameter and per-node cap on compromised in-links.
    pub b: usize,
    pub attack: AttackPlan,
    pub byzantine: Option<ByzantineNodes>,
    pub rule: ScreeningRule,
    pub tie: TieMode,
    /// Rounds per block; every `J`-th round is a gradient round.
    pub j: usize,
    pub schedule: StepSchedule,
    pub t_max: usize,
    /// Initial states are uniform on `[-r, r]^d`.
    pub init_radius: f64,
    pub seed: u64,
    pub recording: Recording,
    /// `t`-scale snapshot stride.
    pub stride: usize,
    pub node_order: NodeOrder,
}

impl RunConfig {
    /// Defaults: no attack, trimmed mean, constant step.
    pub fn new(
        graph: DirectedGraph,
        b: usize,
        j: usize,
        schedule: StepSchedule,
        t_max: usize,
        seed: u64,
    ) -> Self {
        Self {
            graph,
            b,
            attack: AttackPlan::none(),
            byzantine: None,
            rule: ScreeningRule::Cwtm,
            tie: TieMode::SmallestId,
            j,
            schedule,
            t_max,
            init_radius: 1.0,
            seed,
            recording: Recording::Off,
            stride: j,
            node_order: NodeOrder::Natural,
        }
    }

    /// Number of complete gradient steps in `t_max` rounds.
    pub fn gradient_steps(&self) -> usize {
        self.t_max / self.j
    }

    /// Check everything a run needs before round 0.
    pub fn validate(&self, objectives: &[SharedObjective]) -> Result<usize> {
        let m = self.graph.node_count();
        if objectives.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: objectives.len(),
            });
        }
        let d = objectives[0].dim();
        if d == 0 {
            return Err(Error::InvalidParameter("objective dimension must be >= 1"));
        }
        if let Some(o) = objectives.iter().find(|o| o.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: o.dim(),
            });
        }
        if self.j < 2 {
            return Err(Error::InvalidParameter("J must be > 1"));
        }
        if self.t_max < self.j {
            return Err(Error::InvalidParameter("T_max must be >= J"));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("snapshot stride must be >= 1"));
        }
        if !self.init_radius.is_finite() || self.init_radius < 0.0 {
            return Err(Error::InvalidParameter(
                "initialization radius must be finite and >= 0",
            ));
        }
        self.schedule.validate()?;
        match self.rule {
            ScreeningRule::Cwtm => self.graph.require_in_degree(2 * self.b + 1)?,
            ScreeningRule::Krum => self.graph.require_in_degree((2 * self.b + 2).max(1))?,
            ScreeningRule::Bulyan => self.graph.require_in_degree(4 * self.b + 2)?,
            ScreeningRule::Median | ScreeningRule::Mean => {}
        }
        self.attack.validate(&self.graph, self.b)?;
        if let AttackStrategy::Constant(c) = &self.attack.strategy {
            if c.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: c.len(),
                });
            }
        }
        if let Some(byz) = &self.byzantine {
            byz.strategy.validate()?;
            if let Some(&u) = byz.nodes.iter().find(|&&u| u >= m) {
                return Err(Error::NodeOutOfRange { node: u, nodes: m });
            }
        }
        if self.recording != Recording::Off && self.byzantine.is_some() {
            return Err(Error::InvalidParameter(
                "mixing matrices are not recorded for node-level Byzantine runs",
            ));
        }
        if self.recording != Recording::Off
            && !matches!(self.rule, ScreeningRule::Cwtm | ScreeningRule::Mean)
        {
            return Err(Error::InvalidParameter(
                "mixing matrices are only recorded for trimmed-mean or plain averaging runs",
            ));
        }
        Ok(d)
    }

    fn tie_for(&self, t: usize, node: usize) -> TieBreak {
        match self.tie {
            TieMode::SmallestId => TieBreak::SmallestId,
            TieMode::Seeded => TieBreak::Seeded(derive_key(
                self.seed,
                Stream::TieBreak,
                &[t as u64, node as u64],
            )),
        }
    }

    fn order(&self, m: usize, t: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..m).collect();
        if let NodeOrder::Shuffled(seed) = self.node_order {
            order.shuffle(&mut substream(seed, Stream::NodeOrder, &[t as u64]));
        }
        order
    }
}

/// Mixing matrices kept by a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MixingRecord {
    /// With full recording: `(t, per-coordinate Y_k(t))` for every consensus round.
    pub rounds: Vec<(usize, Vec<DMatrix<f64>>)>,
    /// `blocks[s][k]` is `Y_k(sJ + J - 2) ... Y_k(sJ)`.
    pub blocks: Vec<Vec<DMatrix<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub j: usize,
    /// `W(s)` for `s = 0 ..= s_completed`.
    pub states: Vec<DMatrix<f64>>,
    /// `(t, W(t))` at every multiple of the stride, including `t = 0`.
    pub snapshots: Vec<(usize, DMatrix<f64>)>,
    /// Compromised links of every consensus round, in order.
    pub links: Vec<CompromisedLinkSet>,
    pub mixing: Option<MixingRecord>,
    /// State after the last executed round.
    pub final_state: DMatrix<f64>,
    pub t_final: usize,
}

impl Trajectory {
    pub fn s_completed(&self) -> usize {
        self.states.len() - 1
    }
}

fn init_state(m: usize, d: usize, r: f64, seed: u64) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(m, d);
    for j in 0..m {
        let mut rng = substream(seed, Stream::Init, &[j as u64]);
        for k in 0..d {
            w[(j, k)] = if r == 0.0 {
                0.0
            } else {
                rng.random_range(-r..=r)
            };
        }
    }
    w
}

fn row(w: &DMatrix<f64>, j: usize) -> Vec<f64> {
    w.row(j).iter().copied().collect()
}

fn byzantine_state(byz: &ByzantineNodes, u: usize, t: usize, d: usize) -> Vec<f64> {
    let mut rng = substream(byz.seed, Stream::Byzantine, &[t as u64, u as u64]);
    (0..d).map(|_| rng.random_range(-1e3..1e3)).collect()
}

/// Run consensus gradient descent with the configured screening rule.
pub fn run_resist(config: &RunConfig, objectives: &[SharedObjective]) -> Result<Trajectory> {
    let d = config.validate(objectives)?;
    let g = &config.graph;
    let m = g.node_count();
    let jj = config.j;
    let byz_nodes: &[usize] = config
        .byzantine
        .as_ref()
        .map(|b| b.nodes.as_slice())
        .unwrap_or(&[]);

    let mut w = init_state(m, d, config.init_radius, config.seed);
    let mut next = w.clone();
    let mut states = vec![w.clone()];
    let mut snapshots = vec![(0, w.clone())];
    let mut links = Vec::new();
    let mut mixing = (config.recording != Recording::Off).then(MixingRecord::default);
    let mut block: Vec<DMatrix<f64>> = Vec::new();
    let mut s = 0usize;
    let mut grad = vec![0.0; d];

    for t in 0..config.t_max {
        let order = config.order(m, t);
        if (t + 1) % jj != 0 {
            let set = select_links(&config.attack, g, config.b, t)?;
            let inbox: Vec<Vec<(usize, Vec<f64>)>> = (0..m)
                .map(|j| {
                    g.in_neighbors(j)
                        .iter()
                        .map(|&i| {
                            let own = row(&w, i);
                            let msg = if let Some(byz) =
                                config.byzantine.as_ref().filter(|_| byz_nodes.contains(&i))
                            {
                                let mut rng = substream(
                                    byz.seed,
                                    Stream::AttackValues,
                                    &[t as u64, i as u64, j as u64],
                                );
                                corrupt(&own, &byz.strategy, &mut rng)
                            } else if set.contains(i, j) {
                                config.attack.corrupt_link(&own, t, i, j)
                            } else {
                                own
                            };
                            (i, msg)
                        })
                        .collect()
                })
                .collect();
            for &j in &order {
                let received: Vec<Message<'_>> =
                    inbox[j].iter().map(|(i, v)| (*i, v.as_slice())).collect();
                let out =
                    config
                        .rule
                        .apply(&row(&w, j), &received, config.b, config.tie_for(t, j))?;
                for (k, v) in out.into_iter().enumerate() {
                    next[(j, k)] = v;
                }
            }
            if let Some(rec) = mixing.as_mut() {
                let ys = round_matrices(config, &w, &inbox, &set, t)?;
                if block.is_empty() {
                    block = ys.clone();
                } else {
                    for (acc, y) in block.iter_mut().zip(&ys) {
                        *acc = y * &*acc;
                    }
                }
                if config.recording == Recording::Full {
                    rec.rounds.push((t, ys));
                }
            }
            links.push(set);
        } else {
            let h = stepsize(&config.schedule, s);
            for &j in &order {
                let wj = row(&w, j);
                objectives[j].grad_into(&wj, &mut grad);
                for k in 0..d {
                    next[(j, k)] = wj[k] - h * grad[k];
                }
            }
        }
        for &u in byz_nodes {
            let junk = byzantine_state(config.byzantine.as_ref().unwrap(), u, t, d);
            for (k, v) in junk.into_iter().enumerate() {
                next[(u, k)] = v;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        core::mem::swap(&mut w, &mut next);

        if (t + 1) % jj == 0 {
            s += 1;
            states.push(w.clone());
            if let Some(rec) = mixing.as_mut() {
                rec.blocks.push(core::mem::take(&mut block));
            }
        }
        if (t + 1) % config.stride == 0 {
            snapshots.push((t + 1, w.clone()));
        }
    }

    Ok(Trajectory {
        j: jj,
        states,
        snapshots,
        links,
        mixing,
        final_state: w,
        t_final: config.t_max,
    })
}

/// Per-coordinate mixing matrices of one consensus round.
fn round_matrices(
    config: &RunConfig,
    w: &DMatrix<f64>,
    inbox: &[Vec<(usize, Vec<f64>)>],
    set: &CompromisedLinkSet,
    t: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let m = w.nrows();
    let g = &config.graph;
    (0..w.ncols())
        .map(|k| {
            let mut y = DMatrix::zeros(m, m);
            match config.rule {
                ScreeningRule::Mean => {
                    if !set.is_empty() {
                        return Err(Error::InvalidParameter(
                            "plain averaging under attack has no mixing matrix",
                        ));
                    }
                    for j in 0..m {
                        let share = 1.0 / (g.in_degree(j) + 1) as f64;
                        y[(j, j)] = share;
                        for &i in g.in_neighbors(j) {
                            y[(j, i)] = share;
                        }
                    }
                }
                _ => {
                    let truth: Vec<f64> = w.column(k).iter().copied().collect();
                    for j in 0..m {
                        let col: Vec<(usize, f64)> =
                            inbox[j].iter().map(|(i, v)| (*i, v[k])).collect();
                        let bad = set.compromised_sources(j);
                        let r = build_mixing_row_oracle(
                            j,
                            k,
                            truth[j],
                            &col,
                            &truth,
                            &bad,
                            config.b,
                            config.tie_for(t, j),
                        )?;
                        for (i, v) in r.weights.into_iter().enumerate() {
                            y[(j, i)] = v;
                        }
                    }
                }
            }
            Ok(y)
        })
        .collect()
}

/// The unscreened baseline: same schedule, plain averaging over the node and
/// its in-neighbors.
pub fn run_dgd_multistep(config: &RunConfig, objectives: &[SharedObjective]) -> Result<Trajectory> {
    let mut cfg = config.clone();
    cfg.rule = ScreeningRule::Mean;
    run_resist(&cfg, objectives)
}
