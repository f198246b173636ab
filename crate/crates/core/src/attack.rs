//! Dynamic man-in-the-middle link attacks.
//!
//! An [`AttackPlan`] decides which directed links are compromised in each
//! round and how messages on those links are altered. Link choices and
//! corrupted values come from keyed substreams, `(seed, t)` for the link set
//! and `(seed, t, from, to)` for each corrupted message.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::rng::{substream, Stream};

/// Rejection-sampling attempts before a dynamic link draw gives up.
pub const MAX_LINK_DRAWS: usize = 10_000;

/// Links under attack in one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompromisedLinkSet {
    pub round: usize,
    links: Vec<(usize, usize)>,
}

impl CompromisedLinkSet {
    pub fn new(round: usize, mut links: Vec<(usize, usize)>) -> Self {
        links.sort_unstable();
        links.dedup();
        Self { round, links }
    }

    pub fn empty(round: usize) -> Self {
        Self::new(round, Vec::new())
    }

    /// Compromised `(from, to)` links, sorted.
    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn contains(&self, from: usize, to: usize) -> bool {
        self.links.binary_search(&(from, to)).is_ok()
    }

    /// In-neighbors of `node` whose link to it is compromised.
    pub fn compromised_sources(&self, node: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .links
            .iter()
            .filter(|&&(_, to)| to == node)
            .map(|&(from, _)| from)
            .collect();
        out.sort_unstable();
        out
    }

    pub fn incoming_count(&self, node: usize) -> usize {
        self.links.iter().filter(|&&(_, to)| to == node).count()
    }

    /// Largest number of compromised links entering any single node.
    pub fn max_incoming(&self, nodes: usize) -> usize {
        (0..nodes)
            .map(|j| self.incoming_count(j))
            .max()
            .unwrap_or(0)
    }

    /// In-neighbors of `node` whose link is not compromised.
    pub fn honest_sources(&self, g: &DirectedGraph, node: usize) -> Vec<usize> {
        g.in_neighbors(node)
            .iter()
            .copied()
            .filter(|&i| !self.contains(i, node))
            .collect()
    }

    fn check(&self, g: &DirectedGraph, cap: usize) -> Result<()> {
        for &(from, to) in &self.links {
            if !g.has_edge(from, to) {
                return Err(Error::UnknownLink { from, to });
            }
        }
        for node in 0..g.node_count() {
            let count = self.incoming_count(node);
            if count > cap {
                return Err(Error::CapViolated { node, count, cap });
            }
        }
        Ok(())
    }
}

/// How a compromised link alters the message it carries.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackStrategy {
    None,
    /// Every coordinate replaced by an independent draw from `[-range, range]`.
    RandomValue {
        range: f64,
    },
    /// `m' = -m`.
    SignFlip,
    /// The message is replaced by a fixed vector.
    Constant(Vec<f64>),
}

impl AttackStrategy {
    /// Default range for random-value attacks: 100 times the initialization radius.
    pub fn random_for_radius(init_radius: f64) -> Self {
        Self::RandomValue {
            range: 100.0 * init_radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::RandomValue { range } if !range.is_finite() || *range < 0.0 => {
                Err(Error::NonFiniteAttack)
            }
            Self::Constant(c) if c.iter().any(|v| !v.is_finite()) => Err(Error::NonFiniteAttack),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinkPolicy {
    /// `count` directed links drawn afresh every round.
    DynamicRandom { count: usize },
    /// The same links every round.
    Static(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    pub policy: LinkPolicy,
    pub strategy: AttackStrategy,
    pub seed: u64,
}

impl AttackPlan {
    /// A plan that never attacks.
    pub fn none() -> Self {
        Self {
            policy: LinkPolicy::DynamicRandom { count: 0 },
            strategy: AttackStrategy::None,
            seed: 0,
        }
    }

    pub fn dynamic(count: usize, strategy: AttackStrategy, seed: u64) -> Result<Self> {
        strategy.validate()?;
        Ok(Self {
            policy: LinkPolicy::DynamicRandom { count },
            strategy,
            seed,
        })
    }

    /// A fixed link set, checked against the graph and the per-node cap `b`.
    pub fn fixed(
        links: Vec<(usize, usize)>,
        strategy: AttackStrategy,
        seed: u64,
        g: &DirectedGraph,
        b: usize,
    ) -> Result<Self> {
        strategy.validate()?;
        let set = CompromisedLinkSet::new(0, links);
        set.check(g, b)?;
        Ok(Self {
            policy: LinkPolicy::Static(set.links),
            strategy,
            seed,
        })
    }

    /// Number of links attacked per round.
    pub fn links_per_round(&self) -> usize {
        match &self.policy {
            LinkPolicy::DynamicRandom { count } => *count,
            LinkPolicy::Static(links) => links.len(),
        }
    }

    /// Check the plan against a graph and cap before a run starts.
    pub fn validate(&self, g: &DirectedGraph, b: usize) -> Result<()> {
        self.strategy.validate()?;
        match &self.policy {
            LinkPolicy::Static(links) => CompromisedLinkSet::new(0, links.clone()).check(g, b),
            LinkPolicy::DynamicRandom { count } => {
                if *count > g.edge_count() || *count > b * g.node_count() {
                    Err(Error::LinkSamplingFailed {
                        count: *count,
                        cap: b,
                        attempts: 0,
                    })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Corrupt the message sent on `from -> to` in round `t`.
    pub fn corrupt_link(&self, message: &[f64], t: usize, from: usize, to: usize) -> Vec<f64> {
        let mut rng = substream(
            self.seed,
            Stream::AttackValues,
            &[t as u64, from as u64, to as u64],
        );
        corrupt(message, &self.strategy, &mut rng)
    }
}

/// The compromised links for round `t`.
///
/// Dynamic plans draw `count` distinct edges uniformly and redraw until no
/// node receives more than `b` compromised links.
pub fn select_links(
    plan: &AttackPlan,
    g: &DirectedGraph,
    b: usize,
    t: usize,
) -> Result<CompromisedLinkSet> {
    match &plan.policy {
        LinkPolicy::Static(links) => {
            let set = CompromisedLinkSet::new(t, links.clone());
            set.check(g, b)?;
            Ok(set)
        }
        LinkPolicy::DynamicRandom { count } => {
            let count = *count;
            if count == 0 {
                return Ok(CompromisedLinkSet::empty(t));
            }
            let edges = g.edges();
            let fail = Error::LinkSamplingFailed {
                count,
                cap: b,
                attempts: MAX_LINK_DRAWS,
            };
            if count > edges.len() {
                return Err(fail);
            }
            let mut rng = substream(plan.seed, Stream::AttackLinks, &[t as u64]);
            for _ in 0..MAX_LINK_DRAWS {
                let picked: Vec<(usize, usize)> =
                    rand::seq::index::sample(&mut rng, edges.len(), count)
                        .into_iter()
                        .map(|i| edges[i])
                        .collect();
                let set = CompromisedLinkSet::new(t, picked);
                if set.max_incoming(g.node_count()) <= b {
                    return Ok(set);
                }
            }
            Err(fail)
        }
    }
}

/// Apply `strategy` to one in-flight message.
pub fn corrupt<R: Rng + ?Sized>(
    message: &[f64],
    strategy: &AttackStrategy,
    rng: &mut R,
) -> Vec<f64> {
    match strategy {
        AttackStrategy::None => message.to_vec(),
        AttackStrategy::SignFlip => message.iter().map(|v| -v).collect(),
        AttackStrategy::Constant(c) => c.clone(),
        AttackStrategy::RandomValue { range } => message
            .iter()
            .map(|_| {
                if *range == 0.0 {
                    0.0
                } else {
                    rng.random_range(-*range..=*range)
                }
            })
            .collect(),
    }
}

/// Express Byzantine nodes as a static attack on all of their outgoing links.
///
/// Requires that no node hears from more than `b` Byzantine nodes and that
/// `b < (|N_j| + 1) / 2` at every node.
pub fn map_byzantine(
    byzantine: &[usize],
    g: &DirectedGraph,
    b: usize,
    strategy: AttackStrategy,
    seed: u64,
) -> Result<AttackPlan> {
    g.require_in_degree(2 * b)?;
    let n = g.node_count();
    let mut links = Vec::new();
    for &u in byzantine {
        if u >= n {
            return Err(Error::NodeOutOfRange { node: u, nodes: n });
        }
        links.extend(g.out_neighbors(u).into_iter().map(|j| (u, j)));
    }
    AttackPlan::fixed(links, strategy, seed, g, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_erdos_renyi;
    use proptest::prelude::*;

    #[test]
    fn zero_links_is_empty() {
        let g = DirectedGraph::complete(5).unwrap();
        let plan = AttackPlan::dynamic(0, AttackStrategy::SignFlip, 3).unwrap();
        for t in 0..5 {
            assert!(select_links(&plan, &g, 1, t).unwrap().is_empty());
        }
    }

    #[test]
    fn dynamic_respects_cap() {
        let g = DirectedGraph::complete(5).unwrap();
        let plan = AttackPlan::dynamic(2, AttackStrategy::SignFlip, 3).unwrap();
        let mut distinct = alloc::collections::BTreeSet::new();
        for t in 0..50 {
            let set = select_links(&plan, &g, 1, t).unwrap();
            assert_eq!(set.len(), 2);
            assert!(set.max_incoming(5) <= 1);
            distinct.insert(set.links().to_vec());
        }
        // the attack moves between rounds
        assert!(distinct.len() > 1);
    }

    #[test]
    fn impossible_dynamic_draw_fails() {
        let g = DirectedGraph::complete(3).unwrap();
        let plan = AttackPlan::dynamic(4, AttackStrategy::SignFlip, 0).unwrap();
        assert!(select_links(&plan, &g, 1, 0).is_err());
        assert!(plan.validate(&g, 1).is_err());
    }

    #[test]
    fn corrupt_examples() {
        let mut rng = substream(0, Stream::AttackValues, &[]);
        assert_eq!(
            corrupt(&[1.0, -2.0, 0.5], &AttackStrategy::SignFlip, &mut rng),
            alloc::vec![-1.0, 2.0, -0.5]
        );
        assert_eq!(
            corrupt(&[4.0, 5.0], &AttackStrategy::None, &mut rng),
            alloc::vec![4.0, 5.0]
        );
        assert_eq!(
            corrupt(
                &[4.0, 5.0],
                &AttackStrategy::Constant(alloc::vec![9.0, 9.0]),
                &mut rng
            ),
            alloc::vec![9.0, 9.0]
        );
        let noisy = corrupt(
            &[0.0; 64],
            &AttackStrategy::RandomValue { range: 3.0 },
            &mut rng,
        );
        assert!(noisy.iter().all(|v| v.is_finite() && v.abs() <= 3.0));
    }

    #[test]
    fn non_finite_strategies_rejected() {
        assert!(AttackPlan::dynamic(
            1,
            AttackStrategy::RandomValue {
                range: f64::INFINITY
            },
            0
        )
        .is_err());
        assert!(
            AttackPlan::dynamic(1, AttackStrategy::Constant(alloc::vec![f64::NAN]), 0).is_err()
        );
    }

    #[test]
    fn byzantine_mapping() {
        let g = DirectedGraph::complete(5).unwrap();
        let empty = map_byzantine(&[], &g, 1, AttackStrategy::SignFlip, 0).unwrap();
        assert_eq!(select_links(&empty, &g, 1, 9).unwrap().len(), 0);

        let plan = map_byzantine(&[2], &g, 1, AttackStrategy::SignFlip, 0).unwrap();
        for t in [0, 17, 400] {
            let set = select_links(&plan, &g, 1, t).unwrap();
            assert_eq!(set.links(), &[(2, 0), (2, 1), (2, 3), (2, 4)]);
        }

        // node 0 hears from both 1 and 2
        let err = map_byzantine(&[1, 2], &g, 1, AttackStrategy::SignFlip, 0);
        assert!(matches!(err, Err(Error::CapViolated { .. })));
    }

    #[test]
    fn static_plan_checks_edges() {
        let g = DirectedGraph::from_edges(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        let err = AttackPlan::fixed(alloc::vec![(1, 0)], AttackStrategy::SignFlip, 0, &g, 1);
        assert_eq!(err, Err(Error::UnknownLink { from: 1, to: 0 }));
    }

    proptest! {
        #[test]
        fn link_sets_partition_neighborhoods(seed in 0u64..200, t in 0usize..100, count in 0usize..6) {
            let g = generate_erdos_renyi(9, 0.8, seed).unwrap();
            prop_assume!(crate::graph::min_in_degree(&g) >= 3);
            let plan = AttackPlan::dynamic(count, AttackStrategy::SignFlip, seed).unwrap();
            let set = select_links(&plan, &g, 1, t).unwrap();
            prop_assert!(set.max_incoming(9) <= 1);
            for j in 0..9 {
                let mut all = set.compromised_sources(j);
                let honest = set.honest_sources(&g, j);
                prop_assert!(all.iter().all(|i| !honest.contains(i)));
                all.extend(honest);
                all.sort_unstable();
                prop_assert_eq!(all.as_slice(), g.in_neighbors(j));
            }
            // replay is identical
            prop_assert_eq!(select_links(&plan, &g, 1, t).unwrap(), set);
        }

        #[test]
        fn corruption_replays(seed in 0u64..1000, t in 0usize..50) {
            let plan = AttackPlan::dynamic(1, AttackStrategy::RandomValue { range: 10.0 }, seed).unwrap();
            let a = plan.corrupt_link(&[1.0, 2.0, 3.0], t, 0, 1);
            let b = plan.corrupt_link(&[1.0, 2.0, 3.0], t, 0, 1);
            prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
