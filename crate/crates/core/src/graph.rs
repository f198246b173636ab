//! Network topologies and the filtered-graph connectivity check.
//!
//! Edges are directed: `(i, j)` means node `j` receives from node `i`.
//! A filtered graph removes exactly `2b` incoming edges at every node; the
//! network is sufficiently connected when every filtered graph keeps a
//! source component with more than one node.

use alloc::vec;
use alloc::vec::Vec;

use itertools::Itertools;
use num_bigint::BigUint;
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Above this many filtered graphs, connectivity checks default to sampling.
pub const EXHAUSTIVE_DEFAULT_LIMIT: u64 = 10_000;

/// A static directed communication graph with sorted in-neighborhoods.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    in_neighbors: Vec<Vec<usize>>,
}

impl DirectedGraph {
    /// Graph with `nodes` nodes and no edges.
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::TooFewNodes(nodes));
        }
        Ok(Self {
            in_neighbors: vec![Vec::new(); nodes],
        })
    }

    pub fn from_edges<I>(nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::new(nodes)?;
        for (from, to) in edges {
            g.add_edge(from, to)?;
        }
        Ok(g)
    }

    /// Complete digraph: every ordered pair of distinct nodes is an edge.
    pub fn complete(nodes: usize) -> Result<Self> {
        let mut g = Self::new(nodes)?;
        for (j, nbrs) in g.in_neighbors.iter_mut().enumerate() {
            nbrs.extend((0..nodes).filter(|&i| i != j));
        }
        Ok(g)
    }

    /// Insert `from -> to`. Duplicate edges are ignored.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<()> {
        let nodes = self.node_count();
        for node in [from, to] {
            if node >= nodes {
                return Err(Error::NodeOutOfRange { node, nodes });
            }
        }
        if from == to {
            return Err(Error::SelfLoop(from));
        }
        let nbrs = &mut self.in_neighbors[to];
        if let Err(pos) = nbrs.binary_search(&from) {
            nbrs.insert(pos, from);
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.in_neighbors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.in_neighbors.iter().map(Vec::len).sum()
    }

    /// The in-neighborhood of `node`, sorted ascending.
    pub fn in_neighbors(&self, node: usize) -> &[usize] {
        &self.in_neighbors[node]
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.in_neighbors[node].len()
    }

    pub fn out_neighbors(&self, node: usize) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&j| self.has_edge(node, j))
            .collect()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        to < self.node_count() && self.in_neighbors[to].binary_search(&from).is_ok()
    }

    /// All edges as `(from, to)`, sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .in_neighbors
            .iter()
            .enumerate()
            .flat_map(|(to, nbrs)| nbrs.iter().map(move |&from| (from, to)))
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Relabel nodes so that old node `i` becomes `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count();
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: perm.len(),
            });
        }
        Self::from_edges(n, self.edges().into_iter().map(|(i, j)| (perm[i], perm[j])))
    }

    /// Reject graphs where some node has fewer than `required` in-neighbors.
    pub fn require_in_degree(&self, required: usize) -> Result<()> {
        match (0..self.node_count()).find(|&j| self.in_degree(j) < required) {
            Some(node) => Err(Error::DegreeTooLow {
                node,
                degree: self.in_degree(node),
                required,
            }),
            None => Ok(()),
        }
    }
}

/// Erdős–Rényi graph: each unordered pair is linked in both directions with
/// probability `rho`. Pairs are visited in lexicographic order from one
/// keyed stream, so the graph depends only on `(nodes, rho, seed)`.
pub fn generate_erdos_renyi(nodes: usize, rho: f64, seed: u64) -> Result<DirectedGraph> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidProbability(rho));
    }
    let mut g = DirectedGraph::new(nodes)?;
    let mut rng = substream(seed, Stream::Graph, &[nodes as u64]);
    for i in 0..nodes {
        for j in (i + 1)..nodes {
            let u: f64 = rng.random();
            if u < rho {
                g.add_edge(i, j)?;
                g.add_edge(j, i)?;
            }
        }
    }
    Ok(g)
}

pub fn min_in_degree(g: &DirectedGraph) -> usize {
    (0..g.node_count())
        .map(|j| g.in_degree(j))
        .min()
        .unwrap_or(0)
}

/// Nodes with directed paths to every other node, sorted ascending.
///
/// Computed on the condensation: the answer is the unique strongly connected
/// component without incoming edges, or empty when there are several.
pub fn source_component(g: &DirectedGraph) -> Vec<usize> {
    let n = g.node_count();
    let mut pg = DiGraph::<(), ()>::with_capacity(n, g.edge_count());
    for _ in 0..n {
        pg.add_node(());
    }
    for (from, to) in g.edges() {
        pg.add_edge(NodeIndex::new(from), NodeIndex::new(to), ());
    }
    let sccs = tarjan_scc(&pg);
    let mut comp = vec![0usize; n];
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            comp[v.index()] = c;
        }
    }
    let mut has_external_in = vec![false; sccs.len()];
    for (from, to) in g.edges() {
        if comp[from] != comp[to] {
            has_external_in[comp[to]] = true;
        }
    }
    let mut sources = has_external_in
        .iter()
        .enumerate()
        .filter(|(_, &ext)| !ext)
        .map(|(c, _)| c);
    match (sources.next(), sources.next()) {
        (Some(c), None) => {
            let mut nodes: Vec<usize> = sccs[c].iter().map(|v| v.index()).collect();
            nodes.sort_unstable();
            nodes
        }
        _ => Vec::new(),
    }
}

fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Number of filtered graphs, `prod_j C(|N_j|, 2b)`.
pub fn count_tau(g: &DirectedGraph, b: usize) -> Result<BigUint> {
    g.require_in_degree(2 * b)?;
    Ok((0..g.node_count())
        .map(|j| binomial(g.in_degree(j), 2 * b))
        .product())
}

/// A base graph with exactly `2b` incoming edges removed at every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilteredGraph {
    pub base: DirectedGraph,
    /// `removed[j]` lists the in-neighbors of `j` whose edges were dropped.
    pub removed: Vec<Vec<usize>>,
}

impl FilteredGraph {
    /// The graph that remains after the removals.
    pub fn remaining(&self) -> DirectedGraph {
        let in_neighbors = self
            .base
            .in_neighbors
            .iter()
            .zip(&self.removed)
            .map(|(nbrs, gone)| nbrs.iter().copied().filter(|i| !gone.contains(i)).collect())
            .collect();
        DirectedGraph { in_neighbors }
    }

    /// Whether the remaining graph has a source component of size > 1.
    pub fn has_large_source_component(&self) -> bool {
        source_component(&self.remaining()).len() > 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectivityMode {
    Exhaustive,
    Sampled,
}

impl ConnectivityMode {
    /// Exhaustive for small `tau`, sampled otherwise.
    pub fn auto(tau: &BigUint) -> Self {
        if *tau <= BigUint::from(EXHAUSTIVE_DEFAULT_LIMIT) {
            Self::Exhaustive
        } else {
            Self::Sampled
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityReport {
    pub mode: ConnectivityMode,
    pub checked_count: u64,
    pub all_pass: bool,
    pub counterexample: Option<FilteredGraph>,
    pub tau: BigUint,
}

/// Check that filtered graphs keep a source component of size > 1.
///
/// Exhaustive mode enumerates all `tau` filtered graphs and fails with
/// [`Error::BudgetExceeded`] when `tau > budget`. Sampled mode draws `budget`
/// filtered graphs uniformly. Both stop at the first failing graph.
pub fn verify_sufficient_connectivity(
    g: &DirectedGraph,
    b: usize,
    mode: ConnectivityMode,
    budget: u64,
    seed: u64,
) -> Result<ConnectivityReport> {
    let tau = count_tau(g, b)?;
    let n = g.node_count();
    let mut checked = 0u64;
    let mut counterexample = None;

    match mode {
        ConnectivityMode::Exhaustive => {
            if tau > BigUint::from(budget) {
                return Err(Error::BudgetExceeded {
                    tau: alloc::format!("{tau}"),
                    budget,
                });
            }
            let choices: Vec<Vec<Vec<usize>>> = (0..n)
                .map(|j| {
                    g.in_neighbors(j)
                        .iter()
                        .copied()
                        .combinations(2 * b)
                        .collect()
                })
                .collect();
            for removed in choices.iter().multi_cartesian_product() {
                let fg = FilteredGraph {
                    base: g.clone(),
                    removed: removed.into_iter().cloned().collect(),
                };
                checked += 1;
                if !fg.has_large_source_component() {
                    counterexample = Some(fg);
                    break;
                }
            }
        }
        ConnectivityMode::Sampled => {
            let mut rng = substream(seed, Stream::Connectivity, &[b as u64]);
            for _ in 0..budget {
                let removed = (0..n)
                    .map(|j| {
                        let nbrs = g.in_neighbors(j);
                        let mut pick: Vec<usize> =
                            rand::seq::index::sample(&mut rng, nbrs.len(), 2 * b)
                                .into_iter()
                                .map(|idx| nbrs[idx])
                                .collect();
                        pick.sort_unstable();
                        pick
                    })
                    .collect();
                let fg = FilteredGraph {
                    base: g.clone(),
                    removed,
                };
                checked += 1;
                if !fg.has_large_source_component() {
                    counterexample = Some(fg);
                    break;
                }
            }
        }
    }

    Ok(ConnectivityReport {
        mode,
        checked_count: checked,
        all_pass: counterexample.is_none(),
        counterexample,
        tau,
    })
}
