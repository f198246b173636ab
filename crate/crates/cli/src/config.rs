//! Experiment configuration files.
//!
//! A suite file is TOML with one `[suite]` table and one `[run.NAME]` table
//! per configuration:
//!
//! ```toml
//! [suite]
//! mode = "resist_vs_dgd"   # single | resist_vs_dgd | h_vs_half | n_vs_4n
//! seeds = [1, 2, 3]
//!
//! [run.quad]
//! graph = { kind = "erdos_renyi", nodes = 10, rho = 0.8 }
//! b = 1
//! j = 5
//! t_max = 500
//! step = { kind = "constant", h = 0.1 }
//! attack = { kind = "dynamic", count = 3, strategy = "random" }
//! objective = { kind = "quadratic", targets = "random", dim = 2 }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use resist_core::attack::{map_byzantine, AttackPlan, AttackStrategy};
use resist_core::data::{gaussian_blobs, local_logistic, partition_data, BlobSpec, PartitionMode};
use resist_core::graph::{generate_erdos_renyi, DirectedGraph};
use resist_core::objectives::{
    centralized_solve, make_pl_sine, make_pl_sum_counterexample, make_quadratic, SharedObjective,
    SolveMethod,
};
use resist_core::rng::{substream, Stream};
use resist_core::runner::{RunConfig, StepSchedule, TieMode};
use resist_core::screening::ScreeningRule;
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::formats::{load_edge_list, load_idx};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SuiteFile {
    #[serde(default)]
    pub suite: SuiteSection,
    #[serde(default)]
    pub run: BTreeMap<String, RunSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSection {
    #[serde(default)]
    pub mode: ComparisonMode,
    /// TOML integers are signed, so seeds in a file stop at `2^63 - 1`;
    /// larger seeds can still be passed on the command line.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Ergodicity tolerance for consensus-vector estimation.
    #[serde(default = "default_tol")]
    pub consensus_tol: f64,
}

impl Default for SuiteSection {
    fn default() -> Self {
        Self {
            mode: ComparisonMode::Single,
            seeds: default_seeds(),
            consensus_tol: default_tol(),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_tol() -> f64 {
    1e-10
}

fn default_radius() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonMode {
    #[default]
    Single,
    ResistVsDgd,
    HVsHalf,
    #[serde(rename = "n_vs_4n")]
    NVs4n,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub graph: GraphSpec,
    pub b: usize,
    #[serde(default)]
    pub attack: AttackSpec,
    /// Nodes whose outgoing links are all attacked (static mapping).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub byzantine: Vec<usize>,
    #[serde(default)]
    pub rule: RuleName,
    #[serde(default)]
    pub tie: TieName,
    pub j: usize,
    pub step: StepSpec,
    pub t_max: usize,
    #[serde(default = "default_radius")]
    pub init_radius: f64,
    pub objective: ObjectiveSpec,
    /// Keep per-block mixing matrices for consensus-weighted metrics.
    #[serde(default = "yes")]
    pub record: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    /// Write `Phi` checkpoints of coordinate 0 next to the metrics.
    #[serde(default)]
    pub dump_phi: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Complete { nodes: usize },
    ErdosRenyi { nodes: usize, rho: f64 },
    EdgeList { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    Dynamic,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    #[default]
    Random,
    SignFlip,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    #[serde(default)]
    pub kind: AttackKind,
    /// Links per round for dynamic attacks.
    #[serde(default)]
    pub count: usize,
    /// `[from, to]` pairs for static attacks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<[usize; 2]>,
    #[serde(default)]
    pub strategy: StrategyName,
    /// Random-value range; defaults to 100 times the initialization radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    #[default]
    Cwtm,
    Median,
    Krum,
    Bulyan,
    Mean,
}

impl From<RuleName> for ScreeningRule {
    fn from(r: RuleName) -> Self {
        match r {
            RuleName::Cwtm => ScreeningRule::Cwtm,
            RuleName::Median => ScreeningRule::Median,
            RuleName::Krum => ScreeningRule::Krum,
            RuleName::Bulyan => ScreeningRule::Bulyan,
            RuleName::Mean => ScreeningRule::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieName {
    #[default]
    SmallestId,
    Seeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSpec {
    Constant { h: f64 },
    Diminishing { p: f64, omega: f64 },
    FixedHorizon { steps: usize },
}

impl StepSpec {
    pub fn schedule(self) -> StepSchedule {
        match self {
            StepSpec::Constant { h } => StepSchedule::Constant(h),
            StepSpec::Diminishing { p, omega } => StepSchedule::Diminishing { p, omega },
            StepSpec::FixedHorizon { steps } => StepSchedule::FixedHorizon { steps },
        }
    }

    /// The same schedule with half the step size.
    pub fn halved(self) -> SimResult<Self> {
        match self {
            StepSpec::Constant { h } => Ok(StepSpec::Constant { h: h / 2.0 }),
            StepSpec::Diminishing { p, omega } => Ok(StepSpec::Diminishing { p: p / 2.0, omega }),
            StepSpec::FixedHorizon { .. } => Err(SimError::Config(
                "h_vs_half needs a constant or diminishing step".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Every node shares the target `(1, -1, 1, ...)`.
    Identical,
    /// Independent uniform targets on `[-scale, scale]^d`.
    #[default]
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PartitionName {
    #[default]
    Iid,
    Moderate,
    Extreme,
}

impl From<PartitionName> for PartitionMode {
    fn from(p: PartitionName) -> Self {
        match p {
            PartitionName::Iid => PartitionMode::Iid,
            PartitionName::Moderate => PartitionMode::Moderate,
            PartitionName::Extreme => PartitionMode::Extreme,
        }
    }
}

fn default_scale() -> f64 {
    1.0
}

fn default_l2() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Quadratic {
        #[serde(default)]
        targets: TargetMode,
        dim: usize,
        #[serde(default)]
        l2: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    Logistic {
        classes: usize,
        dim: usize,
        samples_per_node: usize,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "default_sep")]
        separation: f64,
        #[serde(default = "default_scale")]
        spread: f64,
        #[serde(default)]
        partition: PartitionName,
        /// Nodes training on flipped labels.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        flipped: Vec<usize>,
    },
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default)]
        partition: PartitionName,
        /// Use only the first `limit` samples.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
    PlSine,
    PlPair,
}

fn default_sep() -> f64 {
    2.0
}

impl ObjectiveSpec {
    /// The same objective with four times as many samples per node.
    pub fn quadrupled(&self) -> SimResult<Self> {
        match self {
            ObjectiveSpec::Logistic {
                samples_per_node, ..
            } => {
                let mut o = self.clone();
                if let ObjectiveSpec::Logistic {
                    samples_per_node: n,
                    ..
                } = &mut o
                {
                    *n = samples_per_node * 4;
                }
                Ok(o)
            }
            _ => Err(SimError::Config(
                "n_vs_4n needs a logistic objective".into(),
            )),
        }
    }
}

/// A run ready to execute.
pub struct BuiltRun {
    pub config: RunConfig,
    pub objectives: Vec<SharedObjective>,
    pub w_star: Vec<f64>,
    pub f_star: f64,
}

pub fn parse_suite(text: &str) -> SimResult<SuiteFile> {
    toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
}

pub fn load_suite(path: &Path) -> SimResult<SuiteFile> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    parse_suite(&text)
}

pub fn to_toml(suite: &SuiteFile) -> SimResult<String> {
    toml::to_string(suite).map_err(|e| SimError::Config(e.to_string()))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn config_err(name: &str, e: impl std::fmt::Display) -> SimError {
    SimError::Config(format!("run {name}: {e}"))
}

/// Prefix configuration errors with the run name; keep IO and format errors.
fn in_run(name: &str, e: SimError) -> SimError {
    match e {
        SimError::Config(m) => config_err(name, m),
        other => other,
    }
}

impl GraphSpec {
    pub fn build(&self, seed: u64, base: &Path) -> SimResult<DirectedGraph> {
        match self {
            GraphSpec::Complete { nodes } => {
                DirectedGraph::complete(*nodes).map_err(|e| SimError::Config(e.to_string()))
            }
            GraphSpec::ErdosRenyi { nodes, rho } => generate_erdos_renyi(*nodes, *rho, seed)
                .map_err(|e| SimError::Config(e.to_string())),
            GraphSpec::EdgeList { path } => Ok(load_edge_list(&resolve(base, path))?),
        }
    }
}

impl RunSpec {
    fn strategy(&self) -> SimResult<AttackStrategy> {
        let a = &self.attack;
        Ok(match a.strategy {
            StrategyName::Random => AttackStrategy::RandomValue {
                range: a.range.unwrap_or(100.0 * self.init_radius),
            },
            StrategyName::SignFlip => AttackStrategy::SignFlip,
            StrategyName::Constant => AttackStrategy::Constant(
                a.constant
                    .clone()
                    .ok_or_else(|| SimError::Config("constant strategy needs `constant`".into()))?,
            ),
        })
    }

    fn objectives(&self, m: usize, seed: u64, base: &Path) -> SimResult<Vec<SharedObjective>> {
        let core = |e: resist_core::Error| SimError::Config(e.to_string());
        match &self.objective {
            ObjectiveSpec::Quadratic {
                targets,
                dim,
                l2,
                scale,
            } => {
                let t: Vec<Vec<f64>> = match targets {
                    TargetMode::Identical => {
                        vec![
                            (0..*dim)
                                .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 })
                                .collect();
                            m
                        ]
                    }
                    TargetMode::Random => (0..m)
                        .map(|j| {
                            use rand::Rng;
                            let mut rng = substream(seed, Stream::Data, &[2, j as u64]);
                            (0..*dim)
                                .map(|_| rng.random_range(-*scale..=*scale))
                                .collect()
                        })
                        .collect(),
                };
                make_quadratic(&t, *l2).map_err(core)
            }
            ObjectiveSpec::Logistic {
                classes,
                dim,
                samples_per_node,
                l2,
                separation,
                spread,
                partition,
                flipped,
            } => {
                let total = samples_per_node * m;
                if *classes == 0 || !total.is_multiple_of(*classes) {
                    return Err(SimError::Config(
                        "samples_per_node * nodes must be divisible by classes".into(),
                    ));
                }
                let spec = BlobSpec {
                    classes: *classes,
                    dim: *dim,
                    samples_per_class: total / classes,
                    separation: *separation,
                    spread: *spread,
                };
                let data = gaussian_blobs(&spec, seed).map_err(core)?;
                let part = partition_data(&data, m, (*partition).into(), seed).map_err(core)?;
                if part.truncated > 0 {
                    log::warn!(
                        "dropped {} samples to balance the partition",
                        part.truncated
                    );
                }
                local_logistic(&data, &part, *l2, flipped).map_err(core)
            }
            ObjectiveSpec::Mnist {
                images,
                labels,
                l2,
                partition,
                limit,
            } => {
                let mut data = load_idx(&resolve(base, images), &resolve(base, labels))?;
                if let Some(n) = limit {
                    let idx: Vec<usize> = (0..(*n).min(data.len())).collect();
                    data = data.subset(&idx);
                }
                let part = partition_data(&data, m, (*partition).into(), seed).map_err(core)?;
                if part.truncated > 0 {
                    log::warn!(
                        "dropped {} samples to balance the partition",
                        part.truncated
                    );
                }
                local_logistic(&data, &part, *l2, &[]).map_err(core)
            }
            ObjectiveSpec::PlSine => Ok(vec![make_pl_sine(); m]),
            ObjectiveSpec::PlPair => Ok(vec![make_pl_sum_counterexample(); m]),
        }
    }

    /// Resolve graph, attack and objectives for one seed and validate the
    /// result without running it.
    pub fn build(&self, name: &str, seed: u64, base: &Path) -> SimResult<BuiltRun> {
        let graph = self.graph.build(seed, base).map_err(|e| in_run(name, e))?;
        let m = graph.node_count();
        let strategy = self.strategy().map_err(|e| config_err(name, e))?;
        let mut attack = match self.attack.kind {
            AttackKind::None => AttackPlan::none(),
            AttackKind::Dynamic => AttackPlan::dynamic(self.attack.count, strategy.clone(), seed)
                .map_err(|e| config_err(name, e))?,
            AttackKind::Static => {
                let links = self.attack.links.iter().map(|l| (l[0], l[1])).collect();
                AttackPlan::fixed(links, strategy.clone(), seed, &graph, self.b)
                    .map_err(|e| config_err(name, e))?
            }
        };
        if !self.byzantine.is_empty() {
            if self.attack.kind != AttackKind::None {
                return Err(config_err(
                    name,
                    "byzantine nodes cannot be combined with a link attack",
                ));
            }
            attack = map_byzantine(&self.byzantine, &graph, self.b, strategy, seed)
                .map_err(|e| config_err(name, e))?;
        }
        let rule: ScreeningRule = self.rule.into();
        let mut config = RunConfig::new(
            graph,
            self.b,
            self.j,
            self.step.schedule(),
            self.t_max,
            seed,
        );
        config.attack = attack;
        config.rule = rule;
        config.tie = match self.tie {
            TieName::SmallestId => TieMode::SmallestId,
            TieName::Seeded => TieMode::Seeded,
        };
        config.init_radius = self.init_radius;
        config.stride = self.stride.unwrap_or(self.j);
        let attacked = config.attack.links_per_round() > 0;
        config.recording = if self.record
            && (rule == ScreeningRule::Cwtm || (rule == ScreeningRule::Mean && !attacked))
        {
            resist_core::runner::Recording::Blocks
        } else {
            resist_core::runner::Recording::Off
        };
        let objectives = self
            .objectives(m, seed, base)
            .map_err(|e| in_run(name, e))?;
        config
            .validate(&objectives)
            .map_err(|e| config_err(name, e))?;
        let (w_star, f_star) =
            centralized_solve(&objectives, SolveMethod::Auto).map_err(|e| config_err(name, e))?;
        Ok(BuiltRun {
            config,
            objectives,
            w_star,
            f_star,
        })
    }
}
