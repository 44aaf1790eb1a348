//! Scenario configuration: the single JSON document that fully determines a
//! run (graph, initial values, byzantine strategies, relay depth, length,
//! seed), its validation rules, and a few built-in presets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{StrategyKind, StrategySpec};
use crate::graph::{DirectedNetwork, GraphDoc, GraphError, NodeId};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("byzantine count {b} must satisfy 3b < m (m = {m})")]
    ByzantineBound { m: usize, b: usize },
    #[error("relay depth {d} is below the honest-subgraph diameter {diameter}")]
    DepthTooSmall { d: usize, diameter: usize },
    #[error("expected {expected} initial values (one per honest node), got {got}")]
    InitialValuesCount { expected: usize, got: usize },
    #[error("initial value at position {index} is not finite")]
    NonFiniteInitialValue { index: usize },
    #[error("node {node} has a strategy but is not byzantine")]
    StrategyForHonestNode { node: NodeId },
    #[error("strategy for node {node} has a non-finite parameter")]
    NonFiniteStrategyValue { node: NodeId },
    #[error("strategy for node {node} has an empty range (low > high)")]
    BadRange { node: NodeId },
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("run length {t} is shorter than the relay depth {d}; no update would ever fire")]
    RunTooShort { t: u64, d: usize },
    #[error("default value must be finite")]
    NonFiniteDefault,
    #[error("convergence threshold must be finite and positive")]
    BadThreshold,
    #[error("unknown scenario preset '{0}'")]
    UnknownPreset(String),
}

/// Relay depth: a fixed iteration count, or `"auto"` to use the honest
/// subgraph's diameter exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DepthParam {
    Fixed(usize),
    Auto(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoKeyword {
    #[serde(rename = "auto")]
    Auto,
}

impl Default for DepthParam {
    fn default() -> Self {
        DepthParam::Auto(AutoKeyword::Auto)
    }
}

/// Which message sources a node merges from. The default follows the
/// broadcast/receive data flow (you merge what arrives on in-edges);
/// `out_neighbors` is the literal reading of the update rule's neighbor set
/// for anyone wanting to reproduce it verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeSource {
    #[default]
    InNeighbors,
    OutNeighbors,
}

fn default_threshold() -> f64 {
    1e-6
}

/// The full run description. Everything a run does is a deterministic
/// function of this document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub graph: GraphDoc,
    /// One value per honest node, in ascending honest-id order.
    pub initial_values: Vec<f64>,
    /// Strategy per byzantine node id; byzantine nodes without an entry are
    /// silent.
    #[serde(default)]
    pub b_strategy: BTreeMap<NodeId, StrategySpec>,
    /// Relay depth D.
    #[serde(rename = "D", default)]
    pub d: DepthParam,
    /// Total iterations 0..T.
    #[serde(rename = "T")]
    pub t: u64,
    /// Value assumed for origins never properly heard from.
    #[serde(default)]
    pub default_value: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub merge_from: MergeSource,
    /// Honest spread below which a run counts as converged in reports.
    #[serde(default = "default_threshold")]
    pub convergence_threshold: f64,
}

/// A validated scenario: the built graph, the resolved relay depth, and a
/// strategy for every byzantine node.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub config: ScenarioConfig,
    pub network: DirectedNetwork,
    pub d: usize,
    pub honest_ids: Vec<NodeId>,
    pub strategies: BTreeMap<NodeId, StrategySpec>,
}

impl ResolvedScenario {
    pub fn m(&self) -> usize {
        self.network.m()
    }

    pub fn h(&self) -> usize {
        self.honest_ids.len()
    }

    pub fn b(&self) -> usize {
        self.m() - self.h()
    }
}

impl ScenarioConfig {
    /// Validates the document and resolves the graph and relay depth.
    pub fn resolve(&self) -> Result<ResolvedScenario, ConfigError> {
        let network = self.graph.build()?;
        let m = network.m();
        let b = network.byzantine().len();
        if 3 * b >= m {
            return Err(ConfigError::ByzantineBound { m, b });
        }
        let honest_ids = network.honest_ids();
        let h = honest_ids.len();
        let diameter = network.honest_diameter()?;
        let d = match self.d {
            DepthParam::Auto(_) => diameter,
            DepthParam::Fixed(d) => {
                if d < diameter {
                    return Err(ConfigError::DepthTooSmall { d, diameter });
                }
                d
            }
        };
        if self.initial_values.len() != h {
            return Err(ConfigError::InitialValuesCount {
                expected: h,
                got: self.initial_values.len(),
            });
        }
        if let Some(index) = self.initial_values.iter().position(|v| !v.is_finite()) {
            return Err(ConfigError::NonFiniteInitialValue { index });
        }
        if self.t == 0 {
            return Err(ConfigError::ZeroIterations);
        }
        if self.t < d as u64 {
            return Err(ConfigError::RunTooShort { t: self.t, d });
        }
        if !self.default_value.is_finite() {
            return Err(ConfigError::NonFiniteDefault);
        }
        if !(self.convergence_threshold.is_finite() && self.convergence_threshold > 0.0) {
            return Err(ConfigError::BadThreshold);
        }
        let mut strategies = BTreeMap::new();
        for (&node, spec) in &self.b_strategy {
            if !network.byzantine().contains(&node) {
                return Err(ConfigError::StrategyForHonestNode { node });
            }
            validate_strategy(node, &spec.kind)?;
            strategies.insert(node, spec.clone());
        }
        for &node in network.byzantine() {
            strategies
                .entry(node)
                .or_insert(StrategySpec { kind: StrategyKind::Silent, seed_offset: 0 });
        }
        Ok(ResolvedScenario {
            config: self.clone(),
            network,
            d,
            honest_ids,
            strategies,
        })
    }

    /// Built-in scenarios. Each exercises a different graph shape or
    /// strategy; all validate.
    pub fn preset(name: &str) -> Result<ScenarioConfig, ConfigError> {
        let cfg = match name {
            // Complete graph, one extreme-valued liar, long run.
            "complete_extreme" => ScenarioConfig {
                graph: GraphDoc::preset("complete", 5, vec![4]),
                initial_values: vec![0.0, 1.0, 2.0, 3.0],
                b_strategy: one_strategy(4, StrategyKind::ConstantExtreme { value: 100.0 }),
                d: DepthParam::default(),
                t: 500,
                default_value: 0.0,
                seed: 1,
                merge_from: MergeSource::default(),
                convergence_threshold: 1e-6,
            },
            // Directed honest cycle (diameter 3): relay depth matters.
            "cycle_relay" => ScenarioConfig {
                graph: GraphDoc::preset("honest_cycle_plus_byz", 5, vec![4]),
                initial_values: vec![0.0, 1.0, 2.0, 3.0],
                b_strategy: one_strategy(
                    4,
                    StrategyKind::RandomEquivocate { low: -50.0, high: 50.0 },
                ),
                d: DepthParam::default(),
                t: 60,
                default_value: 0.0,
                seed: 11,
                merge_from: MergeSource::default(),
                convergence_threshold: 1e-6,
            },
            // Bidirectional honest path (diameter 4) with a stale replayer.
            "path_relay" => ScenarioConfig {
                graph: GraphDoc::preset("bidirectional_path_plus_byz", 6, vec![5]),
                initial_values: vec![0.0, 1.0, 2.0, 3.0, 10.0],
                b_strategy: one_strategy(5, StrategyKind::ReplayStale { age: 3 }),
                d: DepthParam::default(),
                t: 80,
                default_value: 0.0,
                seed: 13,
                merge_from: MergeSource::default(),
                convergence_threshold: 1e-6,
            },
            // Smallest interesting system (h = 3, b = 1): 8 reduced graphs,
            // short enough to check long window products.
            "complete_scrambling" => ScenarioConfig {
                graph: GraphDoc::preset("complete", 4, vec![3]),
                initial_values: vec![0.5, 1.5, 3.0],
                b_strategy: one_strategy(
                    3,
                    StrategyKind::RandomEquivocate { low: -10.0, high: 10.0 },
                ),
                d: DepthParam::default(),
                t: 40,
                default_value: 0.0,
                seed: 17,
                merge_from: MergeSource::default(),
                convergence_threshold: 1e-6,
            },
            // Forgery pressure: every honest slot attacked every iteration.
            "complete_forge" => ScenarioConfig {
                graph: GraphDoc::preset("complete", 4, vec![3]),
                initial_values: vec![1.0, 2.0, 4.0],
                b_strategy: one_strategy(3, StrategyKind::ForgeAttempt { value: 99.0 }),
                d: DepthParam::default(),
                t: 30,
                default_value: 0.0,
                seed: 19,
                merge_from: MergeSource::default(),
                convergence_threshold: 1e-6,
            },
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        Ok(cfg)
    }

    pub fn preset_names() -> &'static [&'static str] {
        &[
            "complete_extreme",
            "cycle_relay",
            "path_relay",
            "complete_scrambling",
            "complete_forge",
        ]
    }
}

fn one_strategy(node: NodeId, kind: StrategyKind) -> BTreeMap<NodeId, StrategySpec> {
    let mut map = BTreeMap::new();
    map.insert(node, StrategySpec { kind, seed_offset: 0 });
    map
}

fn validate_strategy(node: NodeId, kind: &StrategyKind) -> Result<(), ConfigError> {
    let finite = |v: f64| v.is_finite();
    match kind {
        StrategyKind::Silent | StrategyKind::ReplayStale { .. } => Ok(()),
        StrategyKind::ConstantExtreme { value }
        | StrategyKind::ForgeAttempt { value }
        | StrategyKind::FutureMarker { value, .. } => {
            if finite(*value) {
                Ok(())
            } else {
                Err(ConfigError::NonFiniteStrategyValue { node })
            }
        }
        StrategyKind::RandomEquivocate { low, high } => {
            if !finite(*low) || !finite(*high) {
                Err(ConfigError::NonFiniteStrategyValue { node })
            } else if low > high {
                Err(ConfigError::BadRange { node })
            } else {
                Ok(())
            }
        }
        StrategyKind::Scripted { steps } => {
            if steps.iter().all(|s| finite(s.value)) {
                Ok(())
            } else {
                Err(ConfigError::NonFiniteStrategyValue { node })
            }
        }
    }
}
