//! Deterministic simulator and analysis engine for a signed-relay
//! approximate byzantine consensus protocol.
//!
//! `m` nodes, at most `b` of them byzantine (`b < m/3`), exchange signed
//! state records over a static directed graph. Every iteration each node
//! broadcasts its full local view (one record per origin), merges received
//! records by freshest iteration marker, and — once relay has had time to
//! flood the honest subgraph (`t >= D`, the honest diameter bound) — replaces
//! its own state with a trimmed mean of all `m` values it holds: drop the
//! `b` lowest and `b` highest, average the rest. Signatures stop the
//! adversary from forging honest state; markers stop it from re-stamping
//! stale state as fresh.
//!
//! The crate has two halves:
//!
//! * simulation — [`graph`], [`auth`], [`protocol`], [`adversary`],
//!   [`scenario`]: run a configured scenario deterministically from a seed
//!   and record a full [`trace::SimulationTrace`];
//! * analysis — [`analysis`], [`report`]: rebuild, from the trace alone, the
//!   per-phase row-stochastic transition matrices that the honest states
//!   evolve by (`v[p] = M[p] * v[p-1]`, exactly), and mechanically check the
//!   structural properties that drive convergence: row stochasticity,
//!   self-weight diagonals, per-row origin support, reduced-graph domination
//!   of two-phase products, and fully-positive columns of long window
//!   products.

pub mod adversary;
pub mod analysis;
pub mod auth;
pub mod engine;
pub mod graph;
pub mod protocol;
pub mod report;
pub mod scenario;
pub mod trace;

pub use adversary::{StrategyKind, StrategySpec};
pub use analysis::{
    ConstructionMode, GCase, GRow, PhaseVector, TransitionMatrix, POSITIVITY_THRESHOLD,
};
pub use auth::{AuthError, AuthScheme, KeyedHashScheme, NullScheme, Signature, SigningKey};
pub use engine::{run_simulation, run_simulation_with_scheme};
pub use graph::{
    DirectedNetwork, GraphDoc, GraphError, NodeId, ReducedGraph, ReducedGraphFamily,
};
pub use protocol::{LocalView, ProtocolError, Slot, StateRecord, TrimEntry, TrimOutcome};
pub use report::{AnalysisReport, RunReport};
pub use scenario::{ConfigError, ResolvedScenario, ScenarioConfig};
pub use trace::SimulationTrace;

/// Trace/report/config schema version, embedded in every serialized artifact.
pub const FORMAT_VERSION: u32 = 1;
