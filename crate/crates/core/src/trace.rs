//! The execution trace: everything a run did, in enough detail to rebuild
//! per-phase transition matrices and audit every record that ever entered an
//! honest view. Traces are plain JSON and byte-reproducible from
//! (config, seed).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;
use crate::protocol::{LocalView, MergeStats, Slot, TrimOutcome};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace (de)serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("trace format version {got} unsupported (expected {expected})")]
    Version { got: u32, expected: u32 },
}

/// One slot of a view snapshot: `held` distinguishes a genuine record from
/// the predefined default. Signatures are not snapshotted — the signing log
/// is the audit trail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotSnapshot {
    pub held: bool,
    pub value: f64,
    pub marker: i64,
}

/// A full m-slot view at a point in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSnapshot {
    pub owner: NodeId,
    pub slots: Vec<SlotSnapshot>,
}

impl From<&LocalView> for ViewSnapshot {
    fn from(view: &LocalView) -> Self {
        ViewSnapshot {
            owner: view.owner,
            slots: view
                .slots()
                .iter()
                .map(|slot| SlotSnapshot {
                    held: slot.is_held(),
                    value: slot.value(),
                    marker: slot.marker(),
                })
                .collect(),
        }
    }
}

/// What one honest node did in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeIterationRecord {
    pub node: NodeId,
    /// View after merging this iteration's inbox, before any update.
    pub merged_view: ViewSnapshot,
    /// The trim partition behind the update; absent before the relay depth
    /// is reached.
    pub trim: Option<TrimOutcome>,
    /// State after the iteration: the trimmed mean when an update ran,
    /// otherwise the carried value.
    pub post_value: f64,
    pub merge: MergeStats,
}

/// One byzantine message as physically sent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByzantineMessage {
    pub from: NodeId,
    pub to: NodeId,
    pub payload: ViewSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: i64,
    /// Honest nodes in ascending id order.
    pub nodes: Vec<NodeIterationRecord>,
    /// Byzantine traffic as sent, ordered by (from, to).
    pub byzantine_messages: Vec<ByzantineMessage>,
    /// Total accounted message size this iteration (honest and byzantine),
    /// by the fixed formula in [`payload_bytes`].
    pub payload_bytes: u64,
}

/// An honest signing event; `value_bits` stores the exact f64 bit pattern, so
/// audits are immune to any text-level rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigningEvent {
    pub origin: NodeId,
    pub value_bits: u64,
    pub marker: i64,
}

impl SigningEvent {
    pub fn value(&self) -> f64 {
        f64::from_bits(self.value_bits)
    }
}

/// Fixed accounting formula for one sent view: 16 bytes of routing header,
/// plus per slot 1 tag byte, plus 56 bytes (origin 8, value 8, marker 8,
/// signature 32) for held slots. Independent of any serializer so the
/// relay-cost metric is stable.
pub fn payload_bytes(view: &LocalView) -> u64 {
    let slots: u64 = view
        .slots()
        .iter()
        .map(|slot| match slot {
            Slot::Default { .. } => 1,
            Slot::Held(_) => 1 + 56,
        })
        .sum();
    16 + slots
}

/// The complete record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub format_version: u32,
    pub config: ScenarioConfig,
    pub m: usize,
    pub h: usize,
    pub b: usize,
    pub d: usize,
    /// Iterations actually run; `iterations.len() == t_max`.
    pub t_max: u64,
    pub honest_ids: Vec<NodeId>,
    pub iterations: Vec<IterationRecord>,
    /// Every (origin, value, marker) an honest node ever signed, in signing
    /// order: first the `h` initial records, then one per update.
    pub honest_signing_log: Vec<SigningEvent>,
}

impl SimulationTrace {
    /// Post-iteration honest values at iteration `t`, in honest-id order.
    pub fn honest_values_at(&self, t: usize) -> Vec<f64> {
        self.iterations[t].nodes.iter().map(|n| n.post_value).collect()
    }

    /// max - min over honest values after iteration `t`.
    pub fn spread_at(&self, t: usize) -> f64 {
        let values = self.honest_values_at(t);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Spread over the last relay-depth window ending at iteration `t`:
    /// max - min across honest values of iterations `t-D+1 ..= t` (clamped
    /// at 0). This window is what contracts monotonically.
    pub fn window_spread_at(&self, t: usize) -> f64 {
        let lo = (t + 1).saturating_sub(self.d);
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        for it in lo..=t {
            for v in self.honest_values_at(it) {
                max = max.max(v);
                min = min.min(v);
            }
        }
        max - min
    }

    /// First iteration whose spread is below the configured threshold, if
    /// any.
    pub fn converged_at(&self) -> Option<usize> {
        (0..self.iterations.len())
            .find(|&t| self.spread_at(t) <= self.config.convergence_threshold)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn to_json_vec(&self) -> Result<Vec<u8>, TraceError> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, TraceError> {
        let trace: SimulationTrace = serde_json::from_reader(reader)?;
        if trace.format_version != crate::FORMAT_VERSION {
            return Err(TraceError::Version {
                got: trace.format_version,
                expected: crate::FORMAT_VERSION,
            });
        }
        Ok(trace)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, TraceError> {
        Self::from_reader(bytes)
    }

    /// Compact per-iteration CSV of honest values:
    /// `iteration, node_<id0>, node_<id1>, ...`.
    pub fn values_csv(&self) -> String {
        let mut out = String::from("iteration");
        for id in &self.honest_ids {
            out.push_str(&format!(", node_{id}"));
        }
        out.push('\n');
        for (t, rec) in self.iterations.iter().enumerate() {
            out.push_str(&t.to_string());
            for node in &rec.nodes {
                out.push_str(&format!(", {}", node.post_value));
            }
            out.push('\n');
        }
        out
    }
}
