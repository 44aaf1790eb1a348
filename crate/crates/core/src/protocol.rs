//! The per-node protocol: signed state records, local views, the
//! freshest-marker merge, and the trimmed-mean update.
//!
//! Iteration `t` at an honest node: broadcast the current view, merge every
//! record received from in-neighbors that verifies and carries a marker in
//! `[-1, t)`, then — once `t >= D` — sort all `m` held values, drop the `b`
//! lowest and `b` highest, average the remaining `m - 2b`, and install the
//! result as the node's own record with marker `t` and a fresh signature.
//! Marker `-1` denotes initial state. Slots for origins never properly heard
//! from hold a configured default value and lose to any genuine record.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::{AuthScheme, Signature, SigningKey};
use crate::graph::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("trimmed mean needs m > 2b values, got m = {m}, b = {b}")]
    BadCardinality { m: usize, b: usize },
    #[error("signing failed: {0}")]
    Signing(#[from] crate::auth::AuthError),
}

/// A signed claim "origin held `value` after its iteration-`marker` update"
/// (`marker == -1`: initial state).
#[derive(Debug, Clone, PartialEq)]
pub struct StateRecord {
    pub origin: NodeId,
    pub value: f64,
    pub marker: i64,
    pub signature: Signature,
}

/// One view slot: either a genuine verified record for the slot's origin, or
/// the predefined default for origins never properly heard from.
#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    Default { value: f64 },
    Held(StateRecord),
}

impl Slot {
    pub fn value(&self) -> f64 {
        match self {
            Slot::Default { value } => *value,
            Slot::Held(rec) => rec.value,
        }
    }

    /// Marker for trim bookkeeping; defaults report the initial marker.
    pub fn marker(&self) -> i64 {
        match self {
            Slot::Default { .. } => -1,
            Slot::Held(rec) => rec.marker,
        }
    }

    pub fn is_held(&self) -> bool {
        matches!(self, Slot::Held(_))
    }
}

/// A node's full local state: one slot per origin, own slot included.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalView {
    pub owner: NodeId,
    slots: Vec<Slot>,
}

impl LocalView {
    /// All-default view (pre-initialization).
    pub fn new_default(owner: NodeId, m: usize, default_value: f64) -> Self {
        Self { owner, slots: vec![Slot::Default { value: default_value }; m] }
    }

    pub fn m(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, origin: NodeId) -> &Slot {
        &self.slots[origin]
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Installs a record into its origin's slot without any checks; for
    /// engine initialization and adversarial payload construction.
    pub fn install(&mut self, record: StateRecord) {
        let origin = record.origin;
        self.slots[origin] = Slot::Held(record);
    }

    pub fn own_value(&self) -> f64 {
        self.slots[self.owner].value()
    }

    pub fn own_marker(&self) -> i64 {
        self.slots[self.owner].marker()
    }

    /// The m held values in origin order (defaults included).
    pub fn values(&self) -> Vec<f64> {
        self.slots.iter().map(Slot::value).collect()
    }

    /// Trim entries (origin, value, marker) for all m slots in origin order.
    pub fn trim_entries(&self) -> Vec<TrimEntry> {
        self.slots
            .iter()
            .enumerate()
            .map(|(origin, slot)| TrimEntry {
                origin,
                value: slot.value(),
                marker: slot.marker(),
            })
            .collect()
    }
}

/// One sorted-position entry of a trim: which origin contributed the value
/// and the marker of the record it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimEntry {
    pub origin: NodeId,
    pub value: f64,
    pub marker: i64,
}

/// The full partition of a sorted view: dropped-low set, survivors, and
/// dropped-high set, in ascending sort order; `byzantine_survivors` counts
/// survivors of byzantine origin (annotated by the engine — honest nodes do
/// not know the byzantine set, the trace does).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimOutcome {
    pub low: Vec<TrimEntry>,
    pub survivors: Vec<TrimEntry>,
    pub high: Vec<TrimEntry>,
    pub byzantine_survivors: usize,
}

impl TrimOutcome {
    /// The full ascending sort the partition came from.
    pub fn sorted(&self) -> Vec<TrimEntry> {
        let mut v = Vec::with_capacity(self.low.len() + self.survivors.len() + self.high.len());
        v.extend_from_slice(&self.low);
        v.extend_from_slice(&self.survivors);
        v.extend_from_slice(&self.high);
        v
    }
}

/// Sorts ascending by `(value, origin)` — the origin tie-break makes the
/// outcome deterministic — drops the `b` lowest and `b` highest entries and
/// averages the rest.
pub fn trimmed_mean(
    entries: &[TrimEntry],
    b: usize,
) -> Result<(f64, TrimOutcome), ProtocolError> {
    let m = entries.len();
    if m <= 2 * b {
        return Err(ProtocolError::BadCardinality { m, b });
    }
    debug_assert!(entries.iter().all(|e| e.value.is_finite()), "trim inputs must be finite");
    let mut sorted = entries.to_vec();
    sorted.sort_by(|a, z| a.value.total_cmp(&z.value).then(a.origin.cmp(&z.origin)));
    let high = sorted.split_off(m - b);
    let survivors = sorted.split_off(b);
    let low = sorted;
    let mean = survivors.iter().map(|e| e.value).sum::<f64>() / survivors.len() as f64;
    Ok((mean, TrimOutcome { low, survivors, high, byzantine_survivors: 0 }))
}

/// Merge bookkeeping for diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeStats {
    /// Records that failed verification, the marker window, finiteness, or
    /// slot/origin consistency.
    pub rejected: u64,
    /// Slots whose record was replaced by a fresher one.
    pub updated: u64,
}

/// Merges an inbox of full views into `current` at iteration `t`.
///
/// Per non-own slot: keep the valid incoming record with the highest marker
/// if it beats the held one; marker ties keep the held record; a default
/// slot loses to any valid record. A record is valid when its origin matches
/// the slot, its signature verifies, its value is finite, and its marker
/// lies in `[-1, t)`. The result is independent of inbox order: competing
/// equal-marker candidates (possible only from equivocating origins) are
/// totalled by `(marker, value bits, signature)`.
pub fn merge_views(
    current: &LocalView,
    inbox: &[(NodeId, LocalView)],
    t: i64,
    scheme: &dyn AuthScheme,
) -> (LocalView, MergeStats) {
    let mut merged = current.clone();
    let mut stats = MergeStats::default();
    for origin in 0..current.m() {
        if origin == current.owner {
            continue;
        }
        let mut winner: Option<&StateRecord> = None;
        for (_sender, payload) in inbox {
            let rec = match payload.slot(origin) {
                Slot::Held(rec) => rec,
                Slot::Default { .. } => continue,
            };
            let valid = rec.origin == origin
                && rec.value.is_finite()
                && rec.marker >= -1
                && rec.marker < t
                && scheme.verify(rec.origin, rec.value, rec.marker, &rec.signature);
            if !valid {
                stats.rejected += 1;
                continue;
            }
            let better = match winner {
                None => true,
                Some(best) => {
                    (rec.marker, rec.value.to_bits(), &rec.signature)
                        .cmp(&(best.marker, best.value.to_bits(), &best.signature))
                        == std::cmp::Ordering::Greater
                }
            };
            if better {
                winner = Some(rec);
            }
        }
        if let Some(rec) = winner {
            let replace = match merged.slot(origin) {
                Slot::Default { .. } => true,
                Slot::Held(held) => rec.marker > held.marker,
            };
            if replace {
                merged.install(rec.clone());
                stats.updated += 1;
            }
        }
    }
    (merged, stats)
}

/// Everything one honest iteration produced: the post-merge view before the
/// update, the view after it (what gets broadcast next), the trim partition
/// (absent before the relay depth), and merge diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub merged: LocalView,
    pub updated: LocalView,
    pub trim: Option<TrimOutcome>,
    pub stats: MergeStats,
}

/// One honest node's full iteration: merge, then (for `t >= D`) the
/// trimmed-mean update installing a freshly signed own record with marker
/// `t`.
pub fn step_honest_node(
    view: &LocalView,
    inbox: &[(NodeId, LocalView)],
    t: i64,
    d: usize,
    b: usize,
    scheme: &dyn AuthScheme,
    key: &SigningKey,
) -> Result<StepOutput, ProtocolError> {
    let (merged, stats) = merge_views(view, inbox, t, scheme);
    let mut updated = merged.clone();
    let mut trim = None;
    if t >= d as i64 {
        let (mean, outcome) = trimmed_mean(&merged.trim_entries(), b)?;
        let signature = scheme.sign(key, merged.owner, mean, t)?;
        updated.install(StateRecord { origin: merged.owner, value: mean, marker: t, signature });
        trim = Some(outcome);
    }
    Ok(StepOutput { merged, updated, trim, stats })
}
