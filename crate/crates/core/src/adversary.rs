//! Byzantine strategies.
//!
//! Every strategy is a deterministic function of (scenario seed, node id,
//! seed offset, received history, iteration) and may send a *different*
//! payload to each out-neighbor. A byzantine node holds its own signing key
//! and can verify anyone, but never holds honest signing keys — so forged
//! honest-origin records cannot carry valid signatures.
//!
//! Except for `silent`, every strategy relays its merged view of the network
//! (so byzantine nodes can sit on relay paths) and manipulates its own slot
//! — or, for forging strategies, other slots — at send time.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::auth::{AuthScheme, SigningKey};
use crate::graph::NodeId;
use crate::protocol::{merge_views, LocalView, StateRecord};

/// A strategy choice plus an offset that decorrelates its random stream from
/// other byzantine nodes using the same scenario seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    #[serde(flatten)]
    pub kind: StrategyKind,
    #[serde(default)]
    pub seed_offset: u64,
}

/// The strategy menu. `scripted` replays a user-supplied per-iteration
/// payload table and covers anything the fixed menu does not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    /// Sends nothing, ever.
    Silent,
    /// Claims the same extreme value every iteration, genuinely signed.
    ConstantExtreme { value: f64 },
    /// Draws an independent uniform value from `[low, high]` *per neighbor*
    /// each iteration — mismatching messages on purpose.
    RandomEquivocate { low: f64, high: f64 },
    /// Re-broadcasts its own full view from `age` iterations ago: genuinely
    /// signed but stale honest records.
    ReplayStale { age: u64 },
    /// Fabricates records for every honest origin claiming `value`, signed
    /// with the byzantine node's own key; these must die at verification.
    ForgeAttempt { value: f64 },
    /// Signs its own value with marker `t + lead` (`lead >= 0`), probing the
    /// receive-time marker window.
    FutureMarker {
        value: f64,
        #[serde(default)]
        lead: i64,
    },
    /// Plays back an explicit table of (iteration, value) rows, optionally
    /// per-target and with an explicit marker.
    Scripted { steps: Vec<ScriptStep> },
}

/// One row of a scripted strategy's payload table. Omitting `target` applies
/// the row to every neighbor; omitting `marker` uses the freshest marker the
/// receive window accepts (`t - 1`, or `-1` at iteration 0). When several
/// rows match, the last one wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub iteration: i64,
    pub value: f64,
    #[serde(default)]
    pub target: Option<NodeId>,
    #[serde(default)]
    pub marker: Option<i64>,
}

/// Freshest marker acceptable at receive time in iteration `t`.
fn fresh_marker(t: i64) -> i64 {
    if t <= 0 { -1 } else { t - 1 }
}

/// Derives one byzantine node's random stream from the scenario seed, its
/// id, and its spec's seed offset.
fn strategy_rng(scenario_seed: u64, node: NodeId, seed_offset: u64) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(scenario_seed.to_le_bytes());
    hasher.update((node as u64).to_le_bytes());
    hasher.update(seed_offset.to_le_bytes());
    ChaCha20Rng::from_seed(hasher.finalize().into())
}

/// A byzantine node's private memory: its merged view of the network, the
/// per-iteration history of that view (for replay), and its random stream.
#[derive(Debug, Clone)]
pub struct AdversaryNode {
    pub node: NodeId,
    spec: StrategySpec,
    key: SigningKey,
    view: LocalView,
    /// `history[k]` is the view at the end of iteration `k`.
    history: Vec<LocalView>,
    rng: ChaCha20Rng,
}

impl AdversaryNode {
    pub fn new(
        node: NodeId,
        spec: StrategySpec,
        key: SigningKey,
        m: usize,
        default_value: f64,
        scenario_seed: u64,
    ) -> Self {
        let rng = strategy_rng(scenario_seed, node, spec.seed_offset);
        Self {
            node,
            spec,
            key,
            view: LocalView::new_default(node, m, default_value),
            history: Vec::new(),
            rng,
        }
    }

    /// Ingests the iteration-`t` inbox into the node's merged memory and
    /// snapshots it; uses the same validation as honest merges, so the
    /// memory only ever holds genuine records.
    pub fn observe(&mut self, inbox: &[(NodeId, LocalView)], t: i64, scheme: &dyn AuthScheme) {
        let (merged, _) = merge_views(&self.view, inbox, t, scheme);
        self.view = merged;
        self.history.push(self.view.clone());
    }

    fn own_record(&self, scheme: &dyn AuthScheme, value: f64, marker: i64) -> StateRecord {
        let signature = scheme
            .sign(&self.key, self.node, value, marker)
            .expect("byzantine payload values are finite by construction");
        StateRecord { origin: self.node, value, marker, signature }
    }

    /// Builds the iteration-`t` outbox: one payload per out-neighbor, keyed
    /// by neighbor id. Built from state as of the end of iteration `t - 1`,
    /// like honest broadcasts.
    pub fn outbox(
        &mut self,
        t: i64,
        out_neighbors: &[NodeId],
        scheme: &dyn AuthScheme,
    ) -> BTreeMap<NodeId, LocalView> {
        let mut outbox = BTreeMap::new();
        match self.spec.kind.clone() {
            StrategyKind::Silent => {}
            StrategyKind::ConstantExtreme { value } => {
                let mut payload = self.view.clone();
                payload.install(self.own_record(scheme, value, fresh_marker(t)));
                for &n in out_neighbors {
                    outbox.insert(n, payload.clone());
                }
            }
            StrategyKind::RandomEquivocate { low, high } => {
                for &n in out_neighbors {
                    let value = self.rng.random_range(low..=high);
                    let mut payload = self.view.clone();
                    payload.install(self.own_record(scheme, value, fresh_marker(t)));
                    outbox.insert(n, payload);
                }
            }
            StrategyKind::ReplayStale { age } => {
                // history[len-1] is the end of iteration t-1; replay the
                // view from `age` iterations before that, clamped to the
                // initial all-default view.
                let payload = if self.history.is_empty() || (age as usize) >= self.history.len() {
                    LocalView::new_default(self.node, self.view.m(), 0.0)
                } else {
                    self.history[self.history.len() - 1 - age as usize].clone()
                };
                for &n in out_neighbors {
                    outbox.insert(n, payload.clone());
                }
            }
            StrategyKind::ForgeAttempt { value } => {
                let marker = fresh_marker(t);
                let mut payload = self.view.clone();
                payload.install(self.own_record(scheme, value, marker));
                for origin in 0..self.view.m() {
                    if origin == self.node {
                        continue;
                    }
                    // Signed with *our* key but claiming someone else's
                    // origin: verification downstream must fail.
                    let signature = scheme
                        .sign(&self.key, self.node, value, marker)
                        .expect("finite by construction");
                    payload.install(StateRecord { origin, value, marker, signature });
                }
                for &n in out_neighbors {
                    outbox.insert(n, payload.clone());
                }
            }
            StrategyKind::FutureMarker { value, lead } => {
                let marker = t + lead.max(0);
                let mut payload = self.view.clone();
                payload.install(self.own_record(scheme, value, marker));
                for &n in out_neighbors {
                    outbox.insert(n, payload.clone());
                }
            }
            StrategyKind::Scripted { steps } => {
                for &n in out_neighbors {
                    let row = steps
                        .iter()
                        .filter(|s| s.iteration == t && (s.target.is_none() || s.target == Some(n)))
                        .next_back();
                    let mut payload = self.view.clone();
                    if let Some(step) = row {
                        let marker = step.marker.unwrap_or_else(|| fresh_marker(t));
                        payload.install(self.own_record(scheme, step.value, marker));
                    }
                    outbox.insert(n, payload);
                }
            }
        }
        outbox
    }
}
