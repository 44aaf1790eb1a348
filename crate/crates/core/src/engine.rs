//! The synchronous lockstep scheduler: every iteration, all nodes broadcast
//! views built from last iteration's state, all inboxes are delivered, honest
//! nodes merge and (once past the relay depth) update, byzantine nodes run
//! their strategies. Records the complete [`SimulationTrace`].
//!
//! The whole run is a deterministic function of the validated scenario: keys
//! derive from the scenario seed, adversary randomness derives from
//! (seed, node, offset), and all iteration state is ordered by node id.

use std::collections::BTreeMap;

use crate::adversary::AdversaryNode;
use crate::auth::{AuthScheme, KeyedHashScheme, SigningKey};
use crate::graph::NodeId;
use crate::protocol::{step_honest_node, LocalView, StateRecord};
use crate::scenario::{MergeSource, ResolvedScenario};
use crate::trace::{
    payload_bytes, ByzantineMessage, IterationRecord, NodeIterationRecord, SigningEvent,
    SimulationTrace, ViewSnapshot,
};

/// Runs a validated scenario under the keyed-MAC scheme derived from its
/// seed.
pub fn run_simulation(scenario: &ResolvedScenario) -> SimulationTrace {
    let scheme = KeyedHashScheme::from_seed(scenario.config.seed, scenario.m());
    run_simulation_with_scheme(scenario, &scheme)
}

/// Runs a validated scenario under any signature scheme. Key material always
/// derives from the scenario seed; schemes that ignore keys (the accept-all
/// scheme) simply don't use it.
pub fn run_simulation_with_scheme(
    scenario: &ResolvedScenario,
    scheme: &dyn AuthScheme,
) -> SimulationTrace {
    let net = &scenario.network;
    let m = net.m();
    let b = scenario.b();
    let d = scenario.d;
    let config = &scenario.config;

    let key_source = KeyedHashScheme::from_seed(config.seed, m);
    let keys: Vec<SigningKey> = (0..m)
        .map(|n| key_source.signing_key(n).expect("one key per node"))
        .collect();

    // --- initialization: honest nodes sign their initial values -----------
    let mut signing_log = Vec::new();
    let mut honest_views: BTreeMap<NodeId, LocalView> = BTreeMap::new();
    for (k, &id) in scenario.honest_ids.iter().enumerate() {
        let value = config.initial_values[k];
        let mut view = LocalView::new_default(id, m, config.default_value);
        let signature = scheme
            .sign(&keys[id], id, value, -1)
            .expect("initial values are validated finite");
        view.install(StateRecord { origin: id, value, marker: -1, signature });
        signing_log.push(SigningEvent { origin: id, value_bits: value.to_bits(), marker: -1 });
        honest_views.insert(id, view);
    }
    let mut adversaries: BTreeMap<NodeId, AdversaryNode> = scenario
        .strategies
        .iter()
        .map(|(&id, spec)| {
            let adv = AdversaryNode::new(
                id,
                spec.clone(),
                keys[id].clone(),
                m,
                config.default_value,
                config.seed,
            );
            (id, adv)
        })
        .collect();

    // Who a broadcast from `sender` is delivered to. The default follows the
    // edges; the literal-reading mode reverses them, so that each node ends
    // up merging messages from its out-neighbors.
    let receivers = |sender: NodeId| -> Vec<NodeId> {
        match config.merge_from {
            MergeSource::InNeighbors => net.out_neighbors(sender).iter().copied().collect(),
            MergeSource::OutNeighbors => net.in_neighbors(sender).iter().copied().collect(),
        }
    };

    // --- lockstep iterations ----------------------------------------------
    let mut iterations = Vec::with_capacity(config.t as usize);
    for t in 0..config.t as i64 {
        // Broadcast phase: payloads snapshot end-of-previous-iteration state.
        let honest_payloads: BTreeMap<NodeId, LocalView> =
            honest_views.iter().map(|(&id, v)| (id, v.clone())).collect();
        let mut byz_outboxes: BTreeMap<NodeId, BTreeMap<NodeId, LocalView>> = BTreeMap::new();
        for (&x, adv) in adversaries.iter_mut() {
            byz_outboxes.insert(x, adv.outbox(t, &receivers(x), scheme));
        }

        // Delivery phase.
        let mut inboxes: BTreeMap<NodeId, Vec<(NodeId, LocalView)>> =
            (0..m).map(|id| (id, Vec::new())).collect();
        let mut bytes: u64 = 0;
        for (&i, payload) in &honest_payloads {
            let to = receivers(i);
            bytes += payload_bytes(payload) * to.len() as u64;
            for j in to {
                inboxes.get_mut(&j).expect("all ids present").push((i, payload.clone()));
            }
        }
        let mut byzantine_messages = Vec::new();
        for (&x, outbox) in &byz_outboxes {
            for (&j, payload) in outbox {
                bytes += payload_bytes(payload);
                byzantine_messages
                    .push(ByzantineMessage { from: x, to: j, payload: ViewSnapshot::from(payload) });
                inboxes.get_mut(&j).expect("all ids present").push((x, payload.clone()));
            }
        }
        for inbox in inboxes.values_mut() {
            inbox.sort_by_key(|(sender, _)| *sender);
        }

        // Honest step phase.
        let mut node_records = Vec::with_capacity(scenario.honest_ids.len());
        for &i in &scenario.honest_ids {
            let inbox = &inboxes[&i];
            let out = step_honest_node(&honest_views[&i], inbox, t, d, b, scheme, &keys[i])
                .expect("validated scenarios satisfy m > 2b");
            let mut trim = out.trim;
            if let Some(trim) = trim.as_mut() {
                trim.byzantine_survivors =
                    trim.survivors.iter().filter(|e| net.is_byzantine(e.origin)).count();
                let value = out.updated.own_value();
                signing_log.push(SigningEvent { origin: i, value_bits: value.to_bits(), marker: t });
            }
            node_records.push(NodeIterationRecord {
                node: i,
                merged_view: ViewSnapshot::from(&out.merged),
                trim,
                post_value: out.updated.own_value(),
                merge: out.stats,
            });
            honest_views.insert(i, out.updated);
        }

        // Byzantine nodes ingest their own inboxes after sending.
        for (&x, adv) in adversaries.iter_mut() {
            adv.observe(&inboxes[&x], t, scheme);
        }

        iterations.push(IterationRecord {
            t,
            nodes: node_records,
            byzantine_messages,
            payload_bytes: bytes,
        });
    }

    SimulationTrace {
        format_version: crate::FORMAT_VERSION,
        config: config.clone(),
        m,
        h: scenario.h(),
        b,
        d,
        t_max: config.t,
        honest_ids: scenario.honest_ids.clone(),
        iterations,
        honest_signing_log: signing_log,
    }
}
