//! Static directed communication graphs, their honest subgraphs, and the
//! reduced-graph family used by the convergence analysis.
//!
//! A reduced graph takes the complete graph over the `h` honest nodes and
//! removes, for each node, some `b` of its incoming edges; self-loops are
//! implicit. The family of all such graphs (size `C(h-1,b)^h`) is what
//! two-phase transition-matrix products are compared against.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node in the full network, `0..m`.
pub type NodeId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node id {id} out of range for {m} nodes")]
    InvalidNode { id: NodeId, m: usize },
    #[error("self-edge ({0}, {0}) not allowed; self-delivery is implicit")]
    SelfEdge(NodeId),
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("reduced-graph family has {count} members, above the cap of {cap}; use sampling")]
    TooLarge { count: u128, cap: u128 },
    #[error("reduced graph has no source node reaching all others")]
    NoSource,
    #[error("reduced-graph rank {rank} out of range for family of {count}")]
    RankOutOfRange { rank: u128, count: u128 },
    #[error("graph preset needs m >= {min} for {preset}")]
    PresetTooSmall { preset: String, min: usize },
    #[error("unknown graph preset {0:?}")]
    UnknownPreset(String),
}

/// A static directed communication graph over `m` nodes, a designated
/// byzantine subset, and no stored self-edges (self-delivery is implicit).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedNetwork {
    m: usize,
    byzantine: BTreeSet<NodeId>,
    out: Vec<BTreeSet<NodeId>>,
    inc: Vec<BTreeSet<NodeId>>,
}

impl DirectedNetwork {
    /// Builds a graph from explicit edge pairs `(from, to)`. Duplicate edges
    /// collapse; self-edges and out-of-range ids are rejected.
    pub fn new(
        m: usize,
        byzantine: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, GraphError> {
        let byzantine: BTreeSet<NodeId> = byzantine.into_iter().collect();
        if let Some(&id) = byzantine.iter().find(|&&id| id >= m) {
            return Err(GraphError::InvalidNode { id, m });
        }
        let mut out = vec![BTreeSet::new(); m];
        let mut inc = vec![BTreeSet::new(); m];
        for (a, z) in edges {
            if a >= m {
                return Err(GraphError::InvalidNode { id: a, m });
            }
            if z >= m {
                return Err(GraphError::InvalidNode { id: z, m });
            }
            if a == z {
                return Err(GraphError::SelfEdge(a));
            }
            out[a].insert(z);
            inc[z].insert(a);
        }
        Ok(Self { m, byzantine, out, inc })
    }

    /// Complete graph over `m` nodes.
    pub fn complete(m: usize, byzantine: impl IntoIterator<Item = NodeId>) -> Self {
        let edges = (0..m).flat_map(|a| (0..m).filter(move |&z| z != a).map(move |z| (a, z)));
        Self::new(m, byzantine, edges).expect("complete graph edges are valid")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn byzantine(&self) -> &BTreeSet<NodeId> {
        &self.byzantine
    }

    pub fn is_byzantine(&self, id: NodeId) -> bool {
        self.byzantine.contains(&id)
    }

    /// Honest ids in ascending order.
    pub fn honest_ids(&self) -> Vec<NodeId> {
        (0..self.m).filter(|id| !self.is_byzantine(*id)).collect()
    }

    pub fn honest_count(&self) -> usize {
        self.m - self.byzantine.len()
    }

    /// Nodes this node sends to.
    pub fn out_neighbors(&self, id: NodeId) -> &BTreeSet<NodeId> {
        &self.out[id]
    }

    /// Nodes this node receives from.
    pub fn in_neighbors(&self, id: NodeId) -> &BTreeSet<NodeId> {
        &self.inc[id]
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut v = Vec::new();
        for (a, outs) in self.out.iter().enumerate() {
            for &z in outs {
                v.push((a, z));
            }
        }
        v
    }

    /// The graph induced by the honest nodes, re-indexed `0..h`, plus the
    /// mapping from new index to original id.
    pub fn honest_subgraph(&self) -> (DirectedNetwork, Vec<NodeId>) {
        let ids = self.honest_ids();
        let index: BTreeMap<NodeId, usize> =
            ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let edges = self.edges().into_iter().filter_map(|(a, z)| {
            match (index.get(&a), index.get(&z)) {
                (Some(&a2), Some(&z2)) => Some((a2, z2)),
                _ => None,
            }
        });
        let sub = DirectedNetwork::new(ids.len(), [], edges).expect("re-indexed edges are valid");
        (sub, ids)
    }

    /// All-pairs hop counts by BFS from every node; `None` marks an
    /// unreachable pair. `dist[i][i] == Some(0)`.
    pub fn shortest_distances(&self) -> Vec<Vec<Option<usize>>> {
        (0..self.m)
            .map(|src| {
                let mut dist = vec![None; self.m];
                dist[src] = Some(0);
                let mut queue = VecDeque::from([src]);
                while let Some(v) = queue.pop_front() {
                    let base = dist[v].expect("queued nodes have distances");
                    for &w in &self.out[v] {
                        if dist[w].is_none() {
                            dist[w] = Some(base + 1);
                            queue.push_back(w);
                        }
                    }
                }
                dist
            })
            .collect()
    }

    /// Diameter of the honest subgraph; errors when it is not strongly
    /// connected (relay depth is undefined then).
    pub fn honest_diameter(&self) -> Result<usize, GraphError> {
        self.honest_subgraph().0.diameter()
    }

    /// Longest shortest path; errors when some ordered pair is unreachable.
    pub fn diameter(&self) -> Result<usize, GraphError> {
        let dist = self.shortest_distances();
        let mut max = 0;
        for row in &dist {
            for d in row {
                match d {
                    Some(d) => max = max.max(*d),
                    None => return Err(GraphError::NotStronglyConnected),
                }
            }
        }
        Ok(max)
    }
}

/// JSON document for a graph: either explicit edges or a named preset.
///
/// Explicit: `{"m": 5, "byzantine": [4], "edges": [[0,1], [1,0], ...]}`.
/// Preset: `{"preset": "complete", "m": 5, "byzantine": [4]}` with presets
/// `complete`, `honest_cycle_plus_byz` (directed cycle over the honest nodes
/// in ascending-id order, byzantine nodes wired to and from everyone) and
/// `bidirectional_path_plus_byz` (two-way path over the honest nodes,
/// byzantine nodes wired to and from everyone).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphDoc {
    Preset {
        preset: String,
        m: usize,
        #[serde(default)]
        byzantine: Vec<NodeId>,
    },
    Explicit {
        m: usize,
        #[serde(default)]
        byzantine: Vec<NodeId>,
        edges: Vec<(NodeId, NodeId)>,
    },
}

impl GraphDoc {
    pub fn preset(preset: &str, m: usize, byzantine: Vec<NodeId>) -> Self {
        GraphDoc::Preset { preset: preset.to_string(), m, byzantine }
    }

    pub fn build(&self) -> Result<DirectedNetwork, GraphError> {
        match self {
            GraphDoc::Explicit { m, byzantine, edges } => {
                DirectedNetwork::new(*m, byzantine.iter().copied(), edges.iter().copied())
            }
            GraphDoc::Preset { preset, m, byzantine } => {
                build_preset(preset, *m, byzantine.clone())
            }
        }
    }
}

fn build_preset(
    preset: &str,
    m: usize,
    byzantine: Vec<NodeId>,
) -> Result<DirectedNetwork, GraphError> {
    match preset {
        "complete" => {
            if let Some(&id) = byzantine.iter().find(|&&id| id >= m) {
                return Err(GraphError::InvalidNode { id, m });
            }
            Ok(DirectedNetwork::complete(m, byzantine))
        }
        "honest_cycle_plus_byz" | "bidirectional_path_plus_byz" => {
            let byz: BTreeSet<NodeId> = byzantine.iter().copied().collect();
            if let Some(&id) = byz.iter().find(|&&id| id >= m) {
                return Err(GraphError::InvalidNode { id, m });
            }
            let honest: Vec<NodeId> = (0..m).filter(|id| !byz.contains(id)).collect();
            if honest.len() < 2 {
                return Err(GraphError::PresetTooSmall { preset: preset.into(), min: byz.len() + 2 });
            }
            let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
            if preset == "honest_cycle_plus_byz" {
                for k in 0..honest.len() {
                    edges.push((honest[k], honest[(k + 1) % honest.len()]));
                }
            } else {
                for w in honest.windows(2) {
                    edges.push((w[0], w[1]));
                    edges.push((w[1], w[0]));
                }
            }
            for &x in &byz {
                for y in 0..m {
                    if y != x {
                        edges.push((x, y));
                        edges.push((y, x));
                    }
                }
            }
            DirectedNetwork::new(m, byz, edges)
        }
        other => Err(GraphError::UnknownPreset(other.to_string())),
    }
}

/// Binomial coefficient in u128 (desk scale; panics on overflow).
pub fn choose(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// One member of the reduced-graph family: for each of `h` honest nodes, the
/// `h-1-b` incoming edges it retains (self-loop implicit).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedGraph {
    pub h: usize,
    pub b: usize,
    /// `kept_in[i]` = ascending list of in-neighbors node `i` retains.
    pub kept_in: Vec<Vec<NodeId>>,
}

impl ReducedGraph {
    /// Adjacency with the implicit self-loops: `adj[i][j]` is true iff `i`
    /// keeps the in-edge from `j` or `i == j`. Every row has `h - b` ones.
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let mut adj = vec![vec![false; self.h]; self.h];
        for (i, kept) in self.kept_in.iter().enumerate() {
            adj[i][i] = true;
            for &j in kept {
                adj[i][j] = true;
            }
        }
        adj
    }

    /// Out-neighbor lists implied by the kept in-edges (self-loops omitted).
    pub fn out_neighbors(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.h];
        for (i, kept) in self.kept_in.iter().enumerate() {
            for &j in kept {
                out[j].push(i);
            }
        }
        out
    }
}

/// The family of all reduced graphs for `(h, b)`, enumerable by rank.
///
/// Ranks run lexicographically: node 0's kept-subset index is the most
/// significant digit, and per-node subsets of its potential in-neighbors
/// (all other honest ids, ascending) are ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReducedGraphFamily {
    pub h: usize,
    pub b: usize,
}

impl ReducedGraphFamily {
    pub fn new(h: usize, b: usize) -> Self {
        Self { h, b }
    }

    /// Subsets each node chooses from: `C(h-1, b)` (equivalently the number
    /// of ways to keep `h-1-b` of `h-1` candidates).
    pub fn per_node(&self) -> u128 {
        choose(self.h - 1, self.b)
    }

    /// `C(h-1, b) ^ h`.
    pub fn count(&self) -> u128 {
        let per = self.per_node();
        let mut acc: u128 = 1;
        for _ in 0..self.h {
            acc = acc.checked_mul(per).expect("reduced-graph count overflows u128");
        }
        acc
    }

    /// The rank-th member. Rank decodes as mixed-radix digits, node 0 first;
    /// each digit unranks a lexicographic (h-1-b)-combination.
    pub fn get(&self, rank: u128) -> Result<ReducedGraph, GraphError> {
        let count = self.count();
        if rank >= count {
            return Err(GraphError::RankOutOfRange { rank, count });
        }
        let per = self.per_node();
        let keep = self.h - 1 - self.b;
        let mut digits = vec![0u128; self.h];
        let mut rest = rank;
        for i in (0..self.h).rev() {
            digits[i] = rest % per;
            rest /= per;
        }
        let kept_in = (0..self.h)
            .map(|i| {
                let candidates: Vec<NodeId> = (0..self.h).filter(|&j| j != i).collect();
                unrank_combination(&candidates, keep, digits[i])
            })
            .collect();
        Ok(ReducedGraph { h: self.h, b: self.b, kept_in })
    }

    /// All members in rank order, refused above `cap`.
    pub fn iter_all(
        &self,
        cap: u128,
    ) -> Result<impl Iterator<Item = ReducedGraph> + '_, GraphError> {
        let count = self.count();
        if count > cap {
            return Err(GraphError::TooLarge { count, cap });
        }
        let family = *self;
        Ok((0..count).map(move |rank| family.get(rank).expect("rank below count")))
    }

    /// Deterministic sample of `n` ranks (with replacement) for families too
    /// large to enumerate.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<(u128, ReducedGraph)> {
        let count = self.count();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let rank = rng.random_range(0..count);
                (rank, self.get(rank).expect("sampled rank below count"))
            })
            .collect()
    }
}

/// Lexicographic unranking of a k-subset of `candidates` (ascending order).
fn unrank_combination(candidates: &[NodeId], k: usize, mut rank: u128) -> Vec<NodeId> {
    let mut picked = Vec::with_capacity(k);
    let mut start = 0;
    let mut remaining = k;
    while remaining > 0 {
        for idx in start..candidates.len() {
            let with_this = choose(candidates.len() - idx - 1, remaining - 1);
            if rank < with_this {
                picked.push(candidates[idx]);
                start = idx + 1;
                remaining -= 1;
                break;
            }
            rank -= with_this;
        }
    }
    picked
}

/// Smallest node that reaches every node of the reduced graph along kept
/// edges (self-loops allowed). Existence for every member of every family is
/// what guarantees each two-phase product has a globally influential node.
pub fn find_source_component(rg: &ReducedGraph) -> Result<NodeId, GraphError> {
    let out = rg.out_neighbors();
    for v in 0..rg.h {
        let mut seen = vec![false; rg.h];
        seen[v] = true;
        let mut queue = VecDeque::from([v]);
        let mut reached = 1;
        while let Some(x) = queue.pop_front() {
            for &y in &out[x] {
                if !seen[y] {
                    seen[y] = true;
                    reached += 1;
                    queue.push_back(y);
                }
            }
        }
        if reached == rg.h {
            return Ok(v);
        }
    }
    Err(GraphError::NoSource)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Oracle: all-pairs distances by Floyd-Warshall, independent of the
    /// BFS implementation under test.
    fn floyd_warshall(net: &DirectedNetwork) -> Vec<Vec<Option<usize>>> {
        let m = net.m();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; m]; m];
        for i in 0..m {
            d[i][i] = 0;
        }
        for (a, z) in net.edges() {
            d[a][z] = 1;
        }
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d.into_iter()
            .map(|row| row.into_iter().map(|x| (x < inf).then_some(x)).collect())
            .collect()
    }

    /// Oracle: reachability closure by repeated boolean matrix squaring.
    fn reaches_all_oracle(rg: &ReducedGraph, v: NodeId) -> bool {
        let h = rg.h;
        let adj = rg.adjacency();
        let mut closure = adj.clone();
        for _ in 0..h {
            let mut next = closure.clone();
            for i in 0..h {
                for k in 0..h {
                    if closure[i][k] {
                        for j in 0..h {
                            if closure[k][j] {
                                next[i][j] = true;
                            }
                        }
                    }
                }
            }
            closure = next;
        }
        // closure[i][j]: j reachable from i (row i follows in-edge rows?).
        // adjacency[i][j] means i listens to j, i.e. edge j -> i; influence
        // flows j -> i, so v reaches all iff closure[i][v] for all i.
        (0..h).all(|i| closure[i][v])
    }

    fn directed_cycle(m: usize) -> DirectedNetwork {
        DirectedNetwork::new(m, [], (0..m).map(|i| (i, (i + 1) % m))).unwrap()
    }

    #[test]
    fn rejects_out_of_range_and_self_edges() {
        assert_eq!(
            DirectedNetwork::new(3, [], [(0, 3)]),
            Err(GraphError::InvalidNode { id: 3, m: 3 })
        );
        assert_eq!(DirectedNetwork::new(3, [], [(1, 1)]), Err(GraphError::SelfEdge(1)));
        assert_eq!(
            DirectedNetwork::new(3, [7], []),
            Err(GraphError::InvalidNode { id: 7, m: 3 })
        );
    }

    #[test]
    fn honest_subgraph_of_complete_four_drops_to_complete_three() {
        let net = DirectedNetwork::complete(4, [3]);
        let (sub, ids) = net.honest_subgraph();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(sub.m(), 3);
        for i in 0..3 {
            assert_eq!(sub.out_neighbors(i).len(), 2);
        }
        assert_eq!(sub.diameter(), Ok(1));
    }

    #[test]
    fn honest_subgraph_with_no_byzantine_is_identity() {
        let net = directed_cycle(4);
        let (sub, ids) = net.honest_subgraph();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        assert_eq!(sub, net);
    }

    #[test]
    fn honest_subgraph_drops_paths_through_byzantine_relays() {
        // 0 reaches 1 only through byzantine node 4.
        let net =
            DirectedNetwork::new(5, [4], [(0, 4), (4, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let (sub, ids) = net.honest_subgraph();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        let d = sub.shortest_distances();
        assert_eq!(d[0][1], None, "0->4->1 must not survive in the honest subgraph");
        assert_eq!(d[1][0], Some(3));
    }

    #[test]
    fn distances_match_floyd_warshall_oracle() {
        for net in [
            DirectedNetwork::complete(5, []),
            directed_cycle(6),
            DirectedNetwork::new(5, [4], [(0, 4), (4, 1), (1, 2), (2, 3), (3, 0), (0, 2)])
                .unwrap(),
        ] {
            assert_eq!(net.shortest_distances(), floyd_warshall(&net));
        }
    }

    #[test]
    fn distance_spot_values() {
        let cycle = directed_cycle(3);
        assert_eq!(cycle.shortest_distances()[0][2], Some(2));
        let complete = DirectedNetwork::complete(4, []);
        assert_eq!(complete.shortest_distances()[1][3], Some(1));
        let path = GraphDoc::Preset {
            preset: "bidirectional_path_plus_byz".into(),
            m: 4,
            byzantine: vec![],
        }
        .build()
        .unwrap();
        assert_eq!(path.shortest_distances()[0][3], Some(3));
    }

    #[test]
    fn diameter_values_and_connectivity_error() {
        assert_eq!(DirectedNetwork::complete(3, []).diameter(), Ok(1));
        assert_eq!(directed_cycle(4).diameter(), Ok(3));
        let disconnected = DirectedNetwork::new(2, [], [(0, 1)]).unwrap();
        assert_eq!(disconnected.diameter(), Err(GraphError::NotStronglyConnected));
    }

    #[test]
    fn graph_docs_parse_both_forms() {
        let explicit: GraphDoc =
            serde_json::from_str(r#"{"m": 3, "byzantine": [2], "edges": [[0,1],[1,0]]}"#)
                .unwrap();
        let net = explicit.build().unwrap();
        assert_eq!(net.m(), 3);
        assert!(net.is_byzantine(2));
        assert_eq!(net.edges(), vec![(0, 1), (1, 0)]);

        let preset: GraphDoc =
            serde_json::from_str(r#"{"preset": "complete", "m": 5, "byzantine": [4]}"#).unwrap();
        let net = preset.build().unwrap();
        assert_eq!(net.edges().len(), 20);
    }

    #[test]
    fn cycle_preset_wires_byzantine_to_everyone() {
        let doc = GraphDoc::Preset {
            preset: "honest_cycle_plus_byz".into(),
            m: 5,
            byzantine: vec![4],
        };
        let net = doc.build().unwrap();
        let (sub, ids) = net.honest_subgraph();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        // Honest part is the directed 4-cycle: diameter 3.
        assert_eq!(sub.diameter(), Ok(3));
        for y in 0..4 {
            assert!(net.out_neighbors(4).contains(&y));
            assert!(net.in_neighbors(4).contains(&y));
        }
    }

    #[test]
    fn choose_matches_factorial_definition() {
        fn fact(n: u128) -> u128 {
            (1..=n).product::<u128>().max(1)
        }
        for n in 0..=12usize {
            for k in 0..=n {
                assert_eq!(
                    choose(n, k),
                    fact(n as u128) / (fact(k as u128) * fact((n - k) as u128)),
                    "C({n},{k})"
                );
            }
        }
    }

    #[test]
    fn family_counts() {
        assert_eq!(ReducedGraphFamily::new(3, 1).count(), 8);
        assert_eq!(ReducedGraphFamily::new(4, 1).count(), 81);
        assert_eq!(ReducedGraphFamily::new(5, 2).count(), 7776);
        assert_eq!(ReducedGraphFamily::new(4, 0).count(), 1);
    }

    #[test]
    fn rank_zero_and_last_have_lexicographic_extremes() {
        let fam = ReducedGraphFamily::new(3, 1);
        let first = fam.get(0).unwrap();
        assert_eq!(first.kept_in, vec![vec![1], vec![0], vec![0]]);
        let last = fam.get(7).unwrap();
        assert_eq!(last.kept_in, vec![vec![2], vec![2], vec![1]]);
        assert!(fam.get(8).is_err());
    }

    #[test]
    fn iteration_agrees_with_direct_ranking() {
        let fam = ReducedGraphFamily::new(4, 1);
        let all: Vec<_> = fam.iter_all(1000).unwrap().collect();
        assert_eq!(all.len(), 81);
        for (rank, rg) in all.iter().enumerate() {
            assert_eq!(fam.get(rank as u128).unwrap(), *rg);
        }
        // All members distinct.
        for i in 0..all.len() {
            for j in (i + 1)..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn adjacency_rows_have_h_minus_b_ones() {
        for (h, b) in [(3, 1), (4, 1), (5, 2)] {
            let fam = ReducedGraphFamily::new(h, b);
            for rg in fam.iter_all(10_000).unwrap() {
                for row in rg.adjacency() {
                    assert_eq!(row.iter().filter(|&&x| x).count(), h - b);
                }
            }
        }
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let fam = ReducedGraphFamily::new(12, 3);
        assert!(matches!(fam.iter_all(1_000_000), Err(GraphError::TooLarge { .. })));
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let fam = ReducedGraphFamily::new(12, 3);
        let a = fam.sample(9, 5);
        let b = fam.sample(9, 5);
        assert_eq!(a, b);
        assert!(a.iter().all(|(rank, _)| *rank < fam.count()));
        let c = fam.sample(10, 5);
        assert_ne!(a, c);
    }

    #[test]
    fn single_member_family_with_b_zero_is_complete_and_sourced_at_zero() {
        let fam = ReducedGraphFamily::new(4, 0);
        let rg = fam.get(0).unwrap();
        assert!(rg.adjacency().iter().all(|row| row.iter().all(|&x| x)));
        assert_eq!(find_source_component(&rg), Ok(0));
    }

    #[test]
    fn rotating_kept_edges_make_every_node_a_source() {
        // Each node keeps its single in-edge from (id + 1) % 3: a 3-cycle,
        // every node reaches every other, smallest id wins.
        let rg = ReducedGraph { h: 3, b: 1, kept_in: vec![vec![1], vec![2], vec![0]] };
        assert_eq!(find_source_component(&rg), Ok(0));
    }

    #[test]
    fn source_search_matches_reachability_oracle_exhaustively() {
        for (h, b) in [(3, 1), (4, 1)] {
            let fam = ReducedGraphFamily::new(h, b);
            for (rank, rg) in fam.iter_all(10_000).unwrap().enumerate() {
                let found = find_source_component(&rg).unwrap_or_else(|_| {
                    panic!("family ({h},{b}) member {rank} has no source")
                });
                assert!(
                    reaches_all_oracle(&rg, found),
                    "claimed source {found} fails oracle on member {rank}"
                );
                for v in 0..found {
                    assert!(
                        !reaches_all_oracle(&rg, v),
                        "source {found} is not minimal on member {rank}"
                    );
                }
            }
        }
    }
}
