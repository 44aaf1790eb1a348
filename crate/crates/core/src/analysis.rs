//! Reconstruction of per-phase transition matrices from a trace, and the
//! structural checks that make the convergence argument mechanical.
//!
//! Iterations are grouped into phases of length `D` (phase `p` covers
//! iterations `[(p-1)D, pD)`), and honest states per phase are stacked into
//! vectors of length `hD`. For every phase `p >= 2` this module rebuilds,
//! from the trace alone, a row-stochastic matrix `M[p]` with
//! `v[p] = M[p] * v[p-1]` holding *exactly* (up to float rounding):
//!
//! * each update is a convex combination of survivor records — weight
//!   `1/(m-2b)` per survivor;
//! * a survivor of byzantine origin (a lie) lies between the largest honest
//!   value `s*` trimmed low and the smallest honest value `l*` trimmed high,
//!   so its weight is split between those two *honest* records by the exact
//!   convex coefficient γ with `x = γ·s* + (1-γ)·l*`;
//! * survivor records carrying a within-phase marker are expanded through
//!   the already-built row for that (origin, iteration); records from the
//!   previous phase map to its columns directly; initial-state records map
//!   to the last block of the previous phase vector.
//!
//! On top of the construction sit the checks: row stochasticity, per-row
//! origin support, self-weight diagonals, submatrix splicing, reduced-graph
//! domination of two-phase products, and fully-positive columns of long
//! window products.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, NodeId, ReducedGraphFamily};
use crate::protocol::{TrimEntry, TrimOutcome};
use crate::trace::SimulationTrace;

/// Absolute threshold above which an entry counts as "non-zero" in all
/// structural checks. The theory only needs existence of a positive bound;
/// the concrete number is a tooling decision, reported with every check.
pub const POSITIVITY_THRESHOLD: f64 = 1e-12;

/// Largest reduced-graph family the domination search will enumerate.
pub const REDUCED_FAMILY_CAP: u128 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("phase {phase} has no all-update iterations; analysis starts at phase 2")]
    PhaseTooEarly { phase: usize },
    #[error("trace too short for phase {phase}: needs {needed} iterations, has {have}")]
    TraceTooShort { phase: usize, needed: usize, have: usize },
    #[error("trace is internally inconsistent: {0}")]
    InconsistentTrace(String),
    #[error(
        "splice rows {r0}..={r1}, cols {c0}..={c1} out of range for {rows}x{cols} matrix"
    )]
    IndexOutOfRange { r0: usize, r1: usize, c0: usize, c1: usize, rows: usize, cols: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Honest states of one phase stacked into an `hD` vector: entry `q*h + i`
/// is honest node `i`'s state at relative iteration `q`. Phase 0 is `D`
/// identical copies of the initial honest values.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    pub phase: usize,
    pub h: usize,
    pub d: usize,
    pub values: DVector<f64>,
}

/// One phase's `hD x hD` transition matrix, rebuilt from the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub phase: usize,
    pub h: usize,
    pub d: usize,
    pub b: usize,
    pub data: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn n(&self) -> usize {
        self.h * self.d
    }

    /// Comma-separated rows, one line per row.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::new();
        for r in 0..n {
            for c in 0..n {
                if c > 0 {
                    out.push_str(", ");
                }
                out.push_str(&format!("{}", self.data[(r, c)]));
            }
            out.push('\n');
        }
        out
    }
}

/// How survivor records are mapped to source iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructionMode {
    /// Use the actual iteration marker each survivor record carries in the
    /// trace. Exact for every run, including byzantine relays that deliver
    /// fresher records along shorter mixed paths.
    #[default]
    TraceMarkers,
    /// Use worst-case honest-path delivery: origin `k`'s record at node `i`
    /// is assumed to be from iteration `t - dist(k, i)` (own state from
    /// `t - 1`). Matches the trace exactly only when no byzantine node
    /// relays fresher records.
    DistanceOffsets,
}

/// One weighted pointer at (origin, marker) feeding a row; the recursion
/// operates on these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub origin: NodeId,
    pub honest_index: usize,
    pub marker: i64,
    pub weight: f64,
}

/// γ bookkeeping for one byzantine-origin survivor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaTerm {
    pub origin: NodeId,
    pub value: f64,
    pub gamma: f64,
}

/// Which construction case a row used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GCase {
    /// All survivors honest: uniform `1/(m-2b)` weights on their origins.
    AllSurvivorsHonest,
    /// Some survivors of byzantine origin: their weight is redistributed to
    /// the bracketing honest records `s*` (largest trimmed-low honest) and
    /// `l*` (smallest trimmed-high honest).
    ByzantineSurvivorsRedistributed {
        s_star: TrimEntry,
        l_star: TrimEntry,
        gammas: Vec<GammaTerm>,
    },
}

/// One node's update expressed over honest origins: weights sum to 1, all
/// non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GRow {
    /// Updating node (original id) and its honest index.
    pub node: NodeId,
    pub honest_index: usize,
    /// Aggregated weight per honest index; sums to 1.
    pub weights: Vec<f64>,
    /// The raw weighted (origin, marker) pointers, before aggregation.
    pub contributions: Vec<Contribution>,
    pub case: GCase,
    /// The trim partition the row came from.
    pub outcome: TrimOutcome,
}

impl GRow {
    /// Number of honest origins with weight above `threshold`.
    pub fn support(&self, threshold: f64) -> usize {
        self.weights.iter().filter(|&&w| w > threshold).count()
    }
}

/// Expresses one trim outcome as weights over honest origins.
///
/// Honest survivors keep weight `1/(m-2b)` at their own (origin, marker).
/// Each byzantine-origin survivor `x` (held record or never-heard default)
/// is replaced by `γ·s* + (1-γ)·l*` where `s*` is the largest honest entry
/// of the trimmed-low set and `l*` the smallest honest entry of the
/// trimmed-high set — both exist whenever a byzantine survivor exists, and
/// `s* <= x <= l*` by the sort order, so `γ = (l*-x)/(l*-s*) ∈ [0, 1]`
/// (γ := 1 when the bracket is degenerate).
pub fn build_g_row(
    node: NodeId,
    outcome: &TrimOutcome,
    honest_ids: &[NodeId],
) -> Result<GRow, AnalysisError> {
    let h = honest_ids.len();
    let honest_index = |id: NodeId| honest_ids.iter().position(|&x| x == id);
    let own_index = honest_index(node).ok_or_else(|| {
        AnalysisError::InconsistentTrace(format!("updating node {node} is not honest"))
    })?;
    let survivors = &outcome.survivors;
    let n_star = survivors.len();
    if n_star == 0 {
        return Err(AnalysisError::InconsistentTrace("empty survivor set".into()));
    }
    let base = 1.0 / n_star as f64;

    let mut weights = vec![0.0; h];
    let mut contributions = Vec::new();
    let mut faulty: Vec<&TrimEntry> = Vec::new();
    for entry in survivors {
        match honest_index(entry.origin) {
            Some(k) => {
                weights[k] += base;
                contributions.push(Contribution {
                    origin: entry.origin,
                    honest_index: k,
                    marker: entry.marker,
                    weight: base,
                });
            }
            None => faulty.push(entry),
        }
    }

    let case = if faulty.is_empty() {
        GCase::AllSurvivorsHonest
    } else {
        // Largest honest value among the b trimmed-low entries (ascending
        // order: scan from the top), and smallest honest value among the b
        // trimmed-high entries.
        let s_star = outcome
            .low
            .iter()
            .rev()
            .find(|e| honest_index(e.origin).is_some())
            .copied()
            .ok_or_else(|| {
                AnalysisError::InconsistentTrace(
                    "byzantine survivor but no honest entry trimmed low".into(),
                )
            })?;
        let l_star = outcome
            .high
            .iter()
            .find(|e| honest_index(e.origin).is_some())
            .copied()
            .ok_or_else(|| {
                AnalysisError::InconsistentTrace(
                    "byzantine survivor but no honest entry trimmed high".into(),
                )
            })?;
        let s_idx = honest_index(s_star.origin).expect("chosen honest");
        let l_idx = honest_index(l_star.origin).expect("chosen honest");
        let mut gammas = Vec::with_capacity(faulty.len());
        for entry in &faulty {
            let x = entry.value;
            if x < s_star.value || x > l_star.value {
                return Err(AnalysisError::InconsistentTrace(format!(
                    "byzantine survivor {x} outside honest bracket [{}, {}]",
                    s_star.value, l_star.value
                )));
            }
            let gamma = if l_star.value == s_star.value {
                1.0
            } else {
                (l_star.value - x) / (l_star.value - s_star.value)
            };
            gammas.push(GammaTerm { origin: entry.origin, value: x, gamma });
            weights[s_idx] += gamma * base;
            weights[l_idx] += (1.0 - gamma) * base;
            contributions.push(Contribution {
                origin: s_star.origin,
                honest_index: s_idx,
                marker: s_star.marker,
                weight: gamma * base,
            });
            contributions.push(Contribution {
                origin: l_star.origin,
                honest_index: l_idx,
                marker: l_star.marker,
                weight: (1.0 - gamma) * base,
            });
        }
        GCase::ByzantineSurvivorsRedistributed { s_star, l_star, gammas }
    };

    Ok(GRow {
        node,
        honest_index: own_index,
        weights,
        contributions,
        case,
        outcome: outcome.clone(),
    })
}

/// Number of whole phases the trace covers (phase `p` needs iterations up
/// to `p*D - 1`).
pub fn max_phase(trace: &SimulationTrace) -> usize {
    trace.iterations.len() / trace.d
}

/// Assembles the phase-`p` stacked state vector from the trace.
pub fn phase_vector(trace: &SimulationTrace, phase: usize) -> Result<PhaseVector, AnalysisError> {
    let h = trace.h;
    let d = trace.d;
    let n = h * d;
    let values = if phase == 0 {
        let mut v = DVector::zeros(n);
        for q in 0..d {
            for (k, &x) in trace.config.initial_values.iter().enumerate() {
                v[q * h + k] = x;
            }
        }
        v
    } else {
        let needed = phase * d;
        if trace.iterations.len() < needed {
            return Err(AnalysisError::TraceTooShort {
                phase,
                needed,
                have: trace.iterations.len(),
            });
        }
        let start = (phase - 1) * d;
        let mut v = DVector::zeros(n);
        for q in 0..d {
            let iter = &trace.iterations[start + q];
            for (k, rec) in iter.nodes.iter().enumerate() {
                v[q * h + k] = rec.post_value;
            }
        }
        v
    };
    Ok(PhaseVector { phase, h, d, values })
}

/// A constructed phase matrix together with the per-row weight breakdowns it
/// was assembled from (row `q*h + k` belongs to honest index `k` at relative
/// iteration `q`).
#[derive(Debug, Clone)]
pub struct PhaseConstruction {
    pub matrix: TransitionMatrix,
    pub g_rows: Vec<GRow>,
}

impl PhaseConstruction {
    /// `chain[q*h + k]`: honest `k` kept positive weight on its *own* state
    /// in every row of this phase up to relative iteration `q`. Under this
    /// condition the self-diagonal entry of row `q*h + k` must be positive —
    /// each own-state pointer recurses into the node's previous row, down to
    /// the direct diagonal column.
    pub fn self_weight_chain(&self) -> Vec<bool> {
        let h = self.matrix.h;
        let d = self.matrix.d;
        let mut chain = vec![false; h * d];
        for k in 0..h {
            let mut ok = true;
            for q in 0..d {
                ok = ok && self.g_rows[q * h + k].weights[k] > 0.0;
                chain[q * h + k] = ok;
            }
        }
        chain
    }

    /// Per row: did the node's own value survive its trim?
    pub fn self_survived(&self) -> Vec<bool> {
        self.g_rows
            .iter()
            .map(|g| g.outcome.survivors.iter().any(|e| e.origin == g.node))
            .collect()
    }
}

/// Rebuilds the phase-`p` transition matrix from the trace (`p >= 2`; all
/// `D` iterations of such phases run updates).
pub fn construct_phase(
    trace: &SimulationTrace,
    phase: usize,
    mode: ConstructionMode,
) -> Result<PhaseConstruction, AnalysisError> {
    if phase < 2 {
        return Err(AnalysisError::PhaseTooEarly { phase });
    }
    let h = trace.h;
    let d = trace.d;
    let n = h * d;
    let needed = phase * d;
    if trace.iterations.len() < needed {
        return Err(AnalysisError::TraceTooShort { phase, needed, have: trace.iterations.len() });
    }
    let ps = (phase - 1) * d; // first iteration of this phase
    let pps = (phase - 2) * d; // first iteration of the previous phase

    // Honest-subgraph hop counts, only needed for the worst-case mode.
    let honest_dist: Option<Vec<Vec<usize>>> = match mode {
        ConstructionMode::TraceMarkers => None,
        ConstructionMode::DistanceOffsets => {
            let network = trace.config.graph.build().map_err(AnalysisError::Graph)?;
            let (sub, _) = network.honest_subgraph();
            let dist = sub.shortest_distances();
            let mut table = vec![vec![0usize; h]; h];
            for (from, row) in dist.iter().enumerate() {
                for (to, entry) in row.iter().enumerate() {
                    table[from][to] = entry.ok_or_else(|| {
                        AnalysisError::InconsistentTrace(
                            "honest subgraph in trace is not strongly connected".into(),
                        )
                    })?;
                }
            }
            Some(table)
        }
    };

    let mut data = DMatrix::<f64>::zeros(n, n);
    let mut g_rows = Vec::with_capacity(n);
    for q in 0..d {
        let tau = ps + q;
        let iteration = &trace.iterations[tau];
        if iteration.t != tau as i64 {
            return Err(AnalysisError::InconsistentTrace(format!(
                "iteration record {} claims t = {}",
                tau, iteration.t
            )));
        }
        for (k, node_rec) in iteration.nodes.iter().enumerate() {
            let row_index = q * h + k;
            let outcome = node_rec.trim.as_ref().ok_or_else(|| {
                AnalysisError::InconsistentTrace(format!(
                    "no trim outcome for node {} at iteration {tau}",
                    node_rec.node
                ))
            })?;
            let g = build_g_row(node_rec.node, outcome, &trace.honest_ids)?;
            let mut row = DVector::<f64>::zeros(n);
            for contrib in &g.contributions {
                let kk = contrib.honest_index;
                // Source iteration of the record this weight points at.
                let source: i64 = match mode {
                    ConstructionMode::TraceMarkers => contrib.marker,
                    ConstructionMode::DistanceOffsets => {
                        let table = honest_dist.as_ref().expect("built for this mode");
                        let offset = table[kk][k].max(1);
                        tau as i64 - offset as i64
                    }
                };
                if source >= tau as i64 {
                    return Err(AnalysisError::InconsistentTrace(format!(
                        "row {row_index} points at iteration {source} >= its own {tau}"
                    )));
                }
                if source >= ps as i64 {
                    // Within-phase: expand through the already-built row.
                    let inner = (source as usize - ps) * h + kk;
                    debug_assert!(inner < row_index);
                    for c in 0..n {
                        row[c] += contrib.weight * data[(inner, c)];
                    }
                } else if source >= pps as i64 {
                    row[(source as usize - pps) * h + kk] += contrib.weight;
                } else if source == -1 && phase == 2 {
                    // Initial state: previous phase is the stacked initial
                    // blocks, all identical; we fix the last block.
                    row[(d - 1) * h + kk] += contrib.weight;
                } else {
                    return Err(AnalysisError::InconsistentTrace(format!(
                        "row {row_index} points at iteration {source}, before phase {}",
                        phase - 1
                    )));
                }
            }
            data.row_mut(row_index).copy_from(&row.transpose());
            g_rows.push(g);
        }
    }
    Ok(PhaseConstruction {
        matrix: TransitionMatrix { phase, h, d, b: trace.b, data },
        g_rows,
    })
}

/// Convenience wrapper returning only the matrix.
pub fn construct_phase_matrix(
    trace: &SimulationTrace,
    phase: usize,
    mode: ConstructionMode,
) -> Result<TransitionMatrix, AnalysisError> {
    Ok(construct_phase(trace, phase, mode)?.matrix)
}

/// Max elementwise error of `v[phase] - M * v[phase-1]`.
pub fn verify_phase_equation(
    trace: &SimulationTrace,
    phase: usize,
    matrix: &TransitionMatrix,
) -> Result<f64, AnalysisError> {
    let prev = phase_vector(trace, phase - 1)?;
    let cur = phase_vector(trace, phase)?;
    let predicted = &matrix.data * &prev.values;
    let err = (&cur.values - predicted).abs().max();
    Ok(err)
}

/// Rows sum to 1 within `tol` and no entry is below `-tol`.
pub fn check_row_stochastic(matrix: &TransitionMatrix, tol: f64) -> bool {
    let n = matrix.n();
    (0..n).all(|r| {
        let mut sum = 0.0;
        for c in 0..n {
            let x = matrix.data[(r, c)];
            if x < -tol {
                return false;
            }
            sum += x;
        }
        (sum - 1.0).abs() <= tol
    })
}

/// Per row `t = q*h + i`: is the self-diagonal entry — column `h(D-1) + i`,
/// the node's own state at the end of the previous phase — above the
/// threshold?
pub fn check_diagonal_entries(matrix: &TransitionMatrix, threshold: f64) -> Vec<bool> {
    let h = matrix.h;
    let n = matrix.n();
    (0..n)
        .map(|r| matrix.data[(r, h * (matrix.d - 1) + (r % h))] > threshold)
        .collect()
}

/// Number of distinct origins (column index mod h) each row puts mass on.
pub fn row_origin_support(matrix: &TransitionMatrix, threshold: f64) -> Vec<usize> {
    let h = matrix.h;
    let n = matrix.n();
    (0..n)
        .map(|r| {
            (0..h)
                .filter(|&k| (0..matrix.d).any(|q| matrix.data[(r, q * h + k)] > threshold))
                .count()
        })
        .collect()
}

/// Violations of support inheritance: if node `i`'s base row (`q = 0`) has
/// mass on column `j`, every later row of node `i` in the same phase must
/// too — as long as the node kept weight on its own state up to that row
/// (`chain` from [`PhaseConstruction::self_weight_chain`]). Returns the
/// offending (row, column) pairs.
pub fn support_inheritance_violations(
    matrix: &TransitionMatrix,
    chain: &[bool],
    threshold: f64,
) -> Vec<(usize, usize)> {
    let h = matrix.h;
    let n = matrix.n();
    let mut violations = Vec::new();
    for i in 0..h {
        for j in 0..n {
            if matrix.data[(i, j)] > threshold {
                for q in 1..matrix.d {
                    let z = q * h + i;
                    if chain[z] && matrix.data[(z, j)] <= threshold {
                        violations.push((z, j));
                    }
                }
            }
        }
    }
    violations
}

/// Inclusive-index submatrix copy: rows `r0..=r1`, columns `c0..=c1`.
pub fn matrix_splice(
    m: &DMatrix<f64>,
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
) -> Result<DMatrix<f64>, AnalysisError> {
    if r0 > r1 || c0 > c1 || r1 >= m.nrows() || c1 >= m.ncols() {
        return Err(AnalysisError::IndexOutOfRange {
            r0,
            r1,
            c0,
            c1,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.view((r0, c0), (r1 - r0 + 1, c1 - c0 + 1)).into_owned())
}

/// The bottom-right `h x h` block: rows and columns `h(D-1) ..= hD-1`.
pub fn bottom_block(matrix: &TransitionMatrix) -> DMatrix<f64> {
    let lo = matrix.h * (matrix.d - 1);
    let hi = matrix.n() - 1;
    matrix_splice(&matrix.data, lo, hi, lo, hi).expect("block indices in range")
}

/// Tests whether the two-phase product `later * earlier` dominates some
/// reduced graph: thresholds the product's bottom-right `h x h` block to a
/// 0/1 pattern and searches the enumerated family (rank order) for a member
/// whose adjacency — self-loops included — is entrywise below the pattern.
/// Returns the first matching rank.
pub fn block_dominates_reduced_graph(
    later: &TransitionMatrix,
    earlier: &TransitionMatrix,
    threshold: f64,
) -> Result<Option<u128>, AnalysisError> {
    let h = later.h;
    let product = TransitionMatrix {
        phase: later.phase,
        h,
        d: later.d,
        b: later.b,
        data: &later.data * &earlier.data,
    };
    let block = bottom_block(&product);
    let pattern: Vec<Vec<bool>> =
        (0..h).map(|r| (0..h).map(|c| block[(r, c)] > threshold).collect()).collect();
    let family = ReducedGraphFamily::new(h, later.b);
    for (rank, rg) in family.iter_all(REDUCED_FAMILY_CAP)?.enumerate() {
        let adj = rg.adjacency();
        let dominated = (0..h).all(|r| (0..h).all(|c| !adj[r][c] || pattern[r][c]));
        if dominated {
            return Ok(Some(rank as u128));
        }
    }
    Ok(None)
}

/// Multiplies the matrices in the given order and returns the first column
/// whose entries all exceed `threshold` — searching the last `h` columns
/// first (ascending), then the rest (ascending).
pub fn product_nonzero_column(matrices: &[TransitionMatrix], threshold: f64) -> Option<usize> {
    let first = matrices.first()?;
    let n = first.n();
    let mut product = DMatrix::<f64>::identity(n, n);
    for m in matrices {
        product *= &m.data;
    }
    let all_positive =
        |c: usize| (0..n).all(|r| product[(r, c)] > threshold);
    let tail_start = n - first.h;
    (tail_start..n).chain(0..tail_start).find(|&c| all_positive(c))
}

/// max - min.
pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}
