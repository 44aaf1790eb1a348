//! Deterministic, serializable summaries of a run and of its matrix
//! analysis. Everything in these structs is derived from the trace alone —
//! no wall-clock times, no hostnames — so two runs with the same
//! configuration produce byte-identical reports.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, AnalysisError, ConstructionMode, PhaseConstruction, TransitionMatrix,
    POSITIVITY_THRESHOLD,
};
use crate::graph::{GraphError, NodeId, ReducedGraphFamily};
use crate::trace::SimulationTrace;

/// Max tolerated elementwise error in `v[p] = M[p] * v[p-1]`.
pub const EQUATION_TOLERANCE: f64 = 1e-9;
/// Row sums within this of 1; entries no lower than its negation.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;
/// Slack allowed on the initial min/max envelope (float summation only).
pub const VALIDITY_TOLERANCE: f64 = 1e-9;
/// At most this many individual envelope violations are listed; the total
/// count is always exact.
pub const MAX_LISTED_VIOLATIONS: usize = 32;

/// One honest value observed outside the initial envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityViolation {
    pub t: i64,
    pub node: NodeId,
    pub value: f64,
}

/// Whether every honest value stayed within the initial honest min/max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub holds: bool,
    pub tolerance: f64,
    pub initial_min: f64,
    pub initial_max: f64,
    pub violations_total: u64,
    /// First few violations, capped at [`MAX_LISTED_VIOLATIONS`].
    pub violations: Vec<ValidityViolation>,
}

/// Summary of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub m: usize,
    pub h: usize,
    pub b: usize,
    pub d: usize,
    pub t_max: u64,
    pub seed: u64,
    pub convergence_threshold: f64,
    /// First iteration whose honest spread is at or below the threshold.
    pub converged_at: Option<usize>,
    pub final_values: Vec<f64>,
    pub final_spread: f64,
    /// Honest spread after each iteration.
    pub spread_series: Vec<f64>,
    /// Spread of the union of the last `D` iterations' values (the quantity
    /// that decreases monotonically).
    pub window_spread_series: Vec<f64>,
    pub payload_bytes_series: Vec<u64>,
    pub payload_bytes_total: u64,
    pub merge_rejected_total: u64,
    pub merge_updated_total: u64,
    pub validity: ValidityReport,
}

impl RunReport {
    pub fn from_trace(trace: &SimulationTrace) -> Self {
        let initial_min =
            trace.config.initial_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let initial_max =
            trace.config.initial_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        let mut violations = Vec::new();
        let mut violations_total = 0u64;
        let mut spread_series = Vec::with_capacity(trace.iterations.len());
        let mut window_spread_series = Vec::with_capacity(trace.iterations.len());
        let mut payload_bytes_series = Vec::with_capacity(trace.iterations.len());
        let mut merge_rejected_total = 0u64;
        let mut merge_updated_total = 0u64;
        for iter in &trace.iterations {
            let t = iter.t;
            for rec in &iter.nodes {
                merge_rejected_total += rec.merge.rejected;
                merge_updated_total += rec.merge.updated;
                let v = rec.post_value;
                if v < initial_min - VALIDITY_TOLERANCE || v > initial_max + VALIDITY_TOLERANCE {
                    violations_total += 1;
                    if violations.len() < MAX_LISTED_VIOLATIONS {
                        violations.push(ValidityViolation { t, node: rec.node, value: v });
                    }
                }
            }
            spread_series.push(trace.spread_at(t as usize));
            window_spread_series.push(trace.window_spread_at(t as usize));
            payload_bytes_series.push(iter.payload_bytes);
        }
        let payload_bytes_total = payload_bytes_series.iter().sum();
        let final_values = match trace.iterations.last() {
            Some(iter) => iter.nodes.iter().map(|r| r.post_value).collect(),
            None => trace.config.initial_values.clone(),
        };
        let final_spread = analysis::spread(&final_values);

        RunReport {
            format_version: crate::FORMAT_VERSION,
            m: trace.m,
            h: trace.h,
            b: trace.b,
            d: trace.d,
            t_max: trace.t_max,
            seed: trace.config.seed,
            convergence_threshold: trace.config.convergence_threshold,
            converged_at: trace.converged_at(),
            final_values,
            final_spread,
            spread_series,
            window_spread_series,
            payload_bytes_series,
            payload_bytes_total,
            merge_rejected_total,
            merge_updated_total,
            validity: ValidityReport {
                holds: violations_total == 0,
                tolerance: VALIDITY_TOLERANCE,
                initial_min,
                initial_max,
                violations_total,
                violations,
            },
        }
    }
}

/// Structural results for one reconstructed phase matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: usize,
    /// Max elementwise error of `v[p] - M[p] * v[p-1]`.
    pub equation_error: f64,
    pub row_stochastic: bool,
    /// Distinct origins with positive mass, minimum over rows.
    pub min_row_support: usize,
    /// Per row: self-diagonal entry above the positivity threshold.
    pub diagonal_rows: Vec<bool>,
    /// Per row: node kept weight on its own state up to this row.
    pub self_weight_chain: Vec<bool>,
    /// Per row: node's own value survived this row's trim.
    pub self_survived: Vec<bool>,
    /// Rows where the chain held but the diagonal entry was not positive
    /// (must be empty — this is the checkable form of self-persistence).
    pub chain_diagonal_violations: Vec<usize>,
    /// (row, column) pairs violating support inheritance on chained rows.
    pub inheritance_violations: Vec<(usize, usize)>,
}

/// Domination result for one consecutive-phase product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub earlier_phase: usize,
    pub later_phase: usize,
    /// Enumeration rank of the first reduced graph dominated by the
    /// product's bottom block, if any.
    pub dominated_rank: Option<u128>,
}

/// Everything `analyze` derives from a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub format_version: u32,
    pub m: usize,
    pub h: usize,
    pub b: usize,
    pub d: usize,
    pub t_max: u64,
    pub construction_mode: ConstructionMode,
    pub positivity_threshold: f64,
    pub stochastic_tolerance: f64,
    pub equation_tolerance: f64,
    /// Phases 2..=max that the trace covers; empty when the run is too
    /// short to contain a fully-updating phase.
    pub phases: Vec<PhaseReport>,
    pub max_equation_error: f64,
    pub all_row_stochastic: bool,
    /// Size of the reduced-graph family for (h, b).
    pub reduced_graph_count: u128,
    pub domination: Vec<DominationReport>,
    /// First fully positive column of the product of all reconstructed
    /// matrices (latest phase applied last), searching trailing columns
    /// first.
    pub product_positive_column: Option<usize>,
    pub notes: Vec<String>,
}

impl AnalysisReport {
    /// Runs every check on the trace. Returns an error only if the trace is
    /// internally inconsistent; individual check failures are recorded in
    /// the report.
    pub fn from_trace(
        trace: &SimulationTrace,
        mode: ConstructionMode,
    ) -> Result<Self, AnalysisError> {
        let mut notes = Vec::new();
        let max_phase = analysis::max_phase(trace);
        let mut phases = Vec::new();
        let mut matrices: Vec<TransitionMatrix> = Vec::new();
        let mut max_equation_error: f64 = 0.0;
        let mut all_row_stochastic = true;

        if max_phase < 2 {
            notes.push(format!(
                "no analyzable phase: trace covers {} iterations, needs at least {}",
                trace.iterations.len(),
                2 * trace.d
            ));
        }
        for phase in 2..=max_phase.max(1) {
            if phase > max_phase {
                break;
            }
            let construction = analysis::construct_phase(trace, phase, mode)?;
            let report = phase_report(trace, &construction)?;
            max_equation_error = max_equation_error.max(report.equation_error);
            all_row_stochastic = all_row_stochastic && report.row_stochastic;
            phases.push(report);
            matrices.push(construction.matrix);
        }

        let reduced_graph_count = if trace.h > 2 * trace.b {
            ReducedGraphFamily::new(trace.h, trace.b).count()
        } else {
            0
        };

        let mut domination = Vec::new();
        for pair in matrices.windows(2) {
            let (earlier, later) = (&pair[0], &pair[1]);
            match analysis::block_dominates_reduced_graph(later, earlier, POSITIVITY_THRESHOLD) {
                Ok(rank) => domination.push(DominationReport {
                    earlier_phase: earlier.phase,
                    later_phase: later.phase,
                    dominated_rank: rank,
                }),
                Err(AnalysisError::Graph(GraphError::TooLarge { .. })) => {
                    notes.push(format!(
                        "domination search skipped for phases {}/{}: reduced family larger than cap",
                        earlier.phase,
                        later.phase
                    ));
                    domination.push(DominationReport {
                        earlier_phase: earlier.phase,
                        later_phase: later.phase,
                        dominated_rank: None,
                    });
                }
                Err(e) => return Err(e),
            }
        }

        // Product of all reconstructed matrices, latest phase leftmost.
        let product_positive_column = if matrices.is_empty() {
            None
        } else {
            let ordered: Vec<TransitionMatrix> = matrices.iter().rev().cloned().collect();
            analysis::product_nonzero_column(&ordered, POSITIVITY_THRESHOLD)
        };

        Ok(AnalysisReport {
            format_version: crate::FORMAT_VERSION,
            m: trace.m,
            h: trace.h,
            b: trace.b,
            d: trace.d,
            t_max: trace.t_max,
            construction_mode: mode,
            positivity_threshold: POSITIVITY_THRESHOLD,
            stochastic_tolerance: STOCHASTIC_TOLERANCE,
            equation_tolerance: EQUATION_TOLERANCE,
            phases,
            max_equation_error,
            all_row_stochastic,
            reduced_graph_count,
            domination,
            product_positive_column,
            notes,
        })
    }

    /// True when every reconstructed matrix reproduced its phase within the
    /// equation tolerance and was row-stochastic, and no chained diagonal or
    /// inheritance violation appeared.
    pub fn passed(&self) -> bool {
        self.all_row_stochastic
            && self.max_equation_error <= EQUATION_TOLERANCE
            && self
                .phases
                .iter()
                .all(|p| p.chain_diagonal_violations.is_empty() && p.inheritance_violations.is_empty())
    }

    /// True when the trace was too short to contain any phase to analyze.
    pub fn no_analyzable_phase(&self) -> bool {
        self.phases.is_empty()
    }
}

fn phase_report(
    trace: &SimulationTrace,
    construction: &PhaseConstruction,
) -> Result<PhaseReport, AnalysisError> {
    let matrix = &construction.matrix;
    let equation_error = analysis::verify_phase_equation(trace, matrix.phase, matrix)?;
    let row_stochastic = analysis::check_row_stochastic(matrix, STOCHASTIC_TOLERANCE);
    let support = analysis::row_origin_support(matrix, POSITIVITY_THRESHOLD);
    let min_row_support = support.into_iter().min().unwrap_or(0);
    let diagonal_rows = analysis::check_diagonal_entries(matrix, POSITIVITY_THRESHOLD);
    let self_weight_chain = construction.self_weight_chain();
    let self_survived = construction.self_survived();
    let chain_diagonal_violations: Vec<usize> = diagonal_rows
        .iter()
        .zip(&self_weight_chain)
        .enumerate()
        .filter(|(_, (&diag, &chain))| chain && !diag)
        .map(|(row, _)| row)
        .collect();
    let inheritance_violations = analysis::support_inheritance_violations(
        matrix,
        &self_weight_chain,
        POSITIVITY_THRESHOLD,
    );
    Ok(PhaseReport {
        phase: matrix.phase,
        equation_error,
        row_stochastic,
        min_row_support,
        diagonal_rows,
        self_weight_chain,
        self_survived,
        chain_diagonal_violations,
        inheritance_violations,
    })
}
