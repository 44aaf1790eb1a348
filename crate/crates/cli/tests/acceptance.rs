//! Acceptance suite. One numbered end-to-end check per guaranteed behavior,
//! each printing exactly one `criterion NN <name>: PASS|FAIL` line; the test
//! fails if any check fails and lists the failing numbers.
//!
//! Every tolerance and budget is pinned here as a named constant, next to the
//! checks that use it.
//!
//! Known red check: criterion 07b asserts that the bottom block of every
//! product of two consecutive phase matrices dominates some member of the
//! enumerated reduced-graph family. On complete-graph runs that reach exact
//! consensus, the deterministic (value, origin) trim tie-break drops the same
//! honest origin every iteration from then on, so one column of every later
//! matrix is exactly zero — and every family member requires all self-loops.
//! No member can be dominated, the check fails, and the long-window column
//! test (criterion 06) is the property that actually survives on such runs.
//! See README.md ("Known red check") for the full argument.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use relay_abc::analysis::{
    block_dominates_reduced_graph, check_diagonal_entries, construct_phase_matrix, matrix_splice,
    max_phase, product_nonzero_column, verify_phase_equation, ConstructionMode, TransitionMatrix,
};
use relay_abc::auth::AuthScheme;
use relay_abc::graph::{find_source_component, ReducedGraphFamily};
use relay_abc::{
    run_simulation, KeyedHashScheme, ScenarioConfig, Signature, SimulationTrace, StrategyKind,
    StrategySpec, POSITIVITY_THRESHOLD,
};

/// Honest spread below which a run counts as converged (criteria 01, 03).
const CONVERGENCE_SPREAD: f64 = 1e-6;
/// Iteration budget for the complete-graph runs (criterion 01).
const C1_MAX_ITERATIONS: usize = 500;
/// Wall-clock budget per complete-graph run (criterion 01).
const C1_TIME_BUDGET: Duration = Duration::from_secs(5);
/// Seeds per strategy in the validity sweep (criterion 02).
const SWEEP_SEEDS: usize = 10;
/// Iteration budget for the one-honest-in-neighbor ring (criterion 03).
const C3_MAX_ITERATIONS: usize = 2000;
/// Max elementwise error allowed in `v[p] = M[p] * v[p-1]` (criterion 04).
const EQUATION_TOLERANCE: f64 = 1e-9;
/// Row sums must equal 1 within this (criterion 05).
const ROW_SUM_TOLERANCE: f64 = 1e-12;
/// No matrix entry may fall below this (criterion 05).
const ENTRY_FLOOR: f64 = -1e-15;
/// Run length for the window-product check (criterion 06).
const C6_ITERATIONS: u64 = 200;
/// Wall-clock budget for the whole window-product check (criterion 06).
const C6_TIME_BUDGET: Duration = Duration::from_secs(10);
/// Signed triples probed by the forgery property check (criterion 08).
const FORGERY_TRIPLES: usize = 1000;
/// Slack allowed when checking values against the initial envelope
/// (criterion 03) — floating-point only, not a protocol allowance.
const VALIDITY_TOLERANCE: f64 = 1e-9;

fn preset(name: &str) -> ScenarioConfig {
    ScenarioConfig::preset(name).expect("built-in scenario")
}

fn run(config: &ScenarioConfig) -> SimulationTrace {
    run_simulation(&config.resolve().expect("valid scenario"))
}

/// Replaces every byzantine node's strategy in `base`.
fn with_strategy(base: &ScenarioConfig, kind: StrategyKind) -> ScenarioConfig {
    let mut config = base.clone();
    let byzantine: Vec<usize> =
        base.graph.build().expect("valid graph").byzantine().iter().copied().collect();
    config.b_strategy = byzantine
        .into_iter()
        .map(|id| (id, StrategySpec { kind: kind.clone(), seed_offset: 0 }))
        .collect();
    config
}

/// The attack menu exercised by criterion 01 (the base scenario already runs
/// `constant_extreme`).
fn strategy_menu() -> Vec<(&'static str, StrategyKind)> {
    vec![
        ("silent", StrategyKind::Silent),
        ("random_equivocate", StrategyKind::RandomEquivocate { low: -100.0, high: 100.0 }),
        ("replay_stale", StrategyKind::ReplayStale { age: 2 }),
        ("forge_attempt", StrategyKind::ForgeAttempt { value: 100.0 }),
        ("future_marker", StrategyKind::FutureMarker { value: 100.0, lead: 3 }),
    ]
}

/// All phase matrices of a trace, earliest phase first.
fn phase_matrices(trace: &SimulationTrace) -> Vec<TransitionMatrix> {
    (2..=max_phase(trace))
        .map(|p| construct_phase_matrix(trace, p, ConstructionMode::TraceMarkers).expect("matrix"))
        .collect()
}

fn honest_envelope(trace: &SimulationTrace) -> (f64, f64) {
    let lo = trace.config.initial_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = trace.config.initial_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn assert_validity(trace: &SimulationTrace, label: &str) {
    let (lo, hi) = honest_envelope(trace);
    for (t, iteration) in trace.iterations.iter().enumerate() {
        for node in &iteration.nodes {
            assert!(
                node.post_value >= lo - VALIDITY_TOLERANCE
                    && node.post_value <= hi + VALIDITY_TOLERANCE,
                "{label}: node {} left [{lo}, {hi}] at iteration {t}: {}",
                node.node,
                node.post_value
            );
        }
    }
}

fn bin_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relay-abc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Traces shared across several criteria, built once.
struct Fixtures {
    /// (strategy label, trace, simulation wall time) for the complete-graph
    /// scenario under each attack. Index 0 is the base `constant_extreme` run.
    c1: Vec<(&'static str, SimulationTrace, Duration)>,
    /// The one-honest-in-neighbor ring run.
    c3: SimulationTrace,
}

fn build_fixtures() -> Fixtures {
    let base = preset("complete_extreme");
    let mut c1 = Vec::new();
    let start = Instant::now();
    let trace = run(&base);
    c1.push(("constant_extreme", trace, start.elapsed()));
    for (label, kind) in strategy_menu() {
        let config = with_strategy(&base, kind);
        let start = Instant::now();
        let trace = run(&config);
        c1.push((label, trace, start.elapsed()));
    }
    let c3 = run(&preset("cycle_relay"));
    Fixtures { c1, c3 }
}

// --- criteria -------------------------------------------------------------

/// 01: the complete-graph scenario (4 honest initials 0..=3, one byzantine)
/// converges under every strategy in the menu, fast.
fn criterion_01(fx: &Fixtures) -> String {
    let mut slowest = Duration::ZERO;
    for (label, trace, elapsed) in &fx.c1 {
        assert_eq!(trace.m, 5, "{label}");
        assert_eq!(trace.b, 1, "{label}");
        assert_eq!(trace.config.convergence_threshold, CONVERGENCE_SPREAD, "{label}");
        let at = trace
            .converged_at()
            .unwrap_or_else(|| panic!("{label}: never reached spread < {CONVERGENCE_SPREAD}"));
        assert!(
            at < C1_MAX_ITERATIONS,
            "{label}: converged at iteration {at}, budget {C1_MAX_ITERATIONS}"
        );
        assert!(
            *elapsed < C1_TIME_BUDGET,
            "{label}: run took {elapsed:?}, budget {C1_TIME_BUDGET:?}"
        );
        slowest = slowest.max(*elapsed);
    }
    format!("{} runs, slowest {:.0?} < {:.0?}", fx.c1.len(), slowest, C1_TIME_BUDGET)
}

/// 02: zero validity violations across a seeds x strategies sweep, via the
/// shipped binary.
fn criterion_02() -> String {
    let dir = tempfile::tempdir().expect("tempdir");
    let seeds = SWEEP_SEEDS.to_string();
    let out = bin_in(
        dir.path(),
        &[
            "sweep",
            "--preset",
            "complete_extreme",
            "--seeds",
            &seeds,
            "--strategies",
            "silent,constant_extreme,random_equivocate",
            "--out-dir",
            "sweep",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "sweep exit: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("sweep/aggregate.csv")).expect("aggregate.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), SWEEP_SEEDS * 3, "expected one row per cell");
    let violated = rows.iter().filter(|r| !r.ends_with("ok")).count();
    assert_eq!(violated, 0, "cells with validity violations:\n{csv}");
    format!("{} cells, 0 violations", rows.len())
}

/// 03: a ring where every honest node has exactly one honest in-neighbor
/// still converges — relayed records stand in for missing direct edges.
fn criterion_03(fx: &Fixtures) -> String {
    let trace = &fx.c3;
    let network = trace.config.graph.build().expect("valid graph");
    let honest: BTreeSet<usize> = network.honest_ids().into_iter().collect();
    for &node in &honest {
        let honest_in =
            network.in_neighbors(node).iter().filter(|n| honest.contains(n)).count();
        assert_eq!(honest_in, 1, "node {node} must have exactly one honest in-neighbor");
    }
    assert_eq!(trace.config.convergence_threshold, CONVERGENCE_SPREAD);
    let at = trace.converged_at().expect("ring run must converge");
    assert!(at < C3_MAX_ITERATIONS, "converged at {at}, budget {C3_MAX_ITERATIONS}");
    assert_validity(trace, "ring");
    format!("h={} ring converged at iteration {at}", trace.h)
}

/// 04: every phase of every criterion-01 run and the ring run satisfies
/// `v[p] = M[p] * v[p-1]` within EQUATION_TOLERANCE.
fn criterion_04(fx: &Fixtures) -> String {
    let mut worst: f64 = 0.0;
    let mut phases = 0usize;
    let mut runs: Vec<(&str, &SimulationTrace)> =
        fx.c1.iter().map(|(label, trace, _)| (*label, trace)).collect();
    runs.push(("ring", &fx.c3));
    for (label, trace) in runs {
        for phase in 2..=max_phase(trace) {
            let matrix = construct_phase_matrix(trace, phase, ConstructionMode::TraceMarkers)
                .unwrap_or_else(|e| panic!("{label} phase {phase}: {e}"));
            let err = verify_phase_equation(trace, phase, &matrix).expect("phase in range");
            assert!(
                err < EQUATION_TOLERANCE,
                "{label} phase {phase}: equation error {err:e} >= {EQUATION_TOLERANCE:e}"
            );
            worst = worst.max(err);
            phases += 1;
        }
    }
    format!("{phases} phases, max error {worst:e}")
}

/// 05: every reconstructed matrix is row-stochastic — row sums within
/// ROW_SUM_TOLERANCE of 1, no entry below ENTRY_FLOOR.
fn criterion_05(fx: &Fixtures) -> String {
    let mut checked = 0usize;
    let mut traces: Vec<&SimulationTrace> = fx.c1.iter().map(|(_, t, _)| t).collect();
    traces.push(&fx.c3);
    for trace in traces {
        for matrix in phase_matrices(trace) {
            let n = matrix.n();
            for r in 0..n {
                let mut sum = 0.0;
                for c in 0..n {
                    let entry = matrix.data[(r, c)];
                    assert!(
                        entry >= ENTRY_FLOOR,
                        "phase {} row {r} col {c}: entry {entry} < {ENTRY_FLOOR}",
                        matrix.phase
                    );
                    sum += entry;
                }
                assert!(
                    (sum - 1.0).abs() <= ROW_SUM_TOLERANCE,
                    "phase {} row {r}: sum {sum} off by {:e}",
                    matrix.phase,
                    (sum - 1.0).abs()
                );
            }
            checked += 1;
        }
    }
    format!("{checked} matrices row-stochastic within {ROW_SUM_TOLERANCE:e}")
}

/// 06: on a 3-honest complete graph (family size 8), the product of every
/// window of 2*8 + 1 = 17 consecutive phase matrices has a column positive in
/// every row.
fn criterion_06() -> String {
    let start = Instant::now();
    let mut config = preset("complete_scrambling");
    config.t = C6_ITERATIONS;
    let trace = run(&config);
    assert_eq!(trace.h, 3);
    assert_eq!(trace.b, 1);
    assert_eq!(trace.d, 1);
    let family = ReducedGraphFamily::new(trace.h, trace.b);
    assert_eq!(family.count(), 8);
    let window = (2 * family.count() + 1) as usize; // 17
    let matrices = phase_matrices(&trace);
    assert_eq!(matrices.len(), C6_ITERATIONS as usize - 1);
    let mut windows = 0usize;
    for slice in matrices.windows(window) {
        // product_nonzero_column multiplies in slice order and wants the
        // latest phase first.
        let latest_first: Vec<TransitionMatrix> = slice.iter().rev().cloned().collect();
        let column = product_nonzero_column(&latest_first, POSITIVITY_THRESHOLD);
        assert!(
            column.is_some(),
            "window at phases {}..={} has no fully positive column",
            slice[0].phase,
            slice[window - 1].phase
        );
        windows += 1;
    }
    let elapsed = start.elapsed();
    assert!(elapsed < C6_TIME_BUDGET, "took {elapsed:?}, budget {C6_TIME_BUDGET:?}");
    format!("{windows} windows of {window} phases, {elapsed:.0?} < {C6_TIME_BUDGET:?}")
}

/// 07a: the reduced-graph family machinery — counts match the closed form
/// and every member has a source component reading every node.
fn criterion_07a() -> String {
    let expected: [(usize, usize, u128); 3] = [(3, 1, 8), (4, 1, 81), (5, 2, 7776)];
    for (h, b, count) in expected {
        let family = ReducedGraphFamily::new(h, b);
        assert_eq!(family.count(), count, "family size for h={h}, b={b}");
        for rank in 0..count {
            let member = family.get(rank).expect("rank in range");
            find_source_component(&member).unwrap_or_else(|e| {
                panic!("h={h}, b={b}, rank {rank}: no source component: {e}")
            });
        }
    }
    "families 8/81/7776, all members have a source".to_string()
}

/// 07b: the bottom block of every product of two consecutive phase matrices
/// from the criterion-01 runs dominates some reduced-family member.
///
/// Expected to FAIL — see the module doc comment and README.md: once a
/// complete-graph run hits exact consensus, the trim tie-break zeroes one
/// honest column permanently and no member (all of which require positive
/// diagonals) can be dominated. Kept red on purpose; do not weaken the check.
fn criterion_07b(fx: &Fixtures) -> String {
    for (label, trace, _) in &fx.c1 {
        let matrices = phase_matrices(trace);
        let mut dominating = 0usize;
        let mut first_miss = None;
        for pair in matrices.windows(2) {
            let rank = block_dominates_reduced_graph(&pair[1], &pair[0], POSITIVITY_THRESHOLD)
                .expect("family enumerable");
            match rank {
                Some(_) => dominating += 1,
                None => first_miss = first_miss.or(Some(pair[0].phase)),
            }
        }
        let pairs = matrices.len() - 1;
        if let Some(phase) = first_miss {
            panic!(
                "{label}: only {dominating} of {pairs} consecutive products dominate a \
                 reduced member; first miss at phases {phase} x {} (known red check: \
                 post-consensus tie-break zeroes an honest column)",
                phase + 1
            );
        }
    }
    "all consecutive products dominate".to_string()
}

/// 08: forged records are never accepted — audit every forge run against the
/// signing log, then probe the scheme directly with mutated triples.
fn criterion_08(fx: &Fixtures) -> String {
    // (a) every honest-origin record held by any honest node in any forge run
    // appears verbatim in the honest signing log.
    let forge_preset = run(&preset("complete_forge"));
    let forge_variant = &fx.c1.iter().find(|(l, _, _)| *l == "forge_attempt").unwrap().1;
    let mut audited = 0usize;
    for trace in [&forge_preset, forge_variant] {
        let logged: BTreeSet<(usize, u64, i64)> = trace
            .honest_signing_log
            .iter()
            .map(|e| (e.origin, e.value_bits, e.marker))
            .collect();
        let honest: BTreeSet<usize> = trace.honest_ids.iter().copied().collect();
        for iteration in &trace.iterations {
            for node in &iteration.nodes {
                for (origin, slot) in node.merged_view.slots.iter().enumerate() {
                    if slot.held && honest.contains(&origin) {
                        assert!(
                            logged.contains(&(origin, slot.value.to_bits(), slot.marker)),
                            "t={} node {}: holds unlogged record for origin {origin}: \
                             value {}, marker {}",
                            iteration.t,
                            node.node,
                            slot.value,
                            slot.marker
                        );
                        audited += 1;
                    }
                }
            }
        }
    }

    // (b) mutating any field of a signed triple must break verification.
    let m = 7;
    let scheme = KeyedHashScheme::from_seed(2026, m);
    let mut rng = ChaCha20Rng::seed_from_u64(0x5ea1);
    let mut false_accepts = 0usize;
    for _ in 0..FORGERY_TRIPLES {
        let origin = rng.random_range(0..m);
        let value: f64 = rng.random_range(-1.0e6..1.0e6);
        let marker: i64 = rng.random_range(-1..10_000);
        let key = scheme.signing_key(origin).expect("key exists");
        let sig = scheme.sign(&key, origin, value, marker).expect("finite value");
        assert!(scheme.verify(origin, value, marker, &sig), "genuine triple must verify");

        let flipped_bit = 1u64 << rng.random_range(0..64);
        let mutants: [(usize, f64, i64, Signature); 6] = [
            (origin, f64::from_bits(value.to_bits() ^ flipped_bit), marker, sig.clone()),
            (origin, value, marker + 1, sig.clone()),
            (origin, value, marker - 1, sig.clone()),
            ((origin + 1 + rng.random_range(0..m - 1)) % m, value, marker, sig.clone()),
            (origin, value, marker, {
                let mut bytes = sig.0.clone();
                let i = rng.random_range(0..bytes.len());
                bytes[i] ^= 0x01;
                Signature(bytes)
            }),
            (origin, value, marker, Signature(sig.0[..sig.0.len() - 1].to_vec())),
        ];
        for (o, v, t, s) in &mutants {
            if scheme.verify(*o, *v, *t, s) {
                false_accepts += 1;
            }
        }
    }
    assert_eq!(false_accepts, 0, "mutated triples accepted");
    format!("{audited} held records audited, {FORGERY_TRIPLES} triples x 6 mutations rejected")
}

/// 09: the frozen matrix fixtures — splice extraction, the diagonal check on
/// a known two-phase matrix, and the positive-column search on its product
/// shape.
fn criterion_09() -> String {
    use nalgebra::DMatrix;

    // Splice: rows 0..=1, cols 0..=1 of a 3x3 counting matrix.
    let counting = DMatrix::from_row_slice(3, 3, &[0., 1., 2., 3., 4., 5., 6., 7., 8.]);
    let block = matrix_splice(&counting, 0, 1, 0, 1).expect("in range");
    assert_eq!(block, DMatrix::from_row_slice(2, 2, &[0., 1., 3., 4.]));

    // A frozen h=3, D=2 phase matrix: every row holds weight on its own
    // node's newest previous-phase column (column h*(D-1) + k).
    let t = 1.0 / 3.0;
    let n = 1.0 / 9.0;
    #[rustfmt::skip]
    let data = DMatrix::from_row_slice(6, 6, &[
        0.0, 0.0,       t,       t,       t,     0.0,
        0.0, 0.0,     0.0,       t,       t,       t,
          t, 0.0,     0.0,     0.0,       t,       t,
        0.0, 0.0,       n, 2.0 * n, 2.0 * n, 4.0 * n,
          n, 0.0,       n, 2.0 * n, 3.0 * n, 2.0 * n,
          n, 0.0,     0.0, 4.0 * n, 2.0 * n, 2.0 * n,
    ]);
    let matrix = TransitionMatrix { phase: 2, h: 3, d: 2, b: 1, data };
    let diagonal = check_diagonal_entries(&matrix, POSITIVITY_THRESHOLD);
    assert!(diagonal.iter().all(|&ok| ok), "diagonal check must accept: {diagonal:?}");

    // Column search on the product shape: column 4 is the first fully
    // positive one among the last-h-first order.
    let column = product_nonzero_column(std::slice::from_ref(&matrix), POSITIVITY_THRESHOLD);
    assert_eq!(column, Some(4));
    "splice, diagonal, and column fixtures reproduced".to_string()
}

/// 10: identical seeds give byte-identical traces, reports, and analyses.
fn criterion_10() -> String {
    // Library level: two runs of the same resolved scenario.
    let config = preset("cycle_relay");
    let a = run(&config).to_json_vec().expect("serializes");
    let b = run(&config).to_json_vec().expect("serializes");
    assert_eq!(a, b, "in-process traces differ");

    // Binary level: full artifact set from two separate processes.
    let dir = tempfile::tempdir().expect("tempdir");
    for sub in ["a", "b"] {
        let out = bin_in(dir.path(), &["run", "--preset", "cycle_relay", "--out-dir", sub]);
        assert_eq!(out.status.code(), Some(0));
        let analysis = format!("{sub}/analysis.json");
        let trace = format!("{sub}/trace.json");
        let out = bin_in(dir.path(), &["analyze", "--trace", &trace, "--out", &analysis]);
        assert_eq!(out.status.code(), Some(0));
    }
    for file in ["trace.json", "values.csv", "report.json", "analysis.json"] {
        let a = fs::read(dir.path().join("a").join(file)).expect(file);
        let b = fs::read(dir.path().join("b").join(file)).expect(file);
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    format!("{} bytes of trace identical across processes", a.len())
}

// --- harness ---------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let fixtures = build_fixtures();

    let checks: Vec<(&str, &str, Box<dyn Fn() -> String + '_>)> = vec![
        ("01", "convergence under every attack strategy", {
            let fx = &fixtures;
            Box::new(move || criterion_01(fx))
        }),
        ("02", "validity across the seed x strategy sweep", Box::new(criterion_02)),
        ("03", "convergence on the one-honest-in-neighbor ring", {
            let fx = &fixtures;
            Box::new(move || criterion_03(fx))
        }),
        ("04", "phase equations reproduced exactly", {
            let fx = &fixtures;
            Box::new(move || criterion_04(fx))
        }),
        ("05", "row stochasticity of every matrix", {
            let fx = &fixtures;
            Box::new(move || criterion_05(fx))
        }),
        ("06", "positive column in every 17-phase window product", Box::new(criterion_06)),
        ("07a", "reduced-graph family counts and source components", Box::new(criterion_07a)),
        ("07b", "consecutive products dominate a reduced member", {
            let fx = &fixtures;
            Box::new(move || criterion_07b(fx))
        }),
        ("08", "forged records never accepted", {
            let fx = &fixtures;
            Box::new(move || criterion_08(fx))
        }),
        ("09", "frozen matrix fixtures", Box::new(criterion_09)),
        ("10", "byte-identical reruns", Box::new(criterion_10)),
    ];

    let mut failed: Vec<String> = Vec::new();
    for (number, name, check) in &checks {
        match catch_unwind(AssertUnwindSafe(check)) {
            Ok(detail) => {
                println!("criterion {number:>3} {name}: PASS ({detail})");
            }
            Err(payload) => {
                let message = payload
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| payload.downcast_ref::<&str>().copied())
                    .unwrap_or("panic without message");
                println!("criterion {number:>3} {name}: FAIL");
                println!("    {message}");
                failed.push(format!("{number} ({name})"));
            }
        }
    }

    assert!(failed.is_empty(), "failing criteria: {}", failed.join(", "));
}
