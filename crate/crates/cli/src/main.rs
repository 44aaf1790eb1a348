//! `relay-abc` — run the relay consensus simulator, reconstruct and check
//! its phase matrices, enumerate reduced graphs, and sweep seed/strategy
//! grids.
//!
//! Exit codes:
//!   0  success (including "nothing to analyze" on short traces)
//!   1  a check failed: validity violation, equation/stochasticity failure,
//!      or a structural property did not hold
//!   2  invalid configuration or arguments
//!   3  I/O or file-format failure (unreadable, truncated, wrong version)
//!
//! Everything written to stdout and to output files is a pure function of
//! the inputs; wall-clock timings go to stderr only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use relay_abc::adversary::{StrategyKind, StrategySpec};
use relay_abc::analysis::{self, ConstructionMode};
use relay_abc::engine::run_simulation;
use relay_abc::graph::{find_source_component, ReducedGraphFamily};
use relay_abc::report::{AnalysisReport, RunReport};
use relay_abc::scenario::ScenarioConfig;
use relay_abc::trace::SimulationTrace;

const EXIT_OK: i32 = 0;
const EXIT_CHECK_FAILED: i32 = 1;
const EXIT_CONFIG: i32 = 2;
const EXIT_IO: i32 = 3;

#[derive(Parser)]
#[command(name = "relay-abc", version, about = "Relay consensus simulator and analyzer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario; write trace.json, values.csv and report.json.
    Run(RunArgs),
    /// Reconstruct phase matrices from a trace and run every check.
    Analyze(AnalyzeArgs),
    /// Enumerate the reduced graphs for (h, b) and verify their sources.
    Graphs(GraphsArgs),
    /// Run a seed x strategy grid and aggregate the results.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ConfigSource {
    /// Path to a scenario configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a built-in scenario.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Directory for trace.json, values.csv and report.json.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Map survivor records by the iteration markers they carry.
    TraceMarkers,
    /// Map survivor records by honest shortest-path distances.
    DistanceOffsets,
}

impl From<ModeArg> for ConstructionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::TraceMarkers => ConstructionMode::TraceMarkers,
            ModeArg::DistanceOffsets => ConstructionMode::DistanceOffsets,
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace file produced by `run`.
    #[arg(long)]
    trace: PathBuf,
    /// Where to write the analysis report (JSON).
    #[arg(long, default_value = "analysis.json")]
    out: PathBuf,
    /// Also export every reconstructed matrix as CSV into this directory.
    #[arg(long)]
    matrices_csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "trace-markers")]
    mode: ModeArg,
}

#[derive(Args)]
struct GraphsArgs {
    /// Honest node count.
    #[arg(long)]
    h: usize,
    /// Tolerated byzantine count.
    #[arg(long)]
    b: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Number of seeds (0, 1, ..., seeds-1).
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Comma-separated adversary strategies applied to every byzantine node.
    #[arg(long, default_value = "silent,constant_extreme,random_equivocate")]
    strategies: String,
    /// Directory for per-cell reports and aggregate.csv.
    #[arg(long, default_value = "sweep")]
    out_dir: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Graphs(args) => cmd_graphs(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    std::process::exit(code);
}

/// Loads a scenario from --config / --preset (exactly one required).
fn load_config(source: &ConfigSource) -> Result<ScenarioConfig, i32> {
    match (&source.config, &source.preset) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| {
                eprintln!("error: cannot read {}: {e}", path.display());
                EXIT_IO
            })?;
            serde_json::from_str(&text).map_err(|e| {
                eprintln!("error: invalid configuration {}: {e}", path.display());
                EXIT_CONFIG
            })
        }
        (None, Some(name)) => ScenarioConfig::preset(name).map_err(|e| {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }),
        _ => {
            eprintln!("error: exactly one of --config or --preset is required");
            Err(EXIT_CONFIG)
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), i32> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| {
            eprintln!("error: cannot create {}: {e}", parent.display());
            EXIT_IO
        })?;
    }
    fs::write(path, bytes).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        EXIT_IO
    })
}

fn to_pretty_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serialization");
    bytes.push(b'\n');
    bytes
}

fn cmd_run(args: &RunArgs) -> i32 {
    let config = match load_config(&args.source) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let scenario = match config.resolve() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let started = Instant::now();
    let trace = run_simulation(&scenario);
    eprintln!(
        "simulated {} iterations (m={}, D={}) in {:.1?}",
        trace.t_max,
        trace.m,
        trace.d,
        started.elapsed()
    );
    let report = RunReport::from_trace(&trace);

    let trace_bytes = match trace.to_json_vec() {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot serialize trace: {e}");
            return EXIT_IO;
        }
    };
    if let Err(code) = write_file(&args.out_dir.join("trace.json"), &trace_bytes) {
        return code;
    }
    if let Err(code) = write_file(&args.out_dir.join("values.csv"), trace.values_csv().as_bytes())
    {
        return code;
    }
    if let Err(code) = write_file(&args.out_dir.join("report.json"), &to_pretty_json(&report)) {
        return code;
    }

    println!(
        "m={} h={} b={} D={} T={} seed={}",
        report.m, report.h, report.b, report.d, report.t_max, report.seed
    );
    match report.converged_at {
        Some(t) => println!(
            "converged at iteration {t} (spread <= {})",
            report.convergence_threshold
        ),
        None => println!(
            "did not converge within {} iterations (final spread {})",
            report.t_max, report.final_spread
        ),
    }
    println!("final spread: {}", report.final_spread);
    println!(
        "payload bytes: {} total; merge rejected: {}",
        report.payload_bytes_total, report.merge_rejected_total
    );
    if report.validity.holds {
        println!("validity: ok (all values within [{}, {}])",
            report.validity.initial_min, report.validity.initial_max);
        EXIT_OK
    } else {
        println!(
            "validity: VIOLATED ({} values outside [{}, {}])",
            report.validity.violations_total,
            report.validity.initial_min,
            report.validity.initial_max
        );
        EXIT_CHECK_FAILED
    }
}

fn cmd_analyze(args: &AnalyzeArgs) -> i32 {
    let file = match fs::File::open(&args.trace) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.trace.display());
            return EXIT_IO;
        }
    };
    let trace = match SimulationTrace::from_reader(std::io::BufReader::new(file)) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: trace corrupt: {e}");
            return EXIT_IO;
        }
    };
    let mode: ConstructionMode = args.mode.into();
    let started = Instant::now();
    let report = match AnalysisReport::from_trace(&trace, mode) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: analysis failed: {e}");
            return EXIT_CHECK_FAILED;
        }
    };
    eprintln!("analyzed {} phases in {:.1?}", report.phases.len(), started.elapsed());

    if let Some(dir) = &args.matrices_csv {
        for phase_report in &report.phases {
            let matrix =
                match analysis::construct_phase_matrix(&trace, phase_report.phase, mode) {
                    Ok(m) => m,
                    Err(e) => {
                        eprintln!("error: cannot rebuild phase {}: {e}", phase_report.phase);
                        return EXIT_CHECK_FAILED;
                    }
                };
            let path = dir.join(format!("phase_{:04}.csv", phase_report.phase));
            if let Err(code) = write_file(&path, matrix.to_csv().as_bytes()) {
                return code;
            }
        }
    }
    if let Err(code) = write_file(&args.out, &to_pretty_json(&report)) {
        return code;
    }

    for note in &report.notes {
        println!("note: {note}");
    }
    if report.no_analyzable_phase() {
        println!("nothing to analyze; trace ends before the first full-update phase");
        return EXIT_OK;
    }
    println!(
        "phases 2..={}: max equation error {:e} (tolerance {:e})",
        report.phases.last().map(|p| p.phase).unwrap_or(1),
        report.max_equation_error,
        report.equation_tolerance
    );
    println!(
        "row stochastic: {}",
        if report.all_row_stochastic { "all phases" } else { "FAILED" }
    );
    let chain_violations: usize =
        report.phases.iter().map(|p| p.chain_diagonal_violations.len()).sum();
    let inherit_violations: usize =
        report.phases.iter().map(|p| p.inheritance_violations.len()).sum();
    println!("self-diagonal violations on chained rows: {chain_violations}");
    println!("support inheritance violations: {inherit_violations}");
    let min_support = report.phases.iter().map(|p| p.min_row_support).min().unwrap_or(0);
    println!("min row support: {min_support} (needs >= h - b = {})", report.h - report.b);
    let dominated = report.domination.iter().filter(|d| d.dominated_rank.is_some()).count();
    println!(
        "domination: {dominated} of {} consecutive-phase products dominate a reduced graph",
        report.domination.len()
    );
    if let Some(first) = report.domination.iter().find(|d| d.dominated_rank.is_some()) {
        println!(
            "  first at phases {} x {}: reduced graph #{}",
            first.later_phase,
            first.earlier_phase,
            first.dominated_rank.unwrap()
        );
    }
    match report.product_positive_column {
        Some(c) => println!("full product: column {c} positive in every row"),
        None => println!("full product: no fully positive column"),
    }

    if report.passed() {
        println!("analysis: ok");
        EXIT_OK
    } else {
        println!("analysis: FAILED");
        EXIT_CHECK_FAILED
    }
}

fn cmd_graphs(args: &GraphsArgs) -> i32 {
    let (h, b) = (args.h, args.b);
    if h < 2 * b + 1 {
        eprintln!("error: h = {h} must be at least 2b + 1 = {} to trim b from each side", 2 * b + 1);
        return EXIT_CONFIG;
    }
    let family = ReducedGraphFamily::new(h, b);
    let count = family.count();
    println!("reduced graphs for h={h}, b={b}: {count}");
    let iter = match family.iter_all(analysis::REDUCED_FAMILY_CAP) {
        Ok(it) => it,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut histogram: BTreeMap<usize, u128> = BTreeMap::new();
    for (rank, rg) in iter.enumerate() {
        match find_source_component(&rg) {
            Ok(source) => *histogram.entry(source).or_insert(0) += 1,
            Err(e) => {
                println!("member #{rank} has no source component: {e}");
                return EXIT_CHECK_FAILED;
            }
        }
    }
    for (source, n) in &histogram {
        println!("source node {source}: {n}");
    }
    println!("every member has a source component");
    EXIT_OK
}

/// A named adversary configuration used for sweep cells.
fn sweep_strategy(name: &str) -> Option<StrategyKind> {
    Some(match name {
        "silent" => StrategyKind::Silent,
        "constant_extreme" => StrategyKind::ConstantExtreme { value: 100.0 },
        "random_equivocate" => StrategyKind::RandomEquivocate { low: -100.0, high: 100.0 },
        "replay_stale" => StrategyKind::ReplayStale { age: 2 },
        "forge_attempt" => StrategyKind::ForgeAttempt { value: 100.0 },
        "future_marker" => StrategyKind::FutureMarker { value: 100.0, lead: 3 },
        _ => return None,
    })
}

struct SweepCell {
    strategy: String,
    seed: u64,
    config: ScenarioConfig,
}

struct SweepRow {
    strategy: String,
    seed: u64,
    converged_at: Option<usize>,
    final_spread: Option<f64>,
    validity: &'static str,
    report: Option<RunReport>,
}

fn cmd_sweep(args: &SweepArgs) -> i32 {
    let base = match load_config(&args.source) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let names: Vec<String> =
        args.strategies.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        eprintln!("error: --strategies must name at least one strategy");
        return EXIT_CONFIG;
    }
    let mut cells = Vec::new();
    for name in &names {
        let Some(kind) = sweep_strategy(name) else {
            eprintln!("error: unknown strategy '{name}'");
            return EXIT_CONFIG;
        };
        let byzantine: Vec<usize> = match base.graph.build() {
            Ok(net) => net.byzantine().iter().copied().collect(),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        };
        for seed in 0..args.seeds {
            let mut config = base.clone();
            config.seed = seed;
            config.b_strategy = byzantine
                .iter()
                .map(|&node| (node, StrategySpec { kind: kind.clone(), seed_offset: 0 }))
                .collect();
            cells.push(SweepCell { strategy: name.clone(), seed, config });
        }
    }

    let started = Instant::now();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|cell| match cell.config.resolve() {
            Ok(scenario) => {
                let trace = run_simulation(&scenario);
                let report = RunReport::from_trace(&trace);
                SweepRow {
                    strategy: cell.strategy.clone(),
                    seed: cell.seed,
                    converged_at: report.converged_at,
                    final_spread: Some(report.final_spread),
                    validity: if report.validity.holds { "ok" } else { "violated" },
                    report: Some(report),
                }
            }
            Err(e) => {
                eprintln!("cell {}/seed {}: {e}", cell.strategy, cell.seed);
                SweepRow {
                    strategy: cell.strategy.clone(),
                    seed: cell.seed,
                    converged_at: None,
                    final_spread: None,
                    validity: "config_error",
                    report: None,
                }
            }
        })
        .collect();
    eprintln!("swept {} cells in {:.1?}", rows.len(), started.elapsed());

    let mut csv = String::from("scenario, seed, converged_at, final_spread, validity\n");
    for row in &rows {
        let converged = row.converged_at.map(|t| t.to_string()).unwrap_or_default();
        let spread = row.final_spread.map(|s| s.to_string()).unwrap_or_default();
        writeln!(csv, "{}, {}, {}, {}, {}", row.strategy, row.seed, converged, spread, row.validity)
            .expect("string write");
        if let Some(report) = &row.report {
            let path = args
                .out_dir
                .join(format!("{}_seed{:04}.report.json", row.strategy, row.seed));
            if let Err(code) = write_file(&path, &to_pretty_json(report)) {
                return code;
            }
        }
    }
    if let Err(code) = write_file(&args.out_dir.join("aggregate.csv"), csv.as_bytes()) {
        return code;
    }
    print!("{csv}");
    std::io::stdout().flush().ok();

    if rows.iter().any(|r| r.validity == "violated") {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    }
}
