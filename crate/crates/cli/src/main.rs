//! `bb`: parse unit trees, analyze dependency structure, isolate the
//! boot-critical group, pre-parse to a binary cache, simulate boots,
//! compare traces, chart timelines, and benchmark the grace-period
//! synchronization modes.
//!
//! Exit codes: 0 success, 1 usage error, 2 analysis errors found, 3 I/O
//! failure, 4 simulation precondition failure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bb_core::cache::{cache_valid, decode_cache, encode_cache};
use bb_core::graph::{
    build_graph, detect_contradictions, detect_cycles, edge_list, isolate_bb_group_with, to_dot,
    BBGroup, IsolateError,
};
use bb_core::parse::{parse_tree, tree_digest, TreeError};
use bb_core::report::{compare_traces, emit_bootchart, emit_metrics, ChartFormat, ChartOptions};
use bb_core::sim::config::SimConfigFile;
use bb_core::sim::{simulate_boot, ScheduleTrace};
use bb_core::unit::{Diagnostic, Severity, UnitName, UnitSet};
use bb_sync::{bench_contention, BenchMode};

const EXIT_USAGE: u8 = 1;
const EXIT_ANALYSIS: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_SIM: u8 = 4;

#[derive(Parser)]
#[command(name = "bb", version, about = "Boot analysis and simulation toolkit")]
struct Cli {
    /// Emit machine-parseable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for anything randomized (recorded in traces).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a unit tree and print diagnostics.
    Parse {
        /// Unit directory (defaults to $BB_FIXTURES).
        dir: Option<PathBuf>,
    },
    /// Run cycle and contradiction analysis over a unit tree.
    Analyze {
        dir: Option<PathBuf>,
        /// Write the edge list (from<TAB>kind<TAB>to) to a file.
        #[arg(long)]
        export_edges: Option<PathBuf>,
        /// Write a Graphviz rendering to a file.
        #[arg(long)]
        export_dot: Option<PathBuf>,
    },
    /// Compute the boot-critical group for the given completion targets.
    Isolate {
        dir: Option<PathBuf>,
        /// Completion target unit names.
        #[arg(long, required = true, num_args = 1..)]
        completion: Vec<String>,
        /// Also follow weak edges when building the closure (experimental).
        #[arg(long)]
        closure_weak: bool,
    },
    /// Parse a unit tree and write the binary cache.
    Preparse {
        dir: Option<PathBuf>,
        #[arg(long)]
        cache: PathBuf,
    },
    /// Simulate a boot and write the trace as JSON.
    Simulate {
        dir: Option<PathBuf>,
        /// Simulation config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Binary unit cache; used when valid, rebuilt when stale.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Boot-boosting on or off.
        #[arg(long, value_enum, default_value_t = BbSwitch::Off)]
        bb: BbSwitch,
        /// Completion targets (overrides the config).
        #[arg(long, num_args = 1..)]
        completion: Vec<String>,
        /// Trace output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a metrics summary JSON.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Compare two trace files.
    Compare {
        trace_a: PathBuf,
        trace_b: PathBuf,
        /// Write the comparison report JSON to a file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark the grace-period synchronization modes.
    BenchSync {
        #[arg(long, default_value_t = 4)]
        readers: usize,
        #[arg(long, default_value_t = 1)]
        syncers: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, value_enum, default_value_t = BenchModeArg::Conventional)]
        mode: BenchModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a trace as a bootchart timeline.
    Chart {
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = ChartFormatArg::Text)]
        format: ChartFormatArg,
        /// Milliseconds per SVG pixel.
        #[arg(long, default_value_t = 5)]
        ms_per_px: u64,
        /// Milliseconds per text cell.
        #[arg(long, default_value_t = 100)]
        ms_per_cell: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BbSwitch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchModeArg {
    Conventional,
    Boosted,
    Toggle,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChartFormatArg {
    Svg,
    Text,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_USAGE,
            message: msg.into(),
        }
    }
    fn analysis(msg: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_ANALYSIS,
            message: msg.into(),
        }
    }
    fn io(msg: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_IO,
            message: msg.into(),
        }
    }
    fn sim(msg: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_SIM,
            message: msg.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/version output with code 0.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("bb: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    let json = cli.json;
    match cli.command {
        Command::Parse { dir } => cmd_parse(&resolve_dir(dir)?, json),
        Command::Analyze {
            dir,
            export_edges,
            export_dot,
        } => cmd_analyze(&resolve_dir(dir)?, json, export_edges, export_dot),
        Command::Isolate {
            dir,
            completion,
            closure_weak,
        } => cmd_isolate(&resolve_dir(dir)?, &completion, closure_weak, json),
        Command::Preparse { dir, cache } => cmd_preparse(&resolve_dir(dir)?, &cache, json),
        Command::Simulate {
            dir,
            config,
            cache,
            bb,
            completion,
            out,
            metrics,
        } => cmd_simulate(
            &resolve_dir(dir)?,
            config.as_deref(),
            cache.as_deref(),
            bb == BbSwitch::On,
            &completion,
            out.as_deref(),
            metrics.as_deref(),
            cli.seed,
            json,
        ),
        Command::Compare { trace_a, trace_b, out } => cmd_compare(&trace_a, &trace_b, out.as_deref(), json),
        Command::BenchSync {
            readers,
            syncers,
            iters,
            mode,
            out,
        } => cmd_bench(readers, syncers, iters, mode, out.as_deref(), json),
        Command::Chart {
            trace,
            format,
            ms_per_px,
            ms_per_cell,
            out,
        } => cmd_chart(&trace, format, ms_per_px, ms_per_cell, out.as_deref()),
    }
}

fn resolve_dir(dir: Option<PathBuf>) -> Result<PathBuf, CliError> {
    match dir {
        Some(d) => Ok(d),
        None => std::env::var_os("BB_FIXTURES")
            .map(PathBuf::from)
            .ok_or_else(|| {
                CliError::usage("no unit directory given and BB_FIXTURES is not set")
            }),
    }
}

/// Walk a directory for unit files, keyed by file name.
fn load_sources(dir: &Path) -> Result<BTreeMap<UnitName, String>, CliError> {
    let mut sources = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::io(format!("walking {}: {e}", dir.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let Some(file_name) = entry.file_name().to_str() else {
            continue;
        };
        let Ok(name) = UnitName::parse(file_name) else {
            continue; // not one of the recognized unit suffixes
        };
        let text = std::fs::read_to_string(entry.path())
            .map_err(|e| CliError::io(format!("reading {}: {e}", entry.path().display())))?;
        if sources.insert(name, text).is_some() {
            return Err(CliError::analysis(format!(
                "duplicate unit name {file_name} in {}",
                dir.display()
            )));
        }
    }
    Ok(sources)
}

fn parse_sources(
    sources: &BTreeMap<UnitName, String>,
) -> Result<(UnitSet, Vec<Diagnostic>), CliError> {
    parse_tree(sources).map_err(|e| match e {
        TreeError::Empty => CliError::usage("empty unit tree"),
        TreeError::NoValidUnits { diagnostics } => {
            let detail: Vec<String> = diagnostics.iter().map(|d| d.to_string()).collect();
            CliError::analysis(format!("no units parsed:\n{}", detail.join("\n")))
        }
    })
}

/// Load units, going through the binary cache when it is valid for the
/// current sources and transparently rebuilding it otherwise.
fn load_units(
    dir: &Path,
    cache_path: Option<&Path>,
) -> Result<(UnitSet, Vec<Diagnostic>, bool), CliError> {
    let sources = load_sources(dir)?;
    if sources.is_empty() {
        return Err(CliError::usage("empty unit tree"));
    }
    let digest = tree_digest(&sources);
    if let Some(path) = cache_path {
        if let Ok(bytes) = std::fs::read(path) {
            if cache_valid(&bytes, &digest) {
                let set = decode_cache(&bytes)
                    .map_err(|e| CliError::io(format!("decoding {}: {e}", path.display())))?;
                return Ok((set, Vec::new(), true));
            }
            eprintln!("bb: cache {} is stale, rebuilding", path.display());
        }
    }
    let (set, diagnostics) = parse_sources(&sources)?;
    if let Some(path) = cache_path {
        write_cache(path, &set)?;
    }
    Ok((set, diagnostics, false))
}

/// Single-writer discipline: write to a temp file next to the target, then
/// rename over it.
fn write_cache(path: &Path, set: &UnitSet) -> Result<(), CliError> {
    let bytes = encode_cache(set);
    let tmp = path.with_extension("bbpp.tmp");
    std::fs::write(&tmp, &bytes)
        .map_err(|e| CliError::io(format!("writing {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::io(format!("renaming {}: {e}", path.display())))?;
    Ok(())
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::io(format!("writing {}: {e}", path.display()))),
        None => {
            print!("{content}");
            if !content.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn parse_completion(names: &[String]) -> Result<BTreeSet<UnitName>, CliError> {
    names
        .iter()
        .map(|s| UnitName::parse(s).map_err(|e| CliError::usage(e.to_string())))
        .collect()
}

fn cmd_parse(dir: &Path, json: bool) -> Result<u8, CliError> {
    let sources = load_sources(dir)?;
    let (set, diagnostics) = parse_sources(&sources)?;
    if json {
        let doc = serde_json::json!({
            "units": set.len(),
            "diagnostics": diagnostics,
        });
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        println!("parsed {} units from {}", set.len(), dir.display());
        for d in &diagnostics {
            println!("{d}");
        }
    }
    let has_errors = diagnostics.iter().any(|d| d.severity == Severity::Error);
    Ok(if has_errors { EXIT_ANALYSIS } else { 0 })
}

fn cmd_analyze(
    dir: &Path,
    json: bool,
    export_edges: Option<PathBuf>,
    export_dot: Option<PathBuf>,
) -> Result<u8, CliError> {
    let sources = load_sources(dir)?;
    let (set, mut diagnostics) = parse_sources(&sources)?;
    let graph = build_graph(&set);
    let cycles = detect_cycles(&graph);
    diagnostics.extend(detect_contradictions(&graph));

    if let Some(path) = export_edges {
        std::fs::write(&path, edge_list(&graph))
            .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?;
    }
    if let Some(path) = export_dot {
        std::fs::write(&path, to_dot(&graph))
            .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?;
    }

    if json {
        let doc = serde_json::json!({
            "units": set.len(),
            "cycles": cycles,
            "diagnostics": diagnostics,
        });
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        println!(
            "analyzed {} units, {} edges",
            set.len(),
            graph.edges().len()
        );
        for c in &cycles.cycles {
            let sev = match c.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            let path: Vec<&str> = c.nodes.iter().map(|n| n.as_str()).collect();
            println!("{sev}: cycle: {}", path.join(" -> "));
        }
        if cycles.truncated {
            println!("warning: cycle enumeration truncated");
        }
        for d in &diagnostics {
            println!("{d}");
        }
    }
    let has_errors = cycles.has_errors()
        || diagnostics.iter().any(|d| d.severity == Severity::Error);
    Ok(if has_errors { EXIT_ANALYSIS } else { 0 })
}

fn cmd_isolate(
    dir: &Path,
    completion: &[String],
    closure_weak: bool,
    json: bool,
) -> Result<u8, CliError> {
    let sources = load_sources(dir)?;
    let (set, _) = parse_sources(&sources)?;
    let graph = build_graph(&set);
    let completion = parse_completion(completion)?;
    let group = isolate_bb_group_with(&graph, &completion, closure_weak)
        .map_err(|e| match e {
            IsolateError::UnknownTarget(_) => CliError::usage(e.to_string()),
            IsolateError::CycleInClosure(_) => CliError::analysis(e.to_string()),
        })?;
    if json {
        println!("{}", serde_json::to_string_pretty(&group).unwrap());
    } else {
        println!("boot-critical group ({} members):", group.members.len());
        for m in &group.members {
            println!("  {m}");
        }
        if !group.ignored_constraints.is_empty() {
            println!("ignored constraints from outsiders:");
            for e in &group.ignored_constraints {
                println!("  {} {} {}", e.from, e.kind, e.to);
            }
        }
    }
    Ok(0)
}

fn cmd_preparse(dir: &Path, cache: &Path, json: bool) -> Result<u8, CliError> {
    let sources = load_sources(dir)?;
    let (set, diagnostics) = parse_sources(&sources)?;
    write_cache(cache, &set)?;
    if json {
        let doc = serde_json::json!({
            "units": set.len(),
            "cache": cache.display().to_string(),
            "diagnostics": diagnostics,
        });
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        println!(
            "pre-parsed {} units into {}",
            set.len(),
            cache.display()
        );
        for d in &diagnostics {
            println!("{d}");
        }
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    dir: &Path,
    config: Option<&Path>,
    cache: Option<&Path>,
    bb_on: bool,
    completion_args: &[String],
    out: Option<&Path>,
    metrics: Option<&Path>,
    seed: u64,
    json: bool,
) -> Result<u8, CliError> {
    let (set, diagnostics, used_cache) = load_units(dir, cache)?;
    for d in &diagnostics {
        eprintln!("bb: {d}");
    }

    let mut file = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
            SimConfigFile::parse(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => SimConfigFile::parse("").expect("empty config is valid"),
    };
    if seed != 0 {
        file.seed = seed;
    }

    let completion = if completion_args.is_empty() {
        file.completion.clone()
    } else {
        parse_completion(completion_args)?
    };
    if completion.is_empty() {
        return Err(CliError::usage(
            "no completion targets: pass --completion or set Completion in the config",
        ));
    }

    let group: Option<BBGroup> = if bb_on {
        let graph = build_graph(&set);
        Some(
            isolate_bb_group_with(&graph, &completion, false)
                .map_err(|e| CliError::sim(e.to_string()))?,
        )
    } else {
        None
    };

    let cfg = file.assemble(bb_on, group);
    let trace = simulate_boot(&set, &cfg, &completion).map_err(|e| CliError::sim(e.to_string()))?;

    if !json || out.is_some() {
        eprintln!(
            "bb: simulated boot ({}, cache {}): completed at {} us",
            if bb_on { "bb on" } else { "bb off" },
            if used_cache { "hit" } else { "miss" },
            trace.boot_completed_at
        );
    }
    if let Some(path) = metrics {
        let m = emit_metrics(&trace);
        std::fs::write(path, m.to_json())
            .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?;
    }
    write_or_print(out, &trace.to_json())?;
    Ok(0)
}

fn read_trace(path: &Path) -> Result<ScheduleTrace, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
    ScheduleTrace::from_json(&text)
        .map_err(|e| CliError::io(format!("parsing {}: {e}", path.display())))
}

fn cmd_compare(
    trace_a: &Path,
    trace_b: &Path,
    out: Option<&Path>,
    json: bool,
) -> Result<u8, CliError> {
    let before = read_trace(trace_a)?;
    let after = read_trace(trace_b)?;
    let report = compare_traces(&before, &after);
    if let Some(path) = out {
        std::fs::write(path, report.to_json())
            .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?;
    }
    if json {
        println!("{}", report.to_json());
    } else {
        let mut text = String::new();
        let _ = writeln!(
            text,
            "total: {} us -> {} us (saved {} us)",
            report.total_before_us, report.total_after_us, report.total_saved_us
        );
        for p in &report.phases {
            let _ = writeln!(
                text,
                "{:<10} {:>10} us -> {:>10} us (saved {} us)",
                p.label, p.before_us, p.after_us, p.saved_us
            );
        }
        for a in &report.attribution {
            let _ = writeln!(
                text,
                "  {}: {} -> {} ({} us)",
                a.feature, a.before, a.after, a.saved_us
            );
        }
        print!("{text}");
    }
    Ok(0)
}

fn cmd_bench(
    readers: usize,
    syncers: usize,
    iters: usize,
    mode: BenchModeArg,
    out: Option<&Path>,
    json: bool,
) -> Result<u8, CliError> {
    if readers < 1 || syncers < 1 || iters < 1 {
        return Err(CliError::usage("readers, syncers, and iters must be >= 1"));
    }
    let mode = match mode {
        BenchModeArg::Conventional => BenchMode::Conventional,
        BenchModeArg::Boosted => BenchMode::Boosted,
        BenchModeArg::Toggle => BenchMode::Toggle,
    };
    let report = bench_contention(readers, syncers, iters, mode)
        .map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(path) = out {
        std::fs::write(path, report.to_json())
            .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?;
    }
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_table());
    }
    Ok(0)
}

fn cmd_chart(
    trace: &Path,
    format: ChartFormatArg,
    ms_per_px: u64,
    ms_per_cell: u64,
    out: Option<&Path>,
) -> Result<u8, CliError> {
    let trace = read_trace(trace)?;
    let opts = ChartOptions {
        svg_ms_per_px: ms_per_px,
        text_ms_per_cell: ms_per_cell,
    };
    let format = match format {
        ChartFormatArg::Svg => ChartFormat::Svg,
        ChartFormatArg::Text => ChartFormat::Text,
    };
    let doc = emit_bootchart(&trace, format, opts);
    write_or_print(out, &doc)?;
    Ok(0)
}
