//! `memlife`: simulate systolic-array buffer traces and analyze data lifetimes.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage or configuration error.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use memlife_core::analysis::{analyze, AnalysisOptions, TraceFile, TraceFormat};
use memlife_core::device::{default_library, default_library_json, load_library};
use memlife_core::report::{emit_histogram_csvs, emit_json, emit_svg_plots};
use memlife_core::sysarray::{ArrayConfig, BufferConfig, Dataflow, SimError, Workload};
use memlife_core::trace::{BinaryTraceWriter, TextTraceWriter, TraceMeta};
use memlife_core::{HistogramSpec, Library};

#[derive(Parser, Debug)]
#[command(name = "memlife", version, about = "Data-lifetime analysis for on-chip memories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a workload on a systolic array and write its buffer trace.
    Simulate(SimulateArgs),
    /// Analyze a trace: lifetimes, device projections and composition.
    Analyze(AnalyzeArgs),
    /// Inspect device libraries.
    Devices(DevicesArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DataflowArg {
    Is,
    Ws,
    Os,
}

impl From<DataflowArg> for Dataflow {
    fn from(d: DataflowArg) -> Self {
        match d {
            DataflowArg::Is => Dataflow::InputStationary,
            DataflowArg::Ws => Dataflow::WeightStationary,
            DataflowArg::Os => Dataflow::OutputStationary,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Bin,
    Csv,
}

fn at_least_one(s: &str, what: &str) -> Result<u64, String> {
    let v: u64 = s.parse().map_err(|_| format!("{what} must be a positive integer"))?;
    if v == 0 {
        return Err(format!("{what} must be ≥ 1"));
    }
    Ok(v)
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err("must be a positive number".into()),
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Workload JSON (list of gemm/conv layers).
    workload: PathBuf,
    #[arg(long, value_parser = |s: &str| at_least_one(s, "rows"))]
    rows: u64,
    #[arg(long, value_parser = |s: &str| at_least_one(s, "cols"))]
    cols: u64,
    #[arg(long, value_enum)]
    dataflow: DataflowArg,
    /// Trace output path; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "bin")]
    format: FormatArg,
    #[arg(long, default_value = "1e9", value_parser = positive_f64)]
    clock_hz: f64,
    #[arg(long, default_value = "4", value_parser = |s: &str| at_least_one(s, "prefetch lead"))]
    prefetch_lead: u64,
    #[arg(long, default_value = "4", value_parser = |s: &str| at_least_one(s, "drain lead"))]
    drain_lead: u64,
    #[arg(long, default_value = "4096", value_parser = |s: &str| at_least_one(s, "ifmap bytes"))]
    ifmap_bytes: u64,
    #[arg(long, default_value = "4096", value_parser = |s: &str| at_least_one(s, "filter bytes"))]
    filter_bytes: u64,
    #[arg(long, default_value = "8192", value_parser = |s: &str| at_least_one(s, "ofmap bytes"))]
    ofmap_bytes: u64,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Trace file (binary, or text with `.csv`/`.txt` extension).
    trace: PathBuf,
    /// Device library JSON; the built-in library when omitted.
    #[arg(long)]
    devices: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Directory for SVG plots and histogram CSVs.
    #[arg(long)]
    plots: Option<PathBuf>,
    /// Trace format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Metadata sidecar for text traces (default `<trace>.meta.json` if present).
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Override the trace's clock frequency.
    #[arg(long, value_parser = positive_f64)]
    clock_hz: Option<f64>,
    #[arg(long, default_value = "1e-9", value_parser = positive_f64)]
    hist_min_s: f64,
    #[arg(long, default_value = "1e-3", value_parser = positive_f64)]
    hist_max_s: f64,
    #[arg(long, default_value = "8", value_parser = |s: &str| at_least_one(s, "bins per decade"))]
    hist_bins_per_decade: u64,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct DevicesArgs {
    /// Print the built-in device library.
    #[arg(long)]
    print_defaults: bool,
    /// Validate a device library file.
    #[arg(long)]
    check: Option<PathBuf>,
}

/// Errors that are the caller's fault rather than the data's.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn sim_error(e: SimError) -> anyhow::Error {
    match e {
        SimError::Config(_) | SimError::BufferFit { .. } => usage(e.to_string()),
        other => other.into(),
    }
}

fn sidecar_path(trace: &Path) -> PathBuf {
    let mut s = trace.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let json = fs::read_to_string(&args.workload)
        .with_context(|| format!("reading workload {}", args.workload.display()))?;
    let default_name = args
        .workload
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("workload");
    let workload = Workload::from_json(&json, default_name)
        .with_context(|| format!("parsing workload {}", args.workload.display()))?;
    let array = ArrayConfig {
        rows: args.rows,
        cols: args.cols,
        dataflow: args.dataflow.into(),
        clock_hz: args.clock_hz,
        prefetch_lead: args.prefetch_lead,
        drain_lead: args.drain_lead,
    };
    let bufs = BufferConfig {
        ifmap_bytes: args.ifmap_bytes,
        filter_bytes: args.filter_bytes,
        ofmap_bytes: args.ofmap_bytes,
    };
    array.validate().map_err(sim_error)?;
    for l in &workload.layers {
        memlife_core::sysarray::check_fit(&l.gemm, &array, &bufs)
            .map_err(sim_error)
            .with_context(|| format!("layer {}", l.name))?;
    }
    let meta = workload.meta(&array, &bufs).map_err(sim_error)?;
    log::info!(
        "simulating {} ({} layers) on {}x{} {}",
        workload.name,
        workload.layers.len(),
        array.rows,
        array.cols,
        array.dataflow
    );

    let out = BufWriter::with_capacity(
        1 << 20,
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    let summary = match args.format {
        FormatArg::Bin => {
            let mut w = BinaryTraceWriter::new(out, &meta)?;
            let s = workload.run_into(&array, &bufs, &mut w).map_err(sim_error)?;
            w.finish()?.flush()?;
            s
        }
        FormatArg::Csv => {
            let mut w = TextTraceWriter::new(out, &meta, false)?;
            let s = workload.run_into(&array, &bufs, &mut w).map_err(sim_error)?;
            w.finish()?.flush()?;
            s
        }
    };
    let sidecar = sidecar_path(&args.out);
    fs::write(&sidecar, meta.to_json() + "\n").with_context(|| format!("writing {}", sidecar.display()))?;
    println!(
        "wrote {} records ({} cycles) to {}",
        summary.records,
        summary.end_cycle.map_or(0, |c| c + 1),
        args.out.display()
    );
    Ok(())
}

fn load_devices(path: Option<&Path>) -> Result<Library> {
    match path {
        None => Ok(default_library()),
        Some(p) => {
            let json = fs::read_to_string(p).with_context(|| format!("reading device library {}", p.display()))?;
            load_library(&json).with_context(|| format!("device library {}", p.display()))
        }
    }
}

fn analyze_cmd(args: AnalyzeArgs) -> Result<()> {
    let histogram = HistogramSpec {
        min_s: args.hist_min_s,
        max_s: args.hist_max_s,
        bins_per_decade: u32::try_from(args.hist_bins_per_decade).map_err(|_| usage("bins per decade too large"))?,
    };
    histogram.validate().map_err(|e| usage(e.to_string()))?;
    let library = load_devices(args.devices.as_deref())?;
    let format = match args.format {
        Some(FormatArg::Bin) => TraceFormat::Binary,
        Some(FormatArg::Csv) => TraceFormat::Text,
        None => TraceFormat::from_path(&args.trace),
    };
    let sidecar = match (&args.meta, format) {
        (Some(p), _) => Some(p.clone()),
        (None, TraceFormat::Text) => Some(sidecar_path(&args.trace)).filter(|p| p.exists()),
        (None, TraceFormat::Binary) => None,
    };
    let sidecar = match sidecar {
        Some(p) => {
            let bytes = fs::read(&p).with_context(|| format!("reading metadata {}", p.display()))?;
            Some(TraceMeta::from_json(&bytes).with_context(|| format!("metadata {}", p.display()))?)
        }
        None => None,
    };
    let mut source = TraceFile::open(&args.trace, format, sidecar)
        .with_context(|| format!("opening trace {}", args.trace.display()))?;
    if let Some(hz) = args.clock_hz {
        source = source.with_clock(hz);
    }
    let options = AnalysisOptions {
        histogram,
        only: None,
    };
    let analysis = analyze(&mut source, &library, &options)
        .with_context(|| format!("analyzing {}", args.trace.display()))?;
    let report = &analysis.report;

    fs::write(&args.out, emit_json(report)).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(dir) = &args.plots {
        emit_svg_plots(report, dir).with_context(|| format!("writing plots to {}", dir.display()))?;
        emit_histogram_csvs(report, dir).with_context(|| format!("writing histograms to {}", dir.display()))?;
    }

    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(
        out,
        "{:<10} {:>12} {:>12} {:>12} {:>12} {:>12} {:>8} {:>8}",
        "buffer", "objects", "mean_s", "max_s", "f_w_mhz", "peak_bytes", "energy_x", "area_x"
    )?;
    for s in &report.subpartitions {
        writeln!(
            out,
            "{:<10} {:>12} {:>12.4e} {:>12.4e} {:>12.4} {:>12} {:>8.3} {:>8.3}",
            s.name,
            s.summary.objects,
            s.summary.mean_lifetime_s,
            s.summary.max_lifetime_s,
            s.summary.write_freq_mhz,
            s.summary.peak_live_bytes,
            s.composition.energy_savings_x,
            s.composition.area_savings_x
        )?;
    }
    Ok(())
}

fn devices(args: DevicesArgs) -> Result<()> {
    if args.print_defaults {
        print!("{}", default_library_json());
        return Ok(());
    }
    if let Some(p) = args.check {
        let lib = load_devices(Some(&p))?;
        for d in lib.devices() {
            println!("{}", d.name);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Devices(a) => devices(a),
    }
}

fn main() -> ExitCode {
    let env = env_logger::Env::new().filter_or(
        "MEMLIFE_LOG",
        std::env::var("GAINSIGHT_LOG").unwrap_or_else(|_| "warn".into()),
    );
    env_logger::Builder::from_env(env).format_timestamp(None).init();

    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
