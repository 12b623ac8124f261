use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coflow_core::bound::{bound_sweep, default_grid, write_sweep_csv, McConfig, SizeDist, SweepPoint};
use coflow_core::metrics::{
    cdf_points, coflow_metrics, learning_overhead, speedup_report, write_cdf_csv, write_comparison_csv,
    write_metrics_csv,
};
use coflow_core::trace::synth::{fb_like, random_trace, RandomTraceConfig};
use coflow_core::trace::{
    filter_low_skew, filter_thin, gen_mantri_like, parse_trace, replicate_trace, MANTRI_COV_P50, MANTRI_COV_P90,
};
use coflow_core::{run_simulation, EventLog, SchedulerKind, Trace};
use rayon::prelude::*;

mod config;

use config::Knobs;

/// Trace-driven coflow scheduling simulator.
#[derive(Debug, Parser)]
#[command(name = "coflowsim", version)]
struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, env = "COFLOWSIM_OUT", default_value = "coflowsim-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one or more schedulers and write event logs and metrics.
    Run(RunArgs),
    /// Compare a subject scheduler against a baseline.
    Compare(CompareArgs),
    /// Generate a trace file.
    Gentrace(GentraceArgs),
    /// Validate the sampling gap bound by Monte Carlo.
    Bound(BoundArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Synthetic {
    /// Stand-in for the 150-port production trace.
    FbLike,
    /// Small random trace (16 ports, 200 coflows).
    Random,
}

#[derive(Debug, Args)]
struct TraceSource {
    /// Trace file in the benchmark text format.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    trace: Option<PathBuf>,
    /// Generate the trace instead of reading it.
    #[arg(long, value_enum)]
    synthetic: Option<Synthetic>,
    /// Seed for synthetic traces.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl TraceSource {
    fn load(&self) -> Result<Trace> {
        match (&self.trace, self.synthetic) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading trace {}", path.display()))?;
                parse_trace(&text).with_context(|| format!("parsing trace {}", path.display()))
            }
            (None, Some(Synthetic::FbLike)) => Ok(fb_like(self.seed)),
            (None, Some(Synthetic::Random)) => Ok(random_trace(&RandomTraceConfig::default(), self.seed)),
            (None, None) => bail!("no trace source given"),
        }
    }
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    source: TraceSource,
    /// Key = value file with scheduler and fabric settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    knobs: Knobs,
}

impl SimArgs {
    fn knobs(&self) -> Result<Knobs> {
        let file = match &self.config {
            Some(path) => Knobs::load(path)?,
            None => Knobs::default(),
        };
        Ok(file.overlay(&self.knobs))
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Schedulers to run.
    #[arg(long, short, value_delimiter = ',', default_value = "sampling")]
    scheduler: Vec<SchedulerKind>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value = "aalo")]
    baseline: SchedulerKind,
    #[arg(long, default_value = "sampling")]
    subject: SchedulerKind,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TraceKind {
    /// The input trace, rewritten in canonical form.
    Copy,
    /// Mapper data redistributed to a target skew profile.
    MantriLike,
    /// Only coflows whose max/min flow size is at least `k`.
    LowSkew,
    /// Only coflows wider than `thin_limit`.
    WideOnly,
    /// The input repeated over disjoint port blocks.
    Replicate,
}

#[derive(Debug, Args)]
struct GentraceArgs {
    #[command(flatten)]
    source: TraceSource,
    #[arg(long, value_enum)]
    kind: TraceKind,
    /// Skew threshold for low-skew.
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Width limit for wide-only.
    #[arg(long, default_value_t = 7)]
    thin_limit: usize,
    /// Copies for replicate.
    #[arg(long, default_value_t = 6)]
    times: u32,
    /// Median mapper-data CoV for mantri-like.
    #[arg(long, default_value_t = MANTRI_COV_P50)]
    cov_p50: f64,
    /// 90th-percentile mapper-data CoV for mantri-like.
    #[arg(long, default_value_t = MANTRI_COV_P90)]
    cov_p90: f64,
    /// Seed for mantri-like redistribution.
    #[arg(long, default_value_t = 1)]
    gen_seed: u64,
    /// Output file; defaults to `<out>/<kind>.txt`.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundArgs {
    /// Width multiplier c.
    #[arg(long, default_value_t = 100)]
    c: u32,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw flow sizes from a truncated log-normal with this shape instead of
    /// uniformly.
    #[arg(long)]
    lognormal_sigma: Option<f64>,
    /// Evaluate only these mean gaps instead of the default grid.
    #[arg(long, value_delimiter = ',')]
    mean_gap: Vec<f64>,
    /// Size window widths, used with --mean-gap.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    width: Vec<f64>,
    /// Pilot counts, used with --mean-gap.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    m: Vec<u32>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn simulate(trace: &Trace, knobs: &Knobs, kinds: &[SchedulerKind]) -> Result<Vec<EventLog>> {
    let configs = kinds.iter().map(|&k| knobs.sim_config(trace.num_ports, k)).collect::<Result<Vec<_>>>()?;
    configs
        .par_iter()
        .map(|cfg| run_simulation(trace, cfg).with_context(|| format!("simulating {}", cfg.scheduler)))
        .collect()
}

fn write_run(out: &Path, kind: SchedulerKind, log: &EventLog) -> Result<()> {
    let mut w = create(&out.join(format!("{kind}.events.csv")))?;
    log.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&out.join(format!("{kind}.metrics.csv")))?;
    write_metrics_csv(&mut w, &coflow_metrics(log, kind)?)?;
    w.flush()?;
    Ok(())
}

fn avg_cct(log: &EventLog) -> f64 {
    let metas = log.coflows();
    if metas.is_empty() {
        return 0.0;
    }
    metas.iter().filter_map(|m| m.cct()).sum::<f64>() / metas.len() as f64
}

fn cmd_run(out: &Path, args: &RunArgs) -> Result<()> {
    let trace = args.sim.source.load()?;
    let knobs = args.sim.knobs()?;
    let logs = simulate(&trace, &knobs, &args.scheduler)?;
    for (&kind, log) in args.scheduler.iter().zip(&logs) {
        write_run(out, kind, log)?;
        println!("{kind}: {} coflows, average CCT {:.1} ms", log.coflows().len(), avg_cct(log));
    }
    Ok(())
}

fn write_cdf(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut w = create(path)?;
    write_cdf_csv(&mut w, &cdf_points(values))?;
    w.flush()?;
    Ok(())
}

fn has_learning_phase(kind: SchedulerKind) -> bool {
    matches!(kind, SchedulerKind::Sampling | SchedulerKind::Aalo | SchedulerKind::AaloOracle)
}

fn cmd_compare(out: &Path, args: &CompareArgs) -> Result<()> {
    let trace = args.sim.source.load()?;
    let knobs = args.sim.knobs()?;
    let kinds = [args.baseline, args.subject];
    let logs = simulate(&trace, &knobs, &kinds)?;
    let (base, subject) = (&logs[0], &logs[1]);
    let report = speedup_report(base, subject)?;

    let stem = format!("{}_vs_{}", args.subject, args.baseline);
    let mut coflows = create(&out.join(format!("{stem}.coflows.csv")))?;
    let mut summary = create(&out.join(format!("{stem}.summary.csv")))?;
    write_comparison_csv(&mut coflows, &mut summary, &report)?;
    coflows.flush()?;
    summary.flush()?;
    write_cdf(&out.join(format!("{stem}.speedup_cdf.csv")), report.coflows.iter().map(|c| c.speedup))?;
    for (&kind, log) in kinds.iter().zip(&logs) {
        write_run(out, kind, log)?;
        write_cdf(&out.join(format!("{kind}.cct_cdf.csv")), log.coflows().iter().filter_map(|m| m.cct()))?;
        if has_learning_phase(kind) {
            let kept: Vec<_> = learning_overhead(log, kind)?.into_iter().filter(|o| !o.excluded).collect();
            write_cdf(&out.join(format!("{kind}.learning_fraction_cdf.csv")), kept.iter().map(|o| o.fraction))?;
            write_cdf(&out.join(format!("{kind}.learning_bytes_cdf.csv")), kept.iter().map(|o| o.bytes))?;
        }
    }

    println!("{} vs {} over {} coflows", report.subject, report.baseline, report.coflows.len());
    println!("  average CCT ratio {:.3}", report.avg_ratio);
    println!("  speedup P10 {:.3}  P50 {:.3}  P90 {:.3}", report.p10, report.p50, report.p90);
    for bin in 1..=4 {
        if let Some(r) = report.bin_ratio(bin) {
            println!("  bin {bin} average CCT ratio {r:.3}");
        }
    }
    Ok(())
}

fn cmd_gentrace(out: &Path, args: &GentraceArgs) -> Result<()> {
    let input = args.source.load()?;
    let trace = match args.kind {
        TraceKind::Copy => input,
        TraceKind::MantriLike => gen_mantri_like(&input, args.cov_p50, args.cov_p90, args.gen_seed)?,
        TraceKind::LowSkew => filter_low_skew(&input, args.k)?,
        TraceKind::WideOnly => filter_thin(&input, args.thin_limit),
        TraceKind::Replicate => replicate_trace(&input, args.times)?,
    };
    let path = match &args.output {
        Some(p) => p.clone(),
        None => out.join(format!("{}.txt", args.kind.to_possible_value().unwrap().get_name())),
    };
    let mut w = create(&path)?;
    w.write_all(trace.to_text().as_bytes())?;
    w.flush()?;
    eprintln!("wrote {} coflows on {} ports to {}", trace.coflows().len(), trace.num_ports, path.display());
    Ok(())
}

/// Returns whether every point held.
fn cmd_bound(out: &Path, args: &BoundArgs) -> Result<bool> {
    let dist = match args.lognormal_sigma {
        Some(sigma) => SizeDist::TruncatedLogNormal { sigma },
        None => SizeDist::Uniform,
    };
    let cfg = McConfig { c: args.c, trials: args.trials, dist, seed: args.seed };
    let grid = if args.mean_gap.is_empty() {
        default_grid()
    } else {
        let mut g = Vec::new();
        for &mean_gap in &args.mean_gap {
            for &width in &args.width {
                for &m in &args.m {
                    g.push(SweepPoint { mean_gap, width, m });
                }
            }
        }
        g
    };
    let rows = bound_sweep(&grid, &cfg)?;
    let path = out.join("bound_sweep.csv");
    let mut w = create(&path)?;
    write_sweep_csv(&mut w, &rows)?;
    w.flush()?;
    let held = rows.iter().filter(|r| r.holds()).count();
    println!("{held}/{} points within the bound; table in {}", rows.len(), path.display());
    for r in rows.iter().filter(|r| !r.holds()) {
        println!(
            "  violated at mean gap {} width {} m {}: CI high {:.5} > bound {:.5}",
            r.point.mean_gap, r.point.width, r.point.m, r.mc.ci_high, r.bound
        );
    }
    Ok(held == rows.len())
}

fn is_missing_file(err: &anyhow::Error) -> bool {
    err.chain().any(|e| e.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::NotFound))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(&cli.out, a).map(|()| true),
        Command::Compare(a) => cmd_compare(&cli.out, a).map(|()| true),
        Command::Gentrace(a) => cmd_gentrace(&cli.out, a).map(|()| true),
        Command::Bound(a) => cmd_bound(&cli.out, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_missing_file(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
