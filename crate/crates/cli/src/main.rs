//! `lrtc` — data generation, masking, completion, evaluation, and trace
//! reporting for dense low-rank tensor completion.
//!
//! Exit codes: 0 success, 2 argument error, 3 I/O or file-format error,
//! 4 numerical abort.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use lrtc_core::error::Error;
use lrtc_core::{io, metrics, solver, tensor};

mod config_file;
mod manifest;
mod report;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "lrtc", version, about = "Low-rank tensor completion toolkit")]
struct Cli {
    /// Worker threads for solver-internal parallelism (default: all cores;
    /// falls back to the LRTC_THREADS environment variable). Results are
    /// identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic low-rank tensor (TNS1).
    Synth(SynthArgs),
    /// Sample a uniform random observation mask (MSK1).
    Mask(MaskArgs),
    /// Complete a partially observed tensor.
    Complete(CompleteArgs),
    /// Evaluate a completed tensor against a reference.
    Metrics(MetricsArgs),
    /// Merge traces and metric reports into one long-format CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Dimensions, e.g. 20,20,20
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    /// Multilinear ranks, e.g. 2,2,2
    #[arg(long, value_delimiter = ',', required = true)]
    ranks: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample smooth (low-frequency) profiles along the first two modes
    #[arg(long)]
    smooth: bool,
    #[arg(long, required = true)]
    out: PathBuf,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    /// Sampling ratio in (0, 1]
    #[arg(long, required = true)]
    sr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, required = true)]
    out: PathBuf,
}

#[derive(Args)]
struct CompleteArgs {
    /// Observed tensor (TNS1)
    #[arg(long, required_unless_present = "from_manifest")]
    input: Option<PathBuf>,
    /// Observation mask (MSK1)
    #[arg(long, required_unless_present = "from_manifest")]
    mask: Option<PathBuf>,
    /// Completed tensor output (TNS1)
    #[arg(long, required_unless_present = "from_manifest")]
    out: Option<PathBuf>,
    /// Convergence trace CSV (default: <out>.trace.csv)
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Run manifest JSON (default: <out>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Re-run an earlier run exactly as recorded in its manifest
    #[arg(long, conflicts_with_all = ["input", "mask", "out", "trace", "config"])]
    from_manifest: Option<PathBuf>,
    /// Plain `key = value` file mirroring the flags below (flags win)
    #[arg(long)]
    config: Option<PathBuf>,

    /// Model: 1 (nuclear norms) or 2 (nuclear norms + TV)
    #[arg(long)]
    model: Option<u8>,
    /// Per-mode ranks, e.g. 2,2,2, or `auto` for the spectral-energy guess
    #[arg(long)]
    ranks: Option<String>,
    /// Mode weights (single value broadcast or comma list); default 1/N
    #[arg(long)]
    alpha: Option<String>,
    /// Nuclear-norm weights on X_n; default 0.1
    #[arg(long)]
    tau: Option<String>,
    /// Nuclear-norm weights on A_n; default 0.1
    #[arg(long)]
    lambda: Option<String>,
    /// Proximal/penalty parameters; default 0.1
    #[arg(long)]
    rho: Option<String>,
    /// TV weight (model 2); default 0.5
    #[arg(long)]
    mu: Option<f64>,
    /// TV penalty parameter (model 2); default 10
    #[arg(long)]
    beta: Option<f64>,
    /// Outer stopping tolerance on the relative change of Y; default 1e-5
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    max_inner: Option<usize>,
    #[arg(long)]
    inner_tol: Option<f64>,
    /// Grow rho geometrically (x1.5, capped at 1e6) each outer iteration
    #[arg(long)]
    adaptive_penalty: bool,
    /// Dual ascent step: `scaled` (+= rho*(residual)) or `paper` (+= residual)
    #[arg(long)]
    dual_step: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Reference tensor (TNS1)
    #[arg(long, required = true)]
    reference: PathBuf,
    /// Estimated/completed tensor (TNS1)
    #[arg(long, required = true)]
    estimate: PathBuf,
    /// Output base path: writes <out>.csv and <out>.json
    #[arg(long, required = true)]
    out: PathBuf,
    /// PSNR peak override (e.g. 255); default: max |reference|
    #[arg(long)]
    peak: Option<f64>,
    /// ERGAS resolution-ratio factor; default 1
    #[arg(long)]
    sr_scale: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Trace CSVs, metric CSVs, or already-merged long-format CSVs
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, required = true)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("LRTC_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .ok();

    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Mask(args) => cmd_mask(args),
        Command::Complete(args) => cmd_complete(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Report(args) => report::cmd_report(args.inputs, args.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Shape(_) => 2,
        Error::Format(_) | Error::Io(_) => 3,
        Error::Numerical(_) => 4,
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let t = tensor::synth_lowrank(&args.dims, &args.ranks, args.seed, args.smooth)?;
    io::write_tensor(&args.out, &t)?;
    // report achieved numerical ranks of every unfolding
    let mut achieved = Vec::new();
    for n in 0..args.dims.len() {
        let sv = lrtc_core::kernels::thin_svd(&t.unfold(n)?)?.sigma;
        let smax = sv.iter().cloned().fold(0.0f64, f64::max);
        achieved.push(sv.iter().filter(|&&s| s > 1e-8 * smax).count());
    }
    println!(
        "wrote {} ({} entries)",
        args.out.display(),
        t.len()
    );
    println!(
        "achieved mode-n ranks: {}",
        achieved
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(())
}

fn cmd_mask(args: MaskArgs) -> Result<(), Error> {
    let m = tensor::ObservationMask::random(args.dims.clone(), args.sr, args.seed)?;
    io::write_mask(&args.out, &m)?;
    println!(
        "wrote {} ({} of {} entries, SR = {})",
        args.out.display(),
        m.len(),
        args.dims.iter().product::<usize>(),
        m.sampling_ratio()
    );
    Ok(())
}

fn cmd_complete(args: CompleteArgs) -> Result<(), Error> {
    if let Some(path) = &args.from_manifest {
        let m = RunManifest::read(path)?;
        return run_complete(
            &m.input,
            &m.mask,
            &m.output,
            &m.trace,
            &manifest_path_default(path, &m),
            m.config,
        );
    }

    let input = args.input.clone().expect("clap enforces presence");
    let mask_path = args.mask.clone().expect("clap enforces presence");
    let out = args.out.clone().expect("clap enforces presence");
    let trace = args
        .trace
        .clone()
        .unwrap_or_else(|| suffixed(&out, ".trace.csv"));
    let manifest = args
        .manifest
        .clone()
        .unwrap_or_else(|| suffixed(&out, ".manifest.json"));

    let file_cfg = match &args.config {
        Some(path) => config_file::parse(path)?,
        None => Default::default(),
    };
    let f = io::read_tensor(&input)?;
    let mask = io::read_mask(&mask_path)?;
    let cfg = config_file::resolve(&args, &file_cfg, &f, &mask)?;
    run_complete(&input, &mask_path, &out, &trace, &manifest, cfg)
}

fn manifest_path_default(from: &Path, _m: &RunManifest) -> PathBuf {
    // re-runs refresh the same manifest they came from
    from.to_path_buf()
}

fn suffixed(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_complete(
    input: &Path,
    mask_path: &Path,
    out: &Path,
    trace_path: &Path,
    manifest_path: &Path,
    cfg: solver::SolverConfig,
) -> Result<(), Error> {
    let f = io::read_tensor(input)?;
    let mask = io::read_mask(mask_path)?;
    let started = std::time::Instant::now();
    let result = solver::run(&f, &mask, &cfg);
    let runtime = started.elapsed().as_secs_f64();
    let status = match &result {
        Ok(_) => 0,
        Err(e) => exit_code(e) as i32,
    };
    let manifest = RunManifest {
        seed: cfg.seed,
        config: cfg,
        input: input.to_path_buf(),
        mask: mask_path.to_path_buf(),
        output: out.to_path_buf(),
        trace: trace_path.to_path_buf(),
        runtime_seconds: runtime,
        exit_status: status,
    };
    let run = match result {
        Ok(run) => run,
        Err(e) => {
            manifest.write(manifest_path)?;
            return Err(e);
        }
    };
    io::write_tensor(out, &run.tensor)?;
    io::write_trace_csv(trace_path, &run.trace)?;
    manifest.write(manifest_path)?;
    let last = run.trace.last();
    println!(
        "completed in {} iterations ({:.3} s); objective {}, relative change {}",
        run.trace.len(),
        runtime,
        last.map(|r| r.objective).unwrap_or(f64::NAN),
        last.map(|r| r.rel_change).unwrap_or(f64::NAN)
    );
    println!(
        "wrote {} + {} + {}",
        out.display(),
        trace_path.display(),
        manifest_path.display()
    );
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), Error> {
    let reference = io::read_tensor(&args.reference)?;
    let estimate = io::read_tensor(&args.estimate)?;
    let opts = metrics::MetricsOptions {
        peak: args.peak,
        sr_scale: args.sr_scale,
    };
    let report = metrics::MetricsReport::compute(&reference, &estimate, &opts)?;
    for w in &report.warnings {
        eprintln!("warning: {}", w);
    }
    let csv_path = suffixed(&args.out, ".csv");
    let json_path = suffixed(&args.out, ".json");
    let file = std::fs::File::create(&csv_path)?;
    report.write_csv(std::io::BufWriter::new(file))?;
    std::fs::write(&json_path, report.to_json()?)?;
    println!(
        "PSNR {:.4} dB | SSIM {:.4} | ERGAS {:.4} | SAM {:.4} deg",
        report.mean.psnr, report.mean.ssim, report.ergas, report.sam
    );
    println!("wrote {} + {}", csv_path.display(), json_path.display());
    Ok(())
}
