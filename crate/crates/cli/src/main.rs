use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use langevin_mimo::harness::{emit_csv, parse_config, parse_detector_list, run_detector, Trial, MAX_EXCLUDED_FRACTION};
use langevin_mimo::{selftest, Complex64, Constellation, DMatrix, DetectorKind, LangevinConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_EXCLUSIONS: u8 = 3;

#[derive(Parser)]
#[command(name = "lmimo", version, about = "Annealed Langevin MIMO detection and SER sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo SER sweep described by a TOML config.
    Sweep(SweepArgs),
    /// Detect one received vector read from a JSON file.
    Detect(DetectArgs),
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `sweep.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `sweep.output_path`. Without either, the CSV goes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated list overriding `sweep.detectors`.
    #[arg(long)]
    detectors: Option<String>,
}

#[derive(Args)]
struct DetectArgs {
    /// JSON file with `modulation_order`, `sigma0_sq`, `h` and `y`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "langevin")]
    detector: String,
    /// Sampler seed for the langevin detector.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional TOML config whose `[langevin]` section replaces the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

/// Complex numbers are `[re, im]` pairs; `h` is a list of rows.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Instance {
    modulation_order: usize,
    sigma0_sq: f64,
    h: Vec<Vec<[f64; 2]>>,
    y: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct Detection {
    detector: &'static str,
    symbols: Vec<[f64; 2]>,
    indices: Vec<usize>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(args) => sweep(args),
        Command::Detect(args) => detect(args),
        Command::Selftest { seed } => Ok(run_selftest(seed)),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Failure::Runtime(e.to_string()))
}

fn read(path: &PathBuf) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn sweep(args: SweepArgs) -> Result<ExitCode, Failure> {
    let mut config = parse_config(&read(&args.config)?).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(list) = &args.detectors {
        config.detectors = parse_detector_list(list).map_err(|e| Failure::Config(e.to_string()))?;
    }
    if let Some(path) = args.output {
        config.output_path = Some(path);
    }
    config.validate().map_err(|e| Failure::Config(e.to_string()))?;

    let pool = thread_pool(args.threads)?;
    let report = pool
        .install(|| langevin_mimo::harness::run_sweep(&config))
        .map_err(|e| Failure::Runtime(e.to_string()))?;

    match &config.output_path {
        Some(path) => emit_csv(&report, path).map_err(|e| Failure::Runtime(e.to_string()))?,
        None => print!("{}", report.to_csv()),
    }

    let flagged = report.excessive_exclusions(MAX_EXCLUDED_FRACTION);
    if flagged.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for row in flagged {
        eprintln!(
            "warning: {} at {} dB excluded {} of {} trials",
            row.detector, row.snr_db, row.n_excluded_trials, row.n_trials
        );
    }
    Ok(ExitCode::from(EXIT_EXCLUSIONS))
}

fn detect(args: DetectArgs) -> Result<ExitCode, Failure> {
    let detector: DetectorKind = args.detector.parse().map_err(|e: langevin_mimo::harness::ConfigError| Failure::Config(e.to_string()))?;
    let text = read(&args.input)?;
    let inst: Instance = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", args.input.display())))?;
    let c = Constellation::qam(inst.modulation_order).map_err(|e| Failure::Config(e.to_string()))?;

    let n_rx = inst.h.len();
    let n_users = inst.h.first().map_or(0, Vec::len);
    if inst.h.iter().any(|row| row.len() != n_users) {
        return Err(Failure::Config("rows of h differ in length".into()));
    }
    let h = DMatrix::from_fn(n_rx, n_users, |i, j| Complex64::new(inst.h[i][j][0], inst.h[i][j][1]));
    let y: Vec<Complex64> = inst.y.iter().map(|v| Complex64::new(v[0], v[1])).collect();

    let langevin = match &args.config {
        Some(path) => parse_config(&read(path)?).map_err(|e| Failure::Config(e.to_string()))?.langevin,
        None => LangevinConfig::default(),
    };
    let trial = Trial {
        h,
        x: Vec::new(),
        y,
        sigma0_sq: inst.sigma0_sq,
        langevin_seed: args.seed,
    };
    let pool = thread_pool(args.threads)?;
    let symbols = pool
        .install(|| run_detector(detector, &trial, &langevin, &c))
        .map_err(|e| Failure::Runtime(e.to_string()))?;

    let indices = symbols
        .iter()
        .map(|&s| c.quantize_index(s).map_err(|e| Failure::Runtime(e.to_string())))
        .collect::<Result<_, _>>()?;
    let out = Detection {
        detector: detector.as_str(),
        symbols: symbols.iter().map(|s| [s.re, s.im]).collect(),
        indices,
    };
    println!("{}", serde_json::to_string(&out).map_err(|e| Failure::Runtime(e.to_string()))?);
    Ok(ExitCode::SUCCESS)
}

fn run_selftest(seed: u64) -> ExitCode {
    let checks = selftest::run(seed);
    let mut failed = 0;
    for check in &checks {
        let status = if check.passed { "ok" } else { "FAIL" };
        println!("{status:4} {}: {}", check.name, check.detail);
        failed += usize::from(!check.passed);
    }
    println!("{} checks, {failed} failed", checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_RUNTIME)
    }
}
