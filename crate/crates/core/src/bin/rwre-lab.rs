use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rwre_lab::environment::{ladders_with_context, sample_q_environment, solve_s, OmegaDistribution};
use rwre_lab::experiments::{run_with_workers, worker_count, ExperimentConfig, ExperimentReport};
use rwre_lab::io::{load_env, save_env, write_ladders};
use rwre_lab::limits::{exp_cdf, hill_estimator, ks_distance, normal_cdf, shifted_exp_cdf, EmpiricalCdf, StableSpec};
use rwre_lab::quenched::{block_moments_range, read_block_moments, write_block_moments, ReflectionPolicy};
use rwre_lab::subsequence::{scan_window, write_events, DetectorConfig, ScaleLadder};
use rwre_lab::walk::{hitting_times, write_samples, SampleKind, SampleRow, WalkConfig, Walker};
use rwre_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "rwre-lab", version, about = "Random walk in random environment experiments")]
struct Cli {
    /// Worker threads (falls back to RWRE_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config.
    Run(RunArgs),
    /// Sample a Q-environment and write it with its ladder table.
    EnvGen(EnvGenArgs),
    /// Exact block moments of an environment file.
    Moments(MomentsArgs),
    /// Simulate crossing times on an environment file.
    Simulate(SimulateArgs),
    /// Run the event detectors on block-moment tables.
    Scan(ScanArgs),
    /// Reference laws and statistics.
    #[command(subcommand)]
    Limits(LimitsCommand),
    /// Merge report.json files into one table.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file (alternatively `--config`).
    config_file: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Exit nonzero when any check fails.
    #[arg(long)]
    gate: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnvGenArgs {
    /// Distribution JSON file.
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    blocks: usize,
    /// Blocks sampled left of the origin.
    #[arg(long, default_value_t = 0)]
    context: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Write `env.bin` instead of `env.txt`.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct MomentsArgs {
    #[arg(long)]
    env: PathBuf,
    /// Scale whose backtracking depth sets the reflection.
    #[arg(long)]
    scale: u64,
    /// First block (default: the first with enough context).
    #[arg(long)]
    first: Option<i64>,
    /// Last block (default: the last complete block).
    #[arg(long)]
    last: Option<i64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    env: PathBuf,
    /// First block crossed.
    #[arg(long, default_value_t = 1)]
    first: i64,
    /// Last block crossed.
    #[arg(long)]
    last: i64,
    /// Reflect at the depth of this scale; without it, at the window edge.
    #[arg(long)]
    scale: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = u64::MAX / 2)]
    max_steps: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// One block-moment table per scale, in scale order.
    #[arg(long, num_args = 1.., required = true)]
    moments: Vec<PathBuf>,
    /// Scale ladder counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    counts: Vec<u64>,
    #[arg(long, default_value_t = 0.45)]
    delta: f64,
    /// Distribution JSON file (gives `s`).
    #[arg(long)]
    dist: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long)]
    a: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LimitsCommand {
    /// Stable CDF at the given points.
    StableCdf {
        #[arg(long)]
        index: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, num_args = 1.., required = true, allow_negative_numbers = true)]
        x: Vec<f64>,
    },
    /// KS distance of the `value` column of a sample CSV against a law.
    Ks {
        #[arg(long)]
        samples: PathBuf,
        /// normal, exp, shifted-exp or stable.
        #[arg(long)]
        law: String,
        #[arg(long)]
        index: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
    },
    /// Hill estimate from the `k` largest values of a sample CSV.
    Hill {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        k: usize,
    },
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let workers = worker_count(cli.workers)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Run(a) => cmd_run(a, workers),
        Command::EnvGen(a) => cmd_env_gen(a).map(|_| ExitCode::SUCCESS),
        Command::Moments(a) => cmd_moments(a).map(|_| ExitCode::SUCCESS),
        Command::Simulate(a) => cmd_simulate(a).map(|_| ExitCode::SUCCESS),
        Command::Scan(a) => cmd_scan(a).map(|_| ExitCode::SUCCESS),
        Command::Limits(c) => cmd_limits(c).map(|_| ExitCode::SUCCESS),
        Command::Report(a) => cmd_report(a).map(|_| ExitCode::SUCCESS),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn read_dist(path: &Path) -> Result<OmegaDistribution> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let dist: OmegaDistribution = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Config(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner())))?;
    dist.validate()?;
    Ok(dist)
}

/// Writes to `out`, or stdout when absent.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn cmd_run(a: RunArgs, workers: usize) -> Result<ExitCode> {
    let path = a
        .config
        .or(a.config_file)
        .ok_or_else(|| Error::Config("no config file given".into()))?;
    let mut cfg = ExperimentConfig::from_json(&read_text(&path)?)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let out = a
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("rwre-out").join(cfg.experiment.name()));
    let started = Instant::now();
    let outcome = run_with_workers(&cfg, workers)?;
    outcome.write(&out)?;
    let timing = serde_json::json!({ "wall_clock_seconds": started.elapsed().as_secs_f64(), "workers": workers });
    fs::write(out.join("timing.json"), format!("{timing}\n"))?;
    let r = &outcome.report;
    for c in &r.checks {
        eprintln!(
            "{} {}: {} (threshold {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    eprintln!("{} -> {}", r.experiment, out.display());
    Ok(if a.gate && !r.passed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_env_gen(a: EnvGenArgs) -> Result<()> {
    let dist = read_dist(&a.dist)?;
    let q = sample_q_environment(&dist, a.blocks, a.context, a.seed)?;
    fs::create_dir_all(&a.out)?;
    save_env(&a.out.join(if a.binary { "env.bin" } else { "env.txt" }), &q.env)?;
    let mut buf = Vec::new();
    write_ladders(&mut buf, &q.ladders)?;
    fs::write(a.out.join("ladders.csv"), buf)?;
    Ok(())
}

fn cmd_moments(a: MomentsArgs) -> Result<()> {
    let env = load_env(&a.env)?;
    let ladders = ladders_with_context(&env)?;
    let policy = ReflectionPolicy::at_scale(a.scale);
    let depth = match policy {
        ReflectionPolicy::Blocks { b } => b as i64,
        _ => 0,
    };
    let first = a.first.unwrap_or((depth + 1 - ladders.context_blocks() as i64).max(1));
    let last = a.last.unwrap_or(ladders.len() as i64);
    let rows = block_moments_range(&env, &ladders, first, last, policy)?;
    let mut buf = Vec::new();
    write_block_moments(&mut buf, &rows)?;
    emit(a.out.as_deref(), &buf)
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let env = load_env(&a.env)?;
    let ladders = ladders_with_context(&env)?;
    let policy = a.scale.map_or(ReflectionPolicy::None, ReflectionPolicy::at_scale);
    let nu = |k: i64| {
        ladders
            .nu(k)
            .ok_or_else(|| Error::Config(format!("block {k} is not in the environment")))
    };
    let (from, to) = (nu(a.first - 1)?, nu(a.last)?);
    let walker = Walker::new(&env, Some(&ladders), WalkConfig::new(policy, a.max_steps))?;
    let hits = hitting_times(&walker, from, to, a.seed, 0, a.paths)?;
    let rows: Vec<SampleRow> = hits
        .iter()
        .enumerate()
        .map(|(i, h)| SampleRow {
            path_id: i as u64,
            kind: SampleKind::T,
            value: h.steps as i64,
            censored: h.censored,
        })
        .collect();
    let mut buf = Vec::new();
    write_samples(&mut buf, &rows)?;
    emit(a.out.as_deref(), &buf)
}

fn cmd_scan(a: ScanArgs) -> Result<()> {
    let dist = read_dist(&a.dist)?;
    let ladder = ScaleLadder::from_counts(a.counts, a.delta)?;
    if a.moments.len() > ladder.len() {
        return Err(Error::Config(format!(
            "{} moment tables for {} scales",
            a.moments.len(),
            ladder.len()
        )));
    }
    let det = DetectorConfig {
        s: solve_s(&dist)?.s,
        c: a.c,
        eta: a.eta,
        a: a.a,
        exponential: true,
        gaussian: true,
    };
    det.validate()?;
    let mut events = Vec::new();
    for (i, path) in a.moments.iter().enumerate() {
        let k = i + 1;
        let rows = read_block_moments(fs::File::open(path)?)?;
        let expected = (ladder.n(k - 1) as i64 + 1..=ladder.n(k) as i64).collect::<Vec<_>>();
        if rows.iter().map(|r| r.block_index).ne(expected.iter().copied()) {
            return Err(Error::Config(format!(
                "{} does not hold blocks {}..={} of scale {k}",
                path.display(),
                ladder.n(k - 1) + 1,
                ladder.n(k)
            )));
        }
        events.extend(scan_window(&rows, k, ladder.n(k), &det));
    }
    let mut buf = Vec::new();
    write_events(&mut buf, &events)?;
    emit(a.out.as_deref(), &buf)
}

fn sample_values(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let col = r
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| Error::Parse(format!("{}: no `value` column", path.display())))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            rec[col].parse::<f64>().map_err(|e| Error::Parse(e.to_string()))
        })
        .collect()
}

fn cmd_limits(c: LimitsCommand) -> Result<()> {
    let mut out = String::new();
    match c {
        LimitsCommand::StableCdf { index, b, x } => {
            let spec = StableSpec::new(index, b)?;
            out.push_str("x,cdf\n");
            for x in x {
                out.push_str(&format!("{x},{}\n", spec.cdf(x)?));
            }
        }
        LimitsCommand::Ks { samples, law, index, b } => {
            let ecdf = EmpiricalCdf::new(sample_values(&samples)?)?;
            let d = match law.as_str() {
                "normal" => ks_distance(&ecdf, normal_cdf),
                "exp" => ks_distance(&ecdf, exp_cdf),
                "shifted-exp" => ks_distance(&ecdf, shifted_exp_cdf),
                "stable" => {
                    let index = index.ok_or_else(|| Error::Config("stable law needs --index".into()))?;
                    let spec = StableSpec::new(index, b)?;
                    ks_distance(&ecdf, |x| spec.cdf(x).unwrap_or(f64::NAN))
                }
                other => return Err(Error::Config(format!("unknown law `{other}`"))),
            };
            out.push_str(&format!("n,ks\n{},{d}\n", ecdf.len()));
        }
        LimitsCommand::Hill { samples, k } => {
            let xs = sample_values(&samples)?;
            out.push_str(&format!("n,k,hill\n{},{k},{}\n", xs.len(), hill_estimator(&xs, k)?));
        }
    }
    emit(None, out.as_bytes())
}

#[derive(Serialize)]
struct SummaryRow {
    experiment: String,
    seed: u64,
    config_hash: String,
    n_samples: usize,
    ks: Option<f64>,
    hill: Option<f64>,
    fitted_b: Option<f64>,
    censored_rate: f64,
    checks_failed: usize,
    passed: bool,
    source: String,
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for path in &a.reports {
        let r: ExperimentReport = serde_json::from_str(&read_text(path)?)?;
        w.serialize(SummaryRow {
            experiment: r.experiment.clone(),
            seed: r.seed,
            config_hash: r.config_hash.clone(),
            n_samples: r.n_samples,
            ks: r.ks,
            hill: r.hill,
            fitted_b: r.fitted_b,
            censored_rate: r.censored_rate,
            checks_failed: r.failed_checks().count(),
            passed: r.passed,
            source: path.display().to_string(),
        })
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    let buf = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    emit(a.out.as_deref(), &buf)
}
