//! Command-line front end for the `gflswing` binary.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, table1_config, RunConfig};
use crate::dynamics::{simulate, Simulator, Trajectory};
use crate::report::{to_json, write_trajectory_csv, Provenance, RunSummary};
use crate::stability::{classify_with, compare_uniform, find_cct, scenario_with_clearing, StabilityVerdict};
use crate::sweep::{run_sweep, sweep_csv, SweepSpec};

pub const EXIT_STABLE: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNSTABLE: i32 = 2;

/// Environment variable capping sweep worker threads.
pub const THREADS_ENV: &str = "GFLSWING_THREADS";

#[derive(Debug, Parser)]
#[command(name = "gflswing", version, about = "Transient angular stability of parallel grid-following inverters")]
pub struct Cli {
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; the bundled reference fleet when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Override the integration step, seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Accepted for interface stability; the simulator is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured scenario; writes trajectory.csv and summary.json.
    Simulate(Common),
    /// Critical clearing time search; writes cct.json.
    Cct(Common),
    /// CCT of the fleet against its uniform counterpart; writes comparison.json
    /// and both trajectories at the non-uniform CCT.
    Compare(Common),
    /// Cartesian parameter sweep; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// TOML sweep axes; an absent file means a single cell.
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
    /// Parse and validate the configuration, including the pre-fault equilibrium.
    Validate(Common),
}

fn load(common: &Common) -> Result<RunConfig> {
    let cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => table1_config(),
    };
    Ok(match common.dt {
        Some(dt) => cfg.with_dt(dt)?,
        None => cfg,
    })
}

fn out_dir(common: &Common) -> Result<&Path> {
    fs::create_dir_all(&common.out).with_context(|| format!("cannot create {}", common.out.display()))?;
    Ok(&common.out)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn write_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    write_trajectory_csv(traj, BufWriter::new(f)).with_context(|| format!("cannot write {}", path.display()))
}

fn run_configured(cfg: &RunConfig) -> Result<(Trajectory, StabilityVerdict)> {
    let traj = simulate(&cfg.fleet, &cfg.grid, &cfg.scenario, &cfg.study.dynamics)?;
    let verdict = classify_with(&traj, &cfg.study.criteria)?;
    Ok((traj, verdict))
}

fn summary(cfg: &RunConfig, verdict: StabilityVerdict) -> RunSummary {
    RunSummary { verdict, cct: None, comparison: None, provenance: Provenance::of(cfg), config: cfg.clone() }
}

fn cmd_simulate(common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    let dir = out_dir(common)?;
    let (traj, verdict) = run_configured(&cfg)?;
    write_csv(&dir.join("trajectory.csv"), &traj)?;
    let stable = verdict.stable;
    write(&dir.join("summary.json"), &to_json(&summary(&cfg, verdict))?)?;
    log::info!("{}", if stable { "stable" } else { "unstable" });
    Ok(if stable { EXIT_STABLE } else { EXIT_UNSTABLE })
}

fn cmd_cct(common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    let dir = out_dir(common)?;
    let (_, verdict) = run_configured(&cfg)?;
    let result = find_cct(&cfg.fleet, &cfg.grid, &cfg.scenario, &cfg.search, &cfg.study)?;
    log::info!("CCT {:.4} ms", result.cct * 1e3);
    let s = RunSummary { cct: Some(result), ..summary(&cfg, verdict) };
    write(&dir.join("cct.json"), &to_json(&s)?)?;
    Ok(EXIT_STABLE)
}

fn cmd_compare(common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    let dir = out_dir(common)?;
    let (_, verdict) = run_configured(&cfg)?;
    let cmp = compare_uniform(&cfg.fleet, &cfg.grid, &cfg.scenario, &cfg.search, &cfg.study)?;
    let scenario = scenario_with_clearing(&cfg.scenario, cmp.cct_nonuniform, cfg.search.post_clear_time);
    let nonuniform = simulate(&cfg.fleet, &cfg.grid, &scenario, &cfg.study.dynamics)?;
    let uniform = simulate(&cmp.uniform_fleet, &cfg.grid, &scenario, &cfg.study.dynamics)?;
    write_csv(&dir.join("trajectory_nonuniform.csv"), &nonuniform)?;
    write_csv(&dir.join("trajectory_uniform.csv"), &uniform)?;
    log::info!("delta CCT {:.4} ms", cmp.delta * 1e3);
    let s = RunSummary { comparison: Some(cmp), ..summary(&cfg, verdict) };
    write(&dir.join("comparison.json"), &to_json(&s)?)?;
    Ok(EXIT_STABLE)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
        anyhow::ensure!(n > 0, "{THREADS_ENV} must be a positive integer, got 0");
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn cmd_sweep(common: &Common, sweep: Option<&Path>) -> Result<i32> {
    let cfg = load(common)?;
    let spec = match sweep {
        Some(p) => SweepSpec::load(p)?,
        None => SweepSpec::default(),
    };
    let dir = out_dir(common)?;
    let rows = thread_pool()?.install(|| run_sweep(&cfg, &spec))?;
    let failed = rows.iter().filter(|r| r.outcome.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed", rows.len());
    }
    write(&dir.join("sweep.csv"), &sweep_csv(&rows))?;
    Ok(EXIT_STABLE)
}

fn cmd_validate(common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    Simulator::new(&cfg.fleet, &cfg.grid, cfg.study.dynamics)?;
    println!("ok {} inverters, config {}", cfg.fleet.len(), cfg.hash());
    Ok(EXIT_STABLE)
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Cct(c) => cmd_cct(c),
        Command::Compare(c) => cmd_compare(c),
        Command::Sweep { common, sweep } => cmd_sweep(common, sweep.as_deref()),
        Command::Validate(c) => cmd_validate(c),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    // clap exits with 2 on usage errors, which would read as "unstable".
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_STABLE };
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
