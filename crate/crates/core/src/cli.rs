//! Command-line driver behind the `quadruped-rql` binary.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::controller::Mode;
use crate::error::{Error, Result};
use crate::io;
use crate::sim::{self, EpisodeLog, EpisodeSummary, SweepResult, POSE_AXES};

/// Exit status for a configuration that fails validation.
pub const EXIT_INVALID: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "quadruped-rql", version, about = "MPC and RQL control of a single-rigid-body quadruped")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one closed-loop episode and write its CSV.
    Run(RunArgs),
    /// Run a horizon sweep and write per-episode CSVs plus a summary.
    Sweep(SweepArgs),
    /// Check a config file against every invariant.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment TOML; built-in defaults when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "QUADRUPED_RQL_OUT", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub controller: Option<Mode>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Episode length [s].
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated horizon lengths.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    /// Comma-separated controllers.
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<Mode>>,
    /// Number of seeds, run as 0..K.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Episode length [s].
    #[arg(long)]
    pub duration: Option<f64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Rebuild the summary from the episode CSVs already in the output directory.
    #[arg(long)]
    pub resummarize: bool,
    /// Re-run episodes whose CSV already exists.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub config: PathBuf,
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn echo_config(out: &Path, cfg: &ExperimentConfig) -> Result<()> {
    io::write_atomic(&out.join("config.toml"), cfg.to_toml()?.as_bytes())
}

fn print_episode(summary: &EpisodeSummary, path: &Path) {
    println!("wrote {}", path.display());
    match &summary.cost {
        Some(c) => println!(
            "{} N={} seed={}: accumulated cost {:.6e}, mean {:.6e} over {} steps",
            summary.mode, summary.horizon, summary.seed, c.sum, c.mean, c.count
        ),
        None => println!(
            "{} N={} seed={}: failed ({})",
            summary.mode,
            summary.horizon,
            summary.seed,
            summary.failure.as_deref().unwrap_or("unknown")
        ),
    }
    let errs: Vec<String> = POSE_AXES
        .iter()
        .zip(summary.max_errors)
        .map(|(a, e)| format!("{a}={e:.4}"))
        .collect();
    println!("max |error|: {}", errs.join(" "));
}

pub fn print_table(result: &SweepResult) {
    let mut horizons: Vec<usize> = result.cells.iter().map(|c| c.horizon).collect();
    horizons.dedup();
    let mut modes: Vec<Mode> = result.cells.iter().map(|c| c.mode).collect();
    modes.sort();
    modes.dedup();
    print!("{:>4}", "N");
    for m in &modes {
        print!(" {:>24}", format!("{m} accumulated"));
    }
    println!();
    for n in horizons {
        print!("{n:>4}");
        for m in &modes {
            match result.cell(*m, n) {
                Some(c) if c.failures < c.episodes => {
                    print!(" {:>24}", format!("{:.4e} ± {:.1e}", c.accumulated_mean, c.accumulated_std))
                }
                Some(_) => print!(" {:>24}", "failed"),
                None => print!(" {:>24}", "-"),
            }
        }
        println!();
    }
}

fn cmd_run(args: &RunArgs) -> Result<bool> {
    let mut cfg = load(args.common.config.as_deref())?;
    if let Some(m) = args.controller {
        cfg.controller.mode = m;
    }
    if let Some(n) = args.horizon {
        cfg.controller.horizon = n;
    }
    if let Some(d) = args.duration {
        cfg.episode.duration = d;
    }
    if let Some(s) = args.seed {
        cfg.episode.seed = s;
    }
    cfg.validate()?;
    let out = &args.common.out;
    echo_config(out, &cfg)?;
    let base = cfg.base();
    let log = sim::run_episode(&base)?;
    let path = io::write_episode(out, &log)?;
    let summary = EpisodeSummary::from_log(&log, base.episode.transient_skip());
    print_episode(&summary, &path);
    Ok(log.failure.is_none())
}

fn cmd_sweep(args: &SweepArgs) -> Result<bool> {
    let mut cfg = load(args.common.config.as_deref())?;
    if let Some(h) = &args.horizons {
        cfg.sweep.horizons = h.clone();
    }
    if let Some(m) = &args.modes {
        cfg.sweep.modes = m.clone();
    }
    if let Some(k) = args.seeds {
        cfg.sweep.seeds = (0..k).collect();
    }
    if let Some(d) = args.duration {
        cfg.episode.duration = d;
    }
    cfg.validate()?;
    let out = args.common.out.clone();
    let skip = cfg.episode.transient_skip();

    let result = if args.resummarize {
        io::resummarize(&out, skip)?
    } else {
        echo_config(&out, &cfg)?;
        if let Some(j) = args.jobs {
            // A global pool can only be installed once per process.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
        }
        let base = cfg.base();
        let jobs = sim::sweep_jobs(&cfg.sweep.horizons, &cfg.sweep.modes, &cfg.sweep.seeds);
        let summaries = jobs
            .par_iter()
            .map(|job| -> Result<EpisodeSummary> {
                let path = out.join(sim::episode_file_name(job.mode, job.horizon, job.seed));
                let log: EpisodeLog = if path.exists() && !args.force {
                    io::read_episode(&path)?
                } else {
                    let log = sim::run_episode(&sim::job_config(&base, job))?;
                    io::write_episode(&out, &log)?;
                    log
                };
                Ok(EpisodeSummary::from_log(&log, skip))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        sim::summarize(summaries)
    };
    io::write_summary(&out, &result)?;
    print_table(&result);
    println!("wrote {}", out.join(io::SUMMARY_FILE).display());
    Ok(result.cells.iter().all(|c| c.failures == 0))
}

fn cmd_validate(args: &ValidateArgs) -> Result<bool> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let violations = cfg.violations();
    for v in &violations {
        println!("violation: {v}");
    }
    if !violations.is_empty() {
        return Err(Error::Config(format!("{} violation(s)", violations.len())));
    }
    println!("{}: ok", args.config.display());
    Ok(true)
}

/// Runs a parsed command line. Invalid configurations exit with
/// [`EXIT_INVALID`], runtime errors and failed episodes with 1.
pub fn run(cli: Cli) -> ExitCode {
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ (Error::Config(_) | Error::InvalidParameter(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
