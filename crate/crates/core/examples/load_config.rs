//! Loads an experiment TOML (default `configs/default.toml`), reports any
//! invalid fields, and runs one short episode from it.

use quadruped_rql::sim::run_episode;
use quadruped_rql::ExperimentConfig;

fn main() -> quadruped_rql::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.toml").into());
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let problems = cfg.violations();
    if !problems.is_empty() {
        for p in &problems {
            println!("invalid: {p}");
        }
        return Ok(());
    }
    let mut base = cfg.base();
    base.episode.duration = base.episode.duration.min(3.0);
    let log = run_episode(&base)?;
    println!("{} N={} over {} s: accumulated cost {:.4}", log.mode, log.horizon, base.episode.duration, log.rows.last().map_or(0.0, |r| r.accumulated));
    println!("sweep grid: horizons {:?}, modes {:?}, seeds {:?}", cfg.sweep.horizons, cfg.sweep.modes, cfg.sweep.seeds);
    Ok(())
}
