//! Full horizon sweep for both controllers, written to a directory as
//! per-episode CSVs plus `summary.csv` and `episodes.csv`.
//! Usage: `horizon_sweep [OUT_DIR]`.

use std::path::PathBuf;

use quadruped_rql::config::SweepSettings;
use quadruped_rql::io;
use quadruped_rql::sim::{run_sweep, EpisodeConfig, EpisodeLog};
use quadruped_rql::Mode;

fn main() -> quadruped_rql::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/sweep".into()));
    std::fs::create_dir_all(&out)?;
    let grid = SweepSettings::default();
    let sink = |log: &EpisodeLog| {
        io::write_episode(&out, log)?;
        eprintln!("done {}", log.file_name());
        Ok(())
    };
    let result = run_sweep(&EpisodeConfig::default(), &grid.horizons, &grid.modes, &grid.seeds, sink)?;
    io::write_summary(&out, &result)?;

    println!("  N   MPC mean cost   RQL mean cost   RQL/MPC");
    for &n in &grid.horizons {
        let (Some(m), Some(r)) = (result.cell(Mode::Mpc, n), result.cell(Mode::Rql, n)) else { continue };
        println!(
            "{n:>3}   {:>13.4}   {:>13.4}   {:>7.3}   failures {}/{}",
            m.mean_cost_mean,
            r.mean_cost_mean,
            r.mean_cost_mean / m.mean_cost_mean,
            m.failures + r.failures,
            m.episodes + r.episodes
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
