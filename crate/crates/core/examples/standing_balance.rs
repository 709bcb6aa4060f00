//! Four-leg standing balance from rest on an ideal plant. Both controllers
//! should sit exactly at equilibrium with zero cost.

use quadruped_rql::sim::{run_episode, EpisodeConfig};
use quadruped_rql::Mode;

fn main() -> quadruped_rql::Result<()> {
    for mode in [Mode::Mpc, Mode::Rql] {
        for n in [1, 3, 5] {
            let log = run_episode(&EpisodeConfig::standing(mode, n, 5.0))?;
            let last = log.rows.last().expect("non-empty episode");
            let iters: usize = log.rows.iter().map(|r| r.iterations).sum();
            println!(
                "{mode} N={n}: accumulated cost {:.3e}, height {:.4} m, {iters} solver iterations",
                last.accumulated, last.x.p.z
            );
        }
    }
    Ok(())
}
