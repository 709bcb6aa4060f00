//! Compares MPC and RQL at one horizon on the same seeds, and shows how the
//! learned critic weights evolve during an RQL episode.
//! Usage: `rql_vs_mpc [HORIZON]`.

use quadruped_rql::sim::{accumulated_cost, run_episode, EpisodeConfig};
use quadruped_rql::Mode;

fn main() -> quadruped_rql::Result<()> {
    let horizon = std::env::args().nth(1).map_or(2, |a| a.parse().expect("horizon"));
    for seed in 0..3 {
        let mut line = format!("N={horizon} seed {seed}:");
        for mode in [Mode::Mpc, Mode::Rql] {
            let mut cfg = EpisodeConfig::default();
            cfg.controller.mode = mode;
            cfg.controller.horizon = horizon;
            cfg.episode.seed = seed;
            let log = run_episode(&cfg)?;
            match &log.failure {
                Some(f) => line += &format!("  {mode} failed ({})", f.message),
                None => line += &format!("  {mode} {:.4}", accumulated_cost(&log, cfg.episode.transient_skip())?.mean),
            }
            if mode == Mode::Rql && seed == 0 {
                for row in log.rows.iter().step_by(200) {
                    if let Some(w) = row.critic {
                        println!("  t={:5.2} w_pos=[{:.2} {:.2} {:.2}] w_force=[{:.3} {:.3} {:.3}]", row.t, w.0[0], w.0[1], w.0[2], w.0[12], w.0[13], w.0[14]);
                    }
                }
            }
        }
        println!("{line}  (mean running cost per step)");
    }
    Ok(())
}
