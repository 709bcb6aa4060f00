//! A 20 s trot under nominal MPC against the perturbed RK4 plant
//! (heavier body, noisy forces). Usage: `trot_mpc [HORIZON] [SEED]`.

use quadruped_rql::sim::{accumulated_cost, max_pose_errors, run_episode, EpisodeConfig, POSE_AXES};
use quadruped_rql::Mode;

fn main() -> quadruped_rql::Result<()> {
    let mut args = std::env::args().skip(1);
    let horizon = args.next().map_or(5, |a| a.parse().expect("horizon"));
    let seed = args.next().map_or(0, |a| a.parse().expect("seed"));

    let mut cfg = EpisodeConfig::default();
    cfg.controller.mode = Mode::Mpc;
    cfg.controller.horizon = horizon;
    cfg.episode.seed = seed;
    let log = run_episode(&cfg)?;
    if let Some(f) = &log.failure {
        println!("failed at t = {:.2}: {}", f.t, f.message);
        return Ok(());
    }

    let skip = cfg.episode.transient_skip();
    let cost = accumulated_cost(&log, skip)?;
    println!("MPC N={horizon} seed {seed}: {} steps, post-transient cost {:.3} ({:.4} per step)", log.rows.len(), cost.sum, cost.mean);
    for (axis, err) in POSE_AXES.iter().zip(max_pose_errors(&log, skip)) {
        println!("  max |{axis} error| {err:.4}");
    }
    for row in log.rows.iter().step_by(100) {
        println!("  t={:5.2}  x={:+.3}  z={:.4}  v_x={:+.3}  iters={}", row.t, row.x.p.x, row.x.p.z, row.x.v.x, row.iterations);
    }
    Ok(())
}
