//! Fits the quadratic critic on a synthetic transition buffer and reports
//! the TD objective before and after the nonnegative least-squares update.

use nalgebra::Vector3;
use quadruped_rql::cost::{q_value, u_desired};
use quadruped_rql::critic::{critic_objective, push_sample, td_error};
use quadruped_rql::{critic_update, running_cost, BodyState, CostWeights, CriticConfig, CriticState, RobotParams};

fn main() {
    let params = RobotParams::default();
    let weights = CostWeights::default();
    let mut state = CriticState::new(&CriticConfig::default());
    let x_des = BodyState::standing(0.27);

    // A decaying height oscillation, recorded as (x, x_des, u, r) samples.
    for k in 0..40 {
        let t = k as f64 * 0.03;
        let mut x = x_des;
        x.p.z += 0.02 * (-t).exp() * (6.0 * t).cos();
        x.v.z = -0.02 * (-t).exp() * (6.0 * t).sin() * 6.0;
        let mut u = u_desired(&params);
        for f in u.f.iter_mut() {
            *f += Vector3::new(0.0, 0.0, -200.0 * (x.p.z - x_des.p.z));
        }
        let r = running_cost(&x, &x_des, &u, &weights, &params);
        push_sample(&mut state, x, x_des, u, r);
    }

    let before = critic_objective(&state.w_prev, &state, &params);
    for pass in 0..5 {
        let w = critic_update(&state, &params);
        let after = critic_objective(&w, &state, &params);
        let td0 = td_error(0, &w, &state, &params).expect("buffer has two samples");
        println!("pass {pass}: objective {:.4e} -> {after:.4e}, first TD error {td0:+.3e}", critic_objective(&state.w_prev, &state, &params));
        println!("  w = {:?}", w.0.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>());
        state.w_prev = w;
    }
    let first = state.buffer.get(0).expect("sample");
    println!("initial objective {before:.4e}; Q at first sample {:.4}", q_value(&first.x, &first.x_des, &first.u, &state.w_prev, &params));
}
