//! Checks random force commands against the friction pyramid and shows the
//! repair that puts them back in the feasible set.

use nalgebra::Vector3;
use quadruped_rql::cost::clamp_to_feasible;
use quadruped_rql::{check_action, Action, ContactSchedule, Feasibility, RobotParams};

fn main() {
    let params = RobotParams::default();
    let trot = ContactSchedule { stance: [true, false, false, true] };
    let commands = [
        Action { f: [Vector3::new(5.0, 0.0, 40.0), Vector3::zeros(), Vector3::zeros(), Vector3::new(0.0, -3.0, 40.0)] },
        Action { f: [Vector3::new(30.0, 0.0, 40.0), Vector3::zeros(), Vector3::zeros(), Vector3::new(0.0, 0.0, -5.0)] },
        Action { f: [Vector3::new(0.0, 0.0, 500.0), Vector3::new(1.0, 0.0, 10.0), Vector3::zeros(), Vector3::new(-9.0, 9.0, 20.0)] },
    ];
    println!("mu = {}, fz_max = {} N, stance legs FL and RR", params.mu, params.fz_max);
    for (k, u) in commands.iter().enumerate() {
        println!("command {k}:");
        match check_action(u, &trot, &params) {
            Feasibility::Ok => println!("  feasible"),
            Feasibility::Violated(v) => {
                for violation in &v {
                    println!("  {violation:?}");
                }
                let fixed = clamp_to_feasible(u, &trot, &params);
                println!("  repaired to {:?}", fixed.f.map(|f| [f.x, f.y, f.z]));
                println!("  repaired command feasible: {}", check_action(&fixed, &trot, &params).is_ok());
            }
        }
    }
}
