//! Deterministic trot planner: contact schedule, reference trajectory and
//! foot placement over the prediction horizon.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{rotation_unchecked, BodyState, FootLevers, ACTION_DIM, NUM_LEGS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactSchedule {
    /// `true` = stance.
    pub stance: [bool; NUM_LEGS],
}

impl ContactSchedule {
    pub const ALL_STANCE: Self = Self {
        stance: [true; NUM_LEGS],
    };

    pub fn num_stance(&self) -> usize {
        self.stance.iter().filter(|s| **s).count()
    }

    /// Selection matrix `C` whose rows pick the force components of every swing
    /// leg, so that `C·u = 0` iff all swing forces vanish.
    pub fn selection_matrix(&self) -> DMatrix<f64> {
        let swing: Vec<usize> = (0..NUM_LEGS).filter(|&l| !self.stance[l]).collect();
        let mut c = DMatrix::zeros(3 * swing.len(), ACTION_DIM);
        for (row, leg) in swing.iter().enumerate() {
            for k in 0..3 {
                c[(3 * row + k, 3 * leg + k)] = 1.0;
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitConfig {
    /// Gait cycle duration [s].
    pub period: f64,
    /// Stance fraction of the cycle.
    pub duty: f64,
    /// Per-leg phase offset in `[0, 1)`.
    pub phase_offsets: [f64; NUM_LEGS],
    /// Nominal hip positions in the body frame [m].
    pub hip_offsets: [[f64; 3]; NUM_LEGS],
    /// Desired standing height [m].
    pub body_height: f64,
    /// Desired world velocity; the vertical component must be zero [m/s].
    pub v_des: [f64; 3],
    /// Desired yaw rate [rad/s].
    pub yaw_des: f64,
    /// Keep every leg in stance regardless of phase.
    pub all_stance: bool,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            period: 0.5,
            duty: 0.6,
            phase_offsets: [0.0, 0.5, 0.5, 0.0],
            hip_offsets: [
                [0.18, 0.13, 0.0],
                [0.18, -0.13, 0.0],
                [-0.18, 0.13, 0.0],
                [-0.18, -0.13, 0.0],
            ],
            body_height: 0.27,
            v_des: [0.5, 0.0, 0.0],
            yaw_des: 0.0,
            all_stance: false,
        }
    }
}

impl GaitConfig {
    pub fn standing() -> Self {
        Self {
            v_des: [0.0; 3],
            all_stance: true,
            ..Self::default()
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.period.is_finite() && self.period > 0.0) {
            out.push(format!("gait.period must be > 0 (got {})", self.period));
        }
        if !(self.duty > 0.5 && self.duty < 1.0) {
            out.push(format!("gait.duty must lie in (0.5, 1) (got {})", self.duty));
        }
        if !self.phase_offsets.iter().all(|o| (0.0..1.0).contains(o)) {
            out.push(format!(
                "gait.phase_offsets must lie in [0, 1) (got {:?})",
                self.phase_offsets
            ));
        }
        let [fl, fr, rl, rr] = self.phase_offsets;
        if fl != rr || fr != rl {
            out.push(format!(
                "gait.phase_offsets must pair diagonal legs (got {:?})",
                self.phase_offsets
            ));
        }
        if !self.hip_offsets.iter().flatten().all(|c| c.is_finite()) {
            out.push("gait.hip_offsets must be finite".to_string());
        }
        if !(self.body_height.is_finite() && self.body_height > 0.0) {
            out.push(format!(
                "gait.body_height must be > 0 (got {})",
                self.body_height
            ));
        }
        if !self.v_des.iter().all(|c| c.is_finite()) || self.v_des[2] != 0.0 {
            out.push(format!(
                "gait.v_des must be finite and planar (got {:?})",
                self.v_des
            ));
        }
        if !self.yaw_des.is_finite() {
            out.push("gait.yaw_des must be finite".to_string());
        }
        out
    }

    fn hip(&self, leg: usize) -> Vector3<f64> {
        Vector3::from(self.hip_offsets[leg])
    }

    fn v_des(&self) -> Vector3<f64> {
        Vector3::from(self.v_des)
    }

    /// Forward shift of a touchdown, `v·(duty·period)/2`.
    fn placement_gain(&self) -> f64 {
        self.duty * self.period / 2.0
    }
}

/// Persistent per-episode planner memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitState {
    /// Planar start of the commanded reference trajectory.
    pub origin: Vector3<f64>,
    /// World touchdown position of every foot (last touchdown for swing legs).
    pub touchdowns: [Vector3<f64>; NUM_LEGS],
    pub prev_stance: [bool; NUM_LEGS],
}

impl GaitState {
    /// Starts with every foot directly under its hip.
    pub fn new(x0: &BodyState, cfg: &GaitConfig) -> Self {
        let rot = rotation_unchecked(&x0.theta);
        let mut touchdowns = [Vector3::zeros(); NUM_LEGS];
        for (leg, td) in touchdowns.iter_mut().enumerate() {
            *td = x0.p + rot * cfg.hip(leg);
            td.z = 0.0;
        }
        Self {
            origin: Vector3::new(x0.p.x, x0.p.y, 0.0),
            touchdowns,
            prev_stance: contact_at(0.0, cfg).stance,
        }
    }

    /// World-frame levers of the stored foot positions for a body at `p`.
    pub fn levers(&self, p: &Vector3<f64>) -> FootLevers {
        let mut r = [Vector3::zeros(); NUM_LEGS];
        for (leg, lever) in r.iter_mut().enumerate() {
            *lever = self.touchdowns[leg] - p;
        }
        FootLevers { r }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePlan {
    /// Reference at the planning instant itself.
    pub current: BodyState,
    /// `x_des[i]` is the target of the `(i+1)`-th predicted state.
    pub x_des: Vec<BodyState>,
    /// `levers[i]` and `contacts[i]` apply to the `(i+1)`-th action.
    pub levers: Vec<FootLevers>,
    pub contacts: Vec<ContactSchedule>,
}

impl ReferencePlan {
    pub fn len(&self) -> usize {
        self.x_des.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_des.is_empty()
    }

    /// First `n` steps of the plan.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            current: self.current,
            x_des: self.x_des[..n].to_vec(),
            levers: self.levers[..n].to_vec(),
            contacts: self.contacts[..n].to_vec(),
        }
    }
}

pub fn contact_at(t: f64, cfg: &GaitConfig) -> ContactSchedule {
    if cfg.all_stance {
        return ContactSchedule::ALL_STANCE;
    }
    let cycles = t / cfg.period;
    let mut stance = [false; NUM_LEGS];
    for (leg, s) in stance.iter_mut().enumerate() {
        let phase = cycles + cfg.phase_offsets[leg];
        *s = phase - phase.floor() < cfg.duty;
    }
    ContactSchedule { stance }
}

/// Commanded body state at time `t` along the open-loop reference.
pub fn reference_state(t: f64, cfg: &GaitConfig, origin: &Vector3<f64>) -> BodyState {
    let v = cfg.v_des();
    BodyState {
        p: Vector3::new(origin.x + v.x * t, origin.y + v.y * t, cfg.body_height),
        theta: Vector3::new(0.0, 0.0, cfg.yaw_des * t),
        v,
        omega_b: Vector3::new(0.0, 0.0, cfg.yaw_des),
    }
}

fn touchdown_point(
    p: &Vector3<f64>,
    theta: &Vector3<f64>,
    v: &Vector3<f64>,
    leg: usize,
    cfg: &GaitConfig,
) -> Vector3<f64> {
    let mut td = p + rotation_unchecked(theta) * cfg.hip(leg) + v * cfg.placement_gain();
    td.z = 0.0;
    td
}

/// Records a new touchdown for every leg that went from swing to stance.
pub fn update_touchdowns(t: f64, x: &BodyState, cfg: &GaitConfig, state: &mut GaitState) {
    let now = contact_at(t, cfg).stance;
    for leg in 0..NUM_LEGS {
        if now[leg] && !state.prev_stance[leg] {
            state.touchdowns[leg] = touchdown_point(&x.p, &x.theta, &x.v, leg, cfg);
        }
    }
    state.prev_stance = now;
}

/// Horizon targets, levers and contacts for a controller invoked at time `t`.
///
/// Levers are taken relative to the current body position advanced along the
/// reference displacement; feet expected to touch down inside the horizon are
/// placed with the same heuristic as [`update_touchdowns`], evaluated on the
/// reference.
pub fn plan_reference(
    t: f64,
    x: &BodyState,
    horizon: usize,
    delta: f64,
    cfg: &GaitConfig,
    state: &GaitState,
) -> ReferencePlan {
    let p_ref_now = reference_state(t, cfg, &state.origin).p;
    let mut feet = state.touchdowns;
    let mut prev = contact_at(t, cfg);

    let mut plan = ReferencePlan {
        current: reference_state(t, cfg, &state.origin),
        x_des: Vec::with_capacity(horizon),
        levers: Vec::with_capacity(horizon),
        contacts: Vec::with_capacity(horizon),
    };
    for i in 0..horizon {
        let t_i = t + i as f64 * delta;
        let contacts = contact_at(t_i, cfg);
        let reference = reference_state(t_i, cfg, &state.origin);
        let p_pred = x.p + (reference.p - p_ref_now);
        if i > 0 {
            for leg in 0..NUM_LEGS {
                if contacts.stance[leg] && !prev.stance[leg] {
                    feet[leg] = touchdown_point(&p_pred, &reference.theta, &reference.v, leg, cfg);
                }
            }
        }
        let mut r = [Vector3::zeros(); NUM_LEGS];
        for (leg, lever) in r.iter_mut().enumerate() {
            *lever = feet[leg] - p_pred;
        }
        plan.levers.push(FootLevers { r });
        plan.contacts.push(contacts);
        plan.x_des
            .push(reference_state(t + (i + 1) as f64 * delta, cfg, &state.origin));
        prev = contacts;
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contact_rule_examples() {
        let cfg = GaitConfig::default();
        assert_eq!(contact_at(0.0, &cfg), ContactSchedule::ALL_STANCE);
        let c = contact_at(0.45 * cfg.period, &cfg);
        assert_eq!(c.stance, [true, false, false, true]);
    }

    #[test]
    fn stance_fraction_matches_duty() {
        let cfg = GaitConfig::default();
        let samples = (cfg.period / 1e-3).round() as usize;
        let mut counts = [0usize; NUM_LEGS];
        for k in 0..samples {
            let c = contact_at(k as f64 * 1e-3, &cfg);
            for leg in 0..NUM_LEGS {
                counts[leg] += c.stance[leg] as usize;
            }
        }
        for count in counts {
            let frac = count as f64 / samples as f64;
            assert!((frac - cfg.duty).abs() <= 1.0 / samples as f64 + 1e-12);
        }
    }

    #[test]
    fn selection_matrix_picks_swing_components() {
        let c = ContactSchedule {
            stance: [true, false, false, true],
        };
        let sel = c.selection_matrix();
        assert_eq!(sel.shape(), (6, 12));
        assert_eq!(sel[(0, 3)], 1.0);
        assert_eq!(sel[(5, 8)], 1.0);
        assert_eq!(sel.sum(), 6.0);
        assert_eq!(ContactSchedule::ALL_STANCE.selection_matrix().nrows(), 0);
    }

    #[test]
    fn stationary_reference_is_constant() {
        let cfg = GaitConfig::standing();
        let x0 = BodyState::standing(cfg.body_height);
        let state = GaitState::new(&x0, &cfg);
        let plan = plan_reference(1.7, &x0, 5, 0.03, &cfg, &state);
        for x in &plan.x_des {
            assert_eq!(*x, BodyState::standing(cfg.body_height));
        }
    }

    #[test]
    fn constant_velocity_reference_spacing() {
        let cfg = GaitConfig::default();
        let x0 = BodyState::standing(cfg.body_height);
        let state = GaitState::new(&x0, &cfg);
        let plan = plan_reference(0.3, &x0, 3, 0.03, &cfg, &state);
        for pair in plan.x_des.windows(2) {
            assert!((pair[1].p.x - pair[0].p.x - 0.015).abs() < 1e-12);
        }
    }

    #[test]
    fn plan_contacts_follow_schedule() {
        let cfg = GaitConfig::default();
        let x0 = BodyState::standing(cfg.body_height);
        let state = GaitState::new(&x0, &cfg);
        let t = 0.21;
        let plan = plan_reference(t, &x0, 12, 0.03, &cfg, &state);
        for (i, c) in plan.contacts.iter().enumerate() {
            assert_eq!(*c, contact_at(t + i as f64 * 0.03, &cfg));
        }
    }

    #[test]
    fn touchdowns_under_hips_at_rest() {
        let cfg = GaitConfig::standing();
        let x0 = BodyState::standing(cfg.body_height);
        let mut state = GaitState::new(&x0, &cfg);
        state.prev_stance = [false; NUM_LEGS];
        update_touchdowns(0.0, &x0, &cfg, &mut state);
        let levers = state.levers(&x0.p);
        assert_eq!(levers, FootLevers::symmetric(0.18, 0.13, cfg.body_height));
    }

    #[test]
    fn touchdown_shifted_by_velocity() {
        let cfg = GaitConfig {
            duty: 0.6,
            period: 0.5,
            ..GaitConfig::default()
        };
        let mut x = BodyState::standing(cfg.body_height);
        x.v = Vector3::new(0.5, 0.0, 0.0);
        let mut state = GaitState::new(&x, &cfg);
        state.prev_stance = [false; NUM_LEGS];
        update_touchdowns(0.0, &x, &cfg, &mut state);
        assert!((state.touchdowns[0].x - (0.18 + 0.075)).abs() < 1e-12);
        assert_eq!(state.touchdowns[0].z, 0.0);
    }

    #[test]
    fn validation_flags_bad_duty() {
        let cfg = GaitConfig {
            duty: 0.4,
            ..GaitConfig::default()
        };
        assert!(cfg.violations().iter().any(|v| v.contains("duty")));
        assert!(GaitConfig::default().violations().is_empty());
    }
}
