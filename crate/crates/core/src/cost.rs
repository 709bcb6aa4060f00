//! Running cost, Q-function model and the action constraint sets.

use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Action, BodyState, RobotParams, ACTION_DIM, NUM_LEGS, STATE_DIM};
use crate::gait::ContactSchedule;

pub const Q_DIM: usize = STATE_DIM + 3;
/// Friction pyramid plus unilateral and cap rows, per leg.
pub const ROWS_PER_LEG: usize = 6;
pub const FRICTION_ROWS: usize = ROWS_PER_LEG * NUM_LEGS;
/// Tolerance on the friction and unilateral rows in [`check_action`].
pub const FEASIBILITY_TOL: f64 = 1e-8;

pub type QVector = SVector<f64, Q_DIM>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    /// Diagonal of `P_x` over `(p, Θ, v, ω_B)`.
    pub p_x: [f64; STATE_DIM],
    /// Diagonal of `P_u` over the leg-major force components.
    pub p_u: [f64; ACTION_DIM],
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            p_x: [
                100.0, 50.0, 80.0, 10.0, 10.0, 20.0, 10.0, 5.0, 5.0, 1.0, 1.0, 1.0,
            ],
            p_u: [1e-4; ACTION_DIM],
        }
    }
}

impl CostWeights {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.p_x.iter().chain(&self.p_u).all(|w| w.is_finite() && *w >= 0.0) {
            out.push("cost weights must be finite and >= 0".to_string());
        }
        if !self.p_x.iter().any(|w| *w > 0.0) {
            out.push("cost.p_x needs at least one positive entry".to_string());
        }
        out
    }
}

/// Diagonal of the Q-function matrix `A`: 12 state-error weights followed by
/// 3 force-balance weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticWeights(pub QVector);

impl CriticWeights {
    pub fn zeros() -> Self {
        Self(QVector::zeros())
    }

    pub fn uniform(value: f64) -> Self {
        Self(QVector::repeat(value))
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|w| w.is_finite() && *w >= 0.0)
    }
}

/// Reference action: every leg carries a quarter of the weight vertically.
pub fn u_desired(params: &RobotParams) -> Action {
    let fz = params.weight() / 4.0;
    Action {
        f: [Vector3::new(0.0, 0.0, fz); NUM_LEGS],
    }
}

pub fn state_error(x: &BodyState, x_des: &BodyState) -> SVector<f64, STATE_DIM> {
    x.to_vector() - x_des.to_vector()
}

pub fn running_cost(
    x: &BodyState,
    x_des: &BodyState,
    u: &Action,
    weights: &CostWeights,
    params: &RobotParams,
) -> f64 {
    let e_x = state_error(x, x_des);
    let e_u = u.to_vector() - u_desired(params).to_vector();
    let state: f64 = e_x.iter().zip(&weights.p_x).map(|(e, w)| w * e * e).sum();
    let action: f64 = e_u.iter().zip(&weights.p_u).map(|(e, w)| w * e * e).sum();
    state + action
}

/// `z = [x − x_des; Σ fᵢ − m·g]`.
pub fn q_input(x: &BodyState, x_des: &BodyState, u: &Action, params: &RobotParams) -> QVector {
    let mut z = QVector::zeros();
    z.fixed_rows_mut::<STATE_DIM>(0)
        .copy_from(&state_error(x, x_des));
    z.fixed_rows_mut::<3>(STATE_DIM)
        .copy_from(&(u.total_force() - params.gravity() * params.mass));
    z
}

/// Squared features `zⱼ²`; the Q-function is their dot product with `w`.
pub fn q_features(x: &BodyState, x_des: &BodyState, u: &Action, params: &RobotParams) -> QVector {
    q_input(x, x_des, u, params).map(|z| z * z)
}

/// `Q̂ = zᵀ·diag(w)·z`.
pub fn q_value(
    x: &BodyState,
    x_des: &BodyState,
    u: &Action,
    w: &CriticWeights,
    params: &RobotParams,
) -> f64 {
    q_features(x, x_des, u, params).dot(&w.0)
}

/// Stacked inequality `D·u ≤ b`: for every leg the rows
/// `fx − μfz`, `−fx − μfz`, `fy − μfz`, `−fy − μfz`, `−fz` (all `≤ 0`) and
/// `fz ≤ fz_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionRows {
    pub d: SMatrix<f64, FRICTION_ROWS, ACTION_DIM>,
    pub b: SVector<f64, FRICTION_ROWS>,
}

pub fn friction_rows(params: &RobotParams) -> FrictionRows {
    let mu = params.mu;
    let mut d = SMatrix::<f64, FRICTION_ROWS, ACTION_DIM>::zeros();
    let mut b = SVector::<f64, FRICTION_ROWS>::zeros();
    let leg_rows: [[f64; 3]; ROWS_PER_LEG] = [
        [1.0, 0.0, -mu],
        [-1.0, 0.0, -mu],
        [0.0, 1.0, -mu],
        [0.0, -1.0, -mu],
        [0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0],
    ];
    for leg in 0..NUM_LEGS {
        for (k, row) in leg_rows.iter().enumerate() {
            for (c, value) in row.iter().enumerate() {
                d[(ROWS_PER_LEG * leg + k, 3 * leg + c)] = *value;
            }
        }
        b[ROWS_PER_LEG * leg + 5] = params.fz_max;
    }
    FrictionRows { d, b }
}

/// Row values `D·u − b` of one leg, in [`friction_rows`] order.
pub fn leg_row_values(f: &Vector3<f64>, params: &RobotParams) -> [f64; ROWS_PER_LEG] {
    let cone = params.mu * f.z;
    [
        f.x - cone,
        -f.x - cone,
        f.y - cone,
        -f.y - cone,
        -f.z,
        f.z - params.fz_max,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    /// A swing leg carries a nonzero force.
    SwingForce { leg: usize },
    /// Row `row` of [`friction_rows`] exceeds its tolerance by `excess`.
    Row { row: usize, excess: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Ok,
    Violated(Vec<Violation>),
}

impl Feasibility {
    pub fn is_ok(&self) -> bool {
        matches!(self, Feasibility::Ok)
    }
}

pub fn check_action(u: &Action, contacts: &ContactSchedule, params: &RobotParams) -> Feasibility {
    let mut violations = Vec::new();
    for (leg, f) in u.f.iter().enumerate() {
        if !contacts.stance[leg] {
            if f.iter().any(|c| *c != 0.0) {
                violations.push(Violation::SwingForce { leg });
            }
            continue;
        }
        for (k, value) in leg_row_values(f, params).iter().enumerate() {
            let tol = if k == ROWS_PER_LEG - 1 {
                FEASIBILITY_TOL * params.fz_max
            } else {
                FEASIBILITY_TOL
            };
            // Written so that NaN counts as a violation.
            if !(*value <= tol) {
                violations.push(Violation::Row {
                    row: ROWS_PER_LEG * leg + k,
                    excess: *value,
                });
            }
        }
    }
    if violations.is_empty() {
        Feasibility::Ok
    } else {
        Feasibility::Violated(violations)
    }
}

/// Feasibility repair by clamping: `fz` into `[0, fz_max]`, then `fx`, `fy`
/// into `[−μfz, μfz]`; swing legs are zeroed.
pub fn clamp_to_feasible(u: &Action, contacts: &ContactSchedule, params: &RobotParams) -> Action {
    let mut out = *u;
    for (leg, f) in out.f.iter_mut().enumerate() {
        if !contacts.stance[leg] {
            *f = Vector3::zeros();
            continue;
        }
        let fz = f.z.clamp(0.0, params.fz_max);
        let cone = params.mu * fz;
        *f = Vector3::new(f.x.clamp(-cone, cone), f.y.clamp(-cone, cone), fz);
    }
    out
}

/// Euclidean projection of `(a, b, c)` onto
/// `{(x, y, t) : |x| ≤ slope_x·t, |y| ≤ slope_y·t, 0 ≤ t ≤ t_max}`.
///
/// For a fixed `t` the optimal `x`, `y` are clamps, which leaves a convex
/// piecewise-quadratic problem in `t` with breakpoints `|a|/slope_x` and
/// `|b|/slope_y`; it is minimized exactly segment by segment.
pub fn project_pyramid(
    a: f64,
    b: f64,
    c: f64,
    slope_x: f64,
    slope_y: f64,
    t_max: f64,
) -> (f64, f64, f64) {
    let bx = a.abs() / slope_x;
    let by = b.abs() / slope_y;
    // Stationary point of the quadratic piece where the x (resp. y) clamp is
    // active depending on the flags.
    let stationary = |cx: bool, cy: bool| {
        let mut num = c;
        let mut den = 1.0;
        if cx {
            num += slope_x * a.abs();
            den += slope_x * slope_x;
        }
        if cy {
            num += slope_y * b.abs();
            den += slope_y * slope_y;
        }
        num / den
    };
    let mut t = f64::NAN;
    for (cx, cy) in [(true, true), (true, false), (false, true), (false, false)] {
        let cand = stationary(cx, cy);
        // The x clamp is active iff t < bx.
        if (cand < bx) == cx && (cand < by) == cy {
            t = cand;
            break;
        }
    }
    if t.is_nan() {
        // The root sits exactly on a breakpoint; the derivative changes sign
        // across it, so take the smallest breakpoint where it is nonnegative.
        let deriv = |s: f64| {
            s - c - slope_x * (a.abs() - slope_x * s).max(0.0) - slope_y * (b.abs() - slope_y * s).max(0.0)
        };
        t = if deriv(bx.min(by)) >= 0.0 { bx.min(by) } else { bx.max(by) };
    }
    let t = t.clamp(0.0, t_max);
    let x = a.clamp(-slope_x * t, slope_x * t);
    let y = b.clamp(-slope_y * t, slope_y * t);
    (x, y, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> RobotParams {
        RobotParams::default()
    }

    #[test]
    fn u_desired_carries_quarter_weight() {
        let u = u_desired(&params());
        for f in u.f {
            assert!((f.z - 29.43).abs() < 1e-12);
            assert_eq!((f.x, f.y), (0.0, 0.0));
        }
        assert!((u.total_force().z - 12.0 * 9.81).abs() < 1e-12);
    }

    #[test]
    fn running_cost_examples() {
        let p = params();
        let w = CostWeights::default();
        let x_des = BodyState::standing(0.27);
        let u_des = u_desired(&p);
        assert_eq!(running_cost(&x_des, &x_des, &u_des, &w, &p), 0.0);

        for slot in 0..STATE_DIM {
            let mut xv = x_des.to_vector();
            xv[slot] += 1.0;
            let c = running_cost(&BodyState::from_vector(&xv), &x_des, &u_des, &w, &p);
            assert!((c - w.p_x[slot]).abs() < 1e-12);
        }

        let mut x = x_des;
        x.p.x += 0.1;
        let mut u = u_des;
        u.f[2].x += 3.0;
        let once = running_cost(&x, &x_des, &u, &w, &p);
        x.p.x += 0.1;
        u.f[2].x += 3.0;
        let twice = running_cost(&x, &x_des, &u, &w, &p);
        assert!((twice - 4.0 * once).abs() < 1e-12);
    }

    #[test]
    fn q_value_examples() {
        let p = params();
        let x_des = BodyState::standing(0.27);
        let w = CriticWeights::uniform(3.0);
        assert!(q_value(&x_des, &x_des, &u_desired(&p), &w, &p).abs() < 1e-20);
        let mut x = x_des;
        x.theta.y = 0.4;
        assert_eq!(q_value(&x, &x_des, &Action::zero(), &CriticWeights::zeros(), &p), 0.0);

        let mut w = CriticWeights::zeros();
        w.0[4] = 7.0;
        let mut x = x_des;
        x.theta.y = 1.0;
        assert!((q_value(&x, &x_des, &u_desired(&p), &w, &p) - 7.0).abs() < 1e-12);

        // Unit force-balance error in z.
        let mut w = CriticWeights::zeros();
        w.0[14] = 2.5;
        let mut u = u_desired(&p);
        u.f[0].z += 1.0;
        assert!((q_value(&x_des, &x_des, &u, &w, &p) - 2.5).abs() < 1e-9);
    }

    #[test]
    fn friction_row_examples() {
        let p = params();
        let rows = leg_row_values(&Vector3::new(0.0, 0.0, 10.0), &p);
        assert!(rows.iter().all(|r| *r <= 0.0));
        let rows = leg_row_values(&Vector3::new(4.0, 0.0, 10.0), &p);
        assert!((rows[0] - 1.0).abs() < 1e-12);
        let rows = leg_row_values(&Vector3::new(3.0, 0.0, 10.0), &p);
        assert!(rows[0].abs() < 1e-12);
        let all = ContactSchedule::ALL_STANCE;
        let mut u = u_desired(&p);
        u.f[0] = Vector3::new(3.0, 0.0, 10.0);
        assert!(check_action(&u, &all, &p).is_ok());
    }

    #[test]
    fn friction_matrix_matches_row_values() {
        let p = params();
        let rows = friction_rows(&p);
        let u = Action {
            f: [
                Vector3::new(1.0, -2.0, 30.0),
                Vector3::new(-4.0, 0.5, 5.0),
                Vector3::new(0.0, 0.0, -1.0),
                Vector3::new(0.1, 9.0, 130.0),
            ],
        };
        let dense = rows.d * u.to_vector() - rows.b;
        for leg in 0..NUM_LEGS {
            let per_leg = leg_row_values(&u.f[leg], &p);
            for k in 0..ROWS_PER_LEG {
                assert!((dense[ROWS_PER_LEG * leg + k] - per_leg[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn check_action_examples() {
        let p = params();
        let u = u_desired(&p);
        assert!(check_action(&u, &ContactSchedule::ALL_STANCE, &p).is_ok());
        let swing = ContactSchedule {
            stance: [false, true, true, true],
        };
        assert_eq!(
            check_action(&u, &swing, &p),
            Feasibility::Violated(vec![Violation::SwingForce { leg: 0 }])
        );
        let mut pulling = u;
        pulling.f[0] = Vector3::new(0.0, 0.0, -1.0);
        match check_action(&pulling, &ContactSchedule::ALL_STANCE, &p) {
            Feasibility::Violated(v) => assert!(v.contains(&Violation::Row { row: 4, excess: 1.0 })),
            Feasibility::Ok => panic!("pulling force accepted"),
        }
    }

    #[test]
    fn pyramid_projection_known_points() {
        // Inside: unchanged.
        assert_eq!(project_pyramid(1.0, -1.0, 10.0, 0.3, 0.3, 100.0), (1.0, -1.0, 10.0));
        // Below the apex: projects to the origin.
        let (x, y, t) = project_pyramid(0.0, 0.0, -5.0, 0.3, 0.3, 100.0);
        assert_eq!((x, y, t), (0.0, 0.0, 0.0));
        // Above the cap.
        let (_, _, t) = project_pyramid(0.0, 0.0, 150.0, 0.3, 0.3, 120.0);
        assert_eq!(t, 120.0);
        // Onto one face: (4, 0, 10) with slope 0.3, the face normal is (1, 0, −0.3)/√1.09.
        let (x, y, t) = project_pyramid(4.0, 0.0, 10.0, 0.3, 0.3, 100.0);
        let shift = 1.0 / 1.09;
        assert!((x - (4.0 - shift)).abs() < 1e-12);
        assert!((t - (10.0 + 0.3 * shift)).abs() < 1e-12);
        assert_eq!(y, 0.0);
    }

    proptest! {
        #[test]
        fn cone_feasibility_is_scale_invariant(
            fx in -50.0..50.0f64, fy in -50.0..50.0f64, fz in 0.0..100.0f64, scale in 0.0..10.0f64
        ) {
            let p = RobotParams { fz_max: f64::INFINITY, ..params() };
            let f = Vector3::new(fx, fy, fz);
            let ok = |f: &Vector3<f64>| leg_row_values(f, &p)[..5].iter().all(|r| *r <= 0.0);
            if ok(&f) {
                prop_assert!(ok(&(f * scale)));
            }
        }

        #[test]
        fn q_value_is_linear_in_weights(
            seed in proptest::collection::vec(-1.0..1.0f64, 12 + 12 + 30),
            alpha in 0.0..5.0f64, beta in 0.0..5.0f64,
        ) {
            let p = params();
            let x_des = BodyState::standing(0.27);
            let x = BodyState::from_vector(&(x_des.to_vector() + SVector::<f64, 12>::from_column_slice(&seed[..12]) * 0.2));
            let u = Action::from_vector(&(u_desired(&p).to_vector() + SVector::<f64, 12>::from_column_slice(&seed[12..24]) * 10.0));
            let w1 = CriticWeights(QVector::from_iterator(seed[24..39].iter().map(|v| v.abs())));
            let w2 = CriticWeights(QVector::from_iterator(seed[39..54].iter().map(|v| v.abs())));
            let combined = CriticWeights(w1.0 * alpha + w2.0 * beta);
            let lhs = q_value(&x, &x_des, &u, &combined, &p);
            let rhs = alpha * q_value(&x, &x_des, &u, &w1, &p) + beta * q_value(&x, &x_des, &u, &w2, &p);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            prop_assert!(lhs >= 0.0);
            prop_assert!(running_cost(&x, &x_des, &u, &CostWeights::default(), &p) >= 0.0);
        }

        #[test]
        fn pyramid_projection_is_optimal(
            a in -60.0..60.0f64, b in -60.0..60.0f64, c in -40.0..160.0f64,
            sx in 0.05..3.0f64, sy in 0.05..3.0f64,
            probes in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.0..1.0f64), 50),
        ) {
            let t_max = 120.0;
            let (x, y, t) = project_pyramid(a, b, c, sx, sy, t_max);
            prop_assert!(x.abs() <= sx * t * (1.0 + 1e-15) && y.abs() <= sy * t * (1.0 + 1e-15));
            prop_assert!((0.0..=t_max).contains(&t));
            let dist = |x: f64, y: f64, t: f64| (x - a).powi(2) + (y - b).powi(2) + (t - c).powi(2);
            let best = dist(x, y, t);
            // Random feasible points are never closer.
            for (px, py, pt) in probes {
                let tt = pt * t_max;
                prop_assert!(dist(px * sx * tt, py * sy * tt, tt) >= best - 1e-9 * (1.0 + best));
            }
        }
    }
}
