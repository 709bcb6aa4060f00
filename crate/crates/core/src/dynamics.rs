//! Single-rigid-body model of the robot trunk.
//!
//! The state is `x = [p, Θ, v, ω_B]` with Θ = (roll, pitch, yaw) in the ZYX
//! convention, `R = R_z(ψ)·R_y(θ)·R_x(φ)` mapping body to world. Foot forces
//! and levers are expressed in the world frame; the net torque is rotated
//! into the body frame before the Euler equation is applied:
//!
//! ```text
//! d/dt p   = v
//! d/dt Θ   = J⁻¹(Θ) ω_B
//! d/dt v   = Σ fᵢ / m − g
//! d/dt ω_B = 𝓘_B⁻¹ (Rᵀ Σ rᵢ × fᵢ − ω_B × 𝓘_B ω_B)
//! ```
//!
//! Leg dynamics are neglected; foot positions and contact flags are inputs.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 12;
pub const ACTION_DIM: usize = 12;
pub const NUM_LEGS: usize = 4;

/// Pitch guard: the Euler-rate map is rejected when `|cos θ| <= PITCH_GUARD`.
pub const PITCH_GUARD: f64 = 1e-3;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type ActionVector = SVector<f64, ACTION_DIM>;
pub type StateJacobian = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type InputJacobian = SMatrix<f64, STATE_DIM, ACTION_DIM>;

/// Leg order used throughout: front-left, front-right, rear-left, rear-right.
pub const LEG_NAMES: [&str; NUM_LEGS] = ["fl", "fr", "rl", "rr"];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyState {
    /// World position [m].
    pub p: Vector3<f64>,
    /// Roll, pitch, yaw [rad].
    pub theta: Vector3<f64>,
    /// World linear velocity [m/s].
    pub v: Vector3<f64>,
    /// Body-frame angular velocity [rad/s].
    pub omega_b: Vector3<f64>,
}

impl BodyState {
    pub fn standing(height: f64) -> Self {
        Self {
            p: Vector3::new(0.0, 0.0, height),
            ..Self::default()
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut out = StateVector::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&self.p);
        out.fixed_rows_mut::<3>(3).copy_from(&self.theta);
        out.fixed_rows_mut::<3>(6).copy_from(&self.v);
        out.fixed_rows_mut::<3>(9).copy_from(&self.omega_b);
        out
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            p: x.fixed_rows::<3>(0).into_owned(),
            theta: x.fixed_rows::<3>(3).into_owned(),
            v: x.fixed_rows::<3>(6).into_owned(),
            omega_b: x.fixed_rows::<3>(9).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }

    /// Checks finiteness and the pitch guard.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite("body state"));
        }
        check_pitch(self.theta.y)
    }
}

/// Four world-frame ground reaction forces [N].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub f: [Vector3<f64>; NUM_LEGS],
}

impl Action {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Flattened leg-major: `[f1x, f1y, f1z, f2x, ...]`.
    pub fn to_vector(&self) -> ActionVector {
        let mut out = ActionVector::zeros();
        for (leg, f) in self.f.iter().enumerate() {
            out.fixed_rows_mut::<3>(3 * leg).copy_from(f);
        }
        out
    }

    pub fn from_vector(u: &ActionVector) -> Self {
        let mut f = [Vector3::zeros(); NUM_LEGS];
        for (leg, slot) in f.iter_mut().enumerate() {
            *slot = u.fixed_rows::<3>(3 * leg).into_owned();
        }
        Self { f }
    }

    pub fn total_force(&self) -> Vector3<f64> {
        self.f.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.f.iter().all(|f| f.iter().all(|c| c.is_finite()))
    }
}

/// World-frame vectors from the body origin to each foot contact [m].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FootLevers {
    pub r: [Vector3<f64>; NUM_LEGS],
}

impl FootLevers {
    /// Symmetric stance: `(±a, ±b, −h)` in leg order FL, FR, RL, RR.
    pub fn symmetric(a: f64, b: f64, h: f64) -> Self {
        Self {
            r: [
                Vector3::new(a, b, -h),
                Vector3::new(a, -b, -h),
                Vector3::new(-a, b, -h),
                Vector3::new(-a, -b, -h),
            ],
        }
    }

    pub fn torque(&self, u: &Action) -> Vector3<f64> {
        self.r.iter().zip(u.f.iter()).map(|(r, f)| r.cross(f)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotParams {
    /// Trunk mass [kg].
    pub mass: f64,
    /// Body-frame inertia, row-major, symmetric positive-definite [kg·m²].
    pub inertia_b: [[f64; 3]; 3],
    /// Gravitational acceleration, pointing up; the model subtracts it [m/s²].
    pub gravity: [f64; 3],
    /// Friction coefficient of the linearized cone.
    pub mu: f64,
    /// Per-leg vertical force cap [N].
    pub fz_max: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            mass: 12.0,
            inertia_b: [[0.017, 0.0, 0.0], [0.0, 0.057, 0.0], [0.0, 0.0, 0.065]],
            gravity: [0.0, 0.0, 9.81],
            mu: 0.3,
            fz_max: 120.0,
        }
    }
}

impl RobotParams {
    pub fn inertia(&self) -> Matrix3<f64> {
        let i = &self.inertia_b;
        Matrix3::new(
            i[0][0], i[0][1], i[0][2], i[1][0], i[1][1], i[1][2], i[2][0], i[2][1], i[2][2],
        )
    }

    /// Inverse inertia; falls back to NaN entries when the tensor is singular
    /// (rejected earlier by [`RobotParams::validate`]).
    pub fn inertia_inv(&self) -> Matrix3<f64> {
        self.inertia()
            .try_inverse()
            .unwrap_or_else(|| Matrix3::from_element(f64::NAN))
    }

    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    /// Total weight `m·‖g‖` [N].
    pub fn weight(&self) -> f64 {
        self.mass * self.gravity().norm()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.mass.is_finite() && self.mass > 0.0) {
            out.push(format!("robot.mass must be > 0 (got {})", self.mass));
        }
        let inertia = self.inertia();
        let finite = inertia.iter().all(|c| c.is_finite());
        let symmetric = finite && (inertia - inertia.transpose()).amax() <= 1e-12 * inertia.amax();
        if !(symmetric && inertia.cholesky().is_some()) {
            out.push(format!(
                "robot.inertia_b must be symmetric positive-definite (got {:?})",
                self.inertia_b
            ));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            out.push("robot.gravity must be finite".to_string());
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            out.push(format!("robot.mu must be > 0 (got {})", self.mu));
        }
        let quarter = self.weight() / 4.0;
        if !(self.fz_max.is_finite() && self.fz_max > quarter) {
            out.push(format!(
                "robot.fz_max must exceed m*|g|/4 = {quarter} (got {})",
                self.fz_max
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidParameter(v)),
        }
    }
}

fn check_pitch(pitch: f64) -> Result<()> {
    if pitch.cos().abs() <= PITCH_GUARD || !pitch.is_finite() {
        Err(Error::Singularity {
            pitch,
            guard: PITCH_GUARD,
        })
    } else {
        Ok(())
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn d_rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn d_rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn d_rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

/// Body-to-world rotation `R = R_z(ψ)·R_y(θ)·R_x(φ)`.
pub fn euler_to_rotation(theta: &Vector3<f64>) -> Result<Matrix3<f64>> {
    check_pitch(theta.y)?;
    Ok(rotation_unchecked(theta))
}

/// Same as [`euler_to_rotation`] without the pitch guard; the rotation itself
/// is regular everywhere.
pub(crate) fn rotation_unchecked(theta: &Vector3<f64>) -> Matrix3<f64> {
    rot_z(theta.z) * rot_y(theta.y) * rot_x(theta.x)
}

/// The map `J⁻¹(Θ)` with `dΘ/dt = J⁻¹(Θ)·ω_B` for the ZYX convention.
pub fn euler_rate_matrix_inverse(theta: &Vector3<f64>) -> Result<Matrix3<f64>> {
    check_pitch(theta.y)?;
    let (sr, cr) = theta.x.sin_cos();
    let (sp, cp) = theta.y.sin_cos();
    let tp = sp / cp;
    Ok(Matrix3::new(
        1.0,
        sr * tp,
        cr * tp,
        0.0,
        cr,
        -sr,
        0.0,
        sr / cp,
        cr / cp,
    ))
}

/// Continuous-time state derivative.
pub fn dynamics(
    x: &BodyState,
    levers: &FootLevers,
    u: &Action,
    params: &RobotParams,
) -> Result<StateVector> {
    let rot = euler_to_rotation(&x.theta)?;
    let rate = euler_rate_matrix_inverse(&x.theta)?;
    let inertia = params.inertia();

    let torque_b = rot.transpose() * levers.torque(u);
    let gyro = x.omega_b.cross(&(inertia * x.omega_b));
    let omega_dot = params.inertia_inv() * (torque_b - gyro);

    let mut out = StateVector::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&x.v);
    out.fixed_rows_mut::<3>(3).copy_from(&(rate * x.omega_b));
    out.fixed_rows_mut::<3>(6)
        .copy_from(&(u.total_force() / params.mass - params.gravity()));
    out.fixed_rows_mut::<3>(9).copy_from(&omega_dot);
    Ok(out)
}

fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Analytic Jacobians `(∂f/∂x, ∂f/∂u)` of [`dynamics`], with `u` flattened
/// leg-major as in [`Action::to_vector`].
pub fn dynamics_jacobians(
    x: &BodyState,
    levers: &FootLevers,
    u: &Action,
    params: &RobotParams,
) -> Result<(StateJacobian, InputJacobian)> {
    check_pitch(x.theta.y)?;
    let (roll, pitch, yaw) = (x.theta.x, x.theta.y, x.theta.z);
    let (rx, ry, rz) = (rot_x(roll), rot_y(pitch), rot_z(yaw));
    let rot = rz * ry * rx;
    let inertia = params.inertia();
    let inertia_inv = params.inertia_inv();
    let torque_w = levers.torque(u);
    let w = x.omega_b;

    let mut a = StateJacobian::zeros();
    // dp/dt = v
    a.fixed_view_mut::<3, 3>(0, 6).copy_from(&Matrix3::identity());

    // dΘ/dt = J⁻¹(Θ) ω
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let tp = sp / cp;
    let sec2 = 1.0 / (cp * cp);
    let d_rate_roll = Matrix3::new(
        0.0,
        cr * tp,
        -sr * tp,
        0.0,
        -sr,
        -cr,
        0.0,
        cr / cp,
        -sr / cp,
    );
    let d_rate_pitch = Matrix3::new(
        0.0,
        sr * sec2,
        cr * sec2,
        0.0,
        0.0,
        0.0,
        0.0,
        sr * sp * sec2,
        cr * sp * sec2,
    );
    a.fixed_view_mut::<3, 1>(3, 3).copy_from(&(d_rate_roll * w));
    a.fixed_view_mut::<3, 1>(3, 4).copy_from(&(d_rate_pitch * w));
    a.fixed_view_mut::<3, 3>(3, 9)
        .copy_from(&euler_rate_matrix_inverse(&x.theta)?);

    // dω/dt = 𝓘⁻¹ (Rᵀ τ − ω × 𝓘ω)
    let d_rot = [rz * ry * d_rot_x(roll), rz * d_rot_y(pitch) * rx, d_rot_z(yaw) * ry * rx];
    for (k, dr) in d_rot.iter().enumerate() {
        a.fixed_view_mut::<3, 1>(9, 3 + k)
            .copy_from(&(inertia_inv * (dr.transpose() * torque_w)));
    }
    let d_gyro = skew(&w) * inertia - skew(&(inertia * w));
    a.fixed_view_mut::<3, 3>(9, 9).copy_from(&(-inertia_inv * d_gyro));

    let mut b = InputJacobian::zeros();
    let lin = Matrix3::identity() / params.mass;
    let ang = inertia_inv * rot.transpose();
    for (leg, r) in levers.r.iter().enumerate() {
        b.fixed_view_mut::<3, 3>(6, 3 * leg).copy_from(&lin);
        b.fixed_view_mut::<3, 3>(9, 3 * leg).copy_from(&(ang * skew(r)));
    }
    Ok((a, b))
}

/// One explicit Euler step `x + δ·f(x, ϑ, u)`.
pub fn predict_euler(
    delta: f64,
    x: &BodyState,
    levers: &FootLevers,
    u: &Action,
    params: &RobotParams,
) -> Result<BodyState> {
    let xdot = dynamics(x, levers, u, params)?;
    Ok(BodyState::from_vector(&(x.to_vector() + xdot * delta)))
}

/// Classical RK4 over `substeps` equal sub-intervals, with the action and
/// levers held constant over `delta`.
pub fn integrate_plant(
    delta: f64,
    substeps: usize,
    x: &BodyState,
    levers: &FootLevers,
    u: &Action,
    params: &RobotParams,
) -> Result<BodyState> {
    if substeps == 0 {
        return Err(Error::InvalidParameter("substeps must be >= 1".into()));
    }
    let h = delta / substeps as f64;
    let f = |s: &StateVector| dynamics(&BodyState::from_vector(s), levers, u, params);
    let mut s = x.to_vector();
    for _ in 0..substeps {
        let k1 = f(&s)?;
        let k2 = f(&(s + k1 * (h / 2.0)))?;
        let k3 = f(&(s + k2 * (h / 2.0)))?;
        let k4 = f(&(s + k3 * h))?;
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(BodyState::from_vector(&s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};

    fn elementary_oracle(theta: &Vector3<f64>) -> Matrix3<f64> {
        let rx = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::x()), theta.x);
        let ry = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::y()), theta.y);
        let rz = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::z()), theta.z);
        (rz * ry * rx).into_inner()
    }

    #[test]
    fn rotation_zero_and_yaw() {
        let r = euler_to_rotation(&Vector3::zeros()).unwrap();
        assert_eq!(r, Matrix3::identity());
        let r = euler_to_rotation(&Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2)).unwrap();
        assert!((r * Vector3::x() - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn rotation_matches_elementary_product() {
        let theta = Vector3::new(0.1, 0.2, 0.3);
        let r = euler_to_rotation(&theta).unwrap();
        assert!((r - elementary_oracle(&theta)).amax() < 1e-14);
        assert!((r * r.transpose() - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn rate_map_identity_at_zero_and_guarded() {
        assert_eq!(
            euler_rate_matrix_inverse(&Vector3::zeros()).unwrap(),
            Matrix3::identity()
        );
        let near = Vector3::new(0.0, std::f64::consts::FRAC_PI_2 - 1e-4, 0.0);
        assert!(matches!(
            euler_rate_matrix_inverse(&near),
            Err(Error::Singularity { .. })
        ));
        assert!(euler_to_rotation(&near).is_err());
    }

    #[test]
    fn rate_map_matches_finite_difference_of_rotation() {
        // Integrate Ṙ = R [ω_B]× exactly over a tiny step, then read back Θ.
        let theta = Vector3::new(0.1, 0.2, 0.3);
        let omega = Vector3::new(0.5, -0.2, 0.1);
        let h = 1e-6;
        let r0 = elementary_oracle(&theta);
        let step = Rotation3::from_scaled_axis(omega * h).into_inner();
        let r1 = r0 * step;
        let (roll, pitch, yaw) = Rotation3::from_matrix_unchecked(r1).euler_angles();
        let fd = (Vector3::new(roll, pitch, yaw) - theta) / h;
        let analytic = euler_rate_matrix_inverse(&theta).unwrap() * omega;
        assert!((fd - analytic).norm() / analytic.norm() < 1e-4);
    }

    #[test]
    fn standing_equilibrium_is_stationary() {
        let params = RobotParams::default();
        let x = BodyState::standing(0.27);
        let levers = FootLevers::symmetric(0.18, 0.13, 0.27);
        let fz = params.mass * 9.81 / 4.0;
        let u = Action {
            f: [Vector3::new(0.0, 0.0, fz); 4],
        };
        let xdot = dynamics(&x, &levers, &u, &params).unwrap();
        assert!(xdot.amax() < 1e-12);
    }

    #[test]
    fn free_fall_derivative() {
        let params = RobotParams::default();
        let x = BodyState::standing(0.27);
        let xdot = dynamics(&x, &FootLevers::symmetric(0.18, 0.13, 0.27), &Action::zero(), &params)
            .unwrap();
        let mut expected = StateVector::zeros();
        expected[8] = -9.81;
        assert_eq!(xdot, expected);
    }

    #[test]
    fn single_leg_torque_matches_direct_solve() {
        let params = RobotParams::default();
        let x = BodyState::standing(0.27);
        let mut levers = FootLevers::default();
        levers.r[0] = Vector3::new(0.2, 0.1, -0.3);
        let mut u = Action::zero();
        u.f[0] = Vector3::new(0.0, 0.0, 40.0);
        let xdot = dynamics(&x, &levers, &u, &params).unwrap();
        // r × f by hand: (0.1·40 − 0, 0 − 0.2·40, 0) = (4, −8, 0); R = I.
        let tau = Vector3::new(4.0, -8.0, 0.0);
        let expected = params.inertia().lu().solve(&tau).unwrap();
        assert!((xdot.fixed_rows::<3>(9) - expected).norm() < 1e-12);
    }

    #[test]
    fn euler_step_examples() {
        let params = RobotParams::default();
        let x = BodyState::standing(0.27);
        let levers = FootLevers::symmetric(0.18, 0.13, 0.27);
        let same = predict_euler(0.0, &x, &levers, &Action::zero(), &params).unwrap();
        assert_eq!(same, x);
        let next = predict_euler(0.03, &x, &levers, &Action::zero(), &params).unwrap();
        assert!((next.v.z + 0.2943).abs() < 1e-12);
        assert_eq!(next.p, x.p);
    }

    #[test]
    fn rk4_free_fall_is_exact() {
        let params = RobotParams::default();
        let x = BodyState::standing(0.27);
        let levers = FootLevers::symmetric(0.18, 0.13, 0.27);
        let next = integrate_plant(0.03, 10, &x, &levers, &Action::zero(), &params).unwrap();
        assert!((x.p.z - next.p.z - 0.5 * 9.81 * 0.03 * 0.03).abs() < 1e-9);
        assert!(integrate_plant(0.03, 0, &x, &levers, &Action::zero(), &params).is_err());
    }

    #[test]
    fn jacobians_match_central_differences() {
        let params = RobotParams::default();
        let x = BodyState {
            p: Vector3::new(0.1, -0.2, 0.25),
            theta: Vector3::new(0.15, -0.2, 0.4),
            v: Vector3::new(0.3, -0.1, 0.05),
            omega_b: Vector3::new(0.4, -0.6, 0.9),
        };
        let levers = FootLevers::symmetric(0.18, 0.13, 0.27);
        let u = Action {
            f: [
                Vector3::new(2.0, -1.0, 30.0),
                Vector3::new(-3.0, 1.5, 25.0),
                Vector3::new(1.0, 0.5, 35.0),
                Vector3::new(0.0, -2.0, 28.0),
            ],
        };
        let (a, b) = dynamics_jacobians(&x, &levers, &u, &params).unwrap();
        let h = 1e-6;
        let xv = x.to_vector();
        for j in 0..STATE_DIM {
            let mut xp = xv;
            let mut xm = xv;
            xp[j] += h;
            xm[j] -= h;
            let fp = dynamics(&BodyState::from_vector(&xp), &levers, &u, &params).unwrap();
            let fm = dynamics(&BodyState::from_vector(&xm), &levers, &u, &params).unwrap();
            let col = (fp - fm) / (2.0 * h);
            assert!((col - a.column(j)).amax() < 1e-6, "state column {j}");
        }
        let uv = u.to_vector();
        for j in 0..ACTION_DIM {
            let mut up = uv;
            let mut um = uv;
            up[j] += h;
            um[j] -= h;
            let fp = dynamics(&x, &levers, &Action::from_vector(&up), &params).unwrap();
            let fm = dynamics(&x, &levers, &Action::from_vector(&um), &params).unwrap();
            let col = (fp - fm) / (2.0 * h);
            assert!((col - b.column(j)).amax() < 1e-6, "input column {j}");
        }
    }
}
