//! Receding-horizon force optimization for the MPC and RQL controllers.
//!
//! Both objectives are sums of weighted squares of linear functions of the
//! predicted states and actions, so the solver is a Gauss–Newton SQP: each
//! iteration linearizes the Euler rollout, builds the Gauss–Newton model and
//! minimizes it over the product of per-leg friction pyramids with an
//! interior-point QP.
//! Swing-leg forces are not decision variables at all. A backtracking line
//! search on the true objective keeps every accepted iterate feasible and
//! strictly improving.

use nalgebra::{Const, DMatrix, DVector, Dyn, Matrix3, OMatrix, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::cost::{
    clamp_to_feasible, project_pyramid, q_input, q_value, running_cost, u_desired, CostWeights,
    CriticWeights, Q_DIM, ROWS_PER_LEG,
};
use crate::critic::{push_sample, CriticState};
use crate::dynamics::{
    dynamics_jacobians, predict_euler, Action, BodyState, RobotParams, StateJacobian, NUM_LEGS,
    STATE_DIM,
};
use crate::error::{Error, Result};
use crate::gait::{ContactSchedule, ReferencePlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mpc,
    Rql,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Mpc => "mpc",
            Mode::Rql => "rql",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mpc" => Ok(Mode::Mpc),
            "rql" => Ok(Mode::Rql),
            other => Err(Error::InvalidParameter(format!("unknown controller mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Prediction horizon `N` in steps.
    pub horizon: usize,
    /// Prediction step `δ` [s]; also the control period.
    pub delta: f64,
    /// Discount `γ`.
    pub gamma: f64,
    pub max_iters: usize,
    /// Tolerance on the projected-gradient norm.
    pub tol: f64,
    pub mode: Mode,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            delta: 0.03,
            gamma: 1.0,
            max_iters: 100,
            tol: 1e-6,
            mode: Mode::Mpc,
        }
    }
}

impl ControllerConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.horizon < 1 {
            out.push(format!("controller.horizon must be >= 1 (got {})", self.horizon));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            out.push(format!("controller.delta must be > 0 (got {})", self.delta));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            out.push(format!("controller.gamma must lie in (0, 1] (got {})", self.gamma));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            out.push(format!("controller.tol must be > 0 (got {})", self.tol));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective<'a> {
    Mpc,
    /// Running costs over the first `N−1` steps plus the discounted Q̂ tail.
    Rql(&'a CriticWeights),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Projected-gradient norm below tolerance.
    Converged,
    /// No further decrease could be found; best point returned.
    Stalled,
    /// Iteration cap reached; best point returned.
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSolution {
    pub actions: Vec<Action>,
    /// `N+1` states starting with the initial state.
    pub predicted: Vec<BodyState>,
    pub objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Projected-gradient norm at the returned point.
    pub stationarity: f64,
}

/// Euler rollout: `predicted[i+1] = Φ(δ, predicted[i], levers[i], actions[i])`.
pub fn rollout(
    x0: &BodyState,
    plan: &ReferencePlan,
    actions: &[Action],
    delta: f64,
    params: &RobotParams,
) -> Result<Vec<BodyState>> {
    let mut out = Vec::with_capacity(actions.len() + 1);
    out.push(*x0);
    for (i, u) in actions.iter().enumerate() {
        let next = predict_euler(delta, &out[i], &plan.levers[i], u, params)?;
        out.push(next);
    }
    Ok(out)
}

fn check_lengths(plan: &ReferencePlan, actions: &[Action], horizon: usize) -> Result<()> {
    if plan.len() != horizon || actions.len() != horizon {
        return Err(Error::HorizonMismatch {
            plan: plan.len().min(actions.len()),
            horizon,
        });
    }
    Ok(())
}

/// `Σ_{i=1}^{N} γ^{i−1} r(x̂ᵢ, x_des,ᵢ, uᵢ)`.
pub fn rollout_cost_mpc(
    x0: &BodyState,
    plan: &ReferencePlan,
    actions: &[Action],
    cfg: &ControllerConfig,
    weights: &CostWeights,
    params: &RobotParams,
) -> Result<f64> {
    check_lengths(plan, actions, cfg.horizon)?;
    let predicted = rollout(x0, plan, actions, cfg.delta, params)?;
    let mut total = 0.0;
    let mut discount = 1.0;
    for i in 0..cfg.horizon {
        total += discount * running_cost(&predicted[i + 1], &plan.x_des[i], &actions[i], weights, params);
        discount *= cfg.gamma;
    }
    Ok(total)
}

/// `Σ_{i=1}^{N−1} γ^{i−1} r(x̂ᵢ, x_des,ᵢ, uᵢ) + γ^{N−1} Q̂(x̂_N, x_des,N, u_N; w)`.
pub fn rollout_cost_rql(
    x0: &BodyState,
    plan: &ReferencePlan,
    actions: &[Action],
    w: &CriticWeights,
    cfg: &ControllerConfig,
    weights: &CostWeights,
    params: &RobotParams,
) -> Result<f64> {
    check_lengths(plan, actions, cfg.horizon)?;
    let n = cfg.horizon;
    let predicted = rollout(x0, plan, actions, cfg.delta, params)?;
    let mut total = 0.0;
    let mut discount = 1.0;
    for i in 0..n - 1 {
        total += discount * running_cost(&predicted[i + 1], &plan.x_des[i], &actions[i], weights, params);
        discount *= cfg.gamma;
    }
    Ok(total + discount * q_value(&predicted[n], &plan.x_des[n - 1], &actions[n - 1], w, params))
}

pub fn objective_value(
    x0: &BodyState,
    plan: &ReferencePlan,
    actions: &[Action],
    objective: Objective<'_>,
    cfg: &ControllerConfig,
    weights: &CostWeights,
    params: &RobotParams,
) -> Result<f64> {
    match objective {
        Objective::Mpc => rollout_cost_mpc(x0, plan, actions, cfg, weights, params),
        Objective::Rql(w) => rollout_cost_rql(x0, plan, actions, w, cfg, weights, params),
    }
}

/// Static load-sharing guess: the weight split evenly over stance legs.
pub fn default_guess(contacts: &ContactSchedule, params: &RobotParams) -> Action {
    let stance = contacts.num_stance().max(1) as f64;
    let fz = (params.weight() / stance).min(params.fz_max);
    let mut u = Action::zero();
    for leg in 0..NUM_LEGS {
        if contacts.stance[leg] {
            u.f[leg] = Vector3::new(0.0, 0.0, fz);
        }
    }
    u
}

/// Decision variables: three force components of every stance leg, ordered
/// step-major then leg.
struct Layout {
    legs: Vec<(usize, usize)>,
    /// First variable of each step.
    step_start: Vec<usize>,
}

impl Layout {
    fn new(plan: &ReferencePlan) -> Result<Self> {
        let mut legs = Vec::new();
        let mut step_start = Vec::with_capacity(plan.len() + 1);
        for (step, c) in plan.contacts.iter().enumerate() {
            if c.num_stance() == 0 {
                return Err(Error::NoStanceLegs { step });
            }
            step_start.push(3 * legs.len());
            for leg in 0..NUM_LEGS {
                if c.stance[leg] {
                    legs.push((step, leg));
                }
            }
        }
        step_start.push(3 * legs.len());
        Ok(Self { legs, step_start })
    }

    fn dim(&self) -> usize {
        3 * self.legs.len()
    }

    fn pack(&self, actions: &[Action]) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        for (k, &(step, leg)) in self.legs.iter().enumerate() {
            for c in 0..3 {
                v[3 * k + c] = actions[step].f[leg][c];
            }
        }
        v
    }

    fn unpack(&self, v: &DVector<f64>, horizon: usize) -> Vec<Action> {
        let mut actions = vec![Action::zero(); horizon];
        for (k, &(step, leg)) in self.legs.iter().enumerate() {
            actions[step].f[leg] = Vector3::new(v[3 * k], v[3 * k + 1], v[3 * k + 2]);
        }
        actions
    }
}

/// Gauss–Newton model of the objective at the current actions: gradient
/// and `2·JᵀJ`.
fn linearize(
    x0: &BodyState,
    plan: &ReferencePlan,
    actions: &[Action],
    objective: Objective<'_>,
    layout: &Layout,
    cfg: &ControllerConfig,
    weights: &CostWeights,
    params: &RobotParams,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = cfg.horizon;
    let dim = layout.dim();
    let running_steps = match objective {
        Objective::Mpc => n,
        Objective::Rql(_) => n - 1,
    };
    let u_des = u_desired(params);

    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    // Sensitivity of the current predicted state to every variable.
    let mut sens = OMatrix::<f64, Const<STATE_DIM>, Dyn>::zeros(dim);
    let mut x = *x0;
    let mut discount = 1.0;
    let eye = StateJacobian::identity();

    for i in 0..n {
        let (a_c, b_c) = dynamics_jacobians(&x, &plan.levers[i], &actions[i], params)?;
        let a_d = eye + a_c * cfg.delta;
        sens = a_d * sens;
        let (start, end) = (layout.step_start[i], layout.step_start[i + 1]);
        for col in start..end {
            let (_, leg) = layout.legs[col / 3];
            let input_col = 3 * leg + col % 3;
            let mut c = sens.column_mut(col);
            c.axpy(cfg.delta, &b_c.column(input_col), 1.0);
        }
        x = predict_euler(cfg.delta, &x, &plan.levers[i], &actions[i], params)?;

        let x_des = &plan.x_des[i];
        if i < running_steps {
            let e_x = x.to_vector() - x_des.to_vector();
            let mut weighted = sens.clone();
            for r in 0..STATE_DIM {
                let wr = 2.0 * discount * weights.p_x[r];
                weighted.row_mut(r).scale_mut(wr);
                grad.axpy(wr * e_x[r], &sens.row(r).transpose(), 1.0);
            }
            hess.gemm_tr(1.0, &sens, &weighted, 1.0);
            for col in start..end {
                let (_, leg) = layout.legs[col / 3];
                let comp = 3 * leg + col % 3;
                let wu = 2.0 * discount * weights.p_u[comp];
                grad[col] += wu * (actions[i].f[leg][col % 3] - u_des.f[leg][col % 3]);
                hess[(col, col)] += wu;
            }
        } else if let Objective::Rql(w) = objective {
            let z = q_input(&x, x_des, &actions[i], params);
            let mut jac = DMatrix::<f64>::zeros(Q_DIM, dim);
            jac.rows_mut(0, STATE_DIM).copy_from(&sens);
            for col in start..end {
                jac[(STATE_DIM + col % 3, col)] = 1.0;
            }
            let mut weighted = jac.clone();
            for r in 0..Q_DIM {
                let wr = 2.0 * discount * w.0[r];
                weighted.row_mut(r).scale_mut(wr);
                grad.axpy(wr * z[r], &jac.row(r).transpose(), 1.0);
            }
            hess.gemm_tr(1.0, &jac, &weighted, 1.0);
        }
        discount *= cfg.gamma;
    }
    Ok((grad, hess))
}

/// Analytic gradient of the objective with respect to every force
/// component (swing legs included), in the shape of the action sequence.
pub fn objective_gradient(
    x0: &BodyState,
    plan: &ReferencePlan,
    actions: &[Action],
    objective: Objective<'_>,
    cfg: &ControllerConfig,
    weights: &CostWeights,
    params: &RobotParams,
) -> Result<Vec<Action>> {
    check_lengths(plan, actions, cfg.horizon)?;
    let full = ReferencePlan {
        contacts: vec![ContactSchedule::ALL_STANCE; plan.len()],
        ..plan.clone()
    };
    let layout = Layout::new(&full)?;
    let (grad, _) = linearize(x0, &full, actions, objective, &layout, cfg, weights, params)?;
    Ok(layout.unpack(&grad, cfg.horizon))
}

/// Euclidean projection of packed variables onto the friction pyramids.
fn project_unscaled(v: &DVector<f64>, layout: &Layout, params: &RobotParams) -> DVector<f64> {
    let mut out = v.clone();
    for k in 0..layout.legs.len() {
        let (x, y, t) = project_pyramid(v[3 * k], v[3 * k + 1], v[3 * k + 2], params.mu, params.mu, params.fz_max);
        out[3 * k] = x;
        out[3 * k + 1] = y;
        out[3 * k + 2] = t;
    }
    out
}

const QP_MAX_ITERS: usize = 60;
const QP_TOL: f64 = 1e-11;

/// Friction pyramid rows of one leg, in the order of
/// [`crate::cost::friction_rows`].
fn leg_rows(mu: f64) -> SMatrix<f64, ROWS_PER_LEG, 3> {
    SMatrix::<f64, ROWS_PER_LEG, 3>::from_row_slice(&[
        1.0, 0.0, -mu, //
        -1.0, 0.0, -mu, //
        0.0, 1.0, -mu, //
        0.0, -1.0, -mu, //
        0.0, 0.0, -1.0, //
        0.0, 0.0, 1.0,
    ])
}

/// Minimizes `gᵀd + ½dᵀHd` over `u0 + d ∈ K` (product of friction pyramids)
/// with a Jacobi-scaled primal-dual interior-point method (Mehrotra
/// predictor-corrector). The pyramid rows are block diagonal per leg, so
/// every Newton system is `H` plus 3×3 blocks. Returns the new point; the
/// caller repairs it onto `K`.
fn solve_qp_step(
    hess: &DMatrix<f64>,
    grad: &DVector<f64>,
    u0: &DVector<f64>,
    layout: &Layout,
    params: &RobotParams,
) -> DVector<f64> {
    let dim = u0.len();
    let legs = layout.legs.len();
    let m = ROWS_PER_LEG * legs;
    let scale = DVector::from_iterator(dim, (0..dim).map(|j| 1.0 / hess[(j, j)].sqrt()));
    let mut p = hess.clone();
    for r in 0..dim {
        for c in 0..dim {
            p[(r, c)] *= scale[r] * scale[c];
        }
    }
    // Scaled form: ½ yᵀ P y + qᵀ y s.t. G_k y_k ≤ h_k with u = D·y.
    let q = (grad - hess * u0).component_mul(&scale);
    let base_rows = leg_rows(params.mu);
    let blocks: Vec<SMatrix<f64, ROWS_PER_LEG, 3>> = (0..legs)
        .map(|k| {
            let d = Matrix3::from_diagonal(&Vector3::new(scale[3 * k], scale[3 * k + 1], scale[3 * k + 2]));
            base_rows * d
        })
        .collect();
    let mut h = DVector::zeros(m);
    for k in 0..legs {
        h[ROWS_PER_LEG * k + 5] = params.fz_max;
    }
    let g_mul = |y: &DVector<f64>| {
        let mut out = DVector::zeros(m);
        for (k, blk) in blocks.iter().enumerate() {
            let v = blk * Vector3::new(y[3 * k], y[3 * k + 1], y[3 * k + 2]);
            out.rows_mut(ROWS_PER_LEG * k, ROWS_PER_LEG).copy_from(&v);
        }
        out
    };
    let gt_mul = |lam: &DVector<f64>| {
        let mut out = DVector::zeros(dim);
        for (k, blk) in blocks.iter().enumerate() {
            let v = blk.tr_mul(&lam.fixed_rows::<ROWS_PER_LEG>(ROWS_PER_LEG * k));
            out.fixed_rows_mut::<3>(3 * k).copy_from(&v);
        }
        out
    };

    let mut y = u0.component_div(&scale);
    let slack0 = &h - g_mul(&y);
    let floor = 1e-2 * (1.0 + slack0.amax());
    let mut s = slack0.map(|v| v.max(floor));
    let mut lam = DVector::from_element(m, 1.0);
    let data_scale = 1.0 + q.amax() + h.amax();

    for _ in 0..QP_MAX_ITERS {
        let r_d = &p * &y + &q + gt_mul(&lam);
        let r_p = g_mul(&y) + &s - &h;
        let mu = s.dot(&lam) / m as f64;
        if r_d.amax() <= QP_TOL * data_scale && r_p.amax() <= QP_TOL * data_scale && mu <= QP_TOL * QP_TOL * data_scale {
            break;
        }

        let w = lam.component_div(&s);
        let mut k_mat = p.clone();
        for (k, blk) in blocks.iter().enumerate() {
            let wk = SMatrix::<f64, ROWS_PER_LEG, ROWS_PER_LEG>::from_diagonal(&w.fixed_rows::<ROWS_PER_LEG>(ROWS_PER_LEG * k));
            let add = blk.transpose() * wk * blk;
            let mut view = k_mat.view_mut((3 * k, 3 * k), (3, 3));
            view += add;
        }
        let Some(chol) = k_mat.cholesky() else { break };

        // Newton direction for a complementarity target `r_c = s∘λ − σμ`.
        let direction = |r_c: &DVector<f64>| {
            let rhs = -&r_d + gt_mul(&(r_c - lam.component_mul(&r_p)).component_div(&s));
            let dy = chol.solve(&rhs);
            let ds = -&r_p - g_mul(&dy);
            let dlam = (-r_c - lam.component_mul(&ds)).component_div(&s);
            (dy, ds, dlam)
        };
        let max_step = |v: &DVector<f64>, dv: &DVector<f64>| {
            v.iter()
                .zip(dv.iter())
                .filter(|(_, d)| **d < 0.0)
                .map(|(x, d)| -x / d)
                .fold(1.0, f64::min)
        };

        let (_, ds_aff, dlam_aff) = direction(&s.component_mul(&lam));
        let a_aff = max_step(&s, &ds_aff).min(max_step(&lam, &dlam_aff));
        let mu_aff = (&s + &ds_aff * a_aff).dot(&(&lam + &dlam_aff * a_aff)) / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let r_c = s.component_mul(&lam) + ds_aff.component_mul(&dlam_aff)
            - DVector::from_element(m, sigma * mu);
        let (dy, ds, dlam) = direction(&r_c);
        let alpha = 0.995 * max_step(&s, &ds).min(max_step(&lam, &dlam));
        y += &dy * alpha;
        s += &ds * alpha;
        lam += &dlam * alpha;
    }
    y.component_mul(&scale)
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;

struct Evaluator<'a> {
    x0: &'a BodyState,
    plan: &'a ReferencePlan,
    objective: Objective<'a>,
    cfg: &'a ControllerConfig,
    weights: &'a CostWeights,
    params: &'a RobotParams,
    layout: &'a Layout,
}

impl Evaluator<'_> {
    /// Clamp-repaired actions and their objective; prediction failures count
    /// as an infinite objective.
    fn eval(&self, v: &DVector<f64>) -> (Vec<Action>, f64) {
        let actions: Vec<Action> = self
            .layout
            .unpack(v, self.cfg.horizon)
            .iter()
            .zip(&self.plan.contacts)
            .map(|(u, c)| clamp_to_feasible(u, c, self.params))
            .collect();
        let value = objective_value(self.x0, self.plan, &actions, self.objective, self.cfg, self.weights, self.params)
            .unwrap_or(f64::INFINITY);
        (actions, if value.is_nan() { f64::INFINITY } else { value })
    }
}

/// Minimizes the chosen objective over feasible action sequences.
///
/// The iterate starts at the warm start shifted by one step (last action
/// duplicated), or at the static load-sharing guess, repaired onto the
/// constraint set; every returned action passes [`crate::cost::check_action`].
pub fn solve_horizon(
    x0: &BodyState,
    plan: &ReferencePlan,
    objective: Objective<'_>,
    warm_start: Option<&HorizonSolution>,
    cfg: &ControllerConfig,
    weights: &CostWeights,
    params: &RobotParams,
) -> Result<HorizonSolution> {
    let n = cfg.horizon;
    if plan.len() != n || n == 0 {
        return Err(Error::HorizonMismatch { plan: plan.len(), horizon: n });
    }
    let layout = Layout::new(plan)?;
    let initial: Vec<Action> = match warm_start {
        Some(prev) => shift_warm_start(&prev.actions, plan, params),
        None => plan.contacts.iter().map(|c| default_guess(c, params)).collect(),
    };

    let eval = Evaluator {
        x0,
        plan,
        objective,
        cfg,
        weights,
        params,
        layout: &layout,
    };
    let (mut actions, mut value) = eval.eval(&layout.pack(&initial));
    if !value.is_finite() {
        // Surface the prediction error of the starting point.
        objective_value(x0, plan, &actions, objective, cfg, weights, params)?;
        return Err(Error::NonFinite("initial objective"));
    }

    let mut iterations = 0;
    let mut damping = 1e-9;
    let mut termination = Termination::MaxIters;
    let mut stationarity;
    loop {
        let v = layout.pack(&actions);
        let (grad, mut hess) = linearize(x0, plan, &actions, objective, &layout, cfg, weights, params)?;
        stationarity = (&v - project_unscaled(&(&v - &grad), &layout, params)).amax();
        if stationarity <= cfg.tol {
            termination = Termination::Converged;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
        iterations += 1;

        let diag_max = (0..layout.dim()).map(|j| hess[(j, j)]).fold(0.0, f64::max);
        let mu = damping * diag_max.max(1e-12) + 1e-14;
        for j in 0..layout.dim() {
            hess[(j, j)] += mu;
        }
        let target = solve_qp_step(&hess, &grad, &v, &layout, params);
        let step = &target - &v;
        let slope = grad.dot(&step);

        let mut accepted = None;
        if slope < 0.0 {
            let mut alpha = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let (cand, cand_value) = eval.eval(&(&v + &step * alpha));
                if cand_value <= value + ARMIJO * alpha * slope {
                    accepted = Some((cand, cand_value, alpha));
                    break;
                }
                alpha *= 0.5;
            }
        }
        if accepted.is_none() {
            // Projected-gradient fallback with a curvature-based first step.
            let mut alpha = 1.0 / (diag_max + mu);
            for _ in 0..MAX_BACKTRACKS {
                let trial = project_unscaled(&(&v - &grad * alpha), &layout, params);
                let (cand, cand_value) = eval.eval(&trial);
                let moved = (&layout.pack(&cand) - &v).norm_squared();
                if moved > 0.0 && cand_value <= value - ARMIJO * moved / alpha {
                    accepted = Some((cand, cand_value, 0.0));
                    break;
                }
                alpha *= 0.5;
            }
        }
        let Some((cand, cand_value, alpha)) = accepted else {
            termination = Termination::Stalled;
            break;
        };
        damping = if alpha == 1.0 {
            (damping / 4.0).max(1e-12)
        } else {
            (damping * 4.0).min(1.0)
        };
        let decrease = value - cand_value;
        actions = cand;
        value = cand_value;
        if decrease <= 1e-14 * value.abs() {
            let v = layout.pack(&actions);
            let (grad, _) = linearize(x0, plan, &actions, objective, &layout, cfg, weights, params)?;
            stationarity = (&v - project_unscaled(&(&v - &grad), &layout, params)).amax();
            termination = if stationarity <= cfg.tol {
                Termination::Converged
            } else {
                Termination::Stalled
            };
            break;
        }
    }

    let predicted = rollout(x0, plan, &actions, cfg.delta, params)?;
    Ok(HorizonSolution {
        actions,
        predicted,
        objective: value,
        iterations,
        termination,
        stationarity,
    })
}

/// Previous solution advanced by one step with the last action duplicated,
/// repaired onto the new schedules. Stance legs left without load (they were
/// in swing) get the static load-sharing force.
pub fn shift_warm_start(previous: &[Action], plan: &ReferencePlan, params: &RobotParams) -> Vec<Action> {
    let n = plan.len();
    (0..n)
        .map(|i| {
            let src = previous
                .get(i + 1)
                .or_else(|| previous.last())
                .copied()
                .unwrap_or_default();
            let contacts = &plan.contacts[i];
            let guess = default_guess(contacts, params);
            let mut u = src;
            for leg in 0..NUM_LEGS {
                if contacts.stance[leg] && u.f[leg] == Vector3::zeros() {
                    u.f[leg] = guess.f[leg];
                }
            }
            clamp_to_feasible(&u, contacts, params)
        })
        .collect()
}

/// What a controller step reports back to the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub action: Action,
    pub iterations: usize,
    pub objective: f64,
    pub termination: Termination,
    /// Critic weights used by the actor (RQL only).
    pub critic_weights: Option<CriticWeights>,
}

/// Warm start and the last applied sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControllerMemory {
    pub warm_start: Option<HorizonSolution>,
    /// `(x, x_des, u)` applied at the previous step, not yet in the buffer.
    pub pending: Option<(BodyState, BodyState, Action)>,
}

impl ControllerMemory {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// One step of the nominal controller.
pub fn mpc_step(
    x: &BodyState,
    plan: &ReferencePlan,
    memory: &mut ControllerMemory,
    cfg: &ControllerConfig,
    weights: &CostWeights,
    params: &RobotParams,
) -> Result<StepOutcome> {
    let sol = solve_horizon(x, plan, Objective::Mpc, memory.warm_start.as_ref(), cfg, weights, params)?;
    let outcome = StepOutcome {
        action: sol.actions[0],
        iterations: sol.iterations,
        objective: sol.objective,
        termination: sol.termination,
        critic_weights: None,
    };
    memory.pending = Some((*x, plan.current, sol.actions[0]));
    memory.warm_start = Some(sol);
    Ok(outcome)
}

/// One step of roll-out Q-learning: buffer the last transition, refit the
/// critic, then solve the actor with the refreshed terminal Q̂.
pub fn rql_step(
    x: &BodyState,
    plan: &ReferencePlan,
    critic: &mut CriticState,
    memory: &mut ControllerMemory,
    cfg: &ControllerConfig,
    weights: &CostWeights,
    params: &RobotParams,
) -> Result<StepOutcome> {
    if let Some((px, px_des, pu)) = memory.pending.take() {
        let r = running_cost(&px, &px_des, &pu, weights, params);
        push_sample(critic, px, px_des, pu, r);
    }
    let w = critic.update(params);
    let sol = solve_horizon(x, plan, Objective::Rql(&w), memory.warm_start.as_ref(), cfg, weights, params)?;
    let outcome = StepOutcome {
        action: sol.actions[0],
        iterations: sol.iterations,
        objective: sol.objective,
        termination: sol.termination,
        critic_weights: Some(w),
    };
    memory.pending = Some((*x, plan.current, sol.actions[0]));
    memory.warm_start = Some(sol);
    Ok(outcome)
}

/// A controller instance owned by one episode.
#[derive(Debug, Clone)]
pub enum Controller {
    Mpc { memory: ControllerMemory },
    Rql { memory: ControllerMemory, critic: CriticState },
}

impl Controller {
    pub fn mpc() -> Self {
        Controller::Mpc {
            memory: ControllerMemory::default(),
        }
    }

    pub fn rql(critic: CriticState) -> Self {
        Controller::Rql {
            memory: ControllerMemory::default(),
            critic,
        }
    }

    pub fn step(
        &mut self,
        x: &BodyState,
        plan: &ReferencePlan,
        cfg: &ControllerConfig,
        weights: &CostWeights,
        params: &RobotParams,
    ) -> Result<StepOutcome> {
        match self {
            Controller::Mpc { memory } => mpc_step(x, plan, memory, cfg, weights, params),
            Controller::Rql { memory, critic } => rql_step(x, plan, critic, memory, cfg, weights, params),
        }
    }

    pub fn critic(&self) -> Option<&CriticState> {
        match self {
            Controller::Mpc { .. } => None,
            Controller::Rql { critic, .. } => Some(critic),
        }
    }

    pub fn reset(&mut self) {
        match self {
            Controller::Mpc { memory } => memory.reset(),
            Controller::Rql { memory, critic } => {
                memory.reset();
                critic.reset();
            }
        }
    }
}
