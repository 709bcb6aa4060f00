//! Experience replay and the buffered temporal-difference critic.
//!
//! With `φ = z ⊙ z` the Q-function is linear in its weights, `Q̂ = φᵀw`, so
//! the buffered objective
//!
//! ```text
//! J(w) = ½ Σᵢ (φᵢᵀw − rᵢ − φᵢ₊₁ᵀw_prev)² + ½ λ ‖w − w_prev‖²
//! ```
//!
//! is a linear least-squares problem in `w`, solved under `w ≥ 0`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost::{q_features, q_value, CriticWeights, QVector, Q_DIM};
use crate::dynamics::{Action, BodyState, RobotParams};
use crate::error::{Error, Result};
use crate::nnls::nnls;

/// First-order tolerance of the weight solve, relative to `‖Aᵀb‖∞`.
pub const CRITIC_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticConfig {
    /// Replay capacity `M`.
    pub buffer_size: usize,
    /// Ridge weight `λ` pulling `w` toward `w_prev`.
    pub lambda_reg: f64,
    /// Every entry of the initial weight vector.
    pub initial_weight: f64,
    /// Keep the weights fixed at their initial value.
    pub frozen: bool,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            buffer_size: 500,
            lambda_reg: 1e-3,
            initial_weight: 1e-3,
            frozen: false,
        }
    }
}

impl CriticConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.buffer_size < 2 {
            out.push(format!(
                "critic.buffer_size must be >= 2 (got {})",
                self.buffer_size
            ));
        }
        if !(self.lambda_reg.is_finite() && self.lambda_reg >= 0.0) {
            out.push(format!(
                "critic.lambda_reg must be >= 0 (got {})",
                self.lambda_reg
            ));
        }
        if !(self.initial_weight.is_finite() && self.initial_weight >= 0.0) {
            out.push(format!(
                "critic.initial_weight must be >= 0 (got {})",
                self.initial_weight
            ));
        }
        out
    }
}

/// One control step: state, reference, applied action and its running cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: BodyState,
    pub x_des: BodyState,
    pub u: Action,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    samples: VecDeque<Sample>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            samples: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Oldest first.
    pub fn get(&self, i: usize) -> Option<&Sample> {
        self.samples.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    pub fn push(&mut self, sample: Sample) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticState {
    pub w_prev: CriticWeights,
    pub buffer: ReplayBuffer,
    pub lambda_reg: f64,
    pub frozen: bool,
}

impl CriticState {
    pub fn new(cfg: &CriticConfig) -> Self {
        Self {
            w_prev: CriticWeights::uniform(cfg.initial_weight),
            buffer: ReplayBuffer::new(cfg.buffer_size),
            lambda_reg: cfg.lambda_reg,
            frozen: cfg.frozen,
        }
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
    }

    /// Runs [`critic_update`] and stores the result as `w_prev`.
    pub fn update(&mut self, params: &RobotParams) -> CriticWeights {
        if !self.frozen {
            self.w_prev = critic_update(self, params);
        }
        self.w_prev
    }
}

pub fn push_sample(state: &mut CriticState, x: BodyState, x_des: BodyState, u: Action, r: f64) {
    state.buffer.push(Sample { x, x_des, u, r });
}

/// `e_i(w) = Q̂(sᵢ; w) − rᵢ − Q̂(sᵢ₊₁; w_prev)`.
pub fn td_error(i: usize, w: &CriticWeights, state: &CriticState, params: &RobotParams) -> Result<f64> {
    let len = state.buffer.len();
    let (Some(cur), Some(next)) = (state.buffer.get(i), state.buffer.get(i + 1)) else {
        return Err(Error::IndexOutOfRange { index: i + 1, len });
    };
    let q_cur = q_value(&cur.x, &cur.x_des, &cur.u, w, params);
    let q_next = q_value(&next.x, &next.x_des, &next.u, &state.w_prev, params);
    Ok(q_cur - cur.r - q_next)
}

/// Regularized buffered objective evaluated term by term through [`td_error`].
pub fn critic_objective(w: &CriticWeights, state: &CriticState, params: &RobotParams) -> f64 {
    let pairs = state.buffer.len().saturating_sub(1);
    let td: f64 = (0..pairs)
        .map(|i| td_error(i, w, state, params).map(|e| e * e).unwrap_or(0.0))
        .sum();
    0.5 * td + 0.5 * state.lambda_reg * (w.0 - state.w_prev.0).norm_squared()
}

/// Least-squares design `(Φ, y)` over consecutive buffer pairs:
/// row `i` is `φᵢ` with target `rᵢ + φᵢ₊₁ᵀ w_prev`.
pub fn design_matrix(state: &CriticState, params: &RobotParams) -> (DMatrix<f64>, DVector<f64>) {
    let features: Vec<QVector> = state
        .buffer
        .iter()
        .map(|s| q_features(&s.x, &s.x_des, &s.u, params))
        .collect();
    let rows = features.len().saturating_sub(1);
    let mut phi = DMatrix::zeros(rows, Q_DIM);
    let mut y = DVector::zeros(rows);
    for i in 0..rows {
        phi.row_mut(i).copy_from(&features[i].transpose());
        y[i] = state.buffer.get(i).map_or(0.0, |s| s.r) + features[i + 1].dot(&state.w_prev.0);
    }
    (phi, y)
}

/// Minimizes the regularized buffered TD objective over `w ≥ 0`.
///
/// Columns are scaled to unit norm before the nonnegative solve; the scaling
/// is positive, so the sign constraint is unchanged. Returns `w_prev` when
/// fewer than two samples are buffered.
pub fn critic_update(state: &CriticState, params: &RobotParams) -> CriticWeights {
    if state.buffer.len() < 2 {
        return state.w_prev;
    }
    let (phi, y) = design_matrix(state, params);
    let rows = phi.nrows();
    let sqrt_lambda = state.lambda_reg.sqrt();

    let mut a = DMatrix::zeros(rows + Q_DIM, Q_DIM);
    let mut b = DVector::zeros(rows + Q_DIM);
    a.rows_mut(0, rows).copy_from(&phi);
    b.rows_mut(0, rows).copy_from(&y);
    for j in 0..Q_DIM {
        a[(rows + j, j)] = sqrt_lambda;
        b[rows + j] = sqrt_lambda * state.w_prev.0[j];
    }

    let scale: Vec<f64> = (0..Q_DIM)
        .map(|j| {
            let norm = a.column(j).norm();
            if norm > 0.0 {
                1.0 / norm
            } else {
                1.0
            }
        })
        .collect();
    for (j, s) in scale.iter().enumerate() {
        a.column_mut(j).scale_mut(*s);
    }
    let tol = CRITIC_TOL * a.tr_mul(&b).amax().max(1.0);
    let scaled = nnls(&a, &b, tol);
    let w = CriticWeights(QVector::from_iterator(
        scaled.iter().zip(&scale).map(|(v, s)| (v * s).max(0.0)),
    ));

    if !w.is_valid() || critic_objective(&w, state, params) > critic_objective(&state.w_prev, state, params) {
        return state.w_prev;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{running_cost, u_desired, CostWeights};
    use nalgebra::Vector3;

    fn params() -> RobotParams {
        RobotParams::default()
    }

    fn cfg(lambda: f64) -> CriticConfig {
        CriticConfig {
            buffer_size: 500,
            lambda_reg: lambda,
            ..CriticConfig::default()
        }
    }

    fn equilibrium_sample() -> Sample {
        let x = BodyState::standing(0.27);
        Sample {
            x,
            x_des: x,
            u: u_desired(&params()),
            r: 0.0,
        }
    }

    #[test]
    fn buffer_evicts_oldest() {
        let mut state = CriticState::new(&cfg(1e-3));
        for k in 0..501 {
            let mut s = equilibrium_sample();
            s.r = k as f64;
            push_sample(&mut state, s.x, s.x_des, s.u, s.r);
        }
        assert_eq!(state.buffer.len(), 500);
        assert_eq!(state.buffer.get(0).unwrap().r, 1.0);
        state.reset();
        let s = equilibrium_sample();
        push_sample(&mut state, s.x, s.x_des, s.u, 0.25);
        assert_eq!(state.buffer.len(), 1);
        assert_eq!(*state.buffer.get(0).unwrap(), Sample { r: 0.25, ..s });
    }

    #[test]
    fn td_error_examples() {
        let p = params();
        let mut state = CriticState::new(&cfg(1e-3));
        let s = equilibrium_sample();
        push_sample(&mut state, s.x, s.x_des, s.u, 0.0);
        push_sample(&mut state, s.x, s.x_des, s.u, 0.0);
        assert!(td_error(0, &state.w_prev, &state, &p).unwrap().abs() < 1e-18);
        assert!(td_error(1, &state.w_prev, &state, &p).is_err());

        let mut state = CriticState::new(&CriticConfig {
            initial_weight: 0.0,
            ..cfg(1e-3)
        });
        let mut x = s.x;
        x.p.z += 0.05;
        let r = running_cost(&x, &s.x_des, &s.u, &CostWeights::default(), &p);
        push_sample(&mut state, x, s.x_des, s.u, r);
        push_sample(&mut state, x, s.x_des, s.u, r);
        let e = td_error(0, &CriticWeights::zeros(), &state, &p).unwrap();
        assert_eq!(e, -r);
    }

    #[test]
    fn equilibrium_buffer_keeps_previous_weights() {
        let p = params();
        let mut state = CriticState::new(&cfg(1e-3));
        state.w_prev = CriticWeights::uniform(0.7);
        let s = equilibrium_sample();
        for _ in 0..10 {
            push_sample(&mut state, s.x, s.x_des, s.u, 0.0);
        }
        let w = critic_update(&state, &p);
        assert!((w.0 - state.w_prev.0).amax() < 1e-9);
    }

    #[test]
    fn too_few_samples_returns_previous() {
        let p = params();
        let mut state = CriticState::new(&cfg(1e-3));
        assert_eq!(critic_update(&state, &p), state.w_prev);
        let s = equilibrium_sample();
        push_sample(&mut state, s.x, s.x_des, s.u, 1.0);
        assert_eq!(critic_update(&state, &p), state.w_prev);
    }

    #[test]
    fn self_consistent_buffer_is_a_fixed_point() {
        // Construct rewards so every TD error vanishes at w_prev.
        let p = params();
        let mut state = CriticState::new(&cfg(1e-3));
        state.w_prev = CriticWeights::uniform(2.0);
        let x_des = BodyState::standing(0.27);
        let mut states = Vec::new();
        for k in 0..8 {
            let mut x = x_des;
            x.p.z += 0.1 * 0.8f64.powi(k);
            x.theta.x = 0.05 * 0.8f64.powi(k);
            states.push(x);
        }
        let u = u_desired(&p);
        for k in 0..states.len() {
            let q = q_value(&states[k], &x_des, &u, &state.w_prev, &p);
            let q_next = states
                .get(k + 1)
                .map_or(0.0, |n| q_value(n, &x_des, &u, &state.w_prev, &p));
            push_sample(&mut state, states[k], x_des, u, q - q_next);
        }
        assert!(critic_objective(&state.w_prev, &state, &p) < 1e-20);
        let w = critic_update(&state, &p);
        assert!((w.0 - state.w_prev.0).amax() < 1e-6);
    }

    #[test]
    fn update_stores_weights_unless_frozen() {
        let p = params();
        let mut state = CriticState::new(&cfg(1e-3));
        let x_des = BodyState::standing(0.27);
        let mut x = x_des;
        for k in 0..5 {
            x.p.z = 0.27 + 0.01 * k as f64;
            x.v = Vector3::new(0.1, 0.0, 0.0);
            let r = running_cost(&x, &x_des, &u_desired(&p), &CostWeights::default(), &p);
            push_sample(&mut state, x, x_des, u_desired(&p), r);
        }
        let mut frozen = state.clone();
        frozen.frozen = true;
        let w = state.update(&p);
        assert_eq!(state.w_prev, w);
        assert!(w.is_valid());
        assert_eq!(frozen.update(&p), frozen.w_prev);
    }
}
