//! Single-rigid-body quadruped control with receding-horizon MPC and
//! roll-out Q-learning (RQL).
//!
//! The controller optimizes ground-reaction forces over a short horizon of
//! an explicit-Euler model. In RQL mode the tail of the horizon is replaced
//! by a learned quadratic Q-function that is refit online from observed
//! transitions. [`sim`] closes the loop against an RK4 plant and
//! [`sim::run_sweep`] compares both controllers across horizons.

pub mod cli;
pub mod config;
pub mod controller;
pub mod cost;
pub mod critic;
pub mod dynamics;
pub mod error;
pub mod gait;
pub mod io;
pub mod nnls;
pub mod sim;

pub use config::{ExperimentConfig, SweepSettings};
pub use controller::{solve_horizon, Controller, ControllerConfig, HorizonSolution, Mode, Objective, Termination};
pub use cost::{check_action, running_cost, CostWeights, CriticWeights, Feasibility};
pub use critic::{critic_update, CriticConfig, CriticState};
pub use dynamics::{dynamics, integrate_plant, predict_euler, Action, BodyState, FootLevers, RobotParams};
pub use error::{Error, Result};
pub use gait::{contact_at, plan_reference, ContactSchedule, GaitConfig, GaitState, ReferencePlan};
pub use sim::{accumulated_cost, run_episode, run_sweep, EpisodeConfig, EpisodeLog, PlantConfig};
