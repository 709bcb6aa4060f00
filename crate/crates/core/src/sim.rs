//! Closed-loop episodes, evaluation metrics and horizon sweeps.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, ControllerConfig, Mode, Termination};
use crate::cost::{clamp_to_feasible, running_cost, CostWeights, CriticWeights};
use crate::critic::{CriticConfig, CriticState};
use crate::dynamics::{integrate_plant, Action, BodyState, RobotParams, StateVector, NUM_LEGS};
use crate::error::{Error, Result};
use crate::gait::{plan_reference, reference_state, update_touchdowns, GaitConfig, GaitState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    /// RK4 sub-intervals per control period.
    pub substeps: usize,
    /// Plant mass relative to the controller's model.
    pub mass_scale: f64,
    /// Standard deviation of additive Gaussian force noise on stance legs [N].
    pub action_noise_std: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            substeps: 10,
            mass_scale: 1.1,
            action_noise_std: 1.0,
        }
    }
}

impl PlantConfig {
    /// Plant identical to the prediction model, without noise.
    pub fn ideal() -> Self {
        Self {
            substeps: 10,
            mass_scale: 1.0,
            action_noise_std: 0.0,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.substeps < 1 {
            out.push("plant.substeps must be >= 1".to_string());
        }
        if !(self.mass_scale.is_finite() && self.mass_scale > 0.0) {
            out.push(format!("plant.mass_scale must be > 0 (got {})", self.mass_scale));
        }
        if !(self.action_noise_std.is_finite() && self.action_noise_std >= 0.0) {
            out.push(format!(
                "plant.action_noise_std must be >= 0 (got {})",
                self.action_noise_std
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSettings {
    /// Simulated time [s].
    pub duration: f64,
    pub seed: u64,
    /// Leading share of the episode excluded from the evaluation window.
    pub transient_fraction: f64,
    /// Start with zero linear and angular velocity instead of on the reference.
    pub start_at_rest: bool,
    /// Added to the initial state `(p, Θ, v, ω_B)`.
    pub initial_offset: [f64; 12],
}

impl Default for EpisodeSettings {
    fn default() -> Self {
        Self {
            duration: 20.0,
            seed: 0,
            transient_fraction: 0.2,
            start_at_rest: true,
            initial_offset: [0.0; 12],
        }
    }
}

impl EpisodeSettings {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.duration.is_finite() && self.duration > 0.0) {
            out.push(format!("episode.duration must be > 0 (got {})", self.duration));
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            out.push(format!(
                "episode.transient_fraction must lie in [0, 1) (got {})",
                self.transient_fraction
            ));
        }
        if !self.initial_offset.iter().all(|c| c.is_finite()) {
            out.push("episode.initial_offset must be finite".to_string());
        }
        out
    }

    pub fn transient_skip(&self) -> f64 {
        self.transient_fraction * self.duration
    }
}

/// Everything one closed-loop run needs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub robot: RobotParams,
    pub gait: GaitConfig,
    pub cost: CostWeights,
    pub controller: ControllerConfig,
    pub critic: CriticConfig,
    pub plant: PlantConfig,
    pub episode: EpisodeSettings,
}

impl EpisodeConfig {
    /// All-stance balance at the reference with an ideal plant.
    pub fn standing(mode: Mode, horizon: usize, duration: f64) -> Self {
        Self {
            gait: GaitConfig::standing(),
            controller: ControllerConfig {
                mode,
                horizon,
                ..ControllerConfig::default()
            },
            plant: PlantConfig::ideal(),
            episode: EpisodeSettings {
                duration,
                ..EpisodeSettings::default()
            },
            ..Self::default()
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = self.robot.violations();
        out.extend(self.gait.violations());
        out.extend(self.cost.violations());
        out.extend(self.controller.violations());
        out.extend(self.critic.violations());
        out.extend(self.plant.violations());
        out.extend(self.episode.violations());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    pub fn initial_state(&self) -> BodyState {
        let mut x = reference_state(0.0, &self.gait, &Vector3::zeros());
        if self.episode.start_at_rest {
            x.v = Vector3::zeros();
            x.omega_b = Vector3::zeros();
        }
        BodyState::from_vector(&(x.to_vector() + StateVector::from(self.episode.initial_offset)))
    }

    pub fn steps(&self) -> usize {
        (self.episode.duration / self.controller.delta).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: BodyState,
    pub x_des: BodyState,
    /// Commanded action, before noise injection.
    pub u: Action,
    /// Action the plant integrated (noisy and re-projected).
    pub applied: Action,
    pub r: f64,
    pub accumulated: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub critic: Option<CriticWeights>,
}

/// Where and why an episode stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub t: f64,
    pub x: BodyState,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub mode: Mode,
    pub horizon: usize,
    pub seed: u64,
    pub rows: Vec<LogRow>,
    pub failure: Option<Failure>,
}

impl EpisodeLog {
    pub fn file_name(&self) -> String {
        episode_file_name(self.mode, self.horizon, self.seed)
    }
}

pub fn episode_file_name(mode: Mode, horizon: usize, seed: u64) -> String {
    format!("{mode}_N{horizon}_seed{seed}.csv")
}

fn plant_params(cfg: &EpisodeConfig) -> RobotParams {
    RobotParams {
        mass: cfg.robot.mass * cfg.plant.mass_scale,
        ..cfg.robot
    }
}

/// Builds the controller an episode of `cfg` starts with.
pub fn make_controller(cfg: &EpisodeConfig) -> Controller {
    match cfg.controller.mode {
        Mode::Mpc => Controller::mpc(),
        Mode::Rql => Controller::rql(CriticState::new(&cfg.critic)),
    }
}

/// Runs one closed-loop episode. Controller or plant errors end the episode
/// and are recorded in [`EpisodeLog::failure`]; invalid configs are an error.
pub fn run_episode(cfg: &EpisodeConfig) -> Result<EpisodeLog> {
    cfg.validate()?;
    let mut controller = make_controller(cfg);
    run_episode_with(cfg, &mut controller)
}

/// [`run_episode`] with a caller-supplied controller instance.
pub fn run_episode_with(cfg: &EpisodeConfig, controller: &mut Controller) -> Result<EpisodeLog> {
    let ctrl = &cfg.controller;
    let plant = plant_params(cfg);
    let noise = Normal::new(0.0, cfg.plant.action_noise_std)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.episode.seed);

    let mut x = cfg.initial_state();
    let mut gait_state = GaitState::new(&x, &cfg.gait);
    let mut log = EpisodeLog {
        mode: ctrl.mode,
        horizon: ctrl.horizon,
        seed: cfg.episode.seed,
        rows: Vec::with_capacity(cfg.steps()),
        failure: None,
    };
    let mut accumulated = 0.0;

    for k in 0..cfg.steps() {
        let t = k as f64 * ctrl.delta;
        update_touchdowns(t, &x, &cfg.gait, &mut gait_state);
        let plan = plan_reference(t, &x, ctrl.horizon, ctrl.delta, &cfg.gait, &gait_state);
        let outcome = match controller.step(&x, &plan, ctrl, &cfg.cost, &cfg.robot) {
            Ok(o) => o,
            Err(e) => {
                log.failure = Some(Failure { t, x, message: e.to_string() });
                break;
            }
        };
        let u = outcome.action;
        let contacts = plan.contacts[0];
        let applied = if cfg.plant.action_noise_std > 0.0 {
            let mut noisy = u;
            for leg in 0..NUM_LEGS {
                if contacts.stance[leg] {
                    for c in 0..3 {
                        noisy.f[leg][c] += noise.sample(&mut rng);
                    }
                }
            }
            clamp_to_feasible(&noisy, &contacts, &plant)
        } else {
            u
        };

        let r = running_cost(&x, &plan.current, &u, &cfg.cost, &cfg.robot);
        accumulated += r;
        log.rows.push(LogRow {
            t,
            x,
            x_des: plan.current,
            u,
            applied,
            r,
            accumulated,
            iterations: outcome.iterations,
            termination: outcome.termination,
            critic: outcome.critic_weights,
        });

        let levers = gait_state.levers(&x.p);
        match integrate_plant(ctrl.delta, cfg.plant.substeps, &x, &levers, &applied, &plant) {
            Ok(next) if next.is_finite() => x = next,
            Ok(_) => {
                log.failure = Some(Failure {
                    t: t + ctrl.delta,
                    x,
                    message: "plant state diverged".to_string(),
                });
                break;
            }
            Err(e) => {
                log.failure = Some(Failure {
                    t: t + ctrl.delta,
                    x,
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSummary {
    pub sum: f64,
    pub mean: f64,
    pub count: usize,
}

/// Sum and mean of the running cost over rows with `t ≥ transient_skip`.
pub fn accumulated_cost(log: &EpisodeLog, transient_skip: f64) -> Result<CostSummary> {
    let mut sum = 0.0;
    let mut count = 0;
    for row in log.rows.iter().filter(|r| r.t >= transient_skip) {
        sum += row.r;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyWindow(format!(
            "no rows at t >= {transient_skip} in {}",
            log.file_name()
        )));
    }
    Ok(CostSummary {
        sum,
        mean: sum / count as f64,
        count,
    })
}

/// Pose axes reported by [`max_pose_errors`].
pub const POSE_AXES: [&str; 6] = ["px", "py", "pz", "roll", "pitch", "yaw"];

/// Largest absolute pose error per axis over rows with `t ≥ transient_skip`.
pub fn max_pose_errors(log: &EpisodeLog, transient_skip: f64) -> [f64; 6] {
    let mut out = [0.0f64; 6];
    for row in log.rows.iter().filter(|r| r.t >= transient_skip) {
        let e = row.x.to_vector() - row.x_des.to_vector();
        for (slot, value) in out.iter_mut().zip(e.iter()) {
            *slot = slot.max(value.abs());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub mode: Mode,
    pub horizon: usize,
    pub seed: u64,
    /// Post-transient cost, `None` when the episode failed.
    pub cost: Option<CostSummary>,
    pub max_errors: [f64; 6],
    pub failure: Option<String>,
}

impl EpisodeSummary {
    pub fn from_log(log: &EpisodeLog, transient_skip: f64) -> Self {
        let (cost, failure) = match (&log.failure, accumulated_cost(log, transient_skip)) {
            (Some(f), _) => (None, Some(f.message.clone())),
            (None, Ok(c)) => (Some(c), None),
            (None, Err(e)) => (None, Some(e.to_string())),
        };
        Self {
            mode: log.mode,
            horizon: log.horizon,
            seed: log.seed,
            cost,
            max_errors: max_pose_errors(log, transient_skip),
            failure,
        }
    }
}

/// Aggregate of one `(mode, N)` grid point across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub mode: Mode,
    pub horizon: usize,
    pub episodes: usize,
    pub failures: usize,
    pub accumulated_mean: f64,
    pub accumulated_std: f64,
    pub mean_cost_mean: f64,
    pub mean_cost_std: f64,
    pub max_errors: [f64; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Ascending horizon, MPC before RQL.
    pub cells: Vec<SweepCell>,
    pub episodes: Vec<EpisodeSummary>,
}

impl SweepResult {
    pub fn cell(&self, mode: Mode, horizon: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.mode == mode && c.horizon == horizon)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups episode summaries into sweep cells; statistics use successful
/// episodes only.
pub fn summarize(mut episodes: Vec<EpisodeSummary>) -> SweepResult {
    episodes.sort_by_key(|e| (e.horizon, e.mode, e.seed));
    let mut cells: Vec<SweepCell> = Vec::new();
    for group in episodes.chunk_by(|a, b| a.horizon == b.horizon && a.mode == b.mode) {
        let ok: Vec<&CostSummary> = group.iter().filter_map(|e| e.cost.as_ref()).collect();
        let sums: Vec<f64> = ok.iter().map(|c| c.sum).collect();
        let means: Vec<f64> = ok.iter().map(|c| c.mean).collect();
        let (accumulated_mean, accumulated_std) = mean_std(&sums);
        let (mean_cost_mean, mean_cost_std) = mean_std(&means);
        let mut max_errors = [0.0f64; 6];
        for e in group {
            for (slot, v) in max_errors.iter_mut().zip(e.max_errors) {
                *slot = slot.max(v);
            }
        }
        cells.push(SweepCell {
            mode: group[0].mode,
            horizon: group[0].horizon,
            episodes: group.len(),
            failures: group.len() - ok.len(),
            accumulated_mean,
            accumulated_std,
            mean_cost_mean,
            mean_cost_std,
            max_errors,
        });
    }
    SweepResult { cells, episodes }
}

/// One entry of a sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepJob {
    pub mode: Mode,
    pub horizon: usize,
    pub seed: u64,
}

pub fn sweep_jobs(horizons: &[usize], modes: &[Mode], seeds: &[u64]) -> Vec<SweepJob> {
    let mut jobs = Vec::with_capacity(horizons.len() * modes.len() * seeds.len());
    for &horizon in horizons {
        for &mode in modes {
            for &seed in seeds {
                jobs.push(SweepJob { mode, horizon, seed });
            }
        }
    }
    jobs
}

pub fn job_config(base: &EpisodeConfig, job: &SweepJob) -> EpisodeConfig {
    let mut cfg = *base;
    cfg.controller.mode = job.mode;
    cfg.controller.horizon = job.horizon;
    cfg.episode.seed = job.seed;
    cfg
}

/// Runs every `(mode, N, seed)` episode independently (in parallel) and
/// aggregates. `sink` sees each finished log, e.g. to persist it; its errors
/// abort the sweep. Episode failures are recorded and the sweep continues.
pub fn run_sweep<F>(
    base: &EpisodeConfig,
    horizons: &[usize],
    modes: &[Mode],
    seeds: &[u64],
    sink: F,
) -> Result<SweepResult>
where
    F: Fn(&EpisodeLog) -> Result<()> + Sync,
{
    if horizons.is_empty() || modes.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidParameter("empty sweep grid".to_string()));
    }
    base.validate()?;
    let skip = base.episode.transient_skip();
    let summaries: Vec<Result<EpisodeSummary>> = sweep_jobs(horizons, modes, seeds)
        .par_iter()
        .map(|job| {
            let log = run_episode(&job_config(base, job))?;
            sink(&log)?;
            Ok(EpisodeSummary::from_log(&log, skip))
        })
        .collect();
    let summaries = summaries.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(summarize(summaries))
}
