//! One-day BESS control episode as an MDP.
//!
//! Observations are normalized (powers / `power_norm_k`, prices /
//! `price_norm_k`, SOC and entropies unchanged). Actions are grid and battery
//! set points in kW; each is clamped to its box and then passed through the
//! power-balance safety layer before being executed.
//!
//! Hard constraints (action boxes, power balance when feasible) are enforced
//! mechanically. SOC limits and the day-end reserve only shape the reward.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiles::ScenarioData;
use crate::system::{
    balance_residual, simulate_schedule, soc_step, BatteryParams, GridParams, Schedule, SystemError, Trajectory,
    SOC_TOL,
};
use crate::uncertainty::{
    draw_scenario_uncertainty, entropy_state_vector, DistSpec, UncertaintyDraw, UncertaintyError, DEFAULT_BINS,
};

/// Floor inside the log of the reward.
pub const COST_FLOOR: f64 = 1e-3;

/// Below this `|p_g + p_b|` the safety layer uses its grid-first fallback.
pub const KAPPA_EPS: f64 = 1e-9;

/// SOC reserve targeted by the lower-half penalty.
pub const SOC_RESERVE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode finished; call reset")]
    EpisodeFinished,
    #[error("invalid env config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateMode {
    /// `[p_pv, p_d, c_g, c_b, p_unc, soc]`
    PerStepUncertainty,
    /// `[p_pv, p_d, c_g, c_b, H_pv, H_d, H_cg, H_cb, soc]`
    EntropyVector,
}

impl StateMode {
    pub fn obs_dim(self) -> usize {
        match self {
            StateMode::PerStepUncertainty => 6,
            StateMode::EntropyVector => 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub alpha_g_fixed: f64,
    pub alpha_b_fixed: f64,
    /// SOC band penalty weight, in [1, 2].
    pub alpha_s: f64,
    /// Lower-half (reserve) penalty weight, in [1, 2].
    pub alpha_l: f64,
    /// Balance penalty weight, in [100, 1000].
    pub alpha_p: f64,
    pub eta: f64,
    pub beta: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub power_norm_k: f64,
    pub price_norm_k: f64,
    pub state_mode: StateMode,
    /// Disable only for ablations.
    pub safety_layer: bool,
    pub entropy_samples: usize,
    pub entropy_bins: usize,
    pub entropy_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            alpha_g_fixed: 100.0,
            alpha_b_fixed: 100.0,
            alpha_s: 1.5,
            alpha_l: 1.5,
            alpha_p: 500.0,
            eta: 1.0,
            beta: 1.0,
            soc_min: 0.2,
            soc_max: 0.8,
            power_norm_k: 1000.0,
            price_norm_k: 100.0,
            state_mode: StateMode::PerStepUncertainty,
            safety_layer: true,
            entropy_samples: 200,
            entropy_bins: DEFAULT_BINS,
            entropy_seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if !(1.0..=2.0).contains(&self.alpha_s) || !(1.0..=2.0).contains(&self.alpha_l) {
            return bad("alpha_s and alpha_l must lie in [1, 2]");
        }
        if !(100.0..=1000.0).contains(&self.alpha_p) {
            return bad("alpha_p must lie in [100, 1000]");
        }
        if !(self.soc_min < self.soc_max) {
            return bad("soc_min must be below soc_max");
        }
        if !(self.power_norm_k > 0.0 && self.price_norm_k > 0.0) {
            return bad("normalization constants must be positive");
        }
        if !(self.eta >= 0.0 && self.beta >= 0.0 && self.alpha_g_fixed >= 0.0 && self.alpha_b_fixed >= 0.0) {
            return bad("penalty weights must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsKind {
    Power,
    Price,
    Passthrough,
}

/// Divides powers by `power_k` and prices by `price_k`.
pub fn normalize_obs(raw: &[f64], kinds: &[ObsKind], power_k: f64, price_k: f64) -> Vec<f64> {
    raw.iter()
        .zip(kinds)
        .map(|(&v, kind)| match kind {
            ObsKind::Power => v / power_k,
            ObsKind::Price => v / price_k,
            ObsKind::Passthrough => v,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub t: usize,
    pub obs: Vec<f64>,
    pub soc: f64,
    pub done: bool,
}

/// Result of the safety layer for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyOutcome {
    pub p_g: f64,
    pub p_b: f64,
    /// Scaling factor; 1 when already balanced, 0 in the degenerate fallback.
    pub kappa: f64,
    /// Required power that could not be placed inside the boxes (kW);
    /// positive is unserved demand, negative is surplus to curtail.
    pub leftover_kw: f64,
}

/// Rescales `(p_g, p_b)` so that together with PV they meet
/// `adjusted_demand`, keeping both within their boxes.
///
/// Scaling preserves the grid:battery ratio. Whatever the box clamps cut
/// off is reassigned to the grid first and then the battery.
pub fn safety_project(
    p_g: f64,
    p_b: f64,
    p_pv: f64,
    adjusted_demand: f64,
    grid: &GridParams,
    battery: &BatteryParams,
) -> SafetyOutcome {
    let required = adjusted_demand - p_pv;
    let supplied = p_g + p_b;
    if required == supplied {
        return SafetyOutcome { p_g, p_b, kappa: 1.0, leftover_kw: 0.0 };
    }
    let (mut g, mut b, kappa) = if supplied.abs() > KAPPA_EPS {
        let kappa = required / supplied;
        (grid.clamp_power(kappa * p_g), battery.clamp_power(kappa * p_b), kappa)
    } else {
        let g = grid.clamp_power(required);
        (g, battery.clamp_power(required - g), 0.0)
    };
    let mut leftover = required - (g + b);
    if leftover != 0.0 {
        let g2 = grid.clamp_power(g + leftover);
        leftover -= g2 - g;
        g = g2;
        let b2 = battery.clamp_power(b + leftover);
        leftover -= b2 - b;
        b = b2;
    }
    SafetyOutcome { p_g: g, p_b: b, kappa, leftover_kw: leftover }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Dispatch cost of the executed action at unit multipliers, $.
    pub stage_cost: f64,
    /// Balance residual after the safety layer, kW.
    pub residual_kw: f64,
    pub soc_violation: bool,
    pub kappa: f64,
    pub curtailed_kw: f64,
    /// Weighted, normalized cost inside the reward log.
    pub reward_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: EnvState,
    /// Requested set points (kW).
    pub action: (f64, f64),
    /// Set points after clamping and the safety layer (kW).
    pub action_executed: (f64, f64),
    pub reward: f64,
    pub next_state: EnvState,
    pub info: StepInfo,
}

/// Reward for one step given the weighted normalized cost, the post-step
/// SOC and the balance residual in kW.
pub fn reward(config: &EnvConfig, cost: f64, soc: f64, residual_kw: f64) -> f64 {
    let soc_pen = config.eta * ((config.soc_min - soc).max(0.0) + (soc - config.soc_max).max(0.0));
    let reserve_pen = config.eta * (SOC_RESERVE - soc).max(0.0);
    let balance_pen = config.beta * (residual_kw / config.power_norm_k).abs();
    -(cost + COST_FLOOR).ln() - config.alpha_s * soc_pen - config.alpha_l * reserve_pen - config.alpha_p * balance_pen
}

/// The scheduling environment.
///
/// Owns its scenario and the uncertainty spec used for sampled resets; the
/// entropy block is computed once at construction from a dedicated seed.
#[derive(Debug, Clone)]
pub struct BessEnv {
    scenario: ScenarioData,
    battery: BatteryParams,
    grid: GridParams,
    config: EnvConfig,
    spec: DistSpec,
    entropy: [f64; 4],
    draw: UncertaintyDraw,
    effective: ScenarioData,
    state: EnvState,
}

impl BessEnv {
    pub fn new(
        scenario: ScenarioData,
        battery: BatteryParams,
        grid: GridParams,
        config: EnvConfig,
        spec: DistSpec,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        battery.validate()?;
        grid.validate()?;
        spec.validate()?;
        let entropy = match config.state_mode {
            StateMode::EntropyVector => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.entropy_seed);
                entropy_state_vector(&scenario, &spec, config.entropy_samples, config.entropy_bins, &mut rng)?
            }
            StateMode::PerStepUncertainty => [0.0; 4],
        };
        let n = scenario.n_steps();
        let state = EnvState { t: 0, obs: vec![0.0; config.state_mode.obs_dim()], soc: battery.soc_init, done: true };
        Ok(Self {
            effective: scenario.clone(),
            scenario,
            battery,
            grid,
            config,
            spec,
            entropy,
            draw: UncertaintyDraw::zero(n),
            state,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.config.state_mode.obs_dim()
    }

    pub fn n_steps(&self) -> usize {
        self.scenario.n_steps()
    }

    pub fn scenario(&self) -> &ScenarioData {
        &self.scenario
    }

    /// Scenario with the current draw's tariff perturbations applied.
    pub fn effective_scenario(&self) -> &ScenarioData {
        &self.effective
    }

    pub fn battery(&self) -> &BatteryParams {
        &self.battery
    }

    pub fn grid(&self) -> &GridParams {
        &self.grid
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn spec(&self) -> &DistSpec {
        &self.spec
    }

    pub fn draw(&self) -> &UncertaintyDraw {
        &self.draw
    }

    pub fn entropy(&self) -> [f64; 4] {
        self.entropy
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Starts an episode on the given draw.
    pub fn reset(&mut self, draw: UncertaintyDraw) -> Result<EnvState, EnvError> {
        let n = self.scenario.n_steps();
        if draw.n_steps() != n {
            return Err(SystemError::LengthMismatch { name: "draw", expected: n, found: draw.n_steps() }.into());
        }
        self.effective = draw.perturbed_scenario(&self.scenario)?;
        self.draw = draw;
        let soc = self.battery.soc_init;
        self.state = EnvState { t: 0, obs: self.observe(0, soc), soc, done: false };
        Ok(self.state.clone())
    }

    /// Starts an episode on a fresh draw from the env's spec.
    pub fn reset_sampled<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EnvState, EnvError> {
        let draw = draw_scenario_uncertainty(&self.scenario, &self.spec, rng)?;
        self.reset(draw)
    }

    fn observe(&self, t: usize, soc: f64) -> Vec<f64> {
        let t = t.min(self.scenario.n_steps() - 1);
        let s = &self.effective;
        let mut raw = vec![s.p_pv()[t], s.p_d()[t], s.c_g()[t], s.c_b()[t]];
        let mut kinds = vec![ObsKind::Power, ObsKind::Power, ObsKind::Price, ObsKind::Price];
        match self.config.state_mode {
            StateMode::PerStepUncertainty => {
                raw.push(self.draw.p_unc[t]);
                kinds.push(ObsKind::Power);
            }
            StateMode::EntropyVector => {
                raw.extend_from_slice(&self.entropy);
                kinds.extend([ObsKind::Passthrough; 4]);
            }
        }
        raw.push(soc);
        kinds.push(ObsKind::Passthrough);
        normalize_obs(&raw, &kinds, self.config.power_norm_k, self.config.price_norm_k)
    }

    /// Applies set points `(p_g, p_b)` in kW.
    pub fn step(&mut self, action: (f64, f64)) -> Result<Transition, EnvError> {
        if self.state.done {
            return Err(EnvError::EpisodeFinished);
        }
        let t = self.state.t;
        let s = &self.effective;
        let dt = s.dt_hours();
        let (p_pv, p_d, c_g, c_b) = (s.p_pv()[t], s.p_d()[t], s.c_g()[t], s.c_b()[t]);
        let p_unc = self.draw.p_unc[t];

        let g0 = self.grid.clamp_power(action.0);
        let b0 = self.battery.clamp_power(action.1);
        let safe = if self.config.safety_layer {
            safety_project(g0, b0, p_pv, p_d + p_unc, &self.grid, &self.battery)
        } else {
            SafetyOutcome { p_g: g0, p_b: b0, kappa: 1.0, leftover_kw: balance_residual(g0, b0, p_pv, p_d, p_unc) }
        };
        let (g, b) = (safe.p_g, safe.p_b);
        let residual_kw = balance_residual(g, b, p_pv, p_d, p_unc);

        let (pk, ck) = (self.config.power_norm_k, self.config.price_norm_k);
        let reward_cost = self.config.alpha_g_fixed * (g / pk) * (c_g / ck) * dt
            + self.config.alpha_b_fixed * (b.abs() / pk) * (c_b / ck) * dt;
        let soc_next = soc_step(self.state.soc, b, self.battery.capacity_kwh, dt);
        let r = reward(&self.config, reward_cost, soc_next, residual_kw);

        let done = t + 1 == self.scenario.n_steps();
        let next = EnvState { t: t + 1, obs: self.observe(t + 1, soc_next), soc: soc_next, done };
        let info = StepInfo {
            stage_cost: (c_g * g + c_b * b.abs()) * dt,
            residual_kw,
            soc_violation: soc_next < self.config.soc_min - SOC_TOL || soc_next > self.config.soc_max + SOC_TOL,
            kappa: safe.kappa,
            curtailed_kw: (-residual_kw).max(0.0),
            reward_cost,
        };
        let prev = std::mem::replace(&mut self.state, next.clone());
        Ok(Transition { state: prev, action, action_executed: (g, b), reward: r, next_state: next, info })
    }
}

/// Outcome of a full episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub total_reward: f64,
    pub trajectory: Trajectory,
    pub transitions: Vec<Transition>,
}

/// Runs one episode on `draw` with `policy` mapping a state to set points
/// in kW. The trajectory is built from the executed actions.
pub fn rollout<P>(env: &mut BessEnv, draw: UncertaintyDraw, mut policy: P) -> Result<Rollout, EnvError>
where
    P: FnMut(&EnvState) -> (f64, f64),
{
    let mut state = env.reset(draw)?;
    let mut transitions = Vec::with_capacity(env.n_steps());
    while !state.done {
        let tr = env.step(policy(&state))?;
        state = tr.next_state.clone();
        transitions.push(tr);
    }
    let total_reward = transitions.iter().map(|tr| tr.reward).sum();
    let schedule = Schedule::with_unit_weights(
        transitions.iter().map(|tr| tr.action_executed.0).collect(),
        transitions.iter().map(|tr| tr.action_executed.1).collect(),
    );
    let trajectory = simulate_schedule(env.effective_scenario(), &schedule, env.battery(), &env.draw().p_unc)?;
    Ok(Rollout { total_reward, trajectory, transitions })
}

/// Writes transitions as JSON lines, one per line.
pub fn write_trace<W: Write>(transitions: &[Transition], mut writer: W) -> Result<(), EnvError> {
    for tr in transitions {
        serde_json::to_writer(&mut writer, tr)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
