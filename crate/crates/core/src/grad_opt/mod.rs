//! Benchmark solver: projected Adam on the penalty loss with exponential
//! learning-rate decay, alternating between set points and multipliers.

mod adam;
mod loss;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamError, AdamState};
pub use loss::{alpha_targets, penalty_loss, PenaltyProblem};

use crate::profiles::ScenarioData;
use crate::system::{simulate_schedule, BatteryParams, GridParams, Schedule, SystemError, Trajectory};
use crate::uncertainty::{draw_scenario_uncertainty, DistSpec, UncertaintyDraw, UncertaintyError};

#[derive(Debug, Error)]
pub enum GradOptError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Adam(#[from] AdamError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error("lower bound exceeds upper bound at index {0}")]
    BoundOrder(usize),
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("wall-clock budget of {budget_s} s exceeded after {iterations} epochs")]
    Timeout { budget_s: f64, iterations: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradOptConfig {
    pub n_epochs: usize,
    pub tol: f64,
    pub init_lr: f64,
    pub d_rate: f64,
    pub d_steps: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Upper bound on `alpha_g + alpha_b`; `None` means `alpha_max`.
    pub alpha_cap: Option<f64>,
    pub lambda_soc: f64,
    pub lambda_balance: f64,
    pub lambda_alpha: f64,
    pub lambda_end_soc: f64,
    pub end_soc_target: f64,
    pub power_norm_k: f64,
    pub price_norm_k: f64,
    pub check_every: usize,
    pub wall_budget_s: Option<f64>,
    /// Grid floor (kW) applied at steps whose net load needs import.
    pub import_floor_kw: f64,
    /// Number of seeded starts; the first always starts mid-box.
    pub restarts: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for GradOptConfig {
    fn default() -> Self {
        Self {
            n_epochs: 200_000,
            tol: 1e-5,
            init_lr: 0.1,
            d_rate: 0.95,
            d_steps: 1000,
            alpha_min: 1.0,
            alpha_max: 1000.0,
            alpha_cap: None,
            lambda_soc: 10.0,
            lambda_balance: 10_000.0,
            lambda_alpha: 100.0,
            lambda_end_soc: 1000.0,
            end_soc_target: 0.8,
            power_norm_k: 1000.0,
            price_norm_k: 100.0,
            check_every: 100,
            wall_budget_s: None,
            import_floor_kw: 1e-6,
            restarts: 1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl GradOptConfig {
    pub fn validate(&self) -> Result<(), GradOptError> {
        let bad = |m: &str| Err(GradOptError::InvalidConfig(m.to_string()));
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.d_rate > 0.0 && self.d_rate <= 1.0) {
            return bad("d_rate must lie in (0, 1]");
        }
        if self.d_steps == 0 || self.check_every == 0 || self.restarts == 0 {
            return bad("d_steps, check_every and restarts must be positive");
        }
        if !(self.alpha_min < self.alpha_max) {
            return bad("alpha_min must be below alpha_max");
        }
        if !(self.power_norm_k > 0.0 && self.price_norm_k > 0.0) {
            return bad("normalization constants must be positive");
        }
        if !(self.init_lr > 0.0) {
            return bad("init_lr must be positive");
        }
        if let Some(cap) = self.alpha_cap {
            if !(cap >= 2.0 * self.alpha_min) {
                return bad("alpha_cap must be at least 2 * alpha_min");
            }
        }
        Ok(())
    }

    fn cap(&self) -> f64 {
        self.alpha_cap.unwrap_or(self.alpha_max)
    }
}

/// `init_lr * d_rate^(epoch / d_steps)` with a real-valued exponent.
pub fn lr_at(config: &GradOptConfig, epoch: usize) -> f64 {
    config.init_lr * config.d_rate.powf(epoch as f64 / config.d_steps as f64)
}

/// Elementwise clamp of `x` into `[lo, hi]`.
pub fn project_box(x: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>, GradOptError> {
    if x.len() != lo.len() || x.len() != hi.len() {
        return Err(SystemError::LengthMismatch { name: "bounds", expected: x.len(), found: lo.len().min(hi.len()) }.into());
    }
    x.iter()
        .zip(lo.iter().zip(hi))
        .enumerate()
        .map(|(i, (&v, (&l, &h)))| if l <= h { Ok(v.clamp(l, h)) } else { Err(GradOptError::BoundOrder(i)) })
        .collect()
}

/// Where the net power perturbation comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintyInput {
    /// Nominal profile, `p_unc = 0`.
    Nominal,
    /// Draw one realisation from the distribution with the caller's RNG.
    Spec(DistSpec),
    /// Use this realisation (tariff perturbations included).
    Draw(UncertaintyDraw),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    /// Best iterate found (lowest penalty loss).
    pub schedule: Schedule,
    /// Dispatch outcome of `schedule`'s set points, costed at unit
    /// multipliers so `total_cost` is in dollars.
    pub trajectory: Trajectory,
    /// Objective value including the optimized multipliers.
    pub weighted_cost: f64,
    pub final_loss: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    /// Best loss so far, sampled at every convergence check.
    pub best_loss_trace: Vec<f64>,
}

struct RunOutcome {
    best_x: Vec<f64>,
    best_loss: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn run_once(
    problem: &PenaltyProblem,
    mut x: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    needs_import: &[bool],
    config: &GradOptConfig,
    started: Instant,
) -> Result<RunOutcome, GradOptError> {
    let n = problem.n_steps();
    let mut grad = vec![0.0; 4 * n];
    let mut adam_powers = AdamState::with_params(2 * n, config.beta1, config.beta2, config.eps)?;
    let mut adam_alpha = AdamState::with_params(2 * n, config.beta1, config.beta2, config.eps)?;
    let floor = config.import_floor_kw / config.power_norm_k;
    let cap = config.cap();

    let mut best_loss = f64::INFINITY;
    let mut best_x = x.clone();
    let mut loss_prev = f64::INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for epoch in 0..config.n_epochs {
        let loss = problem.eval(&x, &mut grad);
        iterations = epoch + 1;
        if loss < best_loss {
            best_loss = loss;
            best_x.copy_from_slice(&x);
        }
        if epoch % config.check_every == 0 {
            trace.push(best_loss);
            if (loss - loss_prev).abs() < config.tol {
                converged = true;
                break;
            }
            loss_prev = loss;
            if let Some(budget_s) = config.wall_budget_s {
                if started.elapsed().as_secs_f64() > budget_s {
                    return Err(GradOptError::Timeout { budget_s, iterations });
                }
            }
        }

        let lr = lr_at(config, epoch);
        let powers = &mut x[..2 * n];
        adam_powers.step(powers, &grad[..2 * n], lr)?;
        for (i, p) in powers.iter_mut().enumerate() {
            *p = p.clamp(lo[i], hi[i]);
        }
        for (t, &need) in needs_import.iter().enumerate() {
            if need {
                powers[t] = powers[t].max(floor).min(hi[t]);
            }
        }

        problem.eval(&x, &mut grad);
        let alphas = &mut x[2 * n..];
        adam_alpha.step(alphas, &grad[2 * n..], lr)?;
        for a in alphas.iter_mut() {
            *a = a.clamp(config.alpha_min, config.alpha_max);
        }
        let (ag, ab) = alphas.split_at_mut(n);
        for t in 0..n {
            couple_alphas(&mut ag[t], &mut ab[t], cap, config.alpha_min);
        }
    }
    trace.push(best_loss);
    Ok(RunOutcome { best_x, best_loss, iterations, converged, trace })
}

/// Enforces `alpha_g + alpha_b <= cap` by proportional rescaling, keeping
/// both at or above `alpha_min`.
fn couple_alphas(ag: &mut f64, ab: &mut f64, cap: f64, alpha_min: f64) {
    let sum = *ag + *ab;
    if sum <= cap {
        return;
    }
    let s = cap / sum;
    *ag *= s;
    *ab *= s;
    if *ag < alpha_min {
        *ag = alpha_min;
        *ab = cap - alpha_min;
    } else if *ab < alpha_min {
        *ab = alpha_min;
        *ag = cap - alpha_min;
    }
}

/// Runs the alternating projected-Adam scheme and returns the best iterate
/// with its simulated trajectory.
pub fn optimize_schedule<R: Rng + ?Sized>(
    scenario: &ScenarioData,
    uncertainty: &UncertaintyInput,
    battery: &BatteryParams,
    grid: &GridParams,
    config: &GradOptConfig,
    rng: &mut R,
) -> Result<OptResult, GradOptError> {
    config.validate()?;
    battery.validate()?;
    grid.validate()?;
    let n = scenario.n_steps();
    let draw = match uncertainty {
        UncertaintyInput::Nominal => UncertaintyDraw::zero(n),
        UncertaintyInput::Spec(spec) => draw_scenario_uncertainty(scenario, spec, rng)?,
        UncertaintyInput::Draw(d) => {
            if d.n_steps() != n {
                return Err(SystemError::LengthMismatch { name: "p_unc", expected: n, found: d.n_steps() }.into());
            }
            d.clone()
        }
    };
    let effective = draw.perturbed_scenario(scenario)?;
    let problem = PenaltyProblem::new(&effective, &draw.p_unc, battery, grid, config)?;

    let k = config.power_norm_k;
    let mut lo = vec![grid.p_g_min / k; n];
    lo.extend(std::iter::repeat_n(battery.p_b_min / k, n));
    let mut hi = vec![grid.p_g_max / k; n];
    hi.extend(std::iter::repeat_n(battery.p_b_max / k, n));
    let needs_import: Vec<bool> =
        (0..n).map(|t| effective.p_d()[t] + draw.p_unc[t] - effective.p_pv()[t] > 0.0).collect();

    let started = Instant::now();
    let mut best: Option<RunOutcome> = None;
    for restart in 0..config.restarts {
        let mut x = Vec::with_capacity(4 * n);
        for i in 0..2 * n {
            let v = if restart == 0 { 0.5 * (lo[i] + hi[i]) } else { rng.random_range(lo[i]..=hi[i]) };
            x.push(v);
        }
        x.extend(std::iter::repeat_n(config.alpha_min, 2 * n));
        let out = run_once(&problem, x, &lo, &hi, &needs_import, config, started)?;
        if best.as_ref().is_none_or(|b| out.best_loss < b.best_loss) {
            best = Some(out);
        }
    }
    let best = best.expect("at least one restart");
    let wall_time_s = started.elapsed().as_secs_f64();

    let x = &best.best_x;
    let schedule = Schedule {
        p_g: x[..n].iter().map(|v| v * k).collect(),
        p_b: x[n..2 * n].iter().map(|v| v * k).collect(),
        alpha_g: x[2 * n..3 * n].to_vec(),
        alpha_b: x[3 * n..].to_vec(),
    };
    let weighted_cost = simulate_schedule(&effective, &schedule, battery, &draw.p_unc)?.total_cost;
    let trajectory = simulate_schedule(&effective, &schedule.unit_weighted(), battery, &draw.p_unc)?;
    Ok(OptResult {
        schedule,
        trajectory,
        weighted_cost,
        final_loss: best.best_loss,
        iterations_run: best.iterations,
        converged: best.converged,
        wall_time_s,
        best_loss_trace: best.trace,
    })
}
