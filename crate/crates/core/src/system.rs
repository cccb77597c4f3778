//! Physical and economic model shared by both solvers.
//!
//! Sign conventions: `p_b > 0` discharges the battery into the load and
//! lowers SOC; `p_b < 0` charges it. `p_g >= 0` imports from the grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiles::ScenarioData;

/// Slack used when counting SOC bound violations.
pub const SOC_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SystemError {
    #[error("series `{name}` has length {found}, expected {expected}")]
    LengthMismatch { name: &'static str, expected: usize, found: usize },
    #[error("invalid battery parameters: {0}")]
    InvalidBattery(String),
    #[error("invalid grid parameters: p_g_min {min} > p_g_max {max}")]
    InvalidGrid { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub capacity_kwh: f64,
    pub soc_init: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Charge limit, kW (non-positive).
    pub p_b_min: f64,
    /// Discharge limit, kW (non-negative).
    pub p_b_max: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self { capacity_kwh: 20_000.0, soc_init: 0.8, soc_min: 0.2, soc_max: 0.8, p_b_min: -1000.0, p_b_max: 1000.0 }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<(), SystemError> {
        let bad = |m: &str| Err(SystemError::InvalidBattery(m.to_string()));
        if !(self.capacity_kwh > 0.0) || !self.capacity_kwh.is_finite() {
            return bad("capacity_kwh must be positive");
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return bad("require 0 <= soc_min < soc_max <= 1");
        }
        if !(self.soc_min <= self.soc_init && self.soc_init <= self.soc_max) {
            return bad("soc_init must lie in [soc_min, soc_max]");
        }
        if !(self.p_b_min <= 0.0 && 0.0 <= self.p_b_max) {
            return bad("require p_b_min <= 0 <= p_b_max");
        }
        Ok(())
    }

    pub fn clamp_power(&self, p_b: f64) -> f64 {
        p_b.clamp(self.p_b_min, self.p_b_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub p_g_min: f64,
    pub p_g_max: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { p_g_min: 0.0, p_g_max: 5000.0 }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<(), SystemError> {
        if !(self.p_g_min <= self.p_g_max) {
            return Err(SystemError::InvalidGrid { min: self.p_g_min, max: self.p_g_max });
        }
        Ok(())
    }

    pub fn clamp_power(&self, p_g: f64) -> f64 {
        p_g.clamp(self.p_g_min, self.p_g_max)
    }
}

/// Decision variables per step: set points and the cost multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub p_g: Vec<f64>,
    pub p_b: Vec<f64>,
    pub alpha_g: Vec<f64>,
    pub alpha_b: Vec<f64>,
}

impl Schedule {
    /// Set points with both multipliers fixed at 1, so the objective is the
    /// plain dispatch cost in dollars.
    pub fn with_unit_weights(p_g: Vec<f64>, p_b: Vec<f64>) -> Self {
        let n = p_g.len();
        Self { p_g, p_b, alpha_g: vec![1.0; n], alpha_b: vec![1.0; n] }
    }

    pub fn zeros(n: usize) -> Self {
        Self::with_unit_weights(vec![0.0; n], vec![0.0; n])
    }

    pub fn n_steps(&self) -> usize {
        self.p_g.len()
    }

    /// Same powers, multipliers reset to 1.
    pub fn unit_weighted(&self) -> Self {
        Self::with_unit_weights(self.p_g.clone(), self.p_b.clone())
    }
}

/// Simulated outcome of a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Length `n_steps + 1`; `soc[0]` is the initial SOC.
    pub soc: Vec<f64>,
    pub residual_kw: Vec<f64>,
    pub stage_cost: Vec<f64>,
    pub total_cost: f64,
    pub soc_violations: usize,
    pub end_soc: f64,
    pub min_soc: f64,
}

/// SOC after one step at battery power `p_b`. Not clamped.
pub fn soc_step(soc: f64, p_b: f64, capacity_kwh: f64, dt_hours: f64) -> f64 {
    soc - dt_hours * p_b / capacity_kwh
}

/// Unserved power `(p_d + p_unc) - (p_g + p_b + p_pv)`; zero when balanced.
pub fn balance_residual(p_g: f64, p_b: f64, p_pv: f64, p_d: f64, p_unc: f64) -> f64 {
    (p_d + p_unc) - (p_g + p_b + p_pv)
}

/// Weighted dispatch cost of one step in dollars. Battery wear is charged on
/// `|p_b|`, so charging costs as much as discharging.
pub fn stage_cost(p_g: f64, p_b: f64, c_g: f64, c_b: f64, alpha_g: f64, alpha_b: f64, dt_hours: f64) -> f64 {
    alpha_g * c_g * p_g * dt_hours + alpha_b * c_b * p_b.abs() * dt_hours
}

fn check_len(name: &'static str, expected: usize, found: usize) -> Result<(), SystemError> {
    if expected != found {
        return Err(SystemError::LengthMismatch { name, expected, found });
    }
    Ok(())
}

/// Rolls the SOC forward under `schedule` and collects per-step residuals
/// and costs. Prices are taken from `scenario`.
pub fn simulate_schedule(
    scenario: &ScenarioData,
    schedule: &Schedule,
    battery: &BatteryParams,
    p_unc: &[f64],
) -> Result<Trajectory, SystemError> {
    let n = scenario.n_steps();
    check_len("p_g", n, schedule.p_g.len())?;
    check_len("p_b", n, schedule.p_b.len())?;
    check_len("alpha_g", n, schedule.alpha_g.len())?;
    check_len("alpha_b", n, schedule.alpha_b.len())?;
    check_len("p_unc", n, p_unc.len())?;

    let dt = scenario.dt_hours();
    let mut soc = Vec::with_capacity(n + 1);
    soc.push(battery.soc_init);
    let mut residual_kw = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    for t in 0..n {
        let (p_g, p_b) = (schedule.p_g[t], schedule.p_b[t]);
        soc.push(soc_step(soc[t], p_b, battery.capacity_kwh, dt));
        residual_kw.push(balance_residual(p_g, p_b, scenario.p_pv()[t], scenario.p_d()[t], p_unc[t]));
        costs.push(stage_cost(
            p_g,
            p_b,
            scenario.c_g()[t],
            scenario.c_b()[t],
            schedule.alpha_g[t],
            schedule.alpha_b[t],
            dt,
        ));
    }
    let soc_violations = soc[1..]
        .iter()
        .filter(|&&s| s < battery.soc_min - SOC_TOL || s > battery.soc_max + SOC_TOL)
        .count();
    let min_soc = soc[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Trajectory {
        end_soc: soc[n],
        min_soc,
        soc_violations,
        total_cost: costs.iter().sum(),
        stage_cost: costs,
        residual_kw,
        soc,
    })
}
