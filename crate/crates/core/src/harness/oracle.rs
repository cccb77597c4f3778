//! Exhaustive search over discretized grid imports for tiny horizons.
//!
//! With the set points fixed, the objective is linear and increasing in
//! each multiplier, so the best multipliers sit at their lower bound. The
//! search therefore fixes both multipliers at 1 and minimizes plain dollar
//! cost; any other constant multiplier only rescales the optimum.

use crate::profiles::ScenarioData;
use crate::system::{soc_step, stage_cost, BatteryParams, GridParams, Schedule, SOC_TOL};

use super::HarnessError;

/// Longest horizon the enumeration accepts.
pub const ORACLE_MAX_STEPS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Dollar cost of `schedule`.
    pub cost: f64,
    /// Unit-weighted schedule with exact power balance at zero uncertainty.
    pub schedule: Schedule,
    /// Complete feasible schedules evaluated; branches already costlier
    /// than the incumbent are cut before completion.
    pub evaluated: u64,
}

struct Search<'a> {
    s: &'a ScenarioData,
    battery: &'a BatteryParams,
    levels: Vec<f64>,
    best_cost: f64,
    best: Vec<(f64, f64)>,
    path: Vec<(f64, f64)>,
    evaluated: u64,
}

impl Search<'_> {
    fn visit(&mut self, t: usize, soc: f64, cost: f64) {
        if t == self.s.n_steps() {
            self.evaluated += 1;
            if cost < self.best_cost {
                self.best_cost = cost;
                self.best = self.path.clone();
            }
            return;
        }
        // stage costs are non-negative, so this branch cannot improve
        if cost >= self.best_cost {
            return;
        }
        let dt = self.s.dt_hours();
        let need = self.s.p_d()[t] - self.s.p_pv()[t];
        for i in 0..self.levels.len() {
            let p_g = self.levels[i];
            let p_b = need - p_g;
            if p_b < self.battery.p_b_min || p_b > self.battery.p_b_max {
                continue;
            }
            let next = soc_step(soc, p_b, self.battery.capacity_kwh, dt);
            if next < self.battery.soc_min - SOC_TOL || next > self.battery.soc_max + SOC_TOL {
                continue;
            }
            let c = stage_cost(p_g, p_b, self.s.c_g()[t], self.s.c_b()[t], 1.0, 1.0, dt);
            self.path.push((p_g, p_b));
            self.visit(t + 1, next, cost + c);
            self.path.pop();
        }
    }
}

/// Enumerates `p_g` over `{p_g_min, p_g_min + res, ...} <= p_g_max` at every
/// step with `p_b` set by exact balance, keeping schedules that respect the
/// battery power box and SOC band. Prices must be non-negative, which
/// [`ScenarioData`] guarantees.
pub fn brute_force_oracle(
    scenario: &ScenarioData,
    battery: &BatteryParams,
    grid: &GridParams,
    grid_resolution: f64,
) -> Result<OracleResult, HarnessError> {
    let n = scenario.n_steps();
    if n > ORACLE_MAX_STEPS {
        return Err(HarnessError::Invalid(format!("oracle horizon {n} exceeds {ORACLE_MAX_STEPS} steps")));
    }
    if !(grid_resolution > 0.0 && grid_resolution.is_finite()) {
        return Err(HarnessError::Invalid("grid_resolution must be positive".into()));
    }
    battery.validate()?;
    grid.validate()?;
    let count = ((grid.p_g_max - grid.p_g_min) / grid_resolution + 1e-9).floor() as usize + 1;
    let levels = (0..count).map(|k| grid.p_g_min + k as f64 * grid_resolution).collect();

    let mut search = Search {
        s: scenario,
        battery,
        levels,
        best_cost: f64::INFINITY,
        best: Vec::new(),
        path: Vec::with_capacity(n),
        evaluated: 0,
    };
    search.visit(0, battery.soc_init, 0.0);
    if search.best.len() != n {
        return Err(HarnessError::NoFeasiblePoint);
    }
    let schedule = Schedule::with_unit_weights(
        search.best.iter().map(|p| p.0).collect(),
        search.best.iter().map(|p| p.1).collect(),
    );
    Ok(OracleResult { cost: search.best_cost, schedule, evaluated: search.evaluated })
}
