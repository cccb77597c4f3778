//! Penalty loss of the schedule problem and its analytic gradient.
//!
//! All powers are divided by `power_norm_k` and all prices by
//! `price_norm_k` before evaluation; the multipliers are used as-is.
//! Gradients are taken with respect to the normalized powers and the raw
//! multipliers, laid out as `[p_g; p_b; alpha_g; alpha_b]`.

use crate::profiles::ScenarioData;
use crate::system::{BatteryParams, GridParams, Schedule, SystemError};

use super::{GradOptConfig, GradOptError};

/// Precomputed normalized inputs for repeated loss evaluations.
#[derive(Debug, Clone)]
pub struct PenaltyProblem {
    n: usize,
    dt: f64,
    /// SOC decrease per unit of normalized discharge power over one step.
    soc_per_unit: f64,
    soc_init: f64,
    soc_lo: f64,
    soc_hi: f64,
    end_target: f64,
    g_max: f64,
    b_max: f64,
    pv: Vec<f64>,
    demand: Vec<f64>,
    unc: Vec<f64>,
    cg: Vec<f64>,
    cb: Vec<f64>,
    alpha_target: Vec<f64>,
    lambda_soc: f64,
    lambda_balance: f64,
    lambda_alpha: f64,
    lambda_end_soc: f64,
}

/// Maps each tariff affinely from `[min c_g, max c_g]` onto
/// `[alpha_min, alpha_max]`. A flat tariff has no ordering to follow and
/// maps to the midpoint, which keeps the cost term from vanishing beside
/// the balance penalty.
pub fn alpha_targets(c_g: &[f64], alpha_min: f64, alpha_max: f64) -> Vec<f64> {
    let (lo, hi) = c_g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    let span = hi - lo;
    c_g.iter()
        .map(|&c| if span > 0.0 { alpha_min + (c - lo) / span * (alpha_max - alpha_min) } else { 0.5 * (alpha_min + alpha_max) })
        .collect()
}

impl PenaltyProblem {
    pub fn new(
        scenario: &ScenarioData,
        p_unc: &[f64],
        battery: &BatteryParams,
        grid: &GridParams,
        config: &GradOptConfig,
    ) -> Result<Self, GradOptError> {
        let n = scenario.n_steps();
        if p_unc.len() != n {
            return Err(SystemError::LengthMismatch { name: "p_unc", expected: n, found: p_unc.len() }.into());
        }
        let pk = config.power_norm_k;
        let ck = config.price_norm_k;
        let norm = |v: &[f64], k: f64| v.iter().map(|x| x / k).collect::<Vec<_>>();
        Ok(Self {
            n,
            dt: scenario.dt_hours(),
            soc_per_unit: scenario.dt_hours() * pk / battery.capacity_kwh,
            soc_init: battery.soc_init,
            soc_lo: battery.soc_min,
            soc_hi: battery.soc_max,
            end_target: config.end_soc_target,
            g_max: grid.p_g_max / pk,
            b_max: battery.p_b_max / pk,
            pv: norm(scenario.p_pv(), pk),
            demand: norm(scenario.p_d(), pk),
            unc: norm(p_unc, pk),
            cg: norm(scenario.c_g(), ck),
            cb: norm(scenario.c_b(), ck),
            alpha_target: alpha_targets(scenario.c_g(), config.alpha_min, config.alpha_max),
            lambda_soc: config.lambda_soc,
            lambda_balance: config.lambda_balance,
            lambda_alpha: config.lambda_alpha,
            lambda_end_soc: config.lambda_end_soc,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n
    }

    pub fn alpha_target(&self) -> &[f64] {
        &self.alpha_target
    }

    /// Loss at `x = [g; b; alpha_g; alpha_b]` (normalized powers). Writes
    /// the gradient into `grad`, which must have length `4 * n`.
    pub fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.n;
        debug_assert_eq!(x.len(), 4 * n);
        debug_assert_eq!(grad.len(), 4 * n);
        let (g, rest) = x.split_at(n);
        let (b, rest) = rest.split_at(n);
        let (ag, ab) = rest.split_at(n);
        let (grad_g, rest) = grad.split_at_mut(n);
        let (grad_b, rest) = rest.split_at_mut(n);
        let (grad_ag, grad_ab) = rest.split_at_mut(n);

        let dt = self.dt;
        let mut loss = 0.0;
        for t in 0..n {
            let abs_b = b[t].abs();
            let sign_b = if b[t] > 0.0 {
                1.0
            } else if b[t] < 0.0 {
                -1.0
            } else {
                0.0
            };
            let over_g = (g[t] - self.g_max).max(0.0);
            let over_b = (b[t] - self.b_max).max(0.0);
            let r = self.demand[t] + self.unc[t] - g[t] - b[t] - self.pv[t];
            let da = ag[t] - self.alpha_target[t];

            loss += (ag[t] * self.cg[t] * g[t] + ab[t] * self.cb[t] * abs_b) * dt
                + ag[t] * over_g * over_g
                + ab[t] * over_b * over_b
                + self.lambda_balance * r * r
                + self.lambda_alpha * da * da;

            grad_g[t] = ag[t] * self.cg[t] * dt + 2.0 * ag[t] * over_g - 2.0 * self.lambda_balance * r;
            grad_b[t] = ab[t] * self.cb[t] * dt * sign_b + 2.0 * ab[t] * over_b - 2.0 * self.lambda_balance * r;
            grad_ag[t] = self.cg[t] * g[t] * dt + over_g * over_g + 2.0 * self.lambda_alpha * da;
            grad_ab[t] = self.cb[t] * abs_b * dt + over_b * over_b;
        }

        // SOC terms. soc_s depends on every b_t with t < s, so the battery
        // gradient picks up a suffix sum of dL/dsoc.
        let mut soc = self.soc_init;
        let mut dsoc = vec![0.0; n];
        for t in 0..n {
            soc -= self.soc_per_unit * b[t];
            let under = (self.soc_lo - soc).max(0.0);
            let over = (soc - self.soc_hi).max(0.0);
            loss += self.lambda_soc * (under * under + over * over);
            dsoc[t] = self.lambda_soc * (2.0 * over - 2.0 * under);
        }
        let short = (self.end_target - soc).max(0.0);
        loss += self.lambda_end_soc * short * short;
        dsoc[n - 1] -= 2.0 * self.lambda_end_soc * short;

        let mut suffix = 0.0;
        for t in (0..n).rev() {
            suffix += dsoc[t];
            grad_b[t] -= self.soc_per_unit * suffix;
        }
        loss
    }
}

/// Penalty loss of `schedule` (powers in kW) and its gradient with respect
/// to `[p_g / k; p_b / k; alpha_g; alpha_b]`.
pub fn penalty_loss(
    schedule: &Schedule,
    scenario: &ScenarioData,
    p_unc: &[f64],
    battery: &BatteryParams,
    grid: &GridParams,
    config: &GradOptConfig,
) -> Result<(f64, Vec<f64>), GradOptError> {
    let n = scenario.n_steps();
    for (name, len) in [
        ("p_g", schedule.p_g.len()),
        ("p_b", schedule.p_b.len()),
        ("alpha_g", schedule.alpha_g.len()),
        ("alpha_b", schedule.alpha_b.len()),
    ] {
        if len != n {
            return Err(SystemError::LengthMismatch { name, expected: n, found: len }.into());
        }
    }
    let problem = PenaltyProblem::new(scenario, p_unc, battery, grid, config)?;
    let k = config.power_norm_k;
    let mut x = Vec::with_capacity(4 * n);
    x.extend(schedule.p_g.iter().map(|p| p / k));
    x.extend(schedule.p_b.iter().map(|p| p / k));
    x.extend_from_slice(&schedule.alpha_g);
    x.extend_from_slice(&schedule.alpha_b);
    let mut grad = vec![0.0; 4 * n];
    let loss = problem.eval(&x, &mut grad);
    Ok((loss, grad))
}
