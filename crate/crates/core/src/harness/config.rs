//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are grouped by
//! prefix (`scenario.`, `uncertainty.`, `battery.`, `grid.`, `grad_opt.`,
//! `env.`, `sac.`); unknown keys are rejected so typos surface early.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::env::{EnvConfig, StateMode};
use crate::grad_opt::GradOptConfig;
use crate::profiles::{load_scenario_csv, scale_profile, synth_scenario, ScenarioData};
use crate::sac::SacConfig;
use crate::system::{BatteryParams, GridParams};
use crate::uncertainty::{DistSpec, Family};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Csv(PathBuf),
    Synth { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverSelection {
    Grad,
    Sac,
    Both,
}

impl SolverSelection {
    pub fn runs_grad(self) -> bool {
        matches!(self, SolverSelection::Grad | SolverSelection::Both)
    }

    pub fn runs_sac(self) -> bool {
        matches!(self, SolverSelection::Sac | SolverSelection::Both)
    }
}

impl FromStr for SolverSelection {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "grad" => Ok(SolverSelection::Grad),
            "sac" => Ok(SolverSelection::Sac),
            "both" => Ok(SolverSelection::Both),
            _ => Err(HarnessError::Config(format!("unknown solver `{s}` (grad, sac, both)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    pub n_steps: usize,
    pub dt_hours: f64,
    pub power_scale: f64,
    pub price_scale: f64,
    pub families: Vec<DistSpec>,
    pub solver: SolverSelection,
    pub battery: BatteryParams,
    pub grid: GridParams,
    pub grad: GradOptConfig,
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub repeats: usize,
}

impl Default for ExperimentConfig {
    /// Desk-scale defaults: every family, both solvers, five repeats.
    fn default() -> Self {
        Self {
            scenario: ScenarioSource::Synth { seed: 7 },
            n_steps: 48,
            dt_hours: 0.5,
            power_scale: 1.0,
            price_scale: 1.0,
            families: Family::ALL.iter().map(|&f| DistSpec::default_for(f)).collect(),
            solver: SolverSelection::Both,
            battery: BatteryParams::default(),
            grid: GridParams::default(),
            grad: GradOptConfig::default(),
            env: EnvConfig::default(),
            sac: SacConfig::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            repeats: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.repeats == 0 {
            return Err(HarnessError::Config("repeats must be at least 1".into()));
        }
        if self.families.is_empty() {
            return Err(HarnessError::Config("no uncertainty family selected".into()));
        }
        for spec in &self.families {
            spec.validate()?;
        }
        self.battery.validate()?;
        self.grid.validate()?;
        self.grad.validate()?;
        self.env.validate()?;
        self.sac.validate()?;
        Ok(())
    }

    /// Loads or synthesizes the scenario and applies the scale factors.
    pub fn load_scenario(&self) -> Result<ScenarioData, HarnessError> {
        let s = match &self.scenario {
            ScenarioSource::Csv(path) => load_scenario_csv(path, self.dt_hours)?,
            ScenarioSource::Synth { seed } => synth_scenario(*seed, self.n_steps, self.dt_hours)?,
        };
        if self.power_scale == 1.0 && self.price_scale == 1.0 {
            Ok(s)
        } else {
            Ok(scale_profile(&s, self.power_scale, self.price_scale)?)
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    /// Parses the flat format over the defaults.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(HarnessError::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        let mut cfg = Self::default();
        cfg.apply(&map)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<(), HarnessError> {
        let mut family_params = BTreeMap::new();
        for (k, v) in map {
            if let Some(p) = k.strip_prefix("uncertainty.params.") {
                family_params.insert(p.to_string(), num::<f64>(k, v)?);
                continue;
            }
            match k.as_str() {
                "seed" => self.seed = num(k, v)?,
                "repeats" => self.repeats = num(k, v)?,
                "solver" => self.solver = v.parse()?,
                "out_dir" => self.out_dir = PathBuf::from(v),
                "scenario.csv" => self.scenario = ScenarioSource::Csv(PathBuf::from(v)),
                "scenario.synth_seed" => self.scenario = ScenarioSource::Synth { seed: num(k, v)? },
                "scenario.n_steps" => self.n_steps = num(k, v)?,
                "scenario.dt_hours" => self.dt_hours = num(k, v)?,
                "scenario.power_scale" => self.power_scale = num(k, v)?,
                "scenario.price_scale" => self.price_scale = num(k, v)?,
                "uncertainty.family" => self.families = parse_families(v)?,

                "battery.capacity_kwh" => self.battery.capacity_kwh = num(k, v)?,
                "battery.soc_init" => self.battery.soc_init = num(k, v)?,
                "battery.soc_min" => self.battery.soc_min = num(k, v)?,
                "battery.soc_max" => self.battery.soc_max = num(k, v)?,
                "battery.p_b_min" => self.battery.p_b_min = num(k, v)?,
                "battery.p_b_max" => self.battery.p_b_max = num(k, v)?,
                "grid.p_g_min" => self.grid.p_g_min = num(k, v)?,
                "grid.p_g_max" => self.grid.p_g_max = num(k, v)?,

                "grad_opt.n_epochs" => self.grad.n_epochs = num(k, v)?,
                "grad_opt.tol" => self.grad.tol = num(k, v)?,
                "grad_opt.init_lr" => self.grad.init_lr = num(k, v)?,
                "grad_opt.d_rate" => self.grad.d_rate = num(k, v)?,
                "grad_opt.d_steps" => self.grad.d_steps = num(k, v)?,
                "grad_opt.lambda_soc" => self.grad.lambda_soc = num(k, v)?,
                "grad_opt.lambda_balance" => self.grad.lambda_balance = num(k, v)?,
                "grad_opt.lambda_alpha" => self.grad.lambda_alpha = num(k, v)?,
                "grad_opt.lambda_end_soc" => self.grad.lambda_end_soc = num(k, v)?,
                "grad_opt.alpha_min" => self.grad.alpha_min = num(k, v)?,
                "grad_opt.alpha_max" => self.grad.alpha_max = num(k, v)?,
                "grad_opt.alpha_cap" => self.grad.alpha_cap = Some(num(k, v)?),
                "grad_opt.end_soc_target" => self.grad.end_soc_target = num(k, v)?,
                "grad_opt.check_every" => self.grad.check_every = num(k, v)?,
                "grad_opt.wall_budget_s" => self.grad.wall_budget_s = Some(num(k, v)?),
                "grad_opt.restarts" => self.grad.restarts = num(k, v)?,

                "env.alpha_g_fixed" => self.env.alpha_g_fixed = num(k, v)?,
                "env.alpha_b_fixed" => self.env.alpha_b_fixed = num(k, v)?,
                "env.alpha_s" => self.env.alpha_s = num(k, v)?,
                "env.alpha_l" => self.env.alpha_l = num(k, v)?,
                "env.alpha_p" => self.env.alpha_p = num(k, v)?,
                "env.eta" => self.env.eta = num(k, v)?,
                "env.beta" => self.env.beta = num(k, v)?,
                "env.soc_min" => self.env.soc_min = num(k, v)?,
                "env.soc_max" => self.env.soc_max = num(k, v)?,
                "env.power_norm_k" => self.env.power_norm_k = num(k, v)?,
                "env.price_norm_k" => self.env.price_norm_k = num(k, v)?,
                "env.state_mode" => self.env.state_mode = parse_state_mode(v)?,
                "env.safety_layer" => self.env.safety_layer = num(k, v)?,
                "env.entropy_samples" => self.env.entropy_samples = num(k, v)?,
                "env.entropy_bins" => self.env.entropy_bins = num(k, v)?,

                "sac.lr" => self.sac.lr = num(k, v)?,
                "sac.buffer_capacity" => self.sac.buffer_capacity = num(k, v)?,
                "sac.learning_starts" => self.sac.learning_starts = num(k, v)?,
                "sac.batch_size" => self.sac.batch_size = num(k, v)?,
                "sac.gamma" => self.sac.gamma = num(k, v)?,
                "sac.tau" => self.sac.tau = num(k, v)?,
                "sac.alpha_t" => self.sac.alpha_t = num(k, v)?,
                "sac.auto_temperature" => self.sac.auto_temperature = num(k, v)?,
                "sac.target_entropy" => self.sac.target_entropy = num(k, v)?,
                "sac.hidden" => self.sac.hidden = parse_list(k, v)?,
                "sac.total_steps" => self.sac.total_steps = num(k, v)?,
                "sac.eval_every" => self.sac.eval_every = num(k, v)?,
                "sac.eval_episodes" => self.sac.eval_episodes = num(k, v)?,
                "sac.store_raw_action" => self.sac.store_raw_action = num(k, v)?,
                _ => return Err(HarnessError::Config(format!("unknown key `{k}`"))),
            }
        }
        if !family_params.is_empty() {
            if self.families.len() != 1 {
                return Err(HarnessError::Config("uncertainty.params.* needs exactly one uncertainty.family".into()));
            }
            self.families[0] = with_params(self.families[0], &family_params)?;
        }
        Ok(())
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.parse().map_err(|_| HarnessError::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>, HarnessError> {
    v.split(',').map(|p| num(key, p.trim())).collect()
}

fn parse_state_mode(v: &str) -> Result<StateMode, HarnessError> {
    match v.to_ascii_lowercase().as_str() {
        "per_step" | "perstepuncertainty" => Ok(StateMode::PerStepUncertainty),
        "entropy" | "entropyvector" => Ok(StateMode::EntropyVector),
        _ => Err(HarnessError::Config(format!("unknown env.state_mode `{v}` (per_step, entropy)"))),
    }
}

/// `all` or a comma-separated list of family names.
pub fn parse_families(v: &str) -> Result<Vec<DistSpec>, HarnessError> {
    if v.eq_ignore_ascii_case("all") {
        return Ok(Family::ALL.iter().map(|&f| DistSpec::default_for(f)).collect());
    }
    v.split(',').map(|name| Ok(DistSpec::default_for(name.trim().parse::<Family>()?))).collect()
}

fn with_params(spec: DistSpec, p: &BTreeMap<String, f64>) -> Result<DistSpec, HarnessError> {
    let get = |name: &str, default: f64| p.get(name).copied().unwrap_or(default);
    let allowed: &[&str] = match spec {
        DistSpec::Normal { .. } => &["mu", "sigma"],
        DistSpec::Uniform { .. } => &["a", "b"],
        DistSpec::Exponential { .. } => &["scale", "shift"],
        DistSpec::LogNormal { .. } => &["mu", "sigma", "shift"],
        DistSpec::Beta { .. } => &["alpha", "beta", "scale", "shift"],
    };
    if let Some(bad) = p.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(HarnessError::Config(format!("`{bad}` is not a parameter of {}", spec.family())));
    }
    let out = match spec {
        DistSpec::Normal { mu, sigma } => DistSpec::Normal { mu: get("mu", mu), sigma: get("sigma", sigma) },
        DistSpec::Uniform { a, b } => DistSpec::Uniform { a: get("a", a), b: get("b", b) },
        DistSpec::Exponential { scale, shift } => {
            DistSpec::Exponential { scale: get("scale", scale), shift: get("shift", shift) }
        }
        DistSpec::LogNormal { mu, sigma, shift } => {
            DistSpec::LogNormal { mu: get("mu", mu), sigma: get("sigma", sigma), shift: get("shift", shift) }
        }
        DistSpec::Beta { alpha, beta, scale, shift } => DistSpec::Beta {
            alpha: get("alpha", alpha),
            beta: get("beta", beta),
            scale: get("scale", scale),
            shift: get("shift", shift),
        },
    };
    out.validate()?;
    Ok(out)
}
