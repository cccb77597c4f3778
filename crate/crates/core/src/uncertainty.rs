//! Multiplicative perturbations of the scenario inputs and their entropy.
//!
//! Every family draws a factor `f` and perturbs a base value `x` by `f * x`.
//! Default parameters keep draws inside a ±10% envelope around the nominal
//! profile (the exponential and log-normal tails may leave it).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiles::{ProfileError, ScenarioData};

/// Default half-width of the uncertainty envelope.
pub const ENVELOPE_FRAC: f64 = 0.10;

/// Default histogram resolution for entropy estimates.
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("invalid distribution parameters: {0}")]
    InvalidSpec(String),
    #[error("envelope fraction must be non-negative, got {0}")]
    NegativeFraction(f64),
    #[error("entropy needs at least one sample")]
    EmptySamples,
    #[error("entropy needs at least one bin")]
    NoBins,
    #[error("entropy vector needs at least 100 horizon samples, got {0}")]
    TooFewSamples(usize),
    #[error("unknown distribution family `{0}`")]
    UnknownFamily(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Uniform,
    Exponential,
    LogNormal,
    Beta,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Normal, Family::Uniform, Family::Exponential, Family::LogNormal, Family::Beta];

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Uniform => "uniform",
            Family::Exponential => "exponential",
            Family::LogNormal => "lognormal",
            Family::Beta => "beta",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = UncertaintyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gauss" | "gaussian" => Ok(Family::Normal),
            "uniform" => Ok(Family::Uniform),
            "exponential" | "exp" => Ok(Family::Exponential),
            "lognormal" | "log-normal" => Ok(Family::LogNormal),
            "beta" => Ok(Family::Beta),
            _ => Err(UncertaintyError::UnknownFamily(s.to_string())),
        }
    }
}

/// Perturbation factor distribution.
///
/// The exponential family is parameterized by its `scale` (the mean, i.e.
/// the inverse rate) so that `scale = shift = 0.10` gives a zero-mean factor.
/// Degenerate parameters (`sigma = 0`, `a = b`) are accepted and yield a
/// constant factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DistSpec {
    Normal { mu: f64, sigma: f64 },
    Uniform { a: f64, b: f64 },
    Exponential { scale: f64, shift: f64 },
    LogNormal { mu: f64, sigma: f64, shift: f64 },
    Beta { alpha: f64, beta: f64, scale: f64, shift: f64 },
}

impl DistSpec {
    /// Default parameters of each family.
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Normal => DistSpec::Normal { mu: 0.0, sigma: 0.10 },
            Family::Uniform => DistSpec::Uniform { a: -0.10, b: 0.10 },
            Family::Exponential => DistSpec::Exponential { scale: 0.10, shift: 0.10 },
            Family::LogNormal => DistSpec::LogNormal { mu: 0.0, sigma: 0.10, shift: 1.10 },
            Family::Beta => DistSpec::Beta { alpha: 2.0, beta: 2.0, scale: 0.10, shift: 0.5 },
        }
    }

    pub fn family(&self) -> Family {
        match self {
            DistSpec::Normal { .. } => Family::Normal,
            DistSpec::Uniform { .. } => Family::Uniform,
            DistSpec::Exponential { .. } => Family::Exponential,
            DistSpec::LogNormal { .. } => Family::LogNormal,
            DistSpec::Beta { .. } => Family::Beta,
        }
    }

    pub fn validate(&self) -> Result<(), UncertaintyError> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        let ok = match *self {
            DistSpec::Normal { mu, sigma } => finite(&[mu, sigma]) && sigma >= 0.0,
            DistSpec::Uniform { a, b } => finite(&[a, b]) && b >= a,
            DistSpec::Exponential { scale, shift } => finite(&[scale, shift]) && scale > 0.0,
            DistSpec::LogNormal { mu, sigma, shift } => finite(&[mu, sigma, shift]) && sigma >= 0.0,
            DistSpec::Beta { alpha, beta, scale, shift } => {
                finite(&[alpha, beta, scale, shift]) && alpha > 0.0 && beta > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(UncertaintyError::InvalidSpec(format!("{self:?}")))
        }
    }

    /// Analytic mean of the factor.
    pub fn factor_mean(&self) -> f64 {
        match *self {
            DistSpec::Normal { mu, .. } => mu,
            DistSpec::Uniform { a, b } => 0.5 * (a + b),
            DistSpec::Exponential { scale, shift } => scale - shift,
            DistSpec::LogNormal { mu, sigma, shift } => (mu + 0.5 * sigma * sigma).exp() - shift,
            DistSpec::Beta { alpha, beta, scale, shift } => (alpha / (alpha + beta) - shift) * scale,
        }
    }

    /// Analytic standard deviation of the factor.
    pub fn factor_sd(&self) -> f64 {
        match *self {
            DistSpec::Normal { sigma, .. } => sigma,
            DistSpec::Uniform { a, b } => (b - a) / 12f64.sqrt(),
            DistSpec::Exponential { scale, .. } => scale,
            DistSpec::LogNormal { mu, sigma, .. } => {
                let s2 = sigma * sigma;
                ((s2.exp() - 1.0) * (2.0 * mu + s2).exp()).sqrt()
            }
            DistSpec::Beta { alpha, beta, scale, .. } => {
                let n = alpha + beta;
                scale * (alpha * beta / (n * n * (n + 1.0))).sqrt()
            }
        }
    }

    /// Draws one factor. `self` must be valid.
    pub fn sample_factor<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistSpec::Normal { mu, sigma } => {
                if sigma == 0.0 {
                    mu
                } else {
                    Normal::new(mu, sigma).expect("validated").sample(rng)
                }
            }
            DistSpec::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            DistSpec::Exponential { scale, shift } => Exp::new(1.0 / scale).expect("validated").sample(rng) - shift,
            DistSpec::LogNormal { mu, sigma, shift } => {
                let v = if sigma == 0.0 { mu.exp() } else { LogNormal::new(mu, sigma).expect("validated").sample(rng) };
                v - shift
            }
            DistSpec::Beta { alpha, beta, scale, shift } => {
                (Beta::new(alpha, beta).expect("validated").sample(rng) - shift) * scale
            }
        }
    }
}

/// Perturbation of a single base value: `f * x`.
pub fn sample_perturbation<R: Rng + ?Sized>(spec: &DistSpec, x: f64, rng: &mut R) -> Result<f64, UncertaintyError> {
    spec.validate()?;
    if !x.is_finite() {
        return Err(UncertaintyError::InvalidSpec(format!("non-finite base value {x}")));
    }
    Ok(spec.sample_factor(rng) * x)
}

/// One realisation of the perturbations over a horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyDraw {
    pub u_pv: Vec<f64>,
    pub u_d: Vec<f64>,
    pub u_cg: Vec<f64>,
    pub u_cb: Vec<f64>,
    /// Net balancing power, `u_d - u_pv`, kW.
    pub p_unc: Vec<f64>,
}

impl UncertaintyDraw {
    /// A draw with every perturbation zero.
    pub fn zero(n: usize) -> Self {
        Self { u_pv: vec![0.0; n], u_d: vec![0.0; n], u_cg: vec![0.0; n], u_cb: vec![0.0; n], p_unc: vec![0.0; n] }
    }

    pub fn n_steps(&self) -> usize {
        self.p_unc.len()
    }

    /// Scenario with perturbed tariffs `c + u`, floored at zero. Powers stay
    /// nominal; their perturbation enters through `p_unc`.
    pub fn perturbed_scenario(&self, scenario: &ScenarioData) -> Result<ScenarioData, UncertaintyError> {
        let floor = |base: &[f64], u: &[f64]| base.iter().zip(u).map(|(c, du)| (c + du).max(0.0)).collect();
        Ok(scenario.with_prices(floor(scenario.c_g(), &self.u_cg), floor(scenario.c_b(), &self.u_cb))?)
    }

    pub fn content_hash(&self) -> String {
        crate::hash_series(&[&self.u_pv, &self.u_d, &self.u_cg, &self.u_cb, &self.p_unc])
    }
}

/// Samples one perturbation per variable per step, in the order
/// (PV, demand, tariff, battery cost) at each step.
pub fn draw_scenario_uncertainty<R: Rng + ?Sized>(
    scenario: &ScenarioData,
    spec: &DistSpec,
    rng: &mut R,
) -> Result<UncertaintyDraw, UncertaintyError> {
    spec.validate()?;
    let n = scenario.n_steps();
    let mut draw = UncertaintyDraw::zero(n);
    for t in 0..n {
        draw.u_pv[t] = spec.sample_factor(rng) * scenario.p_pv()[t];
        draw.u_d[t] = spec.sample_factor(rng) * scenario.p_d()[t];
        draw.u_cg[t] = spec.sample_factor(rng) * scenario.c_g()[t];
        draw.u_cb[t] = spec.sample_factor(rng) * scenario.c_b()[t];
        draw.p_unc[t] = draw.u_d[t] - draw.u_pv[t];
    }
    Ok(draw)
}

/// `series * (1 ∓ frac)`.
pub fn envelope(series: &[f64], frac: f64) -> Result<(Vec<f64>, Vec<f64>), UncertaintyError> {
    if !(frac >= 0.0) {
        return Err(UncertaintyError::NegativeFraction(frac));
    }
    let lower = series.iter().map(|x| x * (1.0 - frac)).collect();
    let upper = series.iter().map(|x| x * (1.0 + frac)).collect();
    Ok((lower, upper))
}

/// Shannon entropy in bits of an equal-width histogram spanning the sample
/// range. All-equal samples give 0.
pub fn entropy_bits(samples: &[f64], n_bins: usize) -> Result<f64, UncertaintyError> {
    if samples.is_empty() {
        return Err(UncertaintyError::EmptySamples);
    }
    if n_bins == 0 {
        return Err(UncertaintyError::NoBins);
    }
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Ok(0.0);
    }
    let mut counts = vec![0usize; n_bins];
    for &x in samples {
        let k = (((x - lo) / range) * n_bins as f64) as usize;
        counts[k.min(n_bins - 1)] += 1;
    }
    let n = samples.len() as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum())
}

/// Entropy of the pooled perturbations `u = f * x` of PV, demand, tariff and
/// battery cost, over `n_samples` independent horizon draws.
pub fn entropy_state_vector<R: Rng + ?Sized>(
    scenario: &ScenarioData,
    spec: &DistSpec,
    n_samples: usize,
    n_bins: usize,
    rng: &mut R,
) -> Result<[f64; 4], UncertaintyError> {
    if n_samples < 100 {
        return Err(UncertaintyError::TooFewSamples(n_samples));
    }
    let cap = n_samples * scenario.n_steps();
    let mut pools: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(cap));
    for _ in 0..n_samples {
        let d = draw_scenario_uncertainty(scenario, spec, rng)?;
        pools[0].extend_from_slice(&d.u_pv);
        pools[1].extend_from_slice(&d.u_d);
        pools[2].extend_from_slice(&d.u_cg);
        pools[3].extend_from_slice(&d.u_cb);
    }
    let mut out = [0.0; 4];
    for (h, pool) in out.iter_mut().zip(&pools) {
        *h = entropy_bits(pool, n_bins)?;
    }
    Ok(out)
}
