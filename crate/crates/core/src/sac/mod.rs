//! Soft Actor-Critic for the scheduling environment.
//!
//! The policy acts in the unit box `[-1, 1]^2`; [`scale_action`] maps that
//! onto the grid and battery power boxes. Critics score `(obs, unit action)`
//! pairs. By default the replay buffer stores the action the environment
//! actually executed (after clamping and the safety layer), mapped back to
//! the unit box.

pub mod mlp;
pub mod replay;

use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{rollout, BessEnv, EnvConfig, EnvError};
use crate::grad_opt::{AdamError, AdamState};
use crate::system::{BatteryParams, GridParams};
use crate::uncertainty::{draw_scenario_uncertainty, DistSpec, UncertaintyError};

pub use mlp::{param_count, ForwardCache, Mlp};
pub use replay::{Batch, ReplayBuffer};

pub const ACT_DIM: usize = 2;
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Keeps the tanh change-of-variables term finite at `|a| -> 1`.
pub const TANH_EPS: f64 = 1e-6;
pub const CHECKPOINT_VERSION: u32 = 1;

const LN_2PI: f64 = 1.8378770664093453;
/// Offset separating the evaluation random stream from the training one.
const EVAL_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum SacError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("replay buffer holds {size} transitions, need {needed}")]
    BufferTooSmall { size: usize, needed: usize },
    #[error("invalid sac config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Adam(#[from] AdamError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub lr: f64,
    pub buffer_capacity: usize,
    pub learning_starts: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    /// Initial (or fixed) temperature.
    pub alpha_t: f64,
    pub auto_temperature: bool,
    pub target_entropy: f64,
    pub hidden: Vec<usize>,
    pub total_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    /// Store the raw policy action instead of the executed one.
    pub store_raw_action: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            buffer_capacity: 10_000,
            learning_starts: 500,
            batch_size: 64,
            gamma: 0.99,
            tau: 0.005,
            alpha_t: 0.2,
            auto_temperature: false,
            target_entropy: -(ACT_DIM as f64),
            hidden: vec![64, 64],
            total_steps: 50_000,
            eval_every: 5_000,
            eval_episodes: 20,
            seed: 0,
            store_raw_action: false,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        let bad = |m: &str| Err(SacError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.lr > 0.0) || !(self.alpha_t > 0.0) {
            return bad("lr and alpha_t must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("need 0 < batch_size <= buffer_capacity");
        }
        if self.learning_starts < self.batch_size {
            return bad("learning_starts must be at least batch_size");
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("eval_every and eval_episodes must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Affine map from `[-1, 1]^2` onto the grid and battery boxes.
pub fn scale_action(unit: [f64; 2], grid: &GridParams, battery: &BatteryParams) -> (f64, f64) {
    let map = |u: f64, lo: f64, hi: f64| lo + 0.5 * (u + 1.0) * (hi - lo);
    (map(unit[0], grid.p_g_min, grid.p_g_max), map(unit[1], battery.p_b_min, battery.p_b_max))
}

/// Inverse of [`scale_action`]; a zero-width box maps to 0.
pub fn unscale_action(p: (f64, f64), grid: &GridParams, battery: &BatteryParams) -> [f64; 2] {
    let inv = |v: f64, lo: f64, hi: f64| if hi > lo { 2.0 * (v - lo) / (hi - lo) - 1.0 } else { 0.0 };
    [inv(p.0, grid.p_g_min, grid.p_g_max), inv(p.1, battery.p_b_min, battery.p_b_max)]
}

/// Squashed-Gaussian draw from raw actor outputs for one sample. Returns the
/// action and its log-density.
fn squash(mean: [f64; 2], log_std_raw: [f64; 2], eps: [f64; 2]) -> ([f64; 2], f64) {
    let mut a = [0.0; 2];
    let mut lp = 0.0;
    for i in 0..ACT_DIM {
        let ls = log_std_raw[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let z = mean[i] + ls.exp() * eps[i];
        a[i] = z.tanh();
        lp += -0.5 * eps[i] * eps[i] - ls - 0.5 * LN_2PI - (1.0 - a[i] * a[i] + TANH_EPS).ln();
    }
    (a, lp)
}

fn split_actor_row(out: &[f64]) -> ([f64; 2], [f64; 2]) {
    ([out[0], out[1]], [out[2], out[3]])
}

fn normal_pair<R: Rng + ?Sized>(rng: &mut R) -> [f64; 2] {
    [rng.sample(StandardNormal), rng.sample(StandardNormal)]
}

/// Stochastic action in `(-1, 1)^2` and its log-probability.
pub fn policy_sample<R: Rng + ?Sized>(actor: &Mlp, obs: &[f64], rng: &mut R) -> Result<([f64; 2], f64), SacError> {
    let out = actor.forward(obs)?;
    let (mean, ls) = split_actor_row(&out);
    Ok(squash(mean, ls, normal_pair(rng)))
}

/// Log-density of the squashed Gaussian at unit action `a` for one state.
pub fn policy_log_prob(actor: &Mlp, obs: &[f64], a: [f64; 2]) -> Result<f64, SacError> {
    let out = actor.forward(obs)?;
    let (mean, raw) = split_actor_row(&out);
    let mut lp = 0.0;
    for i in 0..ACT_DIM {
        let ls = raw[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let z = a[i].clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh();
        let e = (z - mean[i]) / ls.exp();
        lp += -0.5 * e * e - ls - 0.5 * LN_2PI - (1.0 - a[i] * a[i] + TANH_EPS).ln();
    }
    Ok(lp)
}

/// `tanh(mean)`: the action used for evaluation.
pub fn deterministic_action(actor: &Mlp, obs: &[f64]) -> Result<[f64; 2], SacError> {
    let out = actor.forward(obs)?;
    Ok([out[0].tanh(), out[1].tanh()])
}

/// Network weights. Targets always share the critics' shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    pub log_alpha: f64,
}

impl AgentParams {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], alpha_t: f64, rng: &mut R) -> Result<Self, SacError> {
        let sizes = |i: usize, o: usize| [&[i][..], hidden, &[o][..]].concat();
        let actor = Mlp::new(&sizes(obs_dim, 2 * ACT_DIM), rng)?;
        let critic1 = Mlp::new(&sizes(obs_dim + ACT_DIM, 1), rng)?;
        let critic2 = Mlp::new(&sizes(obs_dim + ACT_DIM, 1), rng)?;
        Ok(Self { target1: critic1.clone(), target2: critic2.clone(), actor, critic1, critic2, log_alpha: alpha_t.ln() })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }
}

fn column(m: &Array2<f64>, c: usize) -> Array1<f64> {
    m.column(c).to_owned()
}

fn draw_eps<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((n, ACT_DIM), |_| rng.sample(StandardNormal))
}

/// Squashed actions and log-probs for a batch of raw actor outputs.
fn squash_batch(out: &Array2<f64>, eps: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let n = out.nrows();
    let mut actions = Array2::zeros((n, ACT_DIM));
    let mut lps = Array1::zeros(n);
    for r in 0..n {
        let (a, lp) = squash([out[[r, 0]], out[[r, 1]]], [out[[r, 2]], out[[r, 3]]], [eps[[r, 0]], eps[[r, 1]]]);
        actions[[r, 0]] = a[0];
        actions[[r, 1]] = a[1];
        lps[r] = lp;
    }
    (actions, lps)
}

/// Bellman targets with a fresh next action from the current actor, using
/// the given standard-normal noise (one row per transition).
pub fn critic_targets_with_noise(
    params: &AgentParams,
    batch: &Batch,
    gamma: f64,
    eps: &Array2<f64>,
) -> Result<Array1<f64>, SacError> {
    let out = params.actor.forward_batch(batch.next_obs.view())?;
    let (a_next, lp_next) = squash_batch(&out, eps);
    let sa = concatenate![Axis(1), batch.next_obs, a_next];
    let q1 = column(&params.target1.forward_batch(sa.view())?, 0);
    let q2 = column(&params.target2.forward_batch(sa.view())?, 0);
    let alpha = params.alpha();
    let mut y = Array1::zeros(batch.len());
    for r in 0..batch.len() {
        let soft_v = q1[r].min(q2[r]) - alpha * lp_next[r];
        y[r] = batch.rewards[r] + gamma * (1.0 - batch.dones[r]) * soft_v;
    }
    Ok(y)
}

/// Mean squared error of a critic against `y`, with its parameter gradient.
pub fn critic_loss_and_grad(critic: &Mlp, sa: ArrayView2<f64>, y: &Array1<f64>) -> Result<(f64, Vec<f64>), SacError> {
    let cache = critic.forward_cached(sa)?;
    let q = cache.output();
    let n = y.len() as f64;
    let mut loss = 0.0;
    let mut g = Array2::zeros(q.dim());
    for r in 0..y.len() {
        let d = q[[r, 0]] - y[r];
        loss += d * d / n;
        g[[r, 0]] = 2.0 * d / n;
    }
    let (grads, _) = critic.backward(&cache, g.view())?;
    Ok((loss, grads))
}

/// Actor objective `mean(alpha * log_pi - min(Q1, Q2))` under the
/// reparameterized noise `eps`, with its gradient over actor parameters.
/// Also returns the mean log-probability.
pub fn actor_loss_and_grad(
    params: &AgentParams,
    obs: ArrayView2<f64>,
    eps: &Array2<f64>,
    alpha: f64,
) -> Result<(f64, Vec<f64>, f64), SacError> {
    let n = obs.nrows();
    let nf = n as f64;
    let cache = params.actor.forward_cached(obs)?;
    let out = cache.output();
    let (actions, lps) = squash_batch(out, eps);
    let sa = concatenate![Axis(1), obs, actions];
    let c1 = params.critic1.forward_cached(sa.view())?;
    let c2 = params.critic2.forward_cached(sa.view())?;
    let mut g1 = Array2::zeros((n, 1));
    let mut g2 = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for r in 0..n {
        let (q1, q2) = (c1.output()[[r, 0]], c2.output()[[r, 0]]);
        if q1 <= q2 {
            g1[[r, 0]] = -1.0 / nf;
        } else {
            g2[[r, 0]] = -1.0 / nf;
        }
        loss += (alpha * lps[r] - q1.min(q2)) / nf;
    }
    let (_, dsa1) = params.critic1.backward(&c1, g1.view())?;
    let (_, dsa2) = params.critic2.backward(&c2, g2.view())?;
    let od = obs.ncols();
    let dq_da = dsa1.slice(s![.., od..]).to_owned() + dsa2.slice(s![.., od..]);

    let mut g_out = Array2::zeros(out.dim());
    for r in 0..n {
        for i in 0..ACT_DIM {
            let a = actions[[r, i]];
            let one_m = 1.0 - a * a;
            let g_z = dq_da[[r, i]] * one_m + alpha / nf * 2.0 * a * one_m / (one_m + TANH_EPS);
            g_out[[r, i]] = g_z;
            let raw = out[[r, ACT_DIM + i]];
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                g_out[[r, ACT_DIM + i]] = g_z * raw.exp() * eps[[r, i]] - alpha / nf;
            }
        }
    }
    let (grads, _) = params.actor.backward(&cache, g_out.view())?;
    Ok((loss, grads, lps.mean().unwrap_or(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateInfo {
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

/// Parameters plus optimizer state.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub params: AgentParams,
    pub config: SacConfig,
    actor_opt: AdamState,
    critic1_opt: AdamState,
    critic2_opt: AdamState,
    alpha_opt: AdamState,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, config: SacConfig, rng: &mut R) -> Result<Self, SacError> {
        config.validate()?;
        let params = AgentParams::new(obs_dim, &config.hidden, config.alpha_t, rng)?;
        Ok(Self::from_params(params, config))
    }

    pub fn from_params(params: AgentParams, config: SacConfig) -> Self {
        Self {
            actor_opt: AdamState::new(params.actor.params().len()),
            critic1_opt: AdamState::new(params.critic1.params().len()),
            critic2_opt: AdamState::new(params.critic2.params().len()),
            alpha_opt: AdamState::new(1),
            params,
            config,
        }
    }

    pub fn critic_targets<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Array1<f64>, SacError> {
        let eps = draw_eps(batch.len(), rng);
        critic_targets_with_noise(&self.params, batch, self.config.gamma, &eps)
    }

    /// One gradient step on both critics, the actor and (optionally) the
    /// temperature, followed by the soft target update.
    pub fn update_on_batch<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<UpdateInfo, SacError> {
        let lr = self.config.lr;
        let y = self.critic_targets(batch, rng)?;
        let sa = concatenate![Axis(1), batch.obs, batch.actions];
        let (l1, g1) = critic_loss_and_grad(&self.params.critic1, sa.view(), &y)?;
        self.critic1_opt.step(self.params.critic1.params_mut(), &g1, lr)?;
        let (l2, g2) = critic_loss_and_grad(&self.params.critic2, sa.view(), &y)?;
        self.critic2_opt.step(self.params.critic2.params_mut(), &g2, lr)?;

        let eps = draw_eps(batch.len(), rng);
        let alpha = self.params.alpha();
        let (actor_loss, ga, mean_lp) = actor_loss_and_grad(&self.params, batch.obs.view(), &eps, alpha)?;
        self.actor_opt.step(self.params.actor.params_mut(), &ga, lr)?;

        if self.config.auto_temperature {
            let grad = -(mean_lp + self.config.target_entropy);
            let mut la = [self.params.log_alpha];
            self.alpha_opt.step(&mut la, &[grad], lr)?;
            self.params.log_alpha = la[0];
        }

        let tau = self.config.tau;
        self.params.target1.soft_update_from(&self.params.critic1, tau)?;
        self.params.target2.soft_update_from(&self.params.critic2, tau)?;
        Ok(UpdateInfo { critic1_loss: l1, critic2_loss: l2, actor_loss, alpha: self.params.alpha() })
    }

    pub fn update_step<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<UpdateInfo, SacError> {
        let needed = self.config.learning_starts.max(self.config.batch_size);
        if buffer.len() < needed {
            return Err(SacError::BufferTooSmall { size: buffer.len(), needed });
        }
        let batch = buffer.sample(self.config.batch_size, rng)?;
        self.update_on_batch(&batch, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub reward: f64,
    /// Dispatch cost in dollars of the executed actions.
    pub total_cost: f64,
    pub min_soc: f64,
    pub end_soc: f64,
    pub soc_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean_reward: f64,
    pub episodes: Vec<EpisodeMetrics>,
}

impl EvalSummary {
    pub fn mean_cost(&self) -> f64 {
        self.episodes.iter().map(|e| e.total_cost).sum::<f64>() / self.episodes.len() as f64
    }

    pub fn mean_end_soc(&self) -> f64 {
        self.episodes.iter().map(|e| e.end_soc).sum::<f64>() / self.episodes.len() as f64
    }
}

/// Runs `n_episodes` on fresh draws from the env's spec. `policy` maps the
/// normalized observation to a unit action.
pub fn evaluate_policy<R, P>(env: &mut BessEnv, n_episodes: usize, rng: &mut R, mut policy: P) -> Result<EvalSummary, SacError>
where
    R: Rng + ?Sized,
    P: FnMut(&[f64], &mut R) -> Result<[f64; 2], SacError>,
{
    if n_episodes == 0 {
        return Err(SacError::InvalidConfig("n_episodes must be at least 1".into()));
    }
    let (grid, battery) = (env.grid().clone(), env.battery().clone());
    let mut episodes = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let draw = draw_scenario_uncertainty(env.scenario(), env.spec(), rng)?;
        let mut failure = None;
        let ro = rollout(env, draw, |s| match policy(&s.obs, rng) {
            Ok(u) => scale_action(u, &grid, &battery),
            Err(e) => {
                failure.get_or_insert(e);
                (0.0, 0.0)
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        episodes.push(EpisodeMetrics {
            reward: ro.total_reward,
            total_cost: ro.trajectory.total_cost,
            min_soc: ro.trajectory.min_soc,
            end_soc: ro.trajectory.end_soc,
            soc_violations: ro.trajectory.soc_violations,
        });
    }
    let mean_reward = episodes.iter().map(|e| e.reward).sum::<f64>() / n_episodes as f64;
    Ok(EvalSummary { mean_reward, episodes })
}

/// Deterministic (`tanh(mean)`) evaluation of the actor.
pub fn evaluate<R: Rng + ?Sized>(
    params: &AgentParams,
    env: &mut BessEnv,
    n_episodes: usize,
    rng: &mut R,
) -> Result<EvalSummary, SacError> {
    evaluate_policy(env, n_episodes, rng, |obs, _| deterministic_action(&params.actor, obs))
}

/// Uniform random actions over the unit box.
pub fn random_baseline<R: Rng + ?Sized>(env: &mut BessEnv, n_episodes: usize, rng: &mut R) -> Result<EvalSummary, SacError> {
    evaluate_policy(env, n_episodes, rng, |_, r| Ok([r.random_range(-1.0..=1.0), r.random_range(-1.0..=1.0)]))
}

/// Random source used for every evaluation of a training run.
pub fn eval_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(EVAL_SEED_OFFSET))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub env_step: usize,
    pub mean_eval_reward: f64,
    pub mean_cost: f64,
    pub end_soc: f64,
}

/// Constraint bookkeeping over every training step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainAudit {
    pub env_steps: usize,
    /// Executed actions outside the power boxes.
    pub box_violations: usize,
    /// Steps with `|residual| > 1e-6` kW; each is reported in the step info.
    pub unbalanced_steps: usize,
    /// Unbalanced steps whose required power was box-feasible, i.e. the
    /// safety layer should have closed the gap.
    pub unbalanced_feasible: usize,
    /// Post-step SOC outside the soft band.
    pub soc_soft_violations: usize,
    pub episodes: usize,
    pub end_soc_below_reserve: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: SacAgent,
    pub curve: Vec<CurvePoint>,
    pub audit: TrainAudit,
    pub final_eval: EvalSummary,
}

const BALANCE_TOL_KW: f64 = 1e-6;

/// Trains on clones of `env`, one fresh uncertainty draw per episode.
/// Evaluates every `eval_every` steps and after the last step, always on
/// the same evaluation draws.
pub fn train(env: &BessEnv, config: &SacConfig) -> Result<TrainOutcome, SacError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut agent = SacAgent::new(env.obs_dim(), config.clone(), &mut rng)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity, env.obs_dim(), ACT_DIM);
    let mut train_env = env.clone();
    let mut eval_env = env.clone();
    let (grid, battery) = (env.grid().clone(), env.battery().clone());
    let cfg = env.config().clone();

    let mut audit = TrainAudit::default();
    let mut curve = Vec::new();
    let mut last_eval = None;
    let mut state = train_env.reset_sampled(&mut rng)?;
    for step in 0..config.total_steps {
        let unit = if step < config.learning_starts {
            [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]
        } else {
            policy_sample(&agent.params.actor, &state.obs, &mut rng)?.0
        };
        let t = state.t;
        let tr = train_env.step(scale_action(unit, &grid, &battery))?;

        audit.env_steps += 1;
        let (g, b) = tr.action_executed;
        if !(grid.p_g_min..=grid.p_g_max).contains(&g) || !(battery.p_b_min..=battery.p_b_max).contains(&b) {
            audit.box_violations += 1;
        }
        if tr.info.residual_kw.abs() > BALANCE_TOL_KW {
            audit.unbalanced_steps += 1;
            let s = train_env.effective_scenario();
            let required = s.p_d()[t] + train_env.draw().p_unc[t] - s.p_pv()[t];
            if (grid.p_g_min + battery.p_b_min..=grid.p_g_max + battery.p_b_max).contains(&required) {
                audit.unbalanced_feasible += 1;
            }
        }
        let soc = tr.next_state.soc;
        if soc < cfg.soc_min || soc > cfg.soc_max {
            audit.soc_soft_violations += 1;
        }

        let stored = if config.store_raw_action { unit } else { unscale_action(tr.action_executed, &grid, &battery) };
        buffer.push(&tr.state.obs, &stored, tr.reward, &tr.next_state.obs, tr.next_state.done)?;
        state = if tr.next_state.done {
            audit.episodes += 1;
            if soc < crate::env::SOC_RESERVE {
                audit.end_soc_below_reserve += 1;
            }
            train_env.reset_sampled(&mut rng)?
        } else {
            tr.next_state
        };

        if step >= config.learning_starts {
            agent.update_step(&buffer, &mut rng)?;
        }
        let n = step + 1;
        if n % config.eval_every == 0 || n == config.total_steps {
            let summary = evaluate(&agent.params, &mut eval_env, config.eval_episodes, &mut eval_rng(config.seed))?;
            curve.push(CurvePoint {
                env_step: n,
                mean_eval_reward: summary.mean_reward,
                mean_cost: summary.mean_cost(),
                end_soc: summary.mean_end_soc(),
            });
            last_eval = Some(summary);
        }
    }
    let final_eval = match last_eval {
        Some(s) => s,
        None => evaluate(&agent.params, &mut eval_env, config.eval_episodes, &mut eval_rng(config.seed))?,
    };
    Ok(TrainOutcome { agent, curve, audit, final_eval })
}

/// Learning curve as CSV text with a fixed header.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("env_step,mean_eval_reward,mean_cost,end_soc\n");
    for p in curve {
        out.push_str(&format!("{},{:.9},{:.6},{:.9}\n", p.env_step, p.mean_eval_reward, p.mean_cost, p.end_soc));
    }
    out
}

/// Everything needed to rebuild and evaluate a trained policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub sac_config: SacConfig,
    pub env_config: EnvConfig,
    pub battery: BatteryParams,
    pub grid: GridParams,
    pub spec: DistSpec,
    pub params: AgentParams,
}

impl Checkpoint {
    pub fn new(params: &AgentParams, sac_config: &SacConfig, env: &BessEnv) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config_hash: sac_config.hash(),
            sac_config: sac_config.clone(),
            env_config: env.config().clone(),
            battery: env.battery().clone(),
            grid: env.grid().clone(),
            spec: *env.spec(),
            params: params.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SacError> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SacError> {
        let ck: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(SacError::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        if ck.config_hash != ck.sac_config.hash() {
            return Err(SacError::Checkpoint("config hash does not match stored config".into()));
        }
        Ok(ck)
    }
}
