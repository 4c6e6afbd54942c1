//! Soft actor-critic: squashed Gaussian policy, twin critics with Polyak
//! targets, automatic temperature, replay buffer and the training loop.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, EnvError, MeshEnv, ACTION_DIM};
use crate::geom2d::{PolyBoundary, QuadElement};
use crate::tinynet::{Adam, Mlp, NetError, DEFAULT_HIDDEN};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error)]
pub enum SacError {
    #[error("invalid SAC config: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("training stopped: {0}")]
    Stopped(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub lr_q: f64,
    pub lr_pi: f64,
    pub lr_alpha: f64,
    pub total_steps: u64,
    pub grad_steps: usize,
    pub tau: f64,
    pub target_entropy: f64,
    /// Uniform-action steps before the policy acts; `None` means one batch.
    pub warmup_steps: Option<usize>,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Checkpoint period in steps; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            buffer_capacity: 1_000_000,
            batch_size: 256,
            gamma: 0.99,
            lr_q: 3e-4,
            lr_pi: 3e-4,
            lr_alpha: 3e-4,
            total_steps: 1_200_000,
            grad_steps: 1,
            tau: 5e-3,
            target_entropy: -(ACTION_DIM as f64),
            warmup_steps: None,
            eval_every: 10_000,
            eval_episodes: 10,
            checkpoint_every: 50_000,
            hidden: DEFAULT_HIDDEN.to_vec(),
            seed: 0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        let bad = |m: String| Err(SacError::Config(m));
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad(format!("need 0 < batch_size ({}) ≤ buffer_capacity ({})", self.batch_size, self.buffer_capacity));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        for (name, lr) in [("lr_q", self.lr_q), ("lr_pi", self.lr_pi), ("lr_alpha", self.lr_alpha)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if self.total_steps == 0 || self.grad_steps == 0 || self.eval_every == 0 {
            return bad("total_steps, grad_steps and eval_every must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden sizes must be non-empty and positive, got {:?}", self.hidden));
        }
        if !self.target_entropy.is_finite() {
            return bad("target_entropy must be finite".into());
        }
        Ok(())
    }

    pub fn warmup(&self) -> usize {
        self.warmup_steps.unwrap_or(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: [f64; ACTION_DIM],
    pub r: f64,
    pub s2: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer, oldest entries overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self { capacity, items: Vec::new(), cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Indices drawn uniformly without replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        sample(rng, self.items.len(), n.min(self.items.len())).into_vec()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Batch, SacError> {
        let idx = self.sample_indices(rng, n);
        Batch::from_transitions(idx.iter().map(|&i| &self.items[i]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub r: Array1<f64>,
    pub s2: Array2<f64>,
    pub done: Array1<f64>,
}

impl Batch {
    pub fn from_transitions<'a>(ts: impl IntoIterator<Item = &'a Transition>) -> Result<Self, SacError> {
        let ts: Vec<&Transition> = ts.into_iter().collect();
        let Some(first) = ts.first() else {
            return Err(SacError::EmptyBatch);
        };
        let (b, d) = (ts.len(), first.s.len());
        let mut s = Array2::zeros((b, d));
        let mut s2 = Array2::zeros((b, d));
        let mut a = Array2::zeros((b, ACTION_DIM));
        for (i, t) in ts.iter().enumerate() {
            if t.s.len() != d || t.s2.len() != d {
                return Err(NetError::Shape { expected: format!("{d} state values"), got: t.s.len().to_string() }.into());
            }
            s.row_mut(i).assign(&ndarray::aview1(&t.s));
            s2.row_mut(i).assign(&ndarray::aview1(&t.s2));
            a.row_mut(i).assign(&ndarray::aview1(&t.a));
        }
        Ok(Self {
            s,
            a,
            r: ts.iter().map(|t| t.r).collect(),
            s2,
            done: ts.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// `min(Q̄1, Q̄2) − α·log π`.
pub fn soft_value(q1: f64, q2: f64, alpha: f64, log_prob: f64) -> f64 {
    q1.min(q2) - alpha * log_prob
}

/// `r + γ·(1 − done)·V'`.
pub fn q_target(r: f64, done: bool, soft_value_next: f64, gamma: f64) -> f64 {
    if done {
        r
    } else {
        r + gamma * soft_value_next
    }
}

/// `log(1 − tanh²u)` without cancellation for large `|u|`.
fn log1m_tanh_sq(u: f64) -> f64 {
    let x = -2.0 * u;
    // softplus(x) = log(1 + eˣ)
    let softplus = if x > 30.0 { x } else { x.exp().ln_1p() };
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

/// Squashed Gaussian sample for every row of a policy-head output.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub actions: Array2<f64>,
    pub log_probs: Array1<f64>,
    noise: Array2<f64>,
    pre_tanh: Array2<f64>,
    std: Array2<f64>,
    log_std_clamped: Array2<bool>,
}

/// Splits a head output into mean and clamped log-std and draws `tanh(μ + σε)`.
pub fn squash_sample(head: &Array2<f64>, noise: Array2<f64>) -> PolicySample {
    let mean = head.slice(s![.., ..ACTION_DIM]);
    let raw = head.slice(s![.., ACTION_DIM..]);
    let log_std = raw.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    let log_std_clamped = raw.mapv(|v| !(LOG_STD_MIN..=LOG_STD_MAX).contains(&v));
    let std = log_std.mapv(f64::exp);
    let pre_tanh = &mean + &(&std * &noise);
    let actions = pre_tanh.mapv(f64::tanh);
    let mut log_probs = Array1::zeros(head.nrows());
    for i in 0..head.nrows() {
        let mut lp = 0.0;
        for d in 0..ACTION_DIM {
            let e = noise[[i, d]];
            lp += -0.5 * e * e - log_std[[i, d]] - HALF_LN_2PI - log1m_tanh_sq(pre_tanh[[i, d]]);
        }
        log_probs[i] = lp;
    }
    PolicySample { actions, log_probs, noise, pre_tanh, std, log_std_clamped }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub alpha: f64,
    pub mean_log_prob: f64,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub policy: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    gamma: f64,
    tau: f64,
    target_entropy: f64,
    opt_pi: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    opt_alpha: Adam,
    rng: ChaCha8Rng,
}

impl SacAgent {
    pub fn new(obs_dim: usize, cfg: &SacConfig) -> Result<Self, SacError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let layers = |input: usize, output: usize| {
            let mut v = vec![input];
            v.extend(&cfg.hidden);
            v.push(output);
            v
        };
        let policy = Mlp::new(&layers(obs_dim, 2 * ACTION_DIM), &mut rng)?;
        let q1 = Mlp::new(&layers(obs_dim + ACTION_DIM, 1), &mut rng)?;
        let q2 = Mlp::new(&layers(obs_dim + ACTION_DIM, 1), &mut rng)?;
        let (q1_target, q2_target) = (q1.clone(), q2.clone());
        Self::from_nets(policy, q1, q2, q1_target, q2_target, 0.0, cfg, rng)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_nets(
        policy: Mlp,
        q1: Mlp,
        q2: Mlp,
        q1_target: Mlp,
        q2_target: Mlp,
        log_alpha: f64,
        cfg: &SacConfig,
        rng: ChaCha8Rng,
    ) -> Result<Self, SacError> {
        let obs_dim = policy.input_dim();
        let shape_ok = policy.output_dim() == 2 * ACTION_DIM
            && [&q1, &q2, &q1_target, &q2_target]
                .iter()
                .all(|q| q.input_dim() == obs_dim + ACTION_DIM && q.output_dim() == 1)
            && q1.sizes() == q1_target.sizes()
            && q2.sizes() == q2_target.sizes();
        if !shape_ok {
            return Err(SacError::Config("network shapes do not form a SAC agent".into()));
        }
        Ok(Self {
            opt_pi: Adam::for_net(&policy, cfg.lr_pi),
            opt_q1: Adam::for_net(&q1, cfg.lr_q),
            opt_q2: Adam::for_net(&q2, cfg.lr_q),
            opt_alpha: Adam::new(1, cfg.lr_alpha),
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha,
            gamma: cfg.gamma,
            tau: cfg.tau,
            target_entropy: cfg.target_entropy,
            rng,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn noise(&mut self, rows: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, ACTION_DIM), || self.rng.sample(StandardNormal))
    }

    /// Samples (or, when deterministic, takes `tanh(μ)` of) an action for one
    /// observation. The log-probability is only reported for stochastic draws.
    pub fn sample_action(&mut self, obs: &[f64], deterministic: bool) -> Result<([f64; ACTION_DIM], Option<f64>), SacError> {
        let head = self.policy.forward(ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| {
            SacError::Net(NetError::Shape { expected: format!("{} observation values", self.obs_dim()), got: e.to_string() })
        })?)?;
        if deterministic {
            return Ok((std::array::from_fn(|d| head[[0, d]].tanh()), None));
        }
        let noise = self.noise(1);
        let smp = squash_sample(&head, noise);
        Ok((std::array::from_fn(|d| smp.actions[[0, d]]), Some(smp.log_probs[0])))
    }

    /// Deterministic action without touching the agent's random stream.
    pub fn act_deterministic(&self, obs: &[f64]) -> Result<[f64; ACTION_DIM], SacError> {
        let head = self.policy.forward_vec(obs)?;
        Ok(std::array::from_fn(|d| head[d].tanh()))
    }

    fn q_input(s: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
        concatenate(Axis(1), &[s.view(), a.view()]).expect("row counts agree")
    }

    /// Critic targets for a batch, using fresh next-state policy samples and
    /// the frozen target nets.
    pub fn critic_targets(&mut self, batch: &Batch) -> Result<Array1<f64>, SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let head = self.policy.forward(batch.s2.view())?;
        let noise = self.noise(batch.len());
        let next = squash_sample(&head, noise);
        let x2 = Self::q_input(&batch.s2, &next.actions);
        let t1 = self.q1_target.forward(x2.view())?;
        let t2 = self.q2_target.forward(x2.view())?;
        let alpha = self.alpha();
        Ok(Array1::from_shape_fn(batch.len(), |i| {
            let v = soft_value(t1[[i, 0]], t2[[i, 0]], alpha, next.log_probs[i]);
            q_target(batch.r[i], batch.done[i] > 0.5, v, self.gamma)
        }))
    }

    /// One step on `½·mean[(Q(s,a) − y)²]` for both critics; returns the
    /// pre-step loss averaged over the twins.
    pub fn update_critics(&mut self, batch: &Batch) -> Result<f64, SacError> {
        let y = self.critic_targets(batch)?;
        self.fit_critics(batch, &y)
    }

    /// Critic step against precomputed targets.
    pub fn fit_critics(&mut self, batch: &Batch, y: &Array1<f64>) -> Result<f64, SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let x = Self::q_input(&batch.s, &batch.a);
        let b = batch.len() as f64;
        let mut loss = 0.0;
        for (net, opt) in [(&mut self.q1, &mut self.opt_q1), (&mut self.q2, &mut self.opt_q2)] {
            let pred = net.forward_train(x.view())?;
            let err = &pred.column(0) - y;
            loss += 0.5 * err.mapv(|e| e * e).sum() / b;
            let grad = (err / b).insert_axis(Axis(1));
            let (g, _) = net.backward(&grad)?;
            opt.step_net(net, &g)?;
        }
        Ok(0.5 * loss)
    }

    /// Policy step on `mean[α·log π(a|s) − Q(s,a)]` for a caller-supplied
    /// critic returning `(Q, ∂Q/∂a)` per row. Returns the loss and the log
    /// probabilities of the fresh samples.
    pub fn policy_step_with<F>(&mut self, states: &Array2<f64>, critic: F) -> Result<(f64, Array1<f64>), SacError>
    where
        F: FnOnce(&Array2<f64>) -> Result<(Array1<f64>, Array2<f64>), SacError>,
    {
        let rows = states.nrows();
        if rows == 0 {
            return Err(SacError::EmptyBatch);
        }
        let head = self.policy.forward_train(states.view())?;
        let noise = self.noise(rows);
        let smp = squash_sample(&head, noise);
        let (q, dq_da) = critic(&smp.actions)?;
        let alpha = self.alpha();
        let b = rows as f64;
        let loss = (alpha * &smp.log_probs - &q).sum() / b;

        let mut grad = Array2::zeros((rows, 2 * ACTION_DIM));
        for i in 0..rows {
            for d in 0..ACTION_DIM {
                let a = smp.actions[[i, d]];
                let u = smp.pre_tanh[[i, d]];
                // ∂/∂u of −Q(tanh u) + α·(−log(1 − tanh²u))
                let du = (-dq_da[[i, d]] * (1.0 - a * a) + alpha * 2.0 * u.tanh()) / b;
                grad[[i, d]] = du;
                grad[[i, ACTION_DIM + d]] = if smp.log_std_clamped[[i, d]] {
                    0.0
                } else {
                    du * smp.std[[i, d]] * smp.noise[[i, d]] - alpha / b
                };
            }
        }
        let (g, _) = self.policy.backward(&grad)?;
        self.opt_pi.step_net(&mut self.policy, &g)?;
        Ok((loss, smp.log_probs))
    }

    /// Policy step against the twin-minimum of the online critics. The
    /// critics only provide input gradients; their parameters do not move.
    pub fn update_policy(&mut self, batch: &Batch) -> Result<(f64, Array1<f64>), SacError> {
        let states = batch.s.clone();
        let (mut q1, mut q2) = (take_net(&mut self.q1), take_net(&mut self.q2));
        let res = self.policy_step_with(&states, |actions| {
            let x = Self::q_input(&states, actions);
            let v1 = q1.forward_train(x.view())?;
            let v2 = q2.forward_train(x.view())?;
            let rows = actions.nrows();
            let mut g1 = Array2::zeros((rows, 1));
            let mut g2 = Array2::zeros((rows, 1));
            let mut q = Array1::zeros(rows);
            for i in 0..rows {
                if v1[[i, 0]] <= v2[[i, 0]] {
                    q[i] = v1[[i, 0]];
                    g1[[i, 0]] = 1.0;
                } else {
                    q[i] = v2[[i, 0]];
                    g2[[i, 0]] = 1.0;
                }
            }
            let d1 = q1.backward_input(&g1)?;
            let d2 = q2.backward_input(&g2)?;
            let obs = states.ncols();
            let dq = &d1.slice(s![.., obs..]) + &d2.slice(s![.., obs..]);
            Ok((q, dq))
        });
        self.q1 = q1;
        self.q2 = q2;
        res
    }

    /// Temperature step on `mean[−α·(log π + H̄)]` w.r.t. `log α`.
    pub fn update_temperature(&mut self, log_probs: &Array1<f64>) -> Result<f64, SacError> {
        if log_probs.is_empty() {
            return Ok(self.alpha());
        }
        let grad = -self.alpha() * (log_probs.mean().expect("non-empty") + self.target_entropy);
        let mut p = [self.log_alpha];
        self.opt_alpha.step(&mut p, &[grad])?;
        self.log_alpha = p[0];
        Ok(self.alpha())
    }

    pub fn soft_update_targets(&mut self) -> Result<(), SacError> {
        self.q1_target.soft_update_from(&self.q1, self.tau)?;
        self.q2_target.soft_update_from(&self.q2, self.tau)?;
        Ok(())
    }

    /// One full gradient step: critics, policy, targets, temperature.
    pub fn update(&mut self, batch: &Batch) -> Result<UpdateStats, SacError> {
        let critic_loss = self.update_critics(batch)?;
        let (policy_loss, log_probs) = self.update_policy(batch)?;
        self.soft_update_targets()?;
        let alpha = self.update_temperature(&log_probs)?;
        Ok(UpdateStats { critic_loss, policy_loss, alpha, mean_log_prob: log_probs.mean().unwrap_or(0.0) })
    }
}

/// Moves a network out, leaving a 1×1 placeholder.
fn take_net(net: &mut Mlp) -> Mlp {
    std::mem::replace(net, Mlp::zeros(&[1, 1]).expect("valid sizes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub completion_rate: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EvalResult {
    pub returns: Vec<f64>,
    pub completed: Vec<bool>,
    pub meshes: Vec<Vec<QuadElement>>,
}

impl EvalResult {
    pub fn mean_return(&self) -> f64 {
        if self.returns.is_empty() {
            return 0.0;
        }
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    pub fn std_return(&self) -> f64 {
        if self.returns.is_empty() {
            return 0.0;
        }
        let m = self.mean_return();
        (self.returns.iter().map(|r| (r - m).powi(2)).sum::<f64>() / self.returns.len() as f64).sqrt()
    }

    pub fn completion_rate(&self) -> f64 {
        if self.completed.is_empty() {
            return 0.0;
        }
        self.completed.iter().filter(|&&c| c).count() as f64 / self.completed.len() as f64
    }
}

/// Runs one deterministic-policy episode; returns its return, whether the
/// mesh completed, and the elements produced.
pub fn run_episode(agent: &SacAgent, env: &mut MeshEnv, boundary: &PolyBoundary) -> Result<(f64, bool, Vec<QuadElement>), SacError> {
    let mut obs = env.reset(boundary.clone())?;
    let mut ret = 0.0;
    loop {
        let a = agent.act_deterministic(obs.as_slice())?;
        let r = env.step(a)?;
        ret += r.reward;
        obs = r.observation;
        if r.done {
            return Ok((ret, env.is_completed(), env.elements().to_vec()));
        }
    }
}

/// Deterministic evaluation; episode `k` uses `boundaries[k % len]`.
pub fn evaluate(
    agent: &SacAgent,
    env_cfg: &EnvConfig,
    boundaries: &[PolyBoundary],
    episodes: usize,
) -> Result<EvalResult, SacError> {
    let mut out = EvalResult::default();
    if episodes == 0 || boundaries.is_empty() {
        return Ok(out);
    }
    let mut env = MeshEnv::new(env_cfg.clone())?;
    for k in 0..episodes {
        let (ret, done, mesh) = run_episode(agent, &mut env, &boundaries[k % boundaries.len()])?;
        out.returns.push(ret);
        out.completed.push(done);
        out.meshes.push(mesh);
    }
    Ok(out)
}

pub enum TrainEvent<'a> {
    Eval(&'a EvalRecord),
    Checkpoint { step: u64, agent: &'a SacAgent },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EvalRecord>,
    pub steps: u64,
    pub updates: u64,
    pub episodes: u64,
}

/// Training loop. Episode `k` meshes `domains[k % len]`; evaluation uses
/// `eval_domains` (the training domains when empty). The sink sees every
/// evaluation record and checkpoint request and may stop training by
/// returning an error.
pub fn train<S>(
    env_cfg: &EnvConfig,
    domains: &[PolyBoundary],
    eval_domains: &[PolyBoundary],
    agent: &mut SacAgent,
    cfg: &SacConfig,
    mut sink: S,
) -> Result<TrainLog, SacError>
where
    S: FnMut(TrainEvent<'_>) -> Result<(), SacError>,
{
    cfg.validate()?;
    if domains.is_empty() {
        return Err(SacError::Config("no training domains".into()));
    }
    if agent.obs_dim() != env_cfg.observation_len() {
        return Err(SacError::Config(format!(
            "policy expects {} observation values, environment produces {}",
            agent.obs_dim(),
            env_cfg.observation_len()
        )));
    }
    let eval_domains = if eval_domains.is_empty() { domains } else { eval_domains };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_cafe_f00d_d00d);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut env = MeshEnv::new(env_cfg.clone())?;
    let mut log = TrainLog::default();
    let mut obs = env.reset(domains[0].clone())?;
    let warmup = cfg.warmup();

    for step in 1..=cfg.total_steps {
        let action = if buffer.len() < warmup {
            std::array::from_fn(|_| rng.random_range(-1.0..=1.0))
        } else {
            agent.sample_action(obs.as_slice(), false)?.0
        };
        let res = env.step(action)?;
        buffer.push(Transition {
            s: obs.0,
            a: action,
            r: res.reward,
            s2: res.observation.0.clone(),
            done: res.terminal,
        });
        obs = res.observation;
        if res.done {
            log.episodes += 1;
            obs = env.reset(domains[log.episodes as usize % domains.len()].clone())?;
        }
        if buffer.len() > cfg.batch_size {
            for _ in 0..cfg.grad_steps {
                let batch = buffer.sample(&mut rng, cfg.batch_size)?;
                agent.update(&batch)?;
                log.updates += 1;
            }
        }
        log.steps = step;
        if step % cfg.eval_every == 0 {
            let ev = evaluate(agent, env_cfg, eval_domains, cfg.eval_episodes)?;
            let rec = EvalRecord {
                step,
                mean_return: ev.mean_return(),
                std_return: ev.std_return(),
                completion_rate: ev.completion_rate(),
            };
            sink(TrainEvent::Eval(&rec))?;
            log.records.push(rec);
        }
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            sink(TrainEvent::Checkpoint { step, agent })?;
        }
    }
    Ok(log)
}

/// Mean eval return over the first and last quarter of the records
/// (each at least one record).
pub fn quartile_means(records: &[EvalRecord]) -> Option<(f64, f64)> {
    if records.is_empty() {
        return None;
    }
    let q = records.len().div_ceil(4);
    let mean = |rs: &[EvalRecord]| rs.iter().map(|r| r.mean_return).sum::<f64>() / rs.len() as f64;
    Some((mean(&records[..q]), mean(&records[records.len() - q..])))
}
