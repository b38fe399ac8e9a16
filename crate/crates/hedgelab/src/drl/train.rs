//! Distributional actor-critic training loop.
//!
//! One learner owns the networks. Each round, `collectors` environment
//! workers roll out one episode apiece in parallel (episode randomness comes
//! from per-episode streams, so the result is independent of scheduling),
//! transitions are appended to the replay buffer in worker order, and the
//! learner then performs one gradient step per collected transition: the
//! critic minimizes the quantile-huber loss against `r + gamma Z'(s', a*)`
//! from the target networks, the actor ascends the configured quantile
//! objective by backpropagating through the frozen critic, and the targets
//! are soft-updated.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mlp::{Activation, Adam, ForwardCache, Gradients, Mlp};
use super::quantile::{
    actor_objective, actor_objective_grad, critic_target, quantile_huber_loss, Objective,
    QuantileDistribution, N_QUANTILES,
};
use super::replay::{ReplayBuffer, StoredTransition};
use super::snapshot::{Actor, PolicySnapshot, SNAPSHOT_VERSION};
use crate::env::{EnvError, HedgeEnv, Normalization};
use crate::market::RngStream;
use crate::risk::PnlSamples;

const NOISE_SUBSTREAM: u64 = 4;
const LEARNER_SUBSTREAM: u64 = 20;
const INIT_ACTOR_SUBSTREAM: u64 = 21;
const INIT_CRITIC_SUBSTREAM: u64 = 22;
const CURVE_EVAL_SUBSTREAM: u64 = 23;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at gradient step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid trainer configuration: {0}")]
    InvalidConfig(String),
}

/// Anything the agent can interact with: the hedging environments and the
/// bandit harnesses used to validate the learner.
pub trait Environment: Send {
    fn obs_dim(&self) -> usize;
    fn reset(&mut self, stream: RngStream) -> Vec<f64>;
    fn step(&mut self, action: f64) -> Result<EnvStep, EnvError>;
}

pub struct EnvStep {
    pub next_obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

impl Environment for HedgeEnv {
    fn obs_dim(&self) -> usize {
        3
    }

    fn reset(&mut self, stream: RngStream) -> Vec<f64> {
        HedgeEnv::reset(self, stream).features.to_vec()
    }

    fn step(&mut self, action: f64) -> Result<EnvStep, EnvError> {
        let tr = HedgeEnv::step(self, action)?;
        Ok(EnvStep {
            next_obs: tr.next_obs.features.to_vec(),
            reward: tr.reward,
            done: tr.done,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub discount: f64,
    pub batch: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub soft_update_coeff: f64,
    /// Initial exploration noise, decaying linearly to
    /// `exploration_noise_final` over the first half of training.
    pub exploration_noise_std: f64,
    pub exploration_noise_final: f64,
    pub n_step: usize,
    pub episodes: usize,
    pub objective: Objective,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub replay_capacity: usize,
    /// Parallel experience-collecting workers feeding the single learner.
    pub collectors: usize,
    /// Gradient steps per collected transition.
    pub updates_per_step: f64,
    /// Transitions required in the buffer before learning starts.
    pub warmup_transitions: usize,
    /// Update the actor (and its target) every this many critic steps;
    /// a delayed actor stabilizes the deterministic-policy gradient.
    pub actor_delay: usize,
    /// Training-curve granularity; 0 picks episodes / 20.
    pub log_every_episodes: usize,
    /// Noise-free episodes per curve point for the reported tail metric.
    pub eval_episodes_per_log: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            discount: 0.99,
            batch: 256,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            soft_update_coeff: 0.005,
            exploration_noise_std: 0.1,
            exploration_noise_final: 0.01,
            n_step: 1,
            episodes: 40_000,
            objective: Objective::Mix595,
            actor_hidden: vec![256, 256, 256],
            critic_hidden: vec![512, 512, 256],
            replay_capacity: 1_000_000,
            collectors: 4,
            updates_per_step: 1.0,
            warmup_transitions: 1000,
            actor_delay: 1,
            log_every_episodes: 0,
            eval_episodes_per_log: 20,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "trainer.discount must be in (0, 1], got {}",
                self.discount
            )));
        }
        if self.batch == 0 || self.episodes == 0 || self.collectors == 0 {
            return Err(TrainError::InvalidConfig(
                "trainer batch/episodes/collectors must be positive".into(),
            ));
        }
        if !(1..=5).contains(&self.n_step) {
            return Err(TrainError::InvalidConfig(format!(
                "trainer.n_step must be in 1..=5, got {}",
                self.n_step
            )));
        }
        if self.actor_delay == 0 {
            return Err(TrainError::InvalidConfig(
                "trainer.actor_delay must be >= 1".into(),
            ));
        }
        if self.actor_lr <= 0.0 || self.critic_lr <= 0.0 || self.soft_update_coeff <= 0.0 {
            return Err(TrainError::InvalidConfig(
                "trainer learning rates and soft update coefficient must be positive".into(),
            ));
        }
        if self.exploration_noise_std < 0.0 || self.exploration_noise_final < 0.0 {
            return Err(TrainError::InvalidConfig(
                "trainer exploration noise must be >= 0".into(),
            ));
        }
        Ok(())
    }

    fn noise_std(&self, episode: usize) -> f64 {
        let half = (self.episodes / 2).max(1) as f64;
        let frac = (episode as f64 / half).min(1.0);
        self.exploration_noise_std
            + frac * (self.exploration_noise_final - self.exploration_noise_std)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub critic_loss: f64,
    pub actor_objective: f64,
    pub eval_var95: f64,
}

pub struct TrainResult {
    pub snapshot: PolicySnapshot,
    pub curve: Vec<CurvePoint>,
}

fn concat_state_action(obs: &[f64], action: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs.len() + 1);
    x.extend_from_slice(obs);
    x.push(action);
    x
}

struct RawStep {
    obs: Vec<f64>,
    action: f64,
    reward: f64,
    next_obs: Vec<f64>,
    done: bool,
}

/// Collapse an episode into n-step transitions.
fn to_n_step(raw: &[RawStep], n: usize, gamma: f64) -> Vec<StoredTransition> {
    let len = raw.len();
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let mut reward = 0.0;
        let mut g = 1.0;
        let mut j = i;
        let mut steps = 0;
        loop {
            reward += g * raw[j].reward;
            g *= gamma;
            steps += 1;
            if raw[j].done || steps == n || j + 1 == len {
                break;
            }
            j += 1;
        }
        let done = raw[j].done;
        out.push(StoredTransition {
            obs: raw[i].obs.clone(),
            action: raw[i].action,
            reward,
            next_obs: raw[j].next_obs.clone(),
            done,
            discount: if done { 0.0 } else { g },
        });
    }
    out
}

fn rollout<E: Environment>(
    env: &mut E,
    actor: &Mlp,
    episode_index: usize,
    train_stream: &RngStream,
    noise_std: f64,
) -> Result<Vec<RawStep>, EnvError> {
    let ep_stream = train_stream.substream(episode_index as u64);
    let mut noise = ep_stream.substream(NOISE_SUBSTREAM).sampler();
    let mut obs = env.reset(ep_stream);
    let mut raw = Vec::new();
    loop {
        let mut action = actor.forward(&obs)[0];
        if noise_std > 0.0 {
            action += noise_std * noise.standard_normal();
        }
        let action = action.clamp(0.0, 1.0);
        let step = env.step(action)?;
        let done = step.done;
        raw.push(RawStep {
            obs: std::mem::take(&mut obs),
            action,
            reward: step.reward,
            next_obs: step.next_obs.clone(),
            done,
        });
        obs = step.next_obs;
        if done {
            return Ok(raw);
        }
    }
}

struct Learner {
    actor: Mlp,
    critic: Mlp,
    target_actor: Mlp,
    target_critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    obs_dim: usize,
    gradient_steps: usize,
}

impl Learner {
    fn new(obs_dim: usize, config: &TrainerConfig, train_stream: &RngStream) -> Self {
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend_from_slice(&config.actor_hidden);
        actor_sizes.push(1);
        let mut critic_sizes = vec![obs_dim + 1];
        critic_sizes.extend_from_slice(&config.critic_hidden);
        critic_sizes.push(N_QUANTILES);

        let mut init_a = train_stream.substream(INIT_ACTOR_SUBSTREAM).sampler();
        let mut init_c = train_stream.substream(INIT_CRITIC_SUBSTREAM).sampler();
        let actor = Mlp::new(&actor_sizes, Activation::Relu, Activation::Sigmoid, &mut init_a);
        let critic = Mlp::new(&critic_sizes, Activation::Relu, Activation::Identity, &mut init_c);
        Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: Adam::new(&actor, config.actor_lr),
            critic_opt: Adam::new(&critic, config.critic_lr),
            actor,
            critic,
            obs_dim,
            gradient_steps: 0,
        }
    }

    /// One batched gradient step. Returns the critic loss and, when the
    /// (possibly delayed) actor update ran, the mean actor objective.
    fn gradient_step(
        &mut self,
        replay: &ReplayBuffer,
        config: &TrainerConfig,
        learner_sampler: &mut crate::market::Sampler,
    ) -> Result<(f64, Option<f64>), TrainError> {
        let idx = replay.sample_indices(config.batch, learner_sampler);
        let nf = idx.len() as f64;

        let mut cache = ForwardCache::default();
        let mut critic_grads = Gradients::zeros_like(&self.critic);
        let mut loss_sum = 0.0;
        for &i in &idx {
            let tr = replay.get(i);
            let next_action = self.target_actor.forward(&tr.next_obs)[0];
            let next_atoms = self
                .target_critic
                .forward(&concat_state_action(&tr.next_obs, next_action));
            let targets = critic_target(tr.reward, tr.done, tr.discount, &next_atoms);
            let x = concat_state_action(&tr.obs, tr.action);
            self.critic.forward_cached(&x, &mut cache);
            let atoms = cache.outputs.last().expect("critic output");
            let (loss, d_atoms) = quantile_huber_loss(atoms, &targets, 1.0);
            loss_sum += loss;
            self.critic.backward(&x, &cache, &d_atoms, &mut critic_grads);
        }
        critic_grads.scale(1.0 / nf);
        let critic_loss = loss_sum / nf;
        if !critic_loss.is_finite() {
            return Err(TrainError::Diverged {
                step: self.gradient_steps,
                loss: critic_loss,
            });
        }
        self.critic_opt.step(&mut self.critic, &critic_grads);

        // Actor ascends the objective through the frozen critic, every
        // `actor_delay` critic steps.
        let mut actor_obj = None;
        if self.gradient_steps % config.actor_delay == 0 {
            let obj_weights = actor_objective_grad(N_QUANTILES, config.objective);
            let mut actor_grads = Gradients::zeros_like(&self.actor);
            let mut scratch = Gradients::zeros_like(&self.critic);
            let mut actor_cache = ForwardCache::default();
            let mut obj_sum = 0.0;
            for &i in &idx {
                let tr = replay.get(i);
                self.actor.forward_cached(&tr.obs, &mut actor_cache);
                let action = actor_cache.outputs.last().unwrap()[0];
                let x = concat_state_action(&tr.obs, action);
                self.critic.forward_cached(&x, &mut cache);
                let atoms = cache.outputs.last().unwrap();
                obj_sum += actor_objective(
                    &QuantileDistribution::new(atoms.clone()),
                    config.objective,
                );
                scratch.zero();
                let d_input = self.critic.backward(&x, &cache, &obj_weights, &mut scratch);
                let d_action = d_input[self.obs_dim];
                // Maximize: feed the negated gradient to the descending optimizer.
                self.actor
                    .backward(&tr.obs, &actor_cache, &[-d_action], &mut actor_grads);
            }
            actor_grads.scale(1.0 / nf);
            let obj = obj_sum / nf;
            if !obj.is_finite() {
                return Err(TrainError::Diverged {
                    step: self.gradient_steps,
                    loss: obj,
                });
            }
            self.actor_opt.step(&mut self.actor, &actor_grads);
            actor_obj = Some(obj);
        }

        self.target_critic
            .soft_update_from(&self.critic, config.soft_update_coeff);
        self.target_actor
            .soft_update_from(&self.actor, config.soft_update_coeff);
        self.gradient_steps += 1;
        Ok((critic_loss, actor_obj))
    }
}

/// Run the full training loop. `make_env` builds one environment per
/// collector worker; every episode draws its own substream of
/// `train_stream`, so the run is reproducible.
pub fn train<E, F>(
    make_env: F,
    norm: Normalization,
    config: &TrainerConfig,
    train_stream: RngStream,
    fingerprint: &str,
) -> Result<TrainResult, TrainError>
where
    E: Environment,
    F: Fn(usize) -> E + Sync,
{
    config.validate()?;
    let mut envs: Vec<E> = (0..config.collectors).map(&make_env).collect();
    let obs_dim = envs[0].obs_dim();
    let mut learner = Learner::new(obs_dim, config, &train_stream);
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let mut learner_sampler = train_stream.substream(LEARNER_SUBSTREAM).sampler();

    let log_every = if config.log_every_episodes == 0 {
        (config.episodes / 20).max(1)
    } else {
        config.log_every_episodes
    };

    let mut curve = Vec::new();
    let mut episode = 0usize;
    let mut loss_acc = 0.0;
    let mut loss_count = 0usize;
    let mut obj_acc = 0.0;
    let mut obj_count = 0usize;
    let mut next_log = log_every;
    let mut pending_updates = 0.0f64;

    while episode < config.episodes {
        let round = config.collectors.min(config.episodes - episode);
        let actor_ref = &learner.actor;
        let stream_ref = &train_stream;
        let episodes_collected: Vec<Result<Vec<RawStep>, EnvError>> = envs[..round]
            .par_iter_mut()
            .enumerate()
            .map(|(k, env)| {
                let ep_index = episode + k;
                rollout(env, actor_ref, ep_index, stream_ref, config.noise_std(ep_index))
            })
            .collect();

        let mut new_transitions = 0usize;
        for raw in episodes_collected {
            let raw = raw?;
            for tr in to_n_step(&raw, config.n_step, config.discount) {
                replay.push(tr);
                new_transitions += 1;
            }
        }
        episode += round;

        if replay.len() >= config.warmup_transitions.max(config.batch) {
            pending_updates += new_transitions as f64 * config.updates_per_step;
            let steps = pending_updates as usize;
            pending_updates -= steps as f64;
            for _ in 0..steps {
                let (l, o) = learner.gradient_step(&replay, config, &mut learner_sampler)?;
                loss_acc += l;
                loss_count += 1;
                if let Some(o) = o {
                    obj_acc += o;
                    obj_count += 1;
                }
            }
        }

        if episode >= next_log {
            let eval_var95 = if config.eval_episodes_per_log > 0 {
                let actor = Actor {
                    net: learner.actor.clone(),
                    gamma_scale: norm.gamma_scale,
                    tau_scale: norm.tau_scale,
                };
                let stream = train_stream
                    .substream(CURVE_EVAL_SUBSTREAM)
                    .substream(curve.len() as u64);
                let samples =
                    evaluate(&actor, &make_env, config.eval_episodes_per_log, stream)?;
                crate::risk::var_q(&samples.values, 95.0).unwrap_or(f64::NAN)
            } else {
                f64::NAN
            };
            curve.push(CurvePoint {
                episode,
                critic_loss: if loss_count > 0 { loss_acc / loss_count as f64 } else { f64::NAN },
                actor_objective: if obj_count > 0 { obj_acc / obj_count as f64 } else { f64::NAN },
                eval_var95,
            });
            loss_acc = 0.0;
            loss_count = 0;
            obj_acc = 0.0;
            obj_count = 0;
            next_log += log_every;
        }
    }

    Ok(TrainResult {
        snapshot: PolicySnapshot {
            version: SNAPSHOT_VERSION,
            obs_dim,
            actor: learner.actor,
            critic: learner.critic,
            gamma_scale: norm.gamma_scale,
            tau_scale: norm.tau_scale,
            config_fingerprint: fingerprint.to_string(),
            train_seed: train_stream.seed,
            episodes_trained: episode,
        },
        curve,
    })
}

/// Noise-free policy rollouts on a dedicated evaluation stream; episode `i`
/// uses `eval_stream.substream(i)`. Per-episode PnL is the reward sum.
pub fn evaluate<E, F>(
    actor: &Actor,
    make_env: &F,
    n_episodes: usize,
    eval_stream: RngStream,
) -> Result<PnlSamples, TrainError>
where
    E: Environment,
    F: Fn(usize) -> E + Sync,
{
    let results: Vec<Result<f64, EnvError>> = (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let mut env = make_env(i);
            let mut obs = env.reset(eval_stream.substream(i as u64));
            let mut total = 0.0;
            loop {
                let action = actor.act(&obs);
                let step = env.step(action)?;
                total += step.reward;
                if step.done {
                    return Ok(total);
                }
                obs = step.next_obs;
            }
        })
        .collect();
    let mut values = Vec::with_capacity(n_episodes);
    for r in results {
        values.push(r?);
    }
    let seeds = (0..n_episodes as u64).collect();
    Ok(PnlSamples::new(values, seeds))
}
