//! Synchronous advantage actor-critic training of the recurrent controller
//! over randomly sampled disturbance environments, plus paired-seed
//! evaluation.
//!
//! Each worker owns a private environment and rolls the shared parameters
//! forward for a fixed segment, sampling pre-squash actions from a Gaussian
//! around the actor mean (the deterministic head is what evaluation and
//! extraction use). Gradients are backpropagated through the unrolled GRU
//! segment per worker and reduced in worker order, so training is
//! bit-reproducible for a fixed worker count.

use ndarray::{array, Array1};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, DenseCache, GruCache};
use crate::policy::{DobnetPolicy, PolicyGrads, PolicyParameters};
use crate::quant::AeCache;
use crate::sim::{
    disturbance_force, regulation_error, reward, run_episode, sample_disturbance_pattern,
    sample_initial_state, step_dynamics, DisturbancePattern, DisturbanceRanges,
    InitialStateRanges, PlatformModel, PlatformState, Policy, Trajectory, Vec3, ZeroPolicy,
};

/// Splitmix64 finalizer; the building block for deriving independent seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministically derives a child seed from a base seed and a path of
/// indices (stream id, worker, episode, ...).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut s = mix64(base);
    for &p in path {
        s = mix64(s ^ p.wrapping_mul(0x9e3779b97f4a7c15));
    }
    s
}

/// Environment description shared by training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub model: PlatformModel,
    pub disturbance: DisturbanceRanges,
    pub initial_state: InitialStateRanges,
    pub episode_steps: usize,
}

impl EnvConfig {
    pub fn default_scaled() -> Self {
        Self {
            model: PlatformModel::default_scaled(),
            disturbance: DisturbanceRanges::default_excessive(),
            initial_state: InitialStateRanges::default(),
            episode_steps: 200,
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub workers: usize,
    pub rollout_len: usize,
    pub total_env_steps: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub value_weight: f64,
    pub entropy_weight: f64,
    /// Rewards are divided by this during training so value targets stay
    /// near unit scale; evaluation always reports unscaled rewards.
    pub reward_scale: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
    /// Leave inserted quantizers untouched during policy-gradient updates.
    pub freeze_quantizers: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            workers: 8,
            rollout_len: 20,
            total_env_steps: 2_000_000,
            gamma: 0.99,
            learning_rate: 1e-4,
            value_weight: 0.5,
            entropy_weight: 0.01,
            reward_scale: 50.0,
            max_grad_norm: 5.0,
            seed: 0,
            freeze_quantizers: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1), got {}", self.gamma)));
        }
        for (name, v) in [
            ("workers", self.workers as f64),
            ("rollout_len", self.rollout_len as f64),
            ("learning_rate", self.learning_rate),
            ("reward_scale", self.reward_scale),
        ] {
            if v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// One training-log record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub update: usize,
    pub env_steps: usize,
    /// Mean total reward of episodes completed since the previous record.
    pub mean_episode_reward: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<TrainLogRecord>,
}

impl TrainLog {
    /// Mean episode reward over the last `n` records that have one.
    pub fn recent_mean_reward(&self, n: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .records
            .iter()
            .rev()
            .filter_map(|r| r.mean_episode_reward)
            .take(n)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// Per-worker mutable rollout state.
struct Worker {
    idx: u64,
    state: PlatformState,
    pattern: DisturbancePattern,
    episode_step: usize,
    episode_count: u64,
    episode_reward: f64,
    h: Array1<f64>,
    prev_action: Vec3,
    rng: ChaCha12Rng,
    completed_rewards: Vec<f64>,
}

impl Worker {
    fn new(idx: u64, params: &PolicyParameters, env: &EnvConfig, seed: u64) -> Result<Self> {
        let pattern = sample_disturbance_pattern(
            derive_seed(seed, &[1, idx, 0]),
            &env.disturbance,
            &env.model,
        )?;
        let state = sample_initial_state(derive_seed(seed, &[2, idx, 0]), &env.initial_state);
        Ok(Self {
            idx,
            state,
            pattern,
            episode_step: 0,
            episode_count: 0,
            episode_reward: 0.0,
            h: params.initial_hidden(),
            prev_action: [0.0; 3],
            rng: ChaCha12Rng::seed_from_u64(derive_seed(seed, &[3, idx])),
            completed_rewards: Vec::new(),
        })
    }

    fn reset_episode(&mut self, params: &PolicyParameters, env: &EnvConfig, seed: u64) -> Result<()> {
        self.episode_count += 1;
        self.completed_rewards.push(self.episode_reward);
        self.episode_reward = 0.0;
        self.episode_step = 0;
        self.pattern = sample_disturbance_pattern(
            derive_seed(seed, &[1, self.idx, self.episode_count]),
            &env.disturbance,
            &env.model,
        )?;
        self.state = sample_initial_state(
            derive_seed(seed, &[2, self.idx, self.episode_count]),
            &env.initial_state,
        );
        self.h = params.initial_hidden();
        self.prev_action = [0.0; 3];
        Ok(())
    }
}

/// Everything cached for one rollout step.
struct StepCache {
    oq: Option<AeCache>,
    embed: DenseCache,
    gru: GruCache,
    actor: DenseCache,
    critic: DenseCache,
    aq: Option<AeCache>,
    /// Per-axis pass-through mask of the post-AQ clamp.
    clamp_open: [bool; 3],
    obs_used: [f64; 6],
    mu: Array1<f64>,
    xi: Array1<f64>,
    value: f64,
    reward_scaled: f64,
    done: bool,
    episode_start: bool,
}

struct WorkerBatch {
    caches: Vec<StepCache>,
    bootstrap: f64,
    saturated: usize,
    hidden_entries: usize,
}

fn worker_rollout(
    params: &PolicyParameters,
    env: &EnvConfig,
    cfg: &TrainConfig,
    worker: &mut Worker,
) -> Result<WorkerBatch> {
    let mut caches = Vec::with_capacity(cfg.rollout_len);
    let mut saturated = 0usize;
    let mut hidden_entries = 0usize;
    let u = params.control_upper;
    for _ in 0..cfg.rollout_len {
        let episode_start = worker.episode_step == 0;
        let obs = worker.state.observation();
        let (oq_cache, obs_used) = match &params.oq {
            Some(oq) => {
                let (rec, cache) = oq.forward_train(&Array1::from(obs.to_vec()));
                (
                    Some(cache),
                    [rec[0], rec[1], rec[2], rec[3], rec[4], rec[5]],
                )
            }
            None => (None, obs),
        };
        let x = params.net_input(&obs_used, &worker.prev_action);
        let (e, embed_cache) = params.embed.forward(&x);
        let (h_raw, gru_cache) = params.gru.step(&worker.h, &e);
        hidden_entries += h_raw.len();
        saturated += h_raw.iter().filter(|v| v.abs() > 0.995).count();
        let (mu, actor_cache) = params.actor.forward(&h_raw);
        let mut xi = mu.clone();
        for i in 0..3 {
            let eps: f64 = StandardNormal.sample(&mut worker.rng);
            xi[i] += params.log_std[i].exp() * eps;
        }
        let a_cont = params.squash(&xi);
        let (aq_cache, applied, clamp_open) = match &params.aq {
            Some(aq) => {
                let (rec, cache) = aq.forward_train(&Array1::from(a_cont.to_vec()));
                let mut applied = [0.0; 3];
                let mut open = [false; 3];
                for i in 0..3 {
                    applied[i] = rec[i].clamp(env.model.control_lower[i], env.model.control_upper[i]);
                    open[i] = rec[i] > env.model.control_lower[i] && rec[i] < env.model.control_upper[i];
                }
                (Some(cache), applied, open)
            }
            None => (None, a_cont, [true; 3]),
        };
        let (v, critic_cache) = params.critic.forward(&h_raw);
        let d = disturbance_force(&worker.pattern, worker.episode_step, env.model.dt);
        let next = step_dynamics(&worker.state, applied, d, &env.model)?;
        let r = reward(&next);
        worker.episode_reward += r;
        worker.episode_step += 1;
        let done = worker.episode_step >= env.episode_steps;
        caches.push(StepCache {
            oq: oq_cache,
            embed: embed_cache,
            gru: gru_cache,
            actor: actor_cache,
            critic: critic_cache,
            aq: aq_cache,
            clamp_open,
            obs_used,
            mu,
            xi,
            value: v[0],
            reward_scaled: r / cfg.reward_scale,
            done,
            episode_start,
        });
        worker.h = h_raw;
        worker.prev_action = applied;
        worker.state = next;
        if done {
            worker.reset_episode(params, env, cfg.seed)?;
        } else {
            let _ = u; // control bound only used via params.squash
        }
    }
    // Bootstrap value of the state following the segment (zero if the segment
    // ended exactly on an episode boundary).
    let bootstrap = if caches.last().map(|c| c.done).unwrap_or(true) {
        0.0
    } else {
        let obs = worker.state.observation();
        let obs_used = match &params.oq {
            Some(oq) => {
                let (_, rec) = oq.roundtrip(&Array1::from(obs.to_vec()));
                [rec[0], rec[1], rec[2], rec[3], rec[4], rec[5]]
            }
            None => obs,
        };
        let x = params.net_input(&obs_used, &worker.prev_action);
        let (e, _) = params.embed.forward(&x);
        let (h_next, _) = params.gru.step(&worker.h, &e);
        let (v, _) = params.critic.forward(&h_next);
        v[0]
    };
    Ok(WorkerBatch {
        caches,
        bootstrap,
        saturated,
        hidden_entries,
    })
}

/// Discounted n-step returns with bootstrapping, masked at episode ends.
pub fn compute_returns(rewards: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), dones.len());
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            acc = 0.0;
        }
        acc = rewards[t] + gamma * acc;
        returns[t] = acc;
    }
    returns
}

struct WorkerGradients {
    grads: PolicyGrads,
    policy_loss: f64,
    value_loss: f64,
}

fn worker_backward(
    params: &PolicyParameters,
    cfg: &TrainConfig,
    batch: &WorkerBatch,
    normalizer: f64,
) -> WorkerGradients {
    let n = batch.caches.len();
    let rewards: Vec<f64> = batch.caches.iter().map(|c| c.reward_scaled).collect();
    let dones: Vec<bool> = batch.caches.iter().map(|c| c.done).collect();
    let returns = compute_returns(&rewards, &dones, batch.bootstrap, cfg.gamma);
    let advantages: Vec<f64> = returns
        .iter()
        .zip(&batch.caches)
        .map(|(ret, c)| ret - c.value)
        .collect();

    let mut grads = PolicyGrads::zeros_like(params, cfg.freeze_quantizers);
    let mut d_h_next: Array1<f64> = Array1::zeros(params.hidden_width());
    // Gradient with respect to the applied action of step t-1, produced while
    // processing step t's input.
    let mut pending_prev_action: Option<Array1<f64>> = None;
    let mut policy_loss = 0.0;
    let mut value_loss = 0.0;

    for t in (0..n).rev() {
        let c = &batch.caches[t];
        let adv = advantages[t];
        let ret = returns[t];

        // Score-function gradient of -adv * log pi(xi | mu, sigma).
        let mut d_mu = Array1::zeros(3);
        let mut log_pi = 0.0;
        for i in 0..3 {
            let sigma = params.log_std[i].exp();
            let z = (c.xi[i] - c.mu[i]) / sigma;
            log_pi += -0.5 * z * z - params.log_std[i];
            d_mu[i] = -(adv / normalizer) * (z / sigma);
            grads.log_std[i] += -(adv / normalizer) * (z * z - 1.0);
        }
        policy_loss += -(adv * log_pi) / normalizer;
        value_loss += (c.value - ret).powi(2) / normalizer;
        let d_v = array![cfg.value_weight * 2.0 * (c.value - ret) / normalizer];

        let mut d_h = params.actor.backward(&c.actor, &d_mu, &mut grads.actor);
        d_h += &params.critic.backward(&c.critic, &d_v, &mut grads.critic);
        d_h += &d_h_next;

        // Gradient arriving from step t+1 into this step's applied action.
        if let Some(dpa) = pending_prev_action.take() {
            if let (Some(aq), Some(aq_grads)) = (&params.aq, grads.aq.as_mut()) {
                let mut d_applied = Array1::zeros(3);
                for i in 0..3 {
                    if c.clamp_open[i] {
                        d_applied[i] = dpa[i] / params.control_upper[i];
                    }
                }
                let cache = c.aq.as_ref().expect("aq cache recorded when aq active");
                let _ = aq.backward_train(cache, &d_applied, aq_grads);
            }
            // Without AQ the sampled action is a detached constant input.
        }

        let (d_h_prev, d_e) = params.gru.backward(&c.gru, &d_h, &mut grads.gru);
        let d_x = params.embed.backward(&c.embed, &d_e, &mut grads.embed);

        if let (Some(oq), Some(oq_grads)) = (&params.oq, grads.oq.as_mut()) {
            let clip = params.config.obs_clip;
            let mut d_obs_used = Array1::zeros(6);
            for i in 0..6 {
                let scaled = c.obs_used[i] / params.config.obs_scale[i];
                if scaled.abs() < clip {
                    d_obs_used[i] = d_x[i] / params.config.obs_scale[i];
                }
            }
            let cache = c.oq.as_ref().expect("oq cache recorded when oq active");
            let _ = oq.backward_train(cache, &d_obs_used, oq_grads);
        }

        pending_prev_action = if c.episode_start || !params.config.include_prev_action {
            None
        } else {
            Some(Array1::from_iter((6..9).map(|i| d_x[i])))
        };
        d_h_next = if c.episode_start {
            Array1::zeros(params.hidden_width())
        } else {
            d_h_prev
        };
    }

    WorkerGradients {
        grads,
        policy_loss,
        value_loss,
    }
}

/// Synchronous A2C. Advances `params` in place for `cfg.total_env_steps`
/// environment steps and returns the training log. Aborts with a numeric
/// divergence error on non-finite losses or when 95% of hidden units sit at
/// their saturation rails.
pub fn a2c_train(params: &mut PolicyParameters, env: &EnvConfig, cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    params.check_shapes()?;
    let steps_per_update = cfg.workers * cfg.rollout_len;
    let updates = cfg.total_env_steps.div_ceil(steps_per_update);
    let mut workers: Vec<Worker> = (0..cfg.workers as u64)
        .map(|i| Worker::new(i, params, env, cfg.seed))
        .collect::<Result<_>>()?;

    let mut flat = Vec::new();
    params.flatten_trainable(cfg.freeze_quantizers, &mut flat);
    let mut adam = Adam::new(cfg.learning_rate, flat.len());
    let mut log = TrainLog::default();

    for update in 0..updates {
        let shared: &PolicyParameters = params;
        let batches: Vec<Result<WorkerBatch>> = std::thread::scope(|scope| {
            let handles: Vec<_> = workers
                .iter_mut()
                .map(|w| scope.spawn(move || worker_rollout(shared, env, cfg, w)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let batches: Vec<WorkerBatch> = batches.into_iter().collect::<Result<_>>()?;

        let normalizer = (cfg.workers * cfg.rollout_len) as f64;
        let worker_grads: Vec<WorkerGradients> = std::thread::scope(|scope| {
            let handles: Vec<_> = batches
                .iter()
                .map(|b| scope.spawn(move || worker_backward(shared, cfg, b, normalizer)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });

        // Order-fixed reduction across workers.
        let mut total = PolicyGrads::zeros_like(params, cfg.freeze_quantizers);
        let mut policy_loss = 0.0;
        let mut value_loss = 0.0;
        for wg in &worker_grads {
            total.add(&wg.grads);
            policy_loss += wg.policy_loss;
            value_loss += wg.value_loss;
        }
        // Entropy bonus of the pre-squash Gaussian: H = sum_i log sigma_i + c,
        // maximized, so its gradient on log_std is -entropy_weight.
        let entropy: f64 = params.log_std.sum() + 3.0 * 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        for g in total.log_std.iter_mut() {
            *g -= cfg.entropy_weight;
        }

        let sat: usize = batches.iter().map(|b| b.saturated).sum();
        let entries: usize = batches.iter().map(|b| b.hidden_entries).sum();
        if entries > 0 && sat as f64 >= 0.95 * entries as f64 {
            return Err(Error::NumericDivergence(format!(
                "hidden state saturated: {sat}/{entries} units above 0.995 at update {update}"
            )));
        }
        if !policy_loss.is_finite() || !value_loss.is_finite() {
            return Err(Error::NumericDivergence(format!(
                "non-finite loss at update {update}: policy {policy_loss}, value {value_loss}"
            )));
        }

        let mut g = Vec::with_capacity(flat.len());
        total.flatten_into(&mut g);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDivergence(format!(
                "non-finite gradient at update {update}"
            )));
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > cfg.max_grad_norm {
            let s = cfg.max_grad_norm / norm;
            for v in &mut g {
                *v *= s;
            }
        }
        flat.clear();
        params.flatten_trainable(cfg.freeze_quantizers, &mut flat);
        adam.step(&mut flat, &g);
        params.unflatten_trainable(cfg.freeze_quantizers, &flat);
        for v in params.log_std.iter_mut() {
            *v = v.clamp(-4.0, 1.0);
        }

        let completed: Vec<f64> = workers
            .iter_mut()
            .flat_map(|w| w.completed_rewards.drain(..).collect::<Vec<_>>())
            .collect();
        log.records.push(TrainLogRecord {
            update,
            env_steps: (update + 1) * steps_per_update,
            mean_episode_reward: if completed.is_empty() {
                None
            } else {
                Some(completed.iter().sum::<f64>() / completed.len() as f64)
            },
            policy_loss,
            value_loss,
            entropy,
            grad_norm: norm,
        });
    }
    Ok(log)
}

/// Per-episode evaluation result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub seed: u64,
    pub total_reward: f64,
    pub regulation_error: f64,
}

/// Aggregate evaluation statistics over a fixed seed list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalStats {
    pub episodes: Vec<EpisodeStat>,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_regulation_error: f64,
    pub std_regulation_error: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

/// Evaluation seeds shared by paired comparisons.
pub fn evaluation_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| derive_seed(base, &[4, i])).collect()
}

/// Runs `policy` over the given episode seeds; identical seeds see identical
/// disturbance patterns and initial states, so two policies evaluated on the
/// same list are paired sample by sample.
pub fn evaluate_policy(
    policy: &mut dyn Policy,
    env: &EnvConfig,
    seeds: &[u64],
) -> Result<EvalStats> {
    let mut episodes = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let traj = rollout_episode(policy, env, seed)?;
        episodes.push(EpisodeStat {
            seed,
            total_reward: traj.total_reward(),
            regulation_error: regulation_error(&traj)?,
        });
    }
    let (mean_reward, std_reward) = mean_std(&episodes.iter().map(|e| e.total_reward).collect::<Vec<_>>());
    let (mean_regulation_error, std_regulation_error) =
        mean_std(&episodes.iter().map(|e| e.regulation_error).collect::<Vec<_>>());
    Ok(EvalStats {
        episodes,
        mean_reward,
        std_reward,
        mean_regulation_error,
        std_regulation_error,
    })
}

/// One deterministic episode for the given seed.
pub fn rollout_episode(policy: &mut dyn Policy, env: &EnvConfig, seed: u64) -> Result<Trajectory> {
    let pattern = sample_disturbance_pattern(
        derive_seed(seed, &[10]),
        &env.disturbance,
        &env.model,
    )?;
    let init = sample_initial_state(derive_seed(seed, &[11]), &env.initial_state);
    run_episode(policy, &pattern, &env.model, init, env.episode_steps)
}

/// Deterministic evaluation of trained parameters.
pub fn evaluate(params: &PolicyParameters, env: &EnvConfig, seeds: &[u64]) -> Result<EvalStats> {
    let mut policy = DobnetPolicy::new(params, &env.model);
    evaluate_policy(&mut policy, env, seeds)
}

/// Zero-action baseline over the same seeds.
pub fn evaluate_zero_baseline(env: &EnvConfig, seeds: &[u64]) -> Result<EvalStats> {
    let mut policy = ZeroPolicy;
    evaluate_policy(&mut policy, env, seeds)
}

/// Inserts supervised-trained interfaces into a continuous policy and
/// finetunes the whole quantized network with straight-through gradients.
/// Returns the paired-seed evaluation before and after finetuning.
pub struct FinetuneOutcome {
    pub before: EvalStats,
    pub after: EvalStats,
    pub log: TrainLog,
}

pub fn insert_and_finetune(
    params: &mut PolicyParameters,
    oq: crate::quant::QuantAutoencoder,
    aq: crate::quant::QuantAutoencoder,
    env: &EnvConfig,
    cfg: &TrainConfig,
    eval_seeds: &[u64],
) -> Result<FinetuneOutcome> {
    if params.hq.is_some() {
        return Err(Error::Config(
            "hidden interface must stay deactivated during finetuning".into(),
        ));
    }
    params.oq = Some(oq);
    params.aq = Some(aq);
    let before = evaluate(params, env, eval_seeds)?;
    let log = a2c_train(params, env, cfg)?;
    let after = evaluate(params, env, eval_seeds)?;
    Ok(FinetuneOutcome { before, after, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyConfig;

    fn small_policy(seed: u64) -> PolicyParameters {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let cfg = PolicyConfig {
            hidden_width: 8,
            embed_width: 16,
            head_width: 16,
            ..Default::default()
        };
        PolicyParameters::new(&mut rng, cfg, &PlatformModel::default_scaled())
    }

    #[test]
    fn returns_match_the_geometric_series() {
        // Constant reward r over n steps bootstrapped by V:
        // R_0 = r (1 - g^n) / (1 - g) + g^n V.
        let r = -0.6;
        let v = -3.0;
        let g = 0.9;
        let n = 7;
        let rewards = vec![r; n];
        let dones = vec![false; n];
        let returns = compute_returns(&rewards, &dones, v, g);
        let expected = r * (1.0 - g.powi(n as i32)) / (1.0 - g) + g.powi(n as i32) * v;
        assert!((returns[0] - expected).abs() < 1e-12, "{} vs {expected}", returns[0]);
    }

    #[test]
    fn zero_discount_reduces_returns_to_immediate_rewards() {
        let rewards = vec![-1.0, -2.0, -3.0];
        let dones = vec![false, false, false];
        let returns = compute_returns(&rewards, &dones, 42.0, 0.0);
        assert_eq!(returns, rewards);
    }

    #[test]
    fn returns_are_masked_at_episode_boundaries() {
        let rewards = vec![-1.0, -1.0, -5.0, -1.0];
        let dones = vec![false, false, true, false];
        let returns = compute_returns(&rewards, &dones, 100.0, 0.5);
        // Step 2 ends an episode: nothing after it leaks backwards.
        assert_eq!(returns[2], -5.0);
        assert_eq!(returns[1], -1.0 + 0.5 * -5.0);
        // Step 3 starts fresh and bootstraps.
        assert_eq!(returns[3], -1.0 + 0.5 * 100.0);
    }

    #[test]
    fn training_is_bit_reproducible_with_fixed_seed() {
        let env = EnvConfig::default_scaled();
        let cfg = TrainConfig {
            workers: 2,
            rollout_len: 10,
            total_env_steps: 400,
            learning_rate: 1e-3,
            seed: 99,
            ..Default::default()
        };
        let mut a = small_policy(5);
        let mut b = small_policy(5);
        let log_a = a2c_train(&mut a, &env, &cfg).unwrap();
        let log_b = a2c_train(&mut b, &env, &cfg).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
        assert_eq!(
            serde_json::to_vec(&log_a.records.last().unwrap()).unwrap(),
            serde_json::to_vec(&log_b.records.last().unwrap()).unwrap()
        );
    }

    #[test]
    fn value_head_learns_constant_reward_value() {
        // Sanity harness: a continuing stream of constant scaled rewards with
        // a frozen hidden state must drive the critic toward r / (1 - gamma).
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut critic = crate::nn::DenseNet::new(
            &mut rng,
            4,
            &[(16, crate::nn::Activation::Tanh), (1, crate::nn::Activation::Linear)],
        );
        let gamma = 0.9;
        let r = -0.5;
        let target = r / (1.0 - gamma); // -5
        let h = Array1::from(vec![0.3, -0.2, 0.7, 0.1]);
        let mut flat = Vec::new();
        critic.flatten_into(&mut flat);
        let mut adam = Adam::new(3e-3, flat.len());
        let n = 8;
        for _ in 0..4000 {
            // n-step target bootstrapped by the critic itself.
            let (v_boot, _) = critic.forward(&h);
            let rewards = vec![r; n];
            let dones = vec![false; n];
            let returns = compute_returns(&rewards, &dones, v_boot[0], gamma);
            let mut grads = crate::nn::DenseGrads::zeros_like(&critic);
            for ret in &returns {
                let (v, cache) = critic.forward(&h);
                let up = array![2.0 * (v[0] - ret) / n as f64];
                critic.backward(&cache, &up, &mut grads);
            }
            let mut g = Vec::new();
            crate::nn::DenseNet::flatten_grads_into(&grads, &mut g);
            flat.clear();
            critic.flatten_into(&mut flat);
            adam.step(&mut flat, &g);
            let mut off = 0;
            critic.unflatten_from(&flat, &mut off);
        }
        let (v, _) = critic.forward(&h);
        let rel = (v[0] - target).abs() / target.abs();
        assert!(rel < 0.05, "critic {} vs {target}", v[0]);
    }

    #[test]
    fn paired_seeds_see_identical_patterns() {
        let env = EnvConfig::default_scaled();
        let seeds = evaluation_seeds(7, 5);
        let a = evaluate_zero_baseline(&env, &seeds).unwrap();
        let b = evaluate_zero_baseline(&env, &seeds).unwrap();
        for (x, y) in a.episodes.iter().zip(&b.episodes) {
            assert_eq!(x.total_reward, y.total_reward);
            assert_eq!(x.regulation_error, y.regulation_error);
        }
        // And the trained-policy path replays the same environments.
        let params = small_policy(3);
        let e1 = evaluate(&params, &env, &seeds).unwrap();
        let e2 = evaluate(&params, &env, &seeds).unwrap();
        assert_eq!(
            serde_json::to_vec(&e1).unwrap(),
            serde_json::to_vec(&e2).unwrap()
        );
    }

    #[test]
    fn short_training_run_improves_mean_reward() {
        let env = EnvConfig::default_scaled();
        let cfg = TrainConfig {
            workers: 4,
            rollout_len: 20,
            total_env_steps: 60_000,
            learning_rate: 1e-3,
            reward_scale: 50.0,
            seed: 11,
            ..Default::default()
        };
        let mut params = small_policy(21);
        let log = a2c_train(&mut params, &env, &cfg).unwrap();
        let early: Vec<f64> = log
            .records
            .iter()
            .filter_map(|r| r.mean_episode_reward)
            .take(5)
            .collect();
        let late: Vec<f64> = log
            .records
            .iter()
            .filter_map(|r| r.mean_episode_reward)
            .rev()
            .take(5)
            .collect();
        let early_mean = early.iter().sum::<f64>() / early.len() as f64;
        let late_mean = late.iter().sum::<f64>() / late.len() as f64;
        assert!(
            late_mean > early_mean,
            "no improvement: early {early_mean}, late {late_mean}"
        );
    }

    #[test]
    fn saturated_hidden_state_triggers_divergence_abort() {
        let env = EnvConfig::default_scaled();
        let cfg = TrainConfig {
            workers: 1,
            rollout_len: 10,
            total_env_steps: 10,
            seed: 0,
            ..Default::default()
        };
        let mut params = small_policy(2);
        // Blow up the candidate gate so every hidden unit rails at +-1.
        params.gru.b_c.fill(1e6);
        params.gru.b_z.fill(1e6);
        let err = a2c_train(&mut params, &env, &cfg).unwrap_err();
        assert!(matches!(err, Error::NumericDivergence(_)), "{err:?}");
    }
}
