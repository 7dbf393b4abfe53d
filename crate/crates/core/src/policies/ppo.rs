//! Clipped-surrogate PPO with generalized advantage estimation.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::nets::{entropy, log_softmax, ActorCritic, PolicyInput, PolicyNetSpec};
use super::rollout::evaluate_success;
use super::PolicyError;
use crate::navsim::{Episode, MapSpec, SpawnMode, Termination, MAX_STEPS};
use crate::nnkit::{Adam, Grads, Module};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_ratio: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    /// Steps collected per environment before each update.
    pub rollout_horizon: usize,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub parallel_envs: usize,
    pub total_steps: u64,
    pub checkpoint_interval: u64,
    pub max_grad_norm: f64,
    pub seed: u64,
    /// Environment steps between sampled-policy evaluations on island spawns; 0 disables them.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Stop early once an evaluation reaches this success rate.
    pub target_success: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_ratio: 0.2,
            discount: 0.99,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 3e-4,
            rollout_horizon: 256,
            epochs_per_update: 4,
            minibatch_size: 256,
            parallel_envs: 8,
            total_steps: 2_000_000,
            checkpoint_interval: 250_000,
            max_grad_norm: 0.5,
            seed: 0,
            eval_interval: 0,
            eval_episodes: 100,
            target_success: None,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Config(m.to_string()));
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return bad("clip_ratio must lie in (0, 1)");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if self.learning_rate < 0.0 || self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return bad("learning_rate and loss coefficients must be non-negative");
        }
        if self.rollout_horizon == 0 || self.epochs_per_update == 0 || self.minibatch_size == 0 || self.parallel_envs == 0 {
            return bad("horizon, epochs, minibatch size and env count must be positive");
        }
        if self.checkpoint_interval == 0 {
            return bad("checkpoint_interval must be positive");
        }
        if self.max_grad_norm <= 0.0 {
            return bad("max_grad_norm must be positive");
        }
        if let Some(t) = self.target_success {
            if !(0.0..=1.0).contains(&t) || self.eval_interval == 0 {
                return bad("target_success needs a value in [0, 1] and a positive eval_interval");
            }
        }
        Ok(())
    }
}

/// Advantages and return targets for one environment's contiguous transitions.
/// `dones[t]` marks that the episode ended at step `t`, so no value is bootstrapped past it.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, discount: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, next_nonterminal) = if dones[t] {
            (0.0, 0.0)
        } else if t + 1 < n {
            (values[t + 1], 1.0)
        } else {
            (last_value, 1.0)
        };
        let delta = rewards[t] + discount * next_value * next_nonterminal - values[t];
        running = delta + discount * lambda * next_nonterminal * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Gradient of `min(r A, clip(r, 1-eps, 1+eps) A)` with respect to the new
/// log-probability. Zero wherever the clipped branch is the active minimum.
pub fn clipped_surrogate_grad(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let clipped = (advantage >= 0.0 && ratio > 1.0 + clip) || (advantage < 0.0 && ratio < 1.0 - clip);
    if clipped {
        0.0
    } else {
        ratio * advantage
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Total environment steps taken when the episode finished.
    pub env_steps: u64,
    pub length: usize,
    pub outcome: Termination,
    /// Episode length on success, the step limit otherwise.
    pub time_to_goal: usize,
    pub episode_return: f64,
    pub island_spawn: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub env_steps: u64,
    pub success: f64,
    pub mean_time_to_goal: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub checkpoints: Vec<Checkpoint>,
    pub episodes: Vec<EpisodeLog>,
    pub evaluations: Vec<EvalPoint>,
    pub env_steps: u64,
    pub updates: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn final_checkpoint(&self) -> &Checkpoint {
        self.checkpoints.last().expect("training always emits a final checkpoint")
    }
}

/// Trailing mean of time-to-goal over `window` episodes (shorter at the start).
pub fn smoothed_time_to_goal(episodes: &[EpisodeLog], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(episodes.len());
    let mut sum = 0.0;
    for (i, e) in episodes.iter().enumerate() {
        sum += e.time_to_goal as f64;
        if i >= window {
            sum -= episodes[i - window].time_to_goal as f64;
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

struct Slot {
    episode: Episode,
    rng: ChaCha8Rng,
    ret: f64,
}

struct Transition {
    input: PolicyInput,
    action: usize,
    logp: f64,
    advantage: f64,
    target: f64,
}

fn checkpoint_of(model: &ActorCritic, id_prefix: &str, env_steps: u64) -> Checkpoint {
    Checkpoint {
        id: format!("{id_prefix}-{env_steps}"),
        env_steps,
        model: model.clone(),
    }
}

/// Trains an actor-critic on `map` with training-mode spawns. Checkpoints are
/// emitted every `checkpoint_interval` steps and once at the end; `on_checkpoint`
/// sees each as it is produced.
pub fn ppo_train(
    map: Arc<MapSpec>,
    spec: PolicyNetSpec,
    config: &PpoConfig,
    mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<(), PolicyError>,
) -> Result<TrainReport, PolicyError> {
    config.validate()?;
    map.validate_layout()?;
    let id_prefix = format!("{}-seed{}", serde_json::to_value(spec.kind)?.as_str().unwrap_or("policy"), config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ActorCritic::new(spec, &mut rng)?;
    let mut adam = Adam::new(&model.params(), config.learning_rate);
    let n_actor = model.actor_param_count();

    let mut slots = Vec::with_capacity(config.parallel_envs);
    for i in 0..config.parallel_envs {
        let mut env_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(1_000_003).wrapping_add(i as u64 + 1));
        let episode = Episode::reset(map.clone(), SpawnMode::Train, &mut env_rng)?;
        slots.push(Slot {
            episode,
            rng: env_rng,
            ret: 0.0,
        });
    }

    let mut report = TrainReport {
        checkpoints: Vec::new(),
        episodes: Vec::new(),
        evaluations: Vec::new(),
        env_steps: 0,
        updates: 0,
        stopped_early: false,
    };
    let mut next_checkpoint = config.checkpoint_interval;
    let mut next_eval = config.eval_interval;
    let n_envs = config.parallel_envs as u64;

    while report.env_steps < config.total_steps {
        let remaining = config.total_steps - report.env_steps;
        let horizon = (config.rollout_horizon as u64).min(remaining.div_ceil(n_envs)) as usize;
        let mut batch: Vec<Transition> = Vec::with_capacity(horizon * config.parallel_envs);

        for slot in slots.iter_mut() {
            let mut inputs = Vec::with_capacity(horizon);
            let mut actions = Vec::with_capacity(horizon);
            let mut logps = Vec::with_capacity(horizon);
            let mut values = Vec::with_capacity(horizon);
            let mut rewards = Vec::with_capacity(horizon);
            let mut dones = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let input = model.input(&slot.episode.observe(false), &map);
                let (action, logp) = model.sample(&input, &mut slot.rng)?;
                let value = model.value(&input)?;
                let out = slot.episode.step(action)?;
                report.env_steps += 1;
                slot.ret += out.reward;
                inputs.push(input);
                actions.push(action.index());
                logps.push(logp);
                values.push(value);
                rewards.push(out.reward);
                dones.push(out.terminated);
                if out.terminated {
                    let length = slot.episode.steps_taken();
                    let island = slot.episode.spawn_index().is_some_and(|i| map.spawns[i].island);
                    report.episodes.push(EpisodeLog {
                        episode: report.episodes.len(),
                        env_steps: report.env_steps,
                        length,
                        outcome: out.reason,
                        time_to_goal: if out.reason == Termination::Goal { length } else { MAX_STEPS },
                        episode_return: slot.ret,
                        island_spawn: island,
                    });
                    slot.ret = 0.0;
                    slot.episode = Episode::reset(map.clone(), SpawnMode::Train, &mut slot.rng)?;
                }
            }
            let last_value = model.value(&model.input(&slot.episode.observe(false), &map))?;
            let (adv, targets) = gae(&rewards, &values, &dones, last_value, config.discount, config.gae_lambda);
            for (i, input) in inputs.into_iter().enumerate() {
                batch.push(Transition {
                    input,
                    action: actions[i],
                    logp: logps[i],
                    advantage: adv[i],
                    target: targets[i],
                });
            }
        }

        let n = batch.len() as f64;
        let mean = batch.iter().map(|t| t.advantage).sum::<f64>() / n;
        let std = (batch.iter().map(|t| (t.advantage - mean).powi(2)).sum::<f64>() / n).sqrt();
        for t in batch.iter_mut() {
            t.advantage = (t.advantage - mean) / (std + 1e-8);
        }

        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut grads = Grads::zeros_for(&model.params());
        for _ in 0..config.epochs_per_update {
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.minibatch_size) {
                grads.zero();
                let scale = 1.0 / chunk.len() as f64;
                let mut loss = 0.0;
                for &i in chunk {
                    let t = &batch[i];
                    let (logits, a_cache) = model.actor.forward_cached(&t.input)?;
                    let logp = log_softmax(&logits);
                    let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
                    let h = entropy(&probs);
                    let ratio = (logp[t.action] - t.logp).exp();
                    let clip = ratio.clamp(1.0 - config.clip_ratio, 1.0 + config.clip_ratio);
                    loss -= (ratio * t.advantage).min(clip * t.advantage) * scale;
                    loss -= config.entropy_coef * h * scale;
                    let g_logp = -clipped_surrogate_grad(ratio, t.advantage, config.clip_ratio);
                    let d_logits: Vec<f64> = probs
                        .iter()
                        .enumerate()
                        .map(|(j, p)| {
                            let onehot = if j == t.action { 1.0 } else { 0.0 };
                            let d_policy = g_logp * (onehot - p);
                            let d_entropy = config.entropy_coef * p * (logp[j] + h);
                            (d_policy + d_entropy) * scale
                        })
                        .collect();
                    model.actor.backward(&a_cache, &d_logits, &mut grads.0[..n_actor]);

                    let (v, c_cache) = model.critic.forward_cached(&t.input)?;
                    let err = v[0] - t.target;
                    loss += config.value_coef * err * err * scale;
                    model
                        .critic
                        .backward(&c_cache, &[2.0 * config.value_coef * err * scale], &mut grads.0[n_actor..]);
                }
                if !loss.is_finite() || !grads.all_finite() {
                    return Err(PolicyError::NonFinite(format!(
                        "update {} after {} env steps: loss={loss}, grad norm={}",
                        report.updates,
                        report.env_steps,
                        grads.global_norm()
                    )));
                }
                grads.clip_global_norm(config.max_grad_norm);
                adam.step(model.params_mut(), &grads)?;
            }
        }
        report.updates += 1;

        while report.env_steps >= next_checkpoint && report.env_steps < config.total_steps {
            let ck = checkpoint_of(&model, &id_prefix, next_checkpoint.min(report.env_steps));
            on_checkpoint(&ck)?;
            report.checkpoints.push(ck);
            next_checkpoint += config.checkpoint_interval;
        }
        if config.eval_interval > 0 && report.env_steps >= next_eval {
            while next_eval <= report.env_steps {
                next_eval += config.eval_interval;
            }
            let eval_seed = config.seed ^ 0x5eed_0000 ^ report.env_steps;
            let (success, ttg) = evaluate_success(&model, map.clone(), config.eval_episodes, eval_seed)?;
            tracing::info!(env_steps = report.env_steps, success, mean_time_to_goal = ttg, "evaluation");
            report.evaluations.push(EvalPoint {
                env_steps: report.env_steps,
                success,
                mean_time_to_goal: ttg,
            });
            if config.target_success.is_some_and(|t| success >= t) {
                report.stopped_early = true;
                break;
            }
        }
    }

    let ck = checkpoint_of(&model, &id_prefix, report.env_steps);
    on_checkpoint(&ck)?;
    report.checkpoints.push(ck);
    Ok(report)
}
