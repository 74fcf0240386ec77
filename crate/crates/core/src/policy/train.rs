use std::io::{self, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{eval_step, validate_program, ObservationFrame, RewardProgram};
use crate::env::{schema_for, Command, EnvConfig, EnvError, TaskLimits, Termination, WalkerEnv, OBS_DIM};
use crate::seed;

use super::adam::{clip_grad_norm, Adam};
use super::gae::compute_gae;
use super::loss::{ppo_loss_on, LossConfig, RolloutBatch, TeacherMode};
use super::network::{log_prob, PolicyParams};
use super::teacher::TeacherPolicy;

/// Input scaling for the walker observation vector, in signal order.
pub const WALKER_OBS_SCALE: [f64; OBS_DIM] = [1.0, 0.5, 2.0, 1.0, 1.0, 1.0 / 3.0, 1.0 / 3.0, 50.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub num_envs: usize,
    pub steps_per_env: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub value_coef: f64,
    pub init_log_sigma: f64,
    pub max_grad_norm: f64,
    pub teacher_mode: TeacherMode,
    /// Consecutive rejected updates before the candidate is failed.
    pub max_rejections: u32,
    pub obs_scale: Vec<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            lr: 3e-4,
            minibatch: 256,
            epochs: 4,
            num_envs: 16,
            steps_per_env: 256,
            gamma: 0.99,
            lambda: 0.95,
            epsilon: 0.2,
            value_coef: 0.5,
            init_log_sigma: -0.5,
            max_grad_norm: 1.0,
            teacher_mode: TeacherMode::Distance,
            max_rejections: 3,
            obs_scale: WALKER_OBS_SCALE.to_vec(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.minibatch > 0, "minibatch must be positive"),
            (self.epochs > 0, "epochs must be positive"),
            (self.num_envs > 0, "num_envs must be positive"),
            (self.steps_per_env > 0, "steps_per_env must be positive"),
            (self.lr > 0.0 && self.lr.is_finite(), "lr must be positive"),
            ((0.0..=1.0).contains(&self.gamma), "gamma must be in [0, 1]"),
            ((0.0..=1.0).contains(&self.lambda), "lambda must be in [0, 1]"),
            (self.epsilon > 0.0, "epsilon must be positive"),
            (self.value_coef >= 0.0, "value_coef must be non-negative"),
            (self.max_grad_norm > 0.0, "max_grad_norm must be positive"),
            (self.obs_scale.len() == OBS_DIM, "obs_scale must have one entry per observation"),
            (!self.hidden.is_empty() && self.hidden.iter().all(|&h| h > 0), "hidden layers must be non-empty"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(msg.to_string()),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Per-step mean of each raw term value over the batch.
    pub term_means: Vec<f64>,
    /// Per-step mean weighted reward.
    pub reward_mean: f64,
    /// Mean undiscounted return of episodes finished this iteration;
    /// carried over from the previous iteration when none finished.
    pub episode_return: f64,
    /// `None` when no episode finished this iteration.
    pub survival_time: Option<f64>,
    pub velocity_error: Option<f64>,
    pub episodes: usize,
    pub clip_loss: f64,
    pub value_loss: f64,
    pub teacher_loss: f64,
    pub lr: f64,
    pub rejected: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub term_names: Vec<String>,
    pub iterations: Vec<IterationMetrics>,
    /// Filled in after the final evaluation rollouts.
    pub e_train: Option<f64>,
}

impl TrainMetrics {
    pub fn reward_curve(&self) -> Vec<f64> {
        self.iterations.iter().map(|m| m.episode_return).collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        let mut header: Vec<String> = vec!["iteration".into()];
        header.extend(self.term_names.iter().map(|n| format!("term_{n}")));
        header.extend(
            [
                "reward_mean",
                "episode_return",
                "survival_time",
                "velocity_error",
                "episodes",
                "clip_loss",
                "value_loss",
                "teacher_loss",
                "lr",
                "rejected",
                "e_train",
            ]
            .map(String::from),
        );
        writeln!(w, "{}", header.join(","))?;
        let last = self.iterations.len().saturating_sub(1);
        for (i, m) in self.iterations.iter().enumerate() {
            let mut row = vec![m.iteration.to_string()];
            row.extend(m.term_means.iter().map(|v| v.to_string()));
            row.extend([
                m.reward_mean.to_string(),
                m.episode_return.to_string(),
                m.survival_time.map(|v| v.to_string()).unwrap_or_default(),
                m.velocity_error.map(|v| v.to_string()).unwrap_or_default(),
                m.episodes.to_string(),
                m.clip_loss.to_string(),
                m.value_loss.to_string(),
                m.teacher_loss.to_string(),
                m.lr.to_string(),
                m.rejected.to_string(),
                match self.e_train {
                    Some(e) if i == last => e.to_string(),
                    _ => String::new(),
                },
            ]);
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("reward program does not fit the training schema: {0}")]
    Schema(String),
    #[error("reward evaluation failed in iteration {iteration}: {message}")]
    Reward { iteration: usize, message: String },
    #[error("environment error: {0}")]
    Env(#[from] EnvError),
    #[error("training diverged: {rejections} consecutive non-finite updates (last at iteration {iteration})")]
    Diverged { iteration: usize, rejections: u32 },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub metrics: TrainMetrics,
}

struct EnvSlot {
    env: WalkerEnv,
    frame: ObservationFrame,
    episode: u64,
    ret: f64,
    vel_err: f64,
    len: usize,
}

struct EpisodeSummary {
    ret: f64,
    survival: f64,
    vel_err: f64,
}

#[derive(Default)]
struct Segment {
    obs: Vec<f64>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    terminals: Vec<bool>,
    teacher: Vec<f64>,
    term_sums: Vec<f64>,
    /// Sum of weighted rewards, without bootstrap bonuses.
    raw_reward: f64,
    bootstrap: f64,
    episodes: Vec<EpisodeSummary>,
}

struct Ctx<'a> {
    cfg: &'a Arc<EnvConfig>,
    limits: TaskLimits,
    program: &'a RewardProgram,
    teacher: Option<&'a TeacherPolicy>,
    seed: u64,
    ppo: &'a PpoConfig,
}

impl Ctx<'_> {
    fn open(&self, env_idx: usize, episode: u64) -> Result<EnvSlot, EnvError> {
        let mut crng = seed::rng(self.seed, &[seed::COMMAND, env_idx as u64, episode]);
        let (lo, hi) = self.limits.lin_vel_range;
        let v = if hi > lo { crng.random_range(lo..=hi) } else { lo };
        let command = Command { lin_vel: v, ang_vel: self.limits.ang_vel_range.0 };
        let env_seed = seed::derive(self.seed, &[seed::ROLLOUT, env_idx as u64, seed::EPISODE, episode]);
        let mut env = WalkerEnv::reset(self.cfg.clone(), self.limits, env_seed, command)?;
        let frame = env.observe();
        Ok(EnvSlot { env, frame, episode, ret: 0.0, vel_err: 0.0, len: 0 })
    }

    /// Runs `steps_per_env` ticks in one slot, resetting finished episodes.
    fn collect(
        &self,
        params: &PolicyParams,
        slot: &mut EnvSlot,
        env_idx: usize,
        rng: &mut impl Rng,
    ) -> Result<Segment, String> {
        let sigma = params.sigma();
        let n_terms = self.program.terms.len();
        let mut seg = Segment { term_sums: vec![0.0; n_terms], ..Default::default() };
        for _ in 0..self.ppo.steps_per_env {
            let obs = slot.frame.as_slice();
            let x = params.normalize(obs).map_err(|e| e.to_string())?;
            let mu = params.mu.forward(&x);
            let value = params.value.forward(&x)[0];
            let action: Vec<f64> = mu
                .iter()
                .zip(&sigma)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect();
            seg.obs.extend_from_slice(obs);
            seg.log_probs.push(log_prob(&mu, &sigma, &action));
            seg.values.push(value);
            if let Some(t) = self.teacher {
                seg.teacher.push(t.act_on(obs));
            }
            seg.actions.extend_from_slice(&action);

            let command = slot.env.command();
            let result = slot.env.step(action[0]).map_err(|e| e.to_string())?;
            let mut reward = 0.0;
            if let Some(next) = &result.frame {
                let tv = eval_step(self.program, next).map_err(|e| e.to_string())?;
                reward = tv.total;
                seg.raw_reward += reward;
                for (acc, v) in seg.term_sums.iter_mut().zip(&tv.values) {
                    *acc += v;
                }
                slot.vel_err += (slot.env.state().v - command.lin_vel).abs();
            }
            slot.ret += reward;
            slot.len += 1;
            let done = result.termination;
            if done == Some(Termination::TimeLimit) {
                // truncation, not failure: bootstrap through the cut
                let next = result.frame.as_ref().expect("time limit has a frame");
                reward += self.ppo.gamma * params.value_of(next.as_slice()).map_err(|e| e.to_string())?;
            }
            seg.rewards.push(reward);
            seg.terminals.push(done.is_some());
            match (done, result.frame) {
                (None, Some(next)) => slot.frame = next,
                _ => {
                    seg.episodes.push(EpisodeSummary {
                        ret: slot.ret,
                        survival: slot.env.state().t,
                        vel_err: slot.vel_err / slot.len as f64,
                    });
                    *slot = self.open(env_idx, slot.episode + 1).map_err(|e| e.to_string())?;
                }
            }
        }
        seg.bootstrap = params.value_of(slot.frame.as_slice()).map_err(|e| e.to_string())?;
        Ok(seg)
    }
}

/// Initial policy for `seed`: random weights with the configured input scaling.
pub fn initial_params(cfg: &PpoConfig, schema_name: &str, seed_value: u64) -> PolicyParams {
    let mut rng = seed::rng(seed_value, &[seed::INIT]);
    let mut p = PolicyParams::new(schema_name, OBS_DIM, 1, &cfg.hidden, cfg.init_log_sigma, &mut rng);
    p.obs_scale = cfg.obs_scale.clone();
    p
}

/// PPO with an optional teacher-distance penalty weighted by `beta`.
///
/// Deterministic in `seed`: every environment, command, action-noise, and
/// minibatch stream is derived from it, independently of thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn train_candidate(
    env_cfg: &Arc<EnvConfig>,
    limits: TaskLimits,
    program: &RewardProgram,
    teacher: Option<&TeacherPolicy>,
    beta: f64,
    seed_value: u64,
    iters: usize,
    ppo: &PpoConfig,
) -> Result<TrainOutcome, TrainError> {
    ppo.validate().map_err(TrainError::Config)?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(TrainError::Config(format!("beta must be finite and non-negative, got {beta}")));
    }
    if beta > 0.0 && teacher.is_none() {
        return Err(TrainError::Config("beta > 0 needs a teacher policy".into()));
    }
    let schema = schema_for(env_cfg.kind);
    let report = validate_program(program, &schema);
    if !report.is_empty() {
        return Err(TrainError::Schema(report.to_string()));
    }
    let mut params = initial_params(ppo, schema.name(), seed_value);
    let mut metrics = TrainMetrics {
        term_names: program.terms.iter().map(|t| t.name.clone()).collect(),
        iterations: Vec::with_capacity(iters),
        e_train: None,
    };
    if iters == 0 {
        return Ok(TrainOutcome { params, metrics });
    }

    let use_teacher = beta > 0.0;
    let ctx = Ctx { cfg: env_cfg, limits, program, teacher: teacher.filter(|_| use_teacher), seed: seed_value, ppo };
    let mut slots = (0..ppo.num_envs).map(|i| ctx.open(i, 0)).collect::<Result<Vec<_>, _>>()?;
    let mut adam = Adam::new(params.param_count(), ppo.lr);
    let loss_cfg = LossConfig { epsilon: ppo.epsilon, beta, value_coef: ppo.value_coef, teacher_mode: ppo.teacher_mode };
    let mut last_return = 0.0;
    let mut rejections = 0u32;
    let mut attempt = 0u64;
    let mut it = 0;

    while it < iters {
        let segments: Vec<Result<Segment, String>> = slots
            .par_iter_mut()
            .enumerate()
            .map(|(i, slot)| {
                let mut rng = seed::rng(seed_value, &[seed::ITERATION, it as u64, attempt, seed::ROLLOUT, i as u64]);
                ctx.collect(&params, slot, i, &mut rng)
            })
            .collect();
        let segments = segments
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|message| TrainError::Reward { iteration: it, message })?;

        let (mut batch, stats) = assemble(&segments, ppo, use_teacher);
        batch.normalize_advantages();

        let snapshot = (params.clone(), adam.clone());
        let mut mb_rng = seed::rng(seed_value, &[seed::ITERATION, it as u64, attempt, seed::MINIBATCH]);
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let (mut clip, mut value, mut teach, mut count) = (0.0, 0.0, 0.0, 0usize);
        let mut ok = true;
        'epochs: for _ in 0..ppo.epochs {
            order.shuffle(&mut mb_rng);
            for chunk in order.chunks(ppo.minibatch) {
                let mut out = ppo_loss_on(&params, &batch, chunk, &loss_cfg);
                if !out.loss.is_finite() || !out.grad.iter().all(|g| g.is_finite()) {
                    ok = false;
                    break 'epochs;
                }
                clip_grad_norm(&mut out.grad, ppo.max_grad_norm);
                let mut flat = params.flat();
                adam.step(&mut flat, &out.grad);
                params.set_flat(&flat);
                clip += out.clip;
                value += out.value;
                teach += out.teacher;
                count += 1;
            }
        }
        if !ok || !params.is_finite() {
            (params, adam) = snapshot;
            adam.lr *= 0.5;
            rejections += 1;
            attempt += 1;
            if rejections >= ppo.max_rejections {
                return Err(TrainError::Diverged { iteration: it, rejections });
            }
            continue;
        }

        let n_steps = batch.len() as f64;
        if stats.episodes > 0 {
            last_return = stats.return_sum / stats.episodes as f64;
        }
        let c = count.max(1) as f64;
        metrics.iterations.push(IterationMetrics {
            iteration: it,
            term_means: stats.term_sums.iter().map(|s| s / n_steps).collect(),
            reward_mean: stats.reward_sum / n_steps,
            episode_return: last_return,
            survival_time: (stats.episodes > 0).then(|| stats.survival_sum / stats.episodes as f64),
            velocity_error: (stats.episodes > 0).then(|| stats.vel_err_sum / stats.episodes as f64),
            episodes: stats.episodes,
            clip_loss: clip / c,
            value_loss: value / c,
            teacher_loss: teach / c,
            lr: adam.lr,
            rejected: rejections,
        });
        rejections = 0;
        it += 1;
    }
    Ok(TrainOutcome { params, metrics })
}

#[derive(Default)]
struct BatchStats {
    term_sums: Vec<f64>,
    reward_sum: f64,
    episodes: usize,
    return_sum: f64,
    survival_sum: f64,
    vel_err_sum: f64,
}

fn assemble(segments: &[Segment], ppo: &PpoConfig, use_teacher: bool) -> (RolloutBatch, BatchStats) {
    let mut batch = RolloutBatch {
        obs_dim: OBS_DIM,
        act_dim: 1,
        observations: Vec::new(),
        actions: Vec::new(),
        old_log_probs: Vec::new(),
        advantages: Vec::new(),
        returns: Vec::new(),
        teacher_actions: use_teacher.then(Vec::new),
    };
    let mut stats = BatchStats::default();
    for seg in segments {
        let (adv, ret) = compute_gae(&seg.rewards, &seg.values, &seg.terminals, seg.bootstrap, ppo.gamma, ppo.lambda);
        batch.observations.extend_from_slice(&seg.obs);
        batch.actions.extend_from_slice(&seg.actions);
        batch.old_log_probs.extend_from_slice(&seg.log_probs);
        batch.advantages.extend(adv);
        batch.returns.extend(ret);
        if let Some(t) = batch.teacher_actions.as_mut() {
            t.extend_from_slice(&seg.teacher);
        }
        if stats.term_sums.is_empty() {
            stats.term_sums = vec![0.0; seg.term_sums.len()];
        }
        for (a, b) in stats.term_sums.iter_mut().zip(&seg.term_sums) {
            *a += b;
        }
        stats.reward_sum += seg.raw_reward;
        for e in &seg.episodes {
            stats.episodes += 1;
            stats.return_sum += e.ret;
            stats.survival_sum += e.survival;
            stats.vel_err_sum += e.vel_err;
        }
    }
    (batch, stats)
}
