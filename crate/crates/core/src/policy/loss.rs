//! Clipped-surrogate PPO loss with a teacher-distance regularizer.
//!
//! The teacher is deterministic, so its action distribution is treated as a
//! point mass at `a_ref`. KL(point mass || N(mu, sigma^2)) reduces to the
//! negative log density of the policy at `a_ref`:
//!
//! ```text
//! log(sqrt(2 pi sigma^2)) + (a_ref - mu)^2 / (2 sigma^2)
//! ```
//!
//! By default only the quadratic part is used (`TeacherMode::Distance`); the
//! log-sigma term is available as `TeacherMode::FullKl`.

use serde::{Deserialize, Serialize};

use super::network::{log_prob, Activations, PolicyParams};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherMode {
    #[default]
    Distance,
    FullKl,
}

pub fn teacher_distance(mu: &[f64], sigma: &[f64], a_ref: &[f64], mode: TeacherMode) -> f64 {
    mu.iter()
        .zip(sigma)
        .zip(a_ref)
        .map(|((m, s), r)| {
            let quad = (r - m) * (r - m) / (2.0 * s * s);
            match mode {
                TeacherMode::Distance => quad,
                TeacherMode::FullKl => quad + (2.0 * std::f64::consts::PI * s * s).sqrt().ln(),
            }
        })
        .sum()
}

/// One PPO batch, stored row-major (`n x obs_dim`, `n x act_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutBatch {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub teacher_actions: Option<Vec<f64>>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }

    pub fn obs(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    pub fn teacher_action(&self, i: usize) -> Option<&[f64]> {
        self.teacher_actions.as_ref().map(|t| &t[i * self.act_dim..(i + 1) * self.act_dim])
    }

    /// Shifts and scales advantages to zero mean and unit (population) std.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len();
        if n == 0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n as f64;
        let var = self.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(1e-8);
        for a in &mut self.advantages {
            *a = (*a - mean) / std;
        }
    }

    pub fn check(&self) -> Result<(), String> {
        let n = self.len();
        let ok = self.observations.len() == n * self.obs_dim
            && self.actions.len() == n * self.act_dim
            && self.advantages.len() == n
            && self.returns.len() == n
            && self.teacher_actions.as_ref().is_none_or(|t| t.len() == n * self.act_dim);
        if ok {
            Ok(())
        } else {
            Err("batch arrays have inconsistent lengths".into())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub epsilon: f64,
    pub beta: f64,
    pub value_coef: f64,
    pub teacher_mode: TeacherMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { epsilon: 0.2, beta: 0.0, value_coef: 0.5, teacher_mode: TeacherMode::Distance }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// `-mean(min(r A, clip(r) A))`
    pub clip: f64,
    /// `mean((V - R)^2)`, before `value_coef`.
    pub value: f64,
    /// `mean(teacher_distance)`, before `beta`; zero when `beta == 0`.
    pub teacher: f64,
    /// Gradient in the `PolicyParams::flat` layout.
    pub grad: Vec<f64>,
}

/// Loss and exact gradient over the rows `indices` of `batch`.
///
/// With `beta == 0` the teacher term is skipped entirely, so the result is
/// the plain clipped-surrogate plus value loss.
pub fn ppo_loss_on(params: &PolicyParams, batch: &RolloutBatch, indices: &[usize], cfg: &LossConfig) -> LossOutput {
    let n = indices.len();
    assert!(n > 0, "empty minibatch");
    let use_teacher = cfg.beta != 0.0;
    assert!(!use_teacher || batch.teacher_actions.is_some(), "beta > 0 needs teacher actions");
    let act_dim = params.act_dim();
    let mu_len = params.mu.params.len();
    let mut grad = vec![0.0; params.param_count()];
    let (g_mu, rest) = grad.split_at_mut(mu_len);
    let (g_ls, g_v) = rest.split_at_mut(act_dim);

    let sigma = params.sigma();
    let inv_n = 1.0 / n as f64;
    let (mut clip_sum, mut value_sum, mut teacher_sum) = (0.0, 0.0, 0.0);
    let mut mu_acts = Activations::default();
    let mut v_acts = Activations::default();
    let mut d_mu = vec![0.0; act_dim];

    for &i in indices {
        let x = params.normalize(batch.obs(i)).expect("batch observation width");
        params.mu.forward_into(&x, &mut mu_acts);
        params.value.forward_into(&x, &mut v_acts);
        let mu = mu_acts.output();
        let a = batch.action(i);
        let adv = batch.advantages[i];

        let logp = log_prob(mu, &sigma, a);
        let ratio = (logp - batch.old_log_probs[i]).exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - cfg.epsilon, 1.0 + cfg.epsilon) * adv;
        clip_sum += unclipped.min(clipped);
        // d(-surr)/d(logp) is -r*A when the unclipped branch is active, else 0
        let d_logp = if unclipped <= clipped { -unclipped * inv_n } else { 0.0 };
        for j in 0..act_dim {
            let diff = a[j] - mu[j];
            let var = sigma[j] * sigma[j];
            d_mu[j] = d_logp * diff / var;
            g_ls[j] += d_logp * (diff * diff / var - 1.0);
        }

        if use_teacher {
            let a_ref = batch.teacher_action(i).expect("teacher actions present");
            teacher_sum += teacher_distance(mu, &sigma, a_ref, cfg.teacher_mode);
            let w = cfg.beta * inv_n;
            for j in 0..act_dim {
                let diff = a_ref[j] - mu[j];
                let var = sigma[j] * sigma[j];
                d_mu[j] -= w * diff / var;
                g_ls[j] -= w * diff * diff / var;
                if cfg.teacher_mode == TeacherMode::FullKl {
                    g_ls[j] += w;
                }
            }
        }
        params.mu.backward(&mu_acts, &d_mu, g_mu);

        let v = v_acts.output()[0];
        let err = v - batch.returns[i];
        value_sum += err * err;
        params.value.backward(&v_acts, &[cfg.value_coef * 2.0 * err * inv_n], g_v);
    }

    let clip = -(clip_sum / n as f64);
    let value = value_sum / n as f64;
    let mut loss = clip + cfg.value_coef * value;
    let mut teacher = 0.0;
    if use_teacher {
        teacher = teacher_sum / n as f64;
        loss += cfg.beta * teacher;
    }
    LossOutput { loss, clip, value, teacher, grad }
}

pub fn ppo_loss(params: &PolicyParams, batch: &RolloutBatch, cfg: &LossConfig) -> LossOutput {
    let all: Vec<usize> = (0..batch.len()).collect();
    ppo_loss_on(params, batch, &all, cfg)
}
