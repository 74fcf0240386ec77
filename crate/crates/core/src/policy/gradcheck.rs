use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::loss::{ppo_loss, LossConfig, RolloutBatch};
use super::network::{log_prob, PolicyParams};

/// Small random policy plus a batch whose old log-probs are taken from a
/// perturbed copy, so ratios straddle both clip boundaries.
pub fn random_case(seed: u64, n: usize, hidden: &[usize]) -> (PolicyParams, RolloutBatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs_dim = 8;
    let mut p = PolicyParams::new("walker", obs_dim, 1, hidden, -0.3, &mut rng);
    // larger output layer so the mean actually depends on the input
    for w in &mut p.mu.params {
        *w *= 1.0 + rng.random_range(0.0..2.0);
    }
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    let mut old = Vec::new();
    let mut teacher = Vec::new();
    let sigma = p.sigma();
    for _ in 0..n {
        let o: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mu = p.mean_action(&o).expect("fixture dims");
        let z: f64 = StandardNormal.sample(&mut rng);
        let a = mu[0] + sigma[0] * z;
        let shift: f64 = rng.random_range(-0.4..0.4);
        old.push(log_prob(&mu, &sigma, &[a]) + shift);
        observations.extend(o);
        actions.push(a);
        teacher.push(rng.random_range(-1.0..1.0));
    }
    let mut batch = RolloutBatch {
        obs_dim,
        act_dim: 1,
        observations,
        actions,
        old_log_probs: old,
        advantages: (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
        returns: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        teacher_actions: Some(teacher),
    };
    batch.normalize_advantages();
    (p, batch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckResult {
    pub params: usize,
    pub max_rel_err: f64,
    pub worst_param: usize,
}

/// Central differences against the analytic gradient of `ppo_loss`. The
/// relative error uses `max(|fd|, |analytic|, 1e-6)` as denominator.
pub fn gradcheck(params: &PolicyParams, batch: &RolloutBatch, cfg: &LossConfig, h: f64) -> GradcheckResult {
    let grad = ppo_loss(params, batch, cfg).grad;
    let base = params.flat();
    let mut q = params.clone();
    let mut res = GradcheckResult { params: base.len(), max_rel_err: 0.0, worst_param: 0 };
    let mut f = base.clone();
    for k in 0..base.len() {
        f[k] = base[k] + h;
        q.set_flat(&f);
        let lp = ppo_loss(&q, batch, cfg).loss;
        f[k] = base[k] - h;
        q.set_flat(&f);
        let lm = ppo_loss(&q, batch, cfg).loss;
        f[k] = base[k];
        let fd = (lp - lm) / (2.0 * h);
        let err = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
        if !(err <= res.max_rel_err) {
            res.max_rel_err = err;
            res.worst_param = k;
        }
    }
    res
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCase {
    pub seed: u64,
    pub beta: f64,
    pub result: GradcheckResult,
}

/// `batches` random 32-step fixtures, each checked at every beta.
pub fn gradcheck_suite(seed: u64, batches: usize, betas: &[f64]) -> Vec<SuiteCase> {
    let mut out = Vec::new();
    for b in 0..batches as u64 {
        let case_seed = seed.wrapping_add(b);
        let (p, batch) = random_case(case_seed, 32, &[8, 8]);
        for &beta in betas {
            let cfg = LossConfig { beta, ..Default::default() };
            out.push(SuiteCase { seed: case_seed, beta, result: gradcheck(&p, &batch, &cfg, 1e-5) });
        }
    }
    out
}
