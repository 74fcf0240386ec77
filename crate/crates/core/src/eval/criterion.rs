use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Observation metrics the evaluator produces, usable as `c_obs` keys.
pub const OBS_METRICS: [&str; 6] =
    ["survival_time", "velocity_error", "heading_error", "max_abs_pitch", "max_abs_torque", "reward_total"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionWeights {
    pub c_e: f64,
    #[serde(default)]
    pub c_obs: BTreeMap<String, f64>,
    pub c_bs: f64,
}

impl Default for CriterionWeights {
    fn default() -> Self {
        Self { c_e: 1.0, c_obs: BTreeMap::new(), c_bs: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriterionError {
    #[error("c_bs must be in (0, 1], got {0}")]
    Fraction(f64),
    #[error("unknown observation metric `{0}`")]
    UnknownMetric(String),
    #[error("observation metric `{0}` missing from the evaluation")]
    MissingMetric(String),
    #[error("weight for `{0}` is not finite")]
    NonFinite(String),
}

impl CriterionWeights {
    /// Startup check: fraction in range, finite weights, known metric names.
    pub fn validate(&self) -> Result<(), CriterionError> {
        if !(self.c_bs > 0.0 && self.c_bs <= 1.0) {
            return Err(CriterionError::Fraction(self.c_bs));
        }
        if !self.c_e.is_finite() {
            return Err(CriterionError::NonFinite("c_e".into()));
        }
        for (k, v) in &self.c_obs {
            if !OBS_METRICS.contains(&k.as_str()) {
                return Err(CriterionError::UnknownMetric(k.clone()));
            }
            if !v.is_finite() {
                return Err(CriterionError::NonFinite(k.clone()));
            }
        }
        Ok(())
    }
}

/// Training score: survival fraction minus mean velocity tracking error (m/s).
pub fn e_train(survival_time: f64, max_time: f64, velocity_error: f64) -> f64 {
    survival_time / max_time - velocity_error
}

/// `c_e * e_train + sum_m c_obs[m] * obs[m]`, summed in key order.
pub fn train_criterion(
    e_train: f64,
    obs_values: &BTreeMap<String, f64>,
    weights: &CriterionWeights,
) -> Result<f64, CriterionError> {
    let mut total = weights.c_e * e_train;
    for (name, w) in &weights.c_obs {
        let v = obs_values.get(name).ok_or_else(|| CriterionError::MissingMetric(name.clone()))?;
        total += w * v;
    }
    Ok(total)
}
