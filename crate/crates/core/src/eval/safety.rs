use serde::{Deserialize, Serialize};

use std::sync::Arc;

use crate::dsl::{HomomorphismMap, RewardProgram};
use crate::env::{Controller, EnvConfig, TaskLimits};

use super::evaluate::{homomorphic_eval, EvalGrid, EvalReport, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyMetric {
    MaxAbsPitch,
    MaxAbsTorque,
    VelocityError,
}

impl SafetyMetric {
    pub fn observe(&self, r: &EvalReport) -> f64 {
        match self {
            SafetyMetric::MaxAbsPitch => r.max_abs_pitch,
            SafetyMetric::MaxAbsTorque => r.max_abs_torque,
            SafetyMetric::VelocityError => r.velocity_error,
        }
    }
}

/// Upper limit on an observed safety margin; the limit itself is allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyRule {
    pub name: String,
    pub metric: SafetyMetric,
    pub limit: f64,
}

impl SafetyRule {
    pub fn describe(&self) -> String {
        let what = match self.metric {
            SafetyMetric::MaxAbsPitch => "maximum |pitch| (rad)",
            SafetyMetric::MaxAbsTorque => "maximum |applied torque| (N*m)",
            SafetyMetric::VelocityError => "mean velocity tracking error (m/s)",
        };
        format!("{}: {what} must not exceed {}", self.name, self.limit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub observed: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyVerdict {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

/// Limits are inclusive; a NaN observation counts as a violation.
pub fn safety_check(report: &EvalReport, rules: &[SafetyRule]) -> SafetyVerdict {
    let violations: Vec<Violation> = rules
        .iter()
        .filter_map(|r| {
            let observed = r.metric.observe(report);
            (observed.is_nan() || observed > r.limit).then(|| Violation { rule: r.name.clone(), observed, limit: r.limit })
        })
        .collect();
    SafetyVerdict { passed: violations.is_empty(), violations }
}

/// Deployment-twin results of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub gazebo: EvalReport,
    pub verdict: SafetyVerdict,
    /// Present exactly when the gazebo-like run succeeded and passed every rule.
    pub real: Option<EvalReport>,
}

/// Gazebo-like evaluation, safety check, then real-like evaluation only if the check passed.
#[allow(clippy::too_many_arguments)]
pub fn deploy_gated(
    controller: &(dyn Controller + Sync),
    program: &RewardProgram,
    gazebo_env: &Arc<EnvConfig>,
    real_env: &Arc<EnvConfig>,
    limits: TaskLimits,
    map: &HomomorphismMap,
    grid: &EvalGrid,
    rules: &[SafetyRule],
    seed: u64,
) -> Deployment {
    let gazebo = homomorphic_eval(controller, program, Stage::GazeboLike, gazebo_env, limits, map, grid, seed);
    let verdict = safety_check(&gazebo, rules);
    let real = (verdict.passed && !gazebo.is_failed())
        .then(|| homomorphic_eval(controller, program, Stage::RealLike, real_env, limits, map, grid, seed));
    Deployment { gazebo, verdict, real }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate::Stage;

    fn report(pitch: f64, torque: f64) -> EvalReport {
        EvalReport { max_abs_pitch: pitch, max_abs_torque: torque, ..EvalReport::empty(Stage::GazeboLike) }
    }

    fn rules() -> Vec<SafetyRule> {
        vec![
            SafetyRule { name: "pitch".into(), metric: SafetyMetric::MaxAbsPitch, limit: 0.5 },
            SafetyRule { name: "torque".into(), metric: SafetyMetric::MaxAbsTorque, limit: 3.0 },
        ]
    }

    #[test]
    fn thresholds() {
        let v = safety_check(&report(0.8, 1.0), &rules());
        assert!(!v.passed);
        assert_eq!(v.violations, vec![Violation { rule: "pitch".into(), observed: 0.8, limit: 0.5 }]);
        assert!(safety_check(&report(0.1, 1.0), &rules()).passed);
        assert!(safety_check(&report(0.5, 3.0), &rules()).passed);
        assert!(!safety_check(&report(f64::NAN, 0.0), &rules()).passed);
    }
}
