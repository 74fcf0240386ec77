use serde::{Deserialize, Serialize};

use crate::dsl::ObservationFrame;
use crate::env::{Controller, ANG_VEL, CMD_LIN_VEL, LIN_VEL, PITCH};

use super::network::PolicyParams;

/// Deterministic reference controller used to regularize training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TeacherPolicy {
    /// `u = k_v (v_ref - v) - k_theta * theta - k_omega * omega`, clipped.
    ScriptedPd { k_v: f64, k_theta: f64, k_omega: f64, torque_limit: f64 },
    /// Mean action of a stored policy.
    Snapshot { policy: Box<PolicyParams> },
}

impl TeacherPolicy {
    /// Gains stabilizing every corner of the default randomization ranges.
    pub fn default_pd() -> Self {
        TeacherPolicy::ScriptedPd { k_v: -2.0, k_theta: -30.0, k_omega: -4.0, torque_limit: 3.0 }
    }

    pub fn act_on(&self, obs: &[f64]) -> f64 {
        match self {
            TeacherPolicy::ScriptedPd { k_v, k_theta, k_omega, torque_limit } => {
                let u = k_v * (obs[CMD_LIN_VEL] - obs[LIN_VEL]) - k_theta * obs[PITCH] - k_omega * obs[ANG_VEL];
                u.clamp(-torque_limit, *torque_limit)
            }
            TeacherPolicy::Snapshot { policy } => policy.mean_action(obs).map(|a| a[0]).unwrap_or(0.0),
        }
    }
}

pub fn teacher_act(teacher: &TeacherPolicy, frame: &ObservationFrame) -> f64 {
    teacher.act_on(frame.as_slice())
}

impl Controller for TeacherPolicy {
    fn act(&self, frame: &ObservationFrame) -> f64 {
        teacher_act(self, frame)
    }
}
