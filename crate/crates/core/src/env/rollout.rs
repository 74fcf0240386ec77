use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{eval_step, validate_program, EvalError, ObservationFrame, RewardProgram};

use super::config::{EnvConfig, TaskLimits};
use super::walker::{Command, EnvError, Termination, WalkerEnv, WalkerState};

/// Anything that maps an observation to a torque.
pub trait Controller {
    fn act(&self, frame: &ObservationFrame) -> f64;
}

impl<C: Controller + ?Sized> Controller for &C {
    fn act(&self, frame: &ObservationFrame) -> f64 {
        (**self).act(frame)
    }
}

/// Constant torque; handy as an untrained baseline.
pub struct ConstantTorque(pub f64);

impl Controller for ConstantTorque {
    fn act(&self, _frame: &ObservationFrame) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub step: usize,
    /// Observation after the step, the one the reward is evaluated on.
    pub frame: ObservationFrame,
    pub state: WalkerState,
    pub action: f64,
    pub term_values: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub term_names: Vec<String>,
    pub term_scales: Vec<f64>,
    pub steps: Vec<Transition>,
}

impl Trajectory {
    pub fn frames(&self) -> impl Iterator<Item = &ObservationFrame> {
        self.steps.iter().map(|s| &s.frame)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Per-term raw sums over the episode.
    pub fn term_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.term_names.len()];
        for s in &self.steps {
            for (acc, v) in sums.iter_mut().zip(&s.term_values) {
                *acc += v;
            }
        }
        sums
    }

    /// CSV with a mandatory header: step, t, signals, action, applied torque,
    /// raw per-term values, and the weighted total.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        let Some(first) = self.steps.first() else {
            let mut header = vec!["step".to_string(), "t".into(), "action".into(), "applied_torque".into()];
            header.extend(self.term_names.iter().cloned());
            header.push("total".into());
            return writeln!(w, "{}", header.join(","));
        };
        let mut header = vec!["step".to_string(), "t".into()];
        header.extend(first.frame.schema().signals().iter().map(|s| s.name.clone()));
        header.extend(["action".to_string(), "applied_torque".to_string()]);
        header.extend(self.term_names.iter().cloned());
        header.push("total".into());
        writeln!(w, "{}", header.join(","))?;
        for s in &self.steps {
            let mut row = vec![s.step.to_string(), s.state.t.to_string()];
            row.extend(s.frame.as_slice().iter().map(|v| v.to_string()));
            row.push(s.action.to_string());
            row.push(s.state.applied_torque.to_string());
            row.extend(s.term_values.iter().map(|v| v.to_string()));
            row.push(s.total.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub trajectory: Trajectory,
    pub termination: Termination,
    pub survival_time: f64,
    pub mean_velocity_error: f64,
    pub mean_heading_error: f64,
    pub max_abs_pitch: f64,
    pub max_abs_torque: f64,
}

/// Scalar episode statistics, without the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub termination: Termination,
    pub survival_time: f64,
    pub mean_velocity_error: f64,
    pub mean_heading_error: f64,
    pub max_abs_pitch: f64,
    pub max_abs_torque: f64,
}

impl EpisodeOutcome {
    pub fn stats(&self) -> EpisodeStats {
        EpisodeStats {
            termination: self.termination,
            survival_time: self.survival_time,
            mean_velocity_error: self.mean_velocity_error,
            mean_heading_error: self.mean_heading_error,
            max_abs_pitch: self.max_abs_pitch,
            max_abs_torque: self.max_abs_torque,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RolloutError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("reward program does not fit schema `{schema}`: {detail}")]
    Schema { schema: String, detail: String },
    #[error("reward evaluation failed at step {step}: {source}")]
    Reward {
        step: usize,
        #[source]
        source: EvalError,
    },
}

/// Runs one episode of `controller` and scores every post-step frame with `program`.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    cfg: &Arc<EnvConfig>,
    limits: TaskLimits,
    controller: &dyn Controller,
    program: &RewardProgram,
    seed_value: u64,
    command: Command,
    max_steps: usize,
) -> Result<EpisodeOutcome, RolloutError> {
    let mut env = WalkerEnv::reset(cfg.clone(), limits, seed_value, command)?;
    let schema = super::tracker::schema_for(cfg.kind);
    let report = validate_program(program, &schema);
    if !report.is_empty() {
        return Err(RolloutError::Schema { schema: schema.name().into(), detail: report.to_string() });
    }
    let mut frame = env.observe();
    let mut steps = Vec::new();
    let mut termination = Termination::TimeLimit;
    let (mut vel_err, mut head_err, mut max_pitch, mut max_torque) = (0.0, 0.0, 0.0f64, 0.0f64);
    for step in 0..max_steps {
        let action = controller.act(&frame);
        let result = env.step(action)?;
        let Some(next) = result.frame else {
            termination = Termination::Diverged;
            break;
        };
        let tv = eval_step(program, &next).map_err(|source| RolloutError::Reward { step, source })?;
        let state = *env.state();
        vel_err += (state.v - command.lin_vel).abs();
        head_err += (state.omega - command.ang_vel).abs();
        max_pitch = max_pitch.max(state.theta.abs());
        max_torque = max_torque.max(state.applied_torque.abs());
        steps.push(Transition { step, frame: next.clone(), state, action, term_values: tv.values, total: tv.total });
        frame = next;
        if let Some(t) = result.termination {
            termination = t;
            break;
        }
    }
    let n = steps.len().max(1) as f64;
    let survival_time = steps.last().map_or(0.0, |s| s.state.t);
    Ok(EpisodeOutcome {
        trajectory: Trajectory {
            term_names: program.terms.iter().map(|t| t.name.clone()).collect(),
            term_scales: program.terms.iter().map(|t| t.scale).collect(),
            steps,
        },
        termination,
        survival_time,
        mean_velocity_error: vel_err / n,
        mean_heading_error: head_err / n,
        max_abs_pitch: max_pitch,
        max_abs_torque: max_torque,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{accumulate, parse_program};
    use crate::env::config::ObservationNoise;

    fn program() -> RewardProgram {
        parse_program(
            "survival: survival_dt\n\
             track_lin_vel: exp(-norm2(base_lin_vel - cmd_lin_vel)/0.25)\n\
             track_ang_vel: exp(-norm2(base_ang_vel - cmd_ang_vel)/0.25)",
        )
        .unwrap()
    }

    fn nominal_training() -> Arc<EnvConfig> {
        Arc::new(EnvConfig::training().nominal_only())
    }

    #[test]
    fn zero_torque_falls_quickly() {
        let out =
            rollout(&nominal_training(), TaskLimits::default(), &ConstantTorque(0.0), &program(), 1, Command::default(), 10_000)
                .unwrap();
        assert_eq!(out.termination, Termination::Fell);
        assert!(out.survival_time < 2.0);
        // pinned from a single simulation of the nominal plant
        assert_eq!(out.trajectory.len(), 38);
        let last = out.trajectory.steps.last().unwrap();
        assert!(last.state.theta.abs() > 0.6);
        assert!(out.trajectory.steps[..out.trajectory.len() - 1].iter().all(|s| s.state.theta.abs() <= 0.6));
    }

    #[test]
    fn zero_steps_is_empty() {
        let out =
            rollout(&nominal_training(), TaskLimits::default(), &ConstantTorque(0.0), &program(), 1, Command::default(), 0)
                .unwrap();
        assert!(out.trajectory.is_empty());
        assert_eq!(out.survival_time, 0.0);
    }

    #[test]
    fn deterministic_outcomes() {
        let cfg = Arc::new(EnvConfig::gazebo_like());
        let p = crate::dsl::apply_homomorphism(
            &program(),
            &crate::env::default_homomorphism(),
            &crate::env::training_schema(),
            &crate::env::deployment_schema(),
        )
        .unwrap()
        .0;
        let a = rollout(&cfg, TaskLimits::default(), &ConstantTorque(0.1), &p, 4, Command::forward(0.5), 100).unwrap();
        let b = rollout(&cfg, TaskLimits::default(), &ConstantTorque(0.1), &p, 4, Command::forward(0.5), 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn success_composite_matches_stepwise_recomputation() {
        // R_succ = R_surv * (c_l * R_vel + R_angl), with c_l = 2
        let p = parse_program(
            "success: survival_dt * (2 * exp(-norm2(base_lin_vel - cmd_lin_vel)/0.25) + exp(-norm2(base_ang_vel - cmd_ang_vel)/0.25))",
        )
        .unwrap();
        let cfg = Arc::new(EnvConfig { noise: ObservationNoise::default(), ..EnvConfig::training() });
        let out = rollout(&cfg, TaskLimits::default(), &ConstantTorque(0.3), &p, 2, Command::forward(0.5), 200).unwrap();
        let summary = accumulate(&p, out.trajectory.frames()).unwrap();
        let mut expected = 0.0;
        for s in &out.trajectory.steps {
            let f = s.frame.as_slice();
            let (v, w, cv, cw, dt) = (f[0], f[1], f[3], f[4], f[7]);
            expected += dt * (2.0 * (-(v - cv) * (v - cv) / 0.25).exp() + (-(w - cw) * (w - cw) / 0.25).exp());
        }
        assert!((summary.sums[0] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn reward_error_reports_step() {
        let p = parse_program("bad: 1 / applied_torque").unwrap();
        let err = rollout(&nominal_training(), TaskLimits::default(), &ConstantTorque(0.0), &p, 1, Command::default(), 10)
            .unwrap_err();
        assert!(matches!(err, RolloutError::Reward { step: 0, .. }), "{err}");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let out =
            rollout(&nominal_training(), TaskLimits::default(), &ConstantTorque(0.0), &program(), 1, Command::default(), 3)
                .unwrap();
        let mut buf = Vec::new();
        out.trajectory.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("step,t,base_lin_vel,"));
        assert!(lines[0].ends_with("survival,track_lin_vel,track_ang_vel,total"));
    }
}
