use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::ObservationFrame;
use crate::seed;

use super::config::{EnvConfig, Integrator, PhysicsParams, TaskLimits};
use super::dynamics::{self, Kinematics};
use super::tracker::{self, OBS_DIM};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub lin_vel: f64,
    pub ang_vel: f64,
}

impl Command {
    pub fn forward(lin_vel: f64) -> Self {
        Self { lin_vel, ang_vel: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerState {
    pub x: f64,
    pub v: f64,
    pub theta: f64,
    pub omega: f64,
    pub t: f64,
    /// Commanded torque after clipping.
    pub last_action: f64,
    /// Torque reaching the motor this tick (after any delay).
    pub applied_torque: f64,
}

impl WalkerState {
    pub fn kinematics(&self) -> Kinematics {
        Kinematics { x: self.x, v: self.v, theta: self.theta, omega: self.omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TimeLimit,
    Fell,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("command {value} for {axis} outside [{lo}, {hi}]")]
    CommandOutOfRange { axis: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("invalid physics parameters")]
    InvalidParams,
    #[error("non-finite action")]
    NonFiniteAction,
    #[error("step after termination")]
    Terminated,
}

pub struct StepResult {
    /// `None` when the state diverged and no valid observation exists.
    pub frame: Option<ObservationFrame>,
    pub termination: Option<Termination>,
}

/// One episode of one twin. Owns its state, delay line, and noise stream.
pub struct WalkerEnv {
    cfg: Arc<EnvConfig>,
    limits: TaskLimits,
    params: PhysicsParams,
    state: WalkerState,
    command: Command,
    delay: VecDeque<f64>,
    noise_rng: ChaCha8Rng,
    tick: usize,
    max_ticks: usize,
    done: Option<Termination>,
}

/// Physical parameters for an episode: nominal with fixed offsets, then
/// uniform randomization keyed by `seed` when the twin randomizes.
pub fn sample_params(cfg: &EnvConfig, seed_value: u64) -> PhysicsParams {
    let mut p = cfg.params;
    p.mass *= cfg.offsets.mass;
    p.motor_gain *= cfg.offsets.motor_gain;
    p.ground_friction *= cfg.offsets.ground_friction;
    if let Some(r) = cfg.randomization {
        let mut rng = seed::rng(seed_value, &[seed::PARAMS]);
        let mut factor = |w: f64| if w > 0.0 { rng.random_range(1.0 - w..=1.0 + w) } else { 1.0 };
        p.mass *= factor(r.mass);
        p.motor_gain *= factor(r.motor_gain);
        p.ground_friction *= factor(r.ground_friction);
    }
    p
}

fn check_command(limits: &TaskLimits, command: Command) -> Result<(), EnvError> {
    let check = |axis, value: f64, (lo, hi): (f64, f64)| {
        if value.is_finite() && value >= lo && value <= hi {
            Ok(())
        } else {
            Err(EnvError::CommandOutOfRange { axis, value, lo, hi })
        }
    };
    check("lin_vel", command.lin_vel, limits.lin_vel_range)?;
    check("ang_vel", command.ang_vel, limits.ang_vel_range)
}

impl WalkerEnv {
    /// Deterministic in `(cfg, limits, seed, command)`.
    pub fn reset(cfg: Arc<EnvConfig>, limits: TaskLimits, seed_value: u64, command: Command) -> Result<Self, EnvError> {
        check_command(&limits, command)?;
        let params = sample_params(&cfg, seed_value);
        if !params.is_valid() || cfg.substeps == 0 {
            return Err(EnvError::InvalidParams);
        }
        let mut init_rng = seed::rng(seed_value, &[seed::INIT]);
        let jitter = if cfg.init_pitch_jitter > 0.0 {
            init_rng.random_range(-cfg.init_pitch_jitter..=cfg.init_pitch_jitter)
        } else {
            0.0
        };
        let state = WalkerState {
            x: 0.0,
            v: 0.0,
            theta: limits.init_pitch + jitter,
            omega: 0.0,
            t: 0.0,
            last_action: 0.0,
            applied_torque: 0.0,
        };
        let max_ticks = (limits.max_time / cfg.control_dt()).round() as usize;
        Ok(Self {
            delay: std::iter::repeat_n(0.0, cfg.delay_ticks).collect(),
            noise_rng: seed::rng(seed_value, &[seed::NOISE]),
            cfg,
            limits,
            params,
            state,
            command,
            tick: 0,
            max_ticks,
            done: None,
        })
    }

    pub fn state(&self) -> &WalkerState {
        &self.state
    }

    pub fn params(&self) -> &PhysicsParams {
        &self.params
    }

    pub fn command(&self) -> Command {
        self.command
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn limits(&self) -> &TaskLimits {
        &self.limits
    }

    pub fn termination(&self) -> Option<Termination> {
        self.done
    }

    pub fn max_ticks(&self) -> usize {
        self.max_ticks
    }

    /// Current observation, with sensor noise when the twin is noisy.
    pub fn observe(&mut self) -> ObservationFrame {
        let alive = !matches!(self.done, Some(Termination::Fell | Termination::Diverged));
        let mut values = tracker::observe(&self.state, self.command, self.cfg.control_dt(), alive);
        self.add_noise(&mut values);
        ObservationFrame::from_flat(tracker::schema_for(self.cfg.kind), values.to_vec())
            .expect("finite state yields a valid frame")
    }

    fn add_noise(&mut self, values: &mut [f64; OBS_DIM]) {
        let n = self.cfg.noise;
        for (idx, sigma) in [(tracker::LIN_VEL, n.lin_vel), (tracker::ANG_VEL, n.ang_vel), (tracker::PITCH, n.pitch)] {
            if sigma > 0.0 {
                let d = Normal::new(0.0, sigma).expect("positive sigma");
                values[idx] += d.sample(&mut self.noise_rng);
            }
        }
    }

    /// Advances one control tick. The clipped action enters the delay line;
    /// the torque leaving it is held over all integration substeps.
    pub fn step(&mut self, action: f64) -> Result<StepResult, EnvError> {
        if self.done.is_some() {
            return Err(EnvError::Terminated);
        }
        if !action.is_finite() {
            return Err(EnvError::NonFiniteAction);
        }
        let limit = self.limits.torque_limit;
        let commanded = action.clamp(-limit, limit);
        self.delay.push_back(commanded);
        let applied = self.delay.pop_front().expect("delay line non-empty after push");

        let mut k = self.state.kinematics();
        let dt = self.params.dt;
        for _ in 0..self.cfg.substeps {
            k = match self.cfg.integrator {
                Integrator::Euler => dynamics::euler(k, &self.params, applied, dt),
                Integrator::Rk4 => dynamics::rk4(k, &self.params, applied, dt),
            };
        }
        self.tick += 1;
        let t = self.tick as f64 * self.cfg.control_dt();
        if !k.is_finite() {
            self.done = Some(Termination::Diverged);
            return Ok(StepResult { frame: None, termination: self.done });
        }
        self.state = WalkerState {
            x: k.x,
            v: k.v,
            theta: k.theta,
            omega: k.omega,
            t,
            last_action: commanded,
            applied_torque: applied,
        };
        if k.theta.abs() > self.limits.fall_pitch {
            self.done = Some(Termination::Fell);
        } else if self.tick >= self.max_ticks {
            self.done = Some(Termination::TimeLimit);
        }
        let frame = self.observe();
        Ok(StepResult { frame: Some(frame), termination: self.done })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::config::{EnvConfig, ObservationNoise};

    fn training() -> Arc<EnvConfig> {
        Arc::new(EnvConfig::training())
    }

    #[test]
    fn reset_is_deterministic_and_perturbed() {
        let cmd = Command::forward(0.0);
        let mut a = WalkerEnv::reset(training(), TaskLimits::default(), 11, cmd).unwrap();
        let mut b = WalkerEnv::reset(training(), TaskLimits::default(), 11, cmd).unwrap();
        assert_eq!(a.observe(), b.observe());
        assert_eq!(a.state().theta, 0.05);
        assert_eq!(a.state().v, 0.0);
    }

    #[test]
    fn command_range_enforced() {
        let err = WalkerEnv::reset(training(), TaskLimits::default(), 0, Command::forward(1.5)).err().unwrap();
        assert!(matches!(err, EnvError::CommandOutOfRange { axis: "lin_vel", .. }));
        let err = WalkerEnv::reset(training(), TaskLimits::default(), 0, Command { lin_vel: 0.0, ang_vel: 0.1 }).err();
        assert!(err.is_some());
    }

    #[test]
    fn seeds_sample_distinct_params() {
        let cfg = EnvConfig::training();
        let mut masses: Vec<f64> = (0..100).map(|s| sample_params(&cfg, s).mass).collect();
        masses.sort_by(f64::total_cmp);
        masses.dedup();
        assert_eq!(masses.len(), 100);
        assert!(masses.iter().all(|m| (0.8..=1.2).contains(m)));
    }

    #[test]
    fn upright_rest_stays_put() {
        let limits = TaskLimits { init_pitch: 0.0, ..TaskLimits::default() };
        let mut env = WalkerEnv::reset(training(), limits, 3, Command::default()).unwrap();
        let before = *env.state();
        env.step(0.0).unwrap();
        let after = *env.state();
        assert_eq!((after.x, after.v, after.theta, after.omega), (before.x, before.v, before.theta, before.omega));
        assert!((after.t - 0.02).abs() < 1e-15);
    }

    #[test]
    fn fall_threshold_terminates() {
        let limits = TaskLimits { init_pitch: 0.61, ..TaskLimits::default() };
        let mut env = WalkerEnv::reset(training(), limits, 3, Command::default()).unwrap();
        let r = env.step(0.0).unwrap();
        assert_eq!(r.termination, Some(Termination::Fell));
        assert_eq!(r.frame.unwrap().scalar("survival_dt"), Some(0.0));
        assert_eq!(env.step(0.0).err(), Some(EnvError::Terminated));
    }

    #[test]
    fn delay_line_shifts_actions() {
        let cfg = Arc::new(EnvConfig { noise: ObservationNoise::default(), ..EnvConfig::gazebo_like() });
        let mut env = WalkerEnv::reset(cfg, TaskLimits::default(), 5, Command::default()).unwrap();
        let actions = [0.5, -0.25, 1.0, 2.0, 5.0];
        for (k, &a) in actions.iter().enumerate() {
            env.step(a).unwrap();
            let expected = if k >= 2 { actions[k - 2].clamp(-3.0, 3.0) } else { 0.0 };
            assert_eq!(env.state().applied_torque, expected, "tick {k}");
            assert_eq!(env.state().last_action, a.clamp(-3.0, 3.0));
        }
    }

    #[test]
    fn pitch_noise_is_unbiased() {
        let sigma = 0.01;
        let cfg = Arc::new(EnvConfig {
            noise: ObservationNoise { lin_vel: 0.0, ang_vel: 0.0, pitch: sigma },
            ..EnvConfig::gazebo_like()
        });
        let mut env = WalkerEnv::reset(cfg, TaskLimits::default(), 9, Command::default()).unwrap();
        let truth = env.state().theta;
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| env.observe().scalar("imu_pitch").unwrap() - truth).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * sigma / 100.0, "mean error {mean}");
    }

    #[test]
    fn time_limit_reached_exactly() {
        let limits = TaskLimits { init_pitch: 0.0, max_time: 0.1, ..TaskLimits::default() };
        let mut env = WalkerEnv::reset(training(), limits, 0, Command::default()).unwrap();
        let mut n = 0;
        loop {
            n += 1;
            if env.step(0.0).unwrap().termination.is_some() {
                break;
            }
        }
        assert_eq!(n, 5);
        assert_eq!(env.termination(), Some(Termination::TimeLimit));
        assert!(env.state().t <= 0.1 + 1e-12);
    }
}
