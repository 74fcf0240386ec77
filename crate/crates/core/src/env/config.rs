use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Training,
    Deployment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4,
}

/// Physical constants of the wheeled inverted pendulum.
///
/// `pole_inertia` is carried for completeness; the point-mass pole
/// equations used by the integrators do not read it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsParams {
    pub mass: f64,
    pub pole_length: f64,
    pub pole_inertia: f64,
    pub ground_friction: f64,
    pub motor_gain: f64,
    pub gravity: f64,
    /// Integration step (s).
    pub dt: f64,
}

impl PhysicsParams {
    pub fn nominal(dt: f64) -> Self {
        Self {
            mass: 1.0,
            pole_length: 0.5,
            pole_inertia: 0.02,
            ground_friction: 0.1,
            motor_gain: 1.0,
            gravity: 9.81,
            dt,
        }
    }

    pub fn is_valid(&self) -> bool {
        let finite = [self.mass, self.pole_length, self.pole_inertia, self.ground_friction, self.motor_gain, self.gravity, self.dt]
            .iter()
            .all(|v| v.is_finite());
        finite && self.mass > 0.0 && self.pole_length > 0.0 && self.pole_inertia > 0.0 && self.dt > 0.0
    }
}

/// Uniform multiplicative randomization half-widths (0.2 means ±20%).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Randomization {
    pub mass: f64,
    pub motor_gain: f64,
    pub ground_friction: f64,
}

impl Default for Randomization {
    fn default() -> Self {
        Self { mass: 0.2, motor_gain: 0.15, ground_friction: 0.3 }
    }
}

/// Fixed multiplicative offsets applied to the nominal parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOffsets {
    pub mass: f64,
    pub motor_gain: f64,
    pub ground_friction: f64,
}

impl Default for ParamOffsets {
    fn default() -> Self {
        Self { mass: 1.0, motor_gain: 1.0, ground_friction: 1.0 }
    }
}

/// Standard deviations of additive Gaussian observation noise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationNoise {
    pub lin_vel: f64,
    pub ang_vel: f64,
    pub pitch: f64,
}

impl ObservationNoise {
    pub fn is_zero(&self) -> bool {
        self.lin_vel == 0.0 && self.ang_vel == 0.0 && self.pitch == 0.0
    }
}

/// Task limits shared by every environment twin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskLimits {
    pub fall_pitch: f64,
    pub max_time: f64,
    pub torque_limit: f64,
    pub lin_vel_range: (f64, f64),
    pub ang_vel_range: (f64, f64),
    /// Initial pitch perturbation (rad).
    pub init_pitch: f64,
}

impl Default for TaskLimits {
    fn default() -> Self {
        Self {
            fall_pitch: 0.6,
            max_time: 10.0,
            torque_limit: 3.0,
            lin_vel_range: (-1.0, 1.0),
            ang_vel_range: (0.0, 0.0),
            init_pitch: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub integrator: Integrator,
    /// Integration substeps per control tick; the action is held across them.
    pub substeps: usize,
    pub params: PhysicsParams,
    #[serde(default)]
    pub randomization: Option<Randomization>,
    #[serde(default)]
    pub offsets: ParamOffsets,
    #[serde(default)]
    pub delay_ticks: usize,
    #[serde(default)]
    pub noise: ObservationNoise,
    /// Uniform jitter (rad) added to the initial pitch, keyed by the episode seed.
    #[serde(default)]
    pub init_pitch_jitter: f64,
}

impl EnvConfig {
    /// Fast randomized twin: explicit Euler at 20 ms.
    pub fn training() -> Self {
        Self {
            kind: EnvKind::Training,
            integrator: Integrator::Euler,
            substeps: 1,
            params: PhysicsParams::nominal(0.02),
            randomization: Some(Randomization::default()),
            offsets: ParamOffsets::default(),
            delay_ticks: 0,
            noise: ObservationNoise::default(),
            init_pitch_jitter: 0.0,
        }
    }

    /// Higher-fidelity twin: RK4 at 5 ms, 2-tick action delay, noisy sensors.
    pub fn gazebo_like() -> Self {
        Self {
            kind: EnvKind::Deployment,
            integrator: Integrator::Rk4,
            substeps: 4,
            params: PhysicsParams::nominal(0.005),
            randomization: None,
            offsets: ParamOffsets { mass: 1.1, motor_gain: 0.95, ground_friction: 1.2 },
            delay_ticks: 2,
            noise: ObservationNoise { lin_vel: 0.01, ang_vel: 0.01, pitch: 0.01 },
            init_pitch_jitter: 0.0,
        }
    }

    /// Second deployment twin with a disjoint offset set and heavier noise.
    pub fn real_like() -> Self {
        Self {
            offsets: ParamOffsets { mass: 0.9, motor_gain: 0.9, ground_friction: 1.4 },
            noise: ObservationNoise { lin_vel: 0.02, ang_vel: 0.02, pitch: 0.02 },
            ..Self::gazebo_like()
        }
    }

    /// Control period (s): substep dt times substeps.
    pub fn control_dt(&self) -> f64 {
        self.params.dt * self.substeps as f64
    }

    /// Same twin with no delay, noise, or parameter offsets.
    pub fn without_gap(&self) -> Self {
        Self {
            offsets: ParamOffsets::default(),
            delay_ticks: 0,
            noise: ObservationNoise::default(),
            ..self.clone()
        }
    }

    /// Same twin with domain randomization disabled.
    pub fn nominal_only(&self) -> Self {
        Self { randomization: None, ..self.clone() }
    }
}
