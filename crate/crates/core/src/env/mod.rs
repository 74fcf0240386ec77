//! Twin simulators of a planar wheeled inverted pendulum ("walker").
//!
//! The training twin is fast and randomized (explicit Euler, 20 ms, per-episode
//! parameter sampling). The deployment twins integrate with RK4 at 5 ms, delay
//! actions, add sensor noise, and use fixed parameter offsets.

mod config;
pub mod dynamics;
mod rollout;
mod tracker;
mod walker;

pub use config::{EnvConfig, EnvKind, Integrator, ObservationNoise, ParamOffsets, PhysicsParams, Randomization, TaskLimits};
pub use rollout::{rollout, ConstantTorque, Controller, EpisodeOutcome, EpisodeStats, RolloutError, Trajectory, Transition};
pub use tracker::{
    default_homomorphism, deployment_schema, observe, schema_for, state_tracker, training_schema, ANG_VEL,
    APPLIED_TORQUE, CMD_ANG_VEL, CMD_LIN_VEL, DEPLOYMENT_SCHEMA, LAST_ACTION, LIN_VEL, OBS_DIM, PITCH, SURVIVAL_DT,
    TRAINING_SCHEMA,
};
pub use walker::{sample_params, Command, EnvError, StepResult, Termination, WalkerEnv, WalkerState};
