//! Observation schemas of the twins and the state tracker producing frames.

use std::sync::{Arc, OnceLock};

use crate::dsl::{HomomorphismMap, MapEntry, ObservationFrame, ObservationSchema, SignalSpec};

use super::config::EnvKind;
use super::walker::{Command, WalkerState};

pub const TRAINING_SCHEMA: &str = "walker";
pub const DEPLOYMENT_SCHEMA: &str = "walker_deploy";

/// (training name, deployment name, unit), in frame order.
const SIGNALS: [(&str, &str, &str); 8] = [
    ("base_lin_vel", "odom_lin_vel", "m/s"),
    ("base_ang_vel", "imu_ang_vel", "rad/s"),
    ("pitch", "imu_pitch", "rad"),
    ("cmd_lin_vel", "joy_lin_vel", "m/s"),
    ("cmd_ang_vel", "joy_ang_vel", "rad/s"),
    ("last_action", "ctrl_last_action", "N*m"),
    ("applied_torque", "motor_torque", "N*m"),
    ("survival_dt", "alive_dt", "s"),
];

pub const LIN_VEL: usize = 0;
pub const ANG_VEL: usize = 1;
pub const PITCH: usize = 2;
pub const CMD_LIN_VEL: usize = 3;
pub const CMD_ANG_VEL: usize = 4;
pub const LAST_ACTION: usize = 5;
pub const APPLIED_TORQUE: usize = 6;
pub const SURVIVAL_DT: usize = 7;
pub const OBS_DIM: usize = SIGNALS.len();

pub fn training_schema() -> Arc<ObservationSchema> {
    static S: OnceLock<Arc<ObservationSchema>> = OnceLock::new();
    S.get_or_init(|| {
        let signals = SIGNALS.iter().map(|(n, _, u)| SignalSpec::new(*n, 1, *u)).collect();
        Arc::new(ObservationSchema::new(TRAINING_SCHEMA, signals).expect("static schema"))
    })
    .clone()
}

pub fn deployment_schema() -> Arc<ObservationSchema> {
    static S: OnceLock<Arc<ObservationSchema>> = OnceLock::new();
    S.get_or_init(|| {
        let signals = SIGNALS.iter().map(|(_, n, u)| SignalSpec::new(*n, 1, *u)).collect();
        Arc::new(ObservationSchema::new(DEPLOYMENT_SCHEMA, signals).expect("static schema"))
    })
    .clone()
}

pub fn schema_for(kind: EnvKind) -> Arc<ObservationSchema> {
    match kind {
        EnvKind::Training => training_schema(),
        EnvKind::Deployment => deployment_schema(),
    }
}

/// Unit-gain renaming from the training schema onto the deployment schema.
pub fn default_homomorphism() -> HomomorphismMap {
    HomomorphismMap { entries: SIGNALS.iter().map(|(t, d, _)| MapEntry::rename(*t, *d)).collect() }
}

/// Noise-free observation vector in frame order.
pub fn observe(state: &WalkerState, command: Command, control_dt: f64, alive: bool) -> [f64; OBS_DIM] {
    let mut o = [0.0; OBS_DIM];
    o[LIN_VEL] = state.v;
    o[ANG_VEL] = state.omega;
    o[PITCH] = state.theta;
    o[CMD_LIN_VEL] = command.lin_vel;
    o[CMD_ANG_VEL] = command.ang_vel;
    o[LAST_ACTION] = state.last_action;
    o[APPLIED_TORQUE] = state.applied_torque;
    o[SURVIVAL_DT] = if alive { control_dt } else { 0.0 };
    o
}

/// Frame for `state` in the schema of `kind`. Positions are identical across
/// the twins, only the names differ.
pub fn state_tracker(kind: EnvKind, state: &WalkerState, command: Command, control_dt: f64, alive: bool) -> ObservationFrame {
    let values = observe(state, command, control_dt, alive).to_vec();
    ObservationFrame::from_flat(schema_for(kind), values).expect("finite state yields a valid frame")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{apply_homomorphism, eval_step, parse_program};

    fn state() -> WalkerState {
        WalkerState { x: 0.3, v: 0.4, theta: -0.1, omega: 0.2, t: 1.0, last_action: 0.5, applied_torque: 0.25 }
    }

    #[test]
    fn twins_are_isomorphic() {
        assert!(default_homomorphism().isomorphism(&training_schema(), &deployment_schema()).is_bijection());
    }

    #[test]
    fn frames_agree_under_renaming() {
        let cmd = Command { lin_vel: 0.5, ang_vel: 0.0 };
        let tf = state_tracker(EnvKind::Training, &state(), cmd, 0.02, true);
        let df = state_tracker(EnvKind::Deployment, &state(), cmd, 0.02, true);
        assert_eq!(tf.as_slice(), df.as_slice());
        let p = parse_program(
            "track: exp(-norm2(base_lin_vel - cmd_lin_vel)/0.25)\nupright: -1 * square(pitch)\nalive: survival_dt",
        )
        .unwrap();
        let (q, report) = apply_homomorphism(&p, &default_homomorphism(), &training_schema(), &deployment_schema()).unwrap();
        assert!(report.is_empty());
        assert_eq!(eval_step(&p, &tf).unwrap(), eval_step(&q, &df).unwrap());
    }

    #[test]
    fn terminated_state_has_zero_survival() {
        let f = state_tracker(EnvKind::Training, &state(), Command::default(), 0.02, false);
        assert_eq!(f.scalar("survival_dt"), Some(0.0));
    }
}
