//! Planar wheeled inverted pendulum.
//!
//! ```text
//! v'     = (motor_gain * u - friction * v) / mass
//! theta" = (g * sin(theta) - v' * cos(theta)) / pole_length
//! ```

use super::config::PhysicsParams;

/// Continuous state: base position and velocity, pole pitch and pitch rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub x: f64,
    pub v: f64,
    pub theta: f64,
    pub omega: f64,
}

impl Kinematics {
    fn axpy(self, h: f64, d: Kinematics) -> Kinematics {
        Kinematics { x: self.x + h * d.x, v: self.v + h * d.v, theta: self.theta + h * d.theta, omega: self.omega + h * d.omega }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite() && self.theta.is_finite() && self.omega.is_finite()
    }
}

pub fn derivative(s: Kinematics, p: &PhysicsParams, torque: f64) -> Kinematics {
    let accel = (p.motor_gain * torque - p.ground_friction * s.v) / p.mass;
    let alpha = (p.gravity * s.theta.sin() - accel * s.theta.cos()) / p.pole_length;
    Kinematics { x: s.v, v: accel, theta: s.omega, omega: alpha }
}

pub fn euler(s: Kinematics, p: &PhysicsParams, torque: f64, dt: f64) -> Kinematics {
    s.axpy(dt, derivative(s, p, torque))
}

pub fn rk4(s: Kinematics, p: &PhysicsParams, torque: f64, dt: f64) -> Kinematics {
    let k1 = derivative(s, p, torque);
    let k2 = derivative(s.axpy(0.5 * dt, k1), p, torque);
    let k3 = derivative(s.axpy(0.5 * dt, k2), p, torque);
    let k4 = derivative(s.axpy(dt, k3), p, torque);
    Kinematics {
        x: s.x + dt / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        v: s.v + dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
        theta: s.theta + dt / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta),
        omega: s.omega + dt / 6.0 * (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega),
    }
}

/// Pole mechanical energy per unit mass. Conserved when the base does not
/// accelerate (zero torque, zero friction).
pub fn pole_energy(s: Kinematics, p: &PhysicsParams) -> f64 {
    0.5 * p.pole_length * p.pole_length * s.omega * s.omega + p.gravity * p.pole_length * s.theta.cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rest() -> Kinematics {
        Kinematics { x: 0.0, v: 0.0, theta: 0.0, omega: 0.0 }
    }

    #[test]
    fn upright_rest_is_fixed_point() {
        let p = PhysicsParams::nominal(0.02);
        assert_eq!(euler(rest(), &p, 0.0, 0.02), rest());
        assert_eq!(rk4(rest(), &p, 0.0, 0.005), rest());
    }

    fn integrate(step: fn(Kinematics, &PhysicsParams, f64, f64) -> Kinematics, dt: f64, t_end: f64) -> Kinematics {
        let p = PhysicsParams { ground_friction: 0.0, ..PhysicsParams::nominal(dt) };
        let mut s = Kinematics { x: 0.0, v: 0.2, theta: 0.05, omega: 0.0 };
        let n = (t_end / dt).round() as usize;
        for _ in 0..n {
            s = step(s, &p, 0.4, dt);
        }
        s
    }

    fn dist(a: Kinematics, b: Kinematics) -> f64 {
        ((a.x - b.x).powi(2) + (a.v - b.v).powi(2) + (a.theta - b.theta).powi(2) + (a.omega - b.omega).powi(2)).sqrt()
    }

    #[test]
    fn euler_rk4_gap_shrinks_first_order() {
        let reference = integrate(rk4, 1e-5, 1.0);
        let ladder = [0.004, 0.002, 0.001, 0.0005];
        let gaps: Vec<f64> = ladder.iter().map(|&dt| dist(integrate(rk4, dt, 1.0), integrate(euler, dt, 1.0))).collect();
        let euler_err: Vec<f64> = ladder.iter().map(|&dt| dist(integrate(euler, dt, 1.0), reference)).collect();
        for w in gaps.windows(2).chain(euler_err.windows(2)) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 0.95, "observed order {order} from {gaps:?} / {euler_err:?}");
        }
        let rk4_err: Vec<f64> = [0.02, 0.01].iter().map(|&dt| dist(integrate(rk4, dt, 1.0), reference)).collect();
        let order = (rk4_err[0] / rk4_err[1]).log2();
        assert!(order > 3.5, "rk4 order {order}");
    }

    #[test]
    fn rk4_energy_drift_small() {
        let p = PhysicsParams { ground_friction: 0.0, ..PhysicsParams::nominal(0.005) };
        let mut s = Kinematics { x: 0.0, v: 0.0, theta: 0.3, omega: 0.0 };
        let e0 = pole_energy(s, &p);
        for _ in 0..200 {
            s = rk4(s, &p, 0.0, 0.005);
        }
        let drift = ((pole_energy(s, &p) - e0) / e0).abs();
        assert!(drift < 1e-3, "drift {drift}");
    }
}
