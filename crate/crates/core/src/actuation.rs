//! Motor simulation: discrete PID position control over an ideal
//! velocity-source plant, and the lead-screw linear mechanism.
//!
//! The motors are direct-drive with position feedback in the driver, so the
//! plant is modelled as an ideal velocity source with a configurable rate
//! saturation. The controller output is a velocity command computed from the
//! position error; the integral term is clamped for anti-windup.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActuationError {
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("height {z} mm is below the mechanism minimum {z_min} mm")]
    BelowMinimumHeight { z: f64, z_min: f64 },
    #[error("invalid lead screw: {0}")]
    InvalidScrew(String),
}

/// PID gains for the velocity-command position loop.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl PidGains {
    pub fn new(kp: f64, ki: f64, kd: f64) -> Result<Self, ActuationError> {
        if kp < 0.0 || ki < 0.0 || kd < 0.0 {
            return Err(ActuationError::InvalidGains(format!(
                "gains must be non-negative (kp = {kp}, ki = {ki}, kd = {kd})"
            )));
        }
        Ok(Self { kp, ki, kd })
    }
}

impl Default for PidGains {
    /// Production gains of the robot: `Kp = 5.0`, `Ki = 10.0`, `Kd = 0`.
    fn default() -> Self {
        Self { kp: 5.0, ki: 10.0, kd: 0.0 }
    }
}

/// Saturation limits of the simulated motor.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MotorLimits {
    /// Velocity command saturation, rad/s.
    pub rate_limit: f64,
    /// Anti-windup clamp on the error integral, rad·s.
    pub integral_limit: f64,
}

impl Default for MotorLimits {
    fn default() -> Self {
        Self { rate_limit: 50.0, integral_limit: 10.0 }
    }
}

/// State of one simulated motor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorState {
    pub angle: f64,
    pub integral_error: f64,
    pub prev_error: f64,
}

/// One discrete control step.
///
/// Computes `e = target − angle`, accumulates the clamped integral, forms the
/// velocity command `kp·e + ki·∫e + kd·Δe/dt` saturated to `±rate_limit`, and
/// advances the angle by `command·dt`. Returns the new state and the
/// saturated velocity command.
pub fn pid_step(
    gains: &PidGains,
    state: &MotorState,
    target: f64,
    dt: f64,
    limits: &MotorLimits,
) -> (MotorState, f64) {
    debug_assert!(dt > 0.0);
    let error = target - state.angle;
    let integral = (state.integral_error + error * dt)
        .clamp(-limits.integral_limit, limits.integral_limit);
    let derivative = if gains.kd == 0.0 { 0.0 } else { gains.kd * (error - state.prev_error) / dt };
    let command = (gains.kp * error + gains.ki * integral + derivative)
        .clamp(-limits.rate_limit, limits.rate_limit);
    let next = MotorState {
        angle: state.angle + command * dt,
        integral_error: integral,
        prev_error: error,
    };
    (next, command)
}

/// Lead screw converting motor rotation to carriage travel.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LeadScrew {
    /// Carriage travel per revolution, mm.
    pub lead: f64,
}

impl LeadScrew {
    pub fn new(lead: f64) -> Result<Self, ActuationError> {
        if !(lead > 0.0) {
            return Err(ActuationError::InvalidScrew(format!("lead must be positive, got {lead}")));
        }
        Ok(Self { lead })
    }
}

impl Default for LeadScrew {
    /// The robot's 20 mm lead screw.
    fn default() -> Self {
        Self { lead: 20.0 }
    }
}

/// Carriage displacement for a motor angle: `lead · angle / 2π`.
pub fn screw_displacement(screw: &LeadScrew, motor_angle: f64) -> f64 {
    screw.lead * motor_angle / (2.0 * PI)
}

/// Motor angle realising a carriage height, anchored at the contracted
/// height `z_min`: `2π·(z − z_min)/lead`.
pub fn height_to_motor_angle(screw: &LeadScrew, z: f64, z_min: f64) -> Result<f64, ActuationError> {
    if z < z_min - 1e-6 {
        return Err(ActuationError::BelowMinimumHeight { z, z_min });
    }
    Ok(2.0 * PI * (z - z_min) / screw.lead)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_error_keeps_the_motor_still() {
        let gains = PidGains::default();
        let state = MotorState { angle: 0.7, integral_error: 0.0, prev_error: 0.3 };
        let (next, command) = pid_step(&gains, &state, 0.7, 0.1, &MotorLimits::default());
        assert_eq!(command, 0.0);
        assert_eq!(next.angle, 0.7);
        assert_eq!(next.integral_error, 0.0);
        assert_eq!(next.prev_error, 0.0);
    }

    #[test]
    fn unit_step_settles_within_two_seconds() {
        let gains = PidGains::default();
        let limits = MotorLimits::default();
        let mut state = MotorState::default();
        let dt = 0.1;
        let mut worst_after_2s: f64 = 0.0;
        for k in 0..50 {
            let (next, _) = pid_step(&gains, &state, 1.0, dt, &limits);
            state = next;
            let t = (k + 1) as f64 * dt;
            if t >= 2.0 {
                worst_after_2s = worst_after_2s.max((state.angle - 1.0).abs());
            }
        }
        assert!(worst_after_2s < 0.01, "worst error after 2 s: {worst_after_2s}");
    }

    #[test]
    fn zero_kd_means_no_derivative_contribution() {
        let gains = PidGains::default();
        let limits = MotorLimits::default();
        let with_history = MotorState { angle: 0.0, integral_error: 0.2, prev_error: 555.0 };
        let without = MotorState { angle: 0.0, integral_error: 0.2, prev_error: 0.0 };
        let (_, c1) = pid_step(&gains, &with_history, 1.0, 0.1, &limits);
        let (_, c2) = pid_step(&gains, &without, 1.0, 0.1, &limits);
        assert_eq!(c1, c2);
    }

    #[test]
    fn command_saturates_at_the_rate_limit() {
        let gains = PidGains::default();
        let limits = MotorLimits::default();
        let (next, command) = pid_step(&gains, &MotorState::default(), 1000.0, 0.1, &limits);
        assert_eq!(command, limits.rate_limit);
        assert_relative_eq!(next.angle, 5.0);
    }

    #[test]
    fn screw_displacement_examples() {
        let screw = LeadScrew::default();
        assert_relative_eq!(screw_displacement(&screw, 7.0 * PI), 70.0, epsilon = 1e-12);
        assert_eq!(screw_displacement(&screw, 0.0), 0.0);
        assert_relative_eq!(screw_displacement(&screw, 2.0 * PI), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn height_to_motor_angle_examples() {
        let screw = LeadScrew::default();
        assert_eq!(height_to_motor_angle(&screw, 135.2, 135.2).unwrap(), 0.0);
        assert_relative_eq!(
            height_to_motor_angle(&screw, 205.2, 135.2).unwrap(),
            7.0 * PI,
            epsilon = 1e-9
        );
        assert!(height_to_motor_angle(&screw, 135.0, 135.2).is_err());
    }

    proptest! {
        /// The screw maps are exact mutual inverses.
        #[test]
        fn screw_roundtrip(z in 0.0..100.0f64, z_min in 100.0..150.0f64) {
            let screw = LeadScrew::default();
            let angle = height_to_motor_angle(&screw, z_min + z, z_min).unwrap();
            let back = z_min + screw_displacement(&screw, angle);
            prop_assert!((back - (z_min + z)).abs() < 1e-9);
        }

        /// Tracking of any constant target in the commanded range converges
        /// below 1e-3 rad within 5 s at 10 Hz, with the |error| envelope
        /// non-increasing across successive peaks.
        #[test]
        fn constant_target_tracking(target in -30.0..30.0f64) {
            let gains = PidGains::default();
            let limits = MotorLimits::default();
            let mut state = MotorState::default();
            let mut errors = Vec::with_capacity(51);
            errors.push(target.abs());
            for _ in 0..50 {
                let (next, _) = pid_step(&gains, &state, target, 0.1, &limits);
                state = next;
                errors.push((target - state.angle).abs());
            }
            prop_assert!(errors[50] < 1e-3, "final error {}", errors[50]);

            // Envelope: each local maximum of |e| no larger than the last.
            let mut peaks = vec![errors[0]];
            for i in 1..errors.len() - 1 {
                if errors[i] >= errors[i - 1] && errors[i] >= errors[i + 1] {
                    peaks.push(errors[i]);
                }
            }
            for pair in peaks.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-9, "envelope grew: {pair:?}");
            }
        }

        /// A persistently saturated command never pushes the integral past
        /// its clamp.
        #[test]
        fn integral_stays_clamped(target in 100.0..1000.0f64, steps in 1usize..500) {
            let gains = PidGains::default();
            let limits = MotorLimits { rate_limit: 1.0, integral_limit: 10.0 };
            let mut state = MotorState::default();
            for _ in 0..steps {
                let (next, _) = pid_step(&gains, &state, target, 0.1, &limits);
                state = next;
                prop_assert!(state.integral_error.abs() <= limits.integral_limit);
            }
        }
    }
}
