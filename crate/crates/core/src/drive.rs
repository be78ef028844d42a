//! Differential two-wheel drive kinematics.
//!
//! Body twist `(v, ω)` and wheel rates `(ω_L, ω_R)` are linear images of each
//! other, pose integration uses exact constant-twist arcs, and
//! [`compensation_yaw_rate`] gives the wheel command that cancels the base
//! rotation induced by the expansion mechanism.

use std::f64::consts::PI;

use thiserror::Error;

/// Below this rotation per step the arc degenerates to a straight segment.
const STRAIGHT_LIMIT: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriveError {
    #[error("invalid drive geometry: {0}")]
    InvalidGeometry(String),
}

/// Wheel layout of the drive. Lengths in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DriveGeometry {
    /// Wheel radius (29 mm for the 58 mm stock tyres).
    pub wheel_radius: f64,
    /// Distance between the wheel ground-contact points.
    pub track: f64,
}

impl DriveGeometry {
    pub fn new(wheel_radius: f64, track: f64) -> Result<Self, DriveError> {
        if !(wheel_radius > 0.0 && track > 0.0) {
            return Err(DriveError::InvalidGeometry(format!(
                "wheel_radius and track must be positive (got {wheel_radius}, {track})"
            )));
        }
        Ok(Self { wheel_radius, track })
    }
}

impl Default for DriveGeometry {
    /// MOFU: 58 mm wheels, 90 mm between contact points.
    fn default() -> Self {
        Self { wheel_radius: 29.0, track: 90.0 }
    }
}

/// Angular rates of the two wheels, rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelRates {
    pub omega_left: f64,
    pub omega_right: f64,
}

/// Planar pose; `yaw` is kept normalized to `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw: normalize_angle(yaw) }
    }

    pub fn origin() -> Self {
        Self { x: 0.0, y: 0.0, yaw: 0.0 }
    }
}

/// Wrap an angle into `(-π, π]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Wheel rates realising a body twist `(v, ω)`.
pub fn body_to_wheels(geom: &DriveGeometry, v: f64, omega: f64) -> WheelRates {
    let half_track = geom.track / 2.0;
    WheelRates {
        omega_left: (v - omega * half_track) / geom.wheel_radius,
        omega_right: (v + omega * half_track) / geom.wheel_radius,
    }
}

/// Body twist `(v, ω)` produced by the given wheel rates.
pub fn wheels_to_body(geom: &DriveGeometry, rates: &WheelRates) -> (f64, f64) {
    let v = geom.wheel_radius * (rates.omega_left + rates.omega_right) / 2.0;
    let omega = geom.wheel_radius * (rates.omega_right - rates.omega_left) / geom.track;
    (v, omega)
}

/// Advance a pose by a constant twist for `dt` seconds, exactly.
///
/// Setpoints are piecewise constant, so the constant-twist arc is the exact
/// solution; composing two half steps reproduces one full step to rounding.
pub fn integrate_pose(pose: &Pose, v: f64, omega: f64, dt: f64) -> Pose {
    let dyaw = omega * dt;
    if dyaw.abs() < STRAIGHT_LIMIT {
        Pose::new(pose.x + v * dt * pose.yaw.cos(), pose.y + v * dt * pose.yaw.sin(), pose.yaw + dyaw)
    } else {
        let radius = v / omega;
        let yaw_new = pose.yaw + dyaw;
        Pose::new(
            pose.x + radius * (yaw_new.sin() - pose.yaw.sin()),
            pose.y + radius * (pose.yaw.cos() - yaw_new.cos()),
            yaw_new,
        )
    }
}

/// Body yaw rate that cancels the base rotation caused by a top-face
/// rotation rate `dΘ/dt`: the base turns at `(dΘ/dt)/2`, so the wheels must
/// command the opposite of that.
pub fn compensation_yaw_rate(dtheta_cap_dt: f64) -> f64 {
    -dtheta_cap_dt / 2.0
}
