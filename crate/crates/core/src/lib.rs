//! Kinematics, control, and motion scripting for MOFU, a mobile robot that
//! expands and contracts through a Jitterbug linkage driven by a single
//! lead-screw actuator.
//!
//! The crate is organised around the signal chain of the physical robot:
//!
//! * [`jitterbug`] — forward/inverse kinematics of the expansion mechanism
//!   and the sampled lookup table used for control
//! * [`drive`] — differential two-wheel drive kinematics and exact arc pose
//!   integration
//! * [`actuation`] — discrete PID position control and the lead-screw linear
//!   mechanism
//! * [`scripting`] — deterministic generation of the experimental motion
//!   conditions as time-indexed setpoint scripts
//! * [`sim`] — the integrated deterministic simulator producing pose/height
//!   traces
//! * [`calibration`] — clearance and height-offset fitting plus RMSE
//!   validation against measurement data
//!
//! All types are plain values and all operations are pure functions or
//! methods without shared mutable state, so everything is safe to use from
//! multiple threads.

pub mod actuation;
pub mod calibration;
pub mod drive;
pub mod jitterbug;
pub mod scripting;
pub mod sim;

pub use actuation::{height_to_motor_angle, pid_step, screw_displacement};
pub use actuation::{LeadScrew, MotorLimits, MotorState, PidGains};
pub use calibration::{fit_clearance, fit_height_offset, rmse_angle, MeasurementSample};
pub use drive::{body_to_wheels, compensation_yaw_rate, integrate_pose, wheels_to_body};
pub use drive::{DriveGeometry, Pose, WheelRates};
pub use jitterbug::{base_yaw, forward_height, intermediate_radii};
pub use jitterbug::{InverseMode, JitterbugParams, LookupTable};
pub use scripting::{generate_script, triangular_wave, MotionCondition, ScriptParams};
pub use sim::{SimConfig, Simulator, Trace};
