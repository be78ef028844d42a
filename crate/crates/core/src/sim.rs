//! Integrated deterministic robot simulator.
//!
//! [`Simulator::run`] executes a motion script: the lift motor tracks its
//! angle target through the PID loop, the lead screw turns the angle into a
//! carriage height, the lookup table maps the height to the top-face
//! rotation `Θ`, and the pose picks up the induced base rotation `ΔΘ/2`
//! (plus wheel motion) through exact arc integration.
//!
//! Compensation is feedforward: the wheels counter the *commanded* rotation
//! change derived from the script, mirroring a controller that plans against
//! the same correspondence table it commands with. With the real PID lift
//! the cancellation is exact in steady ramp tracking and leaves only small
//! transients at the waveform vertices; with [`LiftMode::Ideal`] it is exact
//! at every sample.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::actuation::{pid_step, screw_displacement, LeadScrew, MotorLimits, MotorState, PidGains};
use crate::drive::{
    body_to_wheels, compensation_yaw_rate, integrate_pose, normalize_angle, DriveGeometry, Pose,
};
use crate::jitterbug::{forward_height, InverseMode, JitterbugError, JitterbugParams, LookupTable};
use crate::scripting::MotionScript;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Kinematics(#[from] JitterbugError),
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
    #[error("script incompatible with simulator: {0}")]
    ScriptMismatch(String),
}

/// Lift actuator model used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LiftMode {
    /// Discrete PID over an ideal velocity-source motor.
    Pid,
    /// Zero-lag actuator that lands on the target at every sample.
    Ideal,
}

/// Full simulator configuration.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    /// Integration step, s. May subdivide the script's control period.
    pub dt: f64,
    /// Overall height = mechanism height + this offset, mm.
    pub height_offset: f64,
    pub geometry: DriveGeometry,
    pub params: JitterbugParams,
    pub gains: PidGains,
    pub screw: LeadScrew,
    pub motor_limits: MotorLimits,
    /// Number of lookup-table entries.
    pub table_entries: usize,
    /// Upper end of the table's rotation domain, rad.
    pub theta_max: f64,
    /// Flip the direction in which expansion rotates the base.
    pub flip_base_rotation: bool,
    pub lift_mode: LiftMode,
}

impl SimConfig {
    /// The production configuration. The height offset is calibrated so the
    /// contracted mechanism sits at a 210 mm overall height.
    pub fn mofu() -> Self {
        let params = JitterbugParams::mofu();
        let z0 = forward_height(&params, 0.0).expect("contracted height is defined");
        Self {
            dt: 0.1,
            height_offset: 210.0 - z0,
            geometry: DriveGeometry::default(),
            params,
            gains: PidGains::default(),
            screw: LeadScrew::default(),
            motor_limits: MotorLimits::default(),
            table_entries: 45,
            theta_max: 1.0,
            flip_base_rotation: false,
            lift_mode: LiftMode::Pid,
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::mofu()
    }
}

/// Full state of one simulated robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub pose: Pose,
    /// Mechanism height, mm.
    pub z: f64,
    /// Top-face rotation, rad.
    pub theta_cap: f64,
    pub lift_motor: MotorState,
    pub left_motor: MotorState,
    pub right_motor: MotorState,
    /// Simulation clock, s.
    pub t: f64,
}

/// Command applied over one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCommand {
    /// Lift angle target held during the step (zero-order hold).
    pub motor_target: f64,
    /// Lift angle target at the end of the step; the ideal lift lands here.
    pub motor_target_end: f64,
    /// Commanded top-rotation change across the step, used as the
    /// compensation feedforward.
    pub dtheta_cmd: f64,
    /// Body velocity, mm/s.
    pub v: f64,
    /// Extra wheel yaw rate, rad/s.
    pub omega_extra: f64,
    pub compensation_on: bool,
}

/// Per-step outcome flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepFlags {
    /// The lift angle was clipped to keep the height inside the table domain.
    pub clipped: bool,
}

/// One recorded trace sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub z: f64,
    pub theta_cap: f64,
    pub motor_angle: f64,
    pub clipped: bool,
}

/// Time series of the simulated state at the integration step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    samples: Vec<TraceSample>,
    height_offset: f64,
    clipped_steps: usize,
}

impl Trace {
    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn clipped_steps(&self) -> usize {
        self.clipped_steps
    }

    /// Final yaw minus initial yaw, wrapped to `(-π, π]`.
    pub fn net_yaw(&self) -> f64 {
        let first = self.samples.first().expect("trace is never empty");
        let last = self.samples.last().expect("trace is never empty");
        normalize_angle(last.yaw - first.yaw)
    }

    /// Height travel observed over the run, mm.
    pub fn stroke(&self) -> f64 {
        let min = self.samples.iter().map(|s| s.z).fold(f64::INFINITY, f64::min);
        let max = self.samples.iter().map(|s| s.z).fold(f64::NEG_INFINITY, f64::max);
        max - min
    }

    pub fn final_pose(&self) -> Pose {
        let last = self.samples.last().expect("trace is never empty");
        Pose { x: last.x, y: last.y, yaw: last.yaw }
    }

    pub fn max_overall_height(&self) -> f64 {
        self.samples.iter().map(|s| s.z).fold(f64::NEG_INFINITY, f64::max) + self.height_offset
    }

    pub fn min_overall_height(&self) -> f64 {
        self.samples.iter().map(|s| s.z).fold(f64::INFINITY, f64::min) + self.height_offset
    }

    /// Write the trace as CSV:
    /// `t_s,x_mm,y_mm,yaw_rad,z_mm,theta_rad,overall_height_mm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t_s,x_mm,y_mm,yaw_rad,z_mm,theta_rad,overall_height_mm")?;
        for s in &self.samples {
            writeln!(
                w,
                "{:.6},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                s.t,
                s.x,
                s.y,
                s.yaw,
                s.z,
                s.theta_cap,
                s.z + self.height_offset,
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// Versioned TOML sidecar describing a trace file.
pub fn trace_metadata_toml(config: &SimConfig, source: &str, trace: &Trace) -> String {
    #[derive(Serialize)]
    struct Metadata<'a> {
        format_version: u32,
        columns: &'static str,
        source: &'a str,
        samples: usize,
        clipped_steps: usize,
        net_yaw_rad: f64,
        stroke_mm: f64,
        config: &'a SimConfig,
    }
    let meta = Metadata {
        format_version: 1,
        columns: "t_s,x_mm,y_mm,yaw_rad,z_mm,theta_rad,overall_height_mm",
        source,
        samples: trace.samples.len(),
        clipped_steps: trace.clipped_steps,
        net_yaw_rad: trace.net_yaw(),
        stroke_mm: trace.stroke(),
        config,
    };
    toml::to_string(&meta).expect("trace metadata serializes")
}

/// Deterministic single-robot simulator for one configuration.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    table: LookupTable,
    motor_angle_max: f64,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        if !(config.dt > 0.0) {
            return Err(SimError::InvalidConfig(format!("dt must be positive, got {}", config.dt)));
        }
        if config.height_offset < 0.0 {
            return Err(SimError::InvalidConfig(format!(
                "height_offset must be non-negative, got {}",
                config.height_offset
            )));
        }
        let table = LookupTable::build(&config.params, config.theta_max, config.table_entries)?;
        let motor_angle_max =
            2.0 * std::f64::consts::PI * (table.z_max() - table.z_min()) / config.screw.lead;
        Ok(Self { config, table, motor_angle_max })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn table(&self) -> &LookupTable {
        &self.table
    }

    /// Contracted robot at the origin, clock at zero.
    pub fn initial_state(&self) -> RobotState {
        RobotState {
            pose: Pose::origin(),
            z: self.table.z_min(),
            theta_cap: 0.0,
            lift_motor: MotorState::default(),
            left_motor: MotorState::default(),
            right_motor: MotorState::default(),
            t: 0.0,
        }
    }

    /// Top-face rotation commanded by a lift angle target (used to build the
    /// compensation feedforward).
    pub fn theta_for_motor_angle(&self, motor_angle: f64) -> f64 {
        let z = self.table.z_min() + screw_displacement(&self.config.screw, motor_angle);
        self.table.inverse(z, InverseMode::Interpolated).theta_cap
    }

    /// Advance the robot by one integration step.
    pub fn step(&self, state: &RobotState, cmd: &StepCommand) -> (RobotState, StepFlags) {
        let dt = self.config.dt;

        let lift = match self.config.lift_mode {
            LiftMode::Pid => {
                let (next, _) = pid_step(
                    &self.config.gains,
                    &state.lift_motor,
                    cmd.motor_target,
                    dt,
                    &self.config.motor_limits,
                );
                next
            }
            LiftMode::Ideal => MotorState { angle: cmd.motor_target_end, ..MotorState::default() },
        };

        // Keep the carriage inside the table domain; the physical mechanism
        // has hard stops there.
        let clamped_angle = lift.angle.clamp(0.0, self.motor_angle_max);
        let clipped = clamped_angle != lift.angle;
        let lift = MotorState { angle: clamped_angle, ..lift };

        let z = self.table.z_min() + screw_displacement(&self.config.screw, lift.angle);
        let theta_cap = self.table.inverse(z, InverseMode::Interpolated).theta_cap;

        let sign = if self.config.flip_base_rotation { -1.0 } else { 1.0 };
        let jitterbug_rate = sign * (theta_cap - state.theta_cap) / (2.0 * dt);
        let wheel_comp_rate = if cmd.compensation_on {
            sign * compensation_yaw_rate(cmd.dtheta_cmd / dt)
        } else {
            0.0
        };
        let wheel_rate = wheel_comp_rate + cmd.omega_extra;

        let pose = integrate_pose(&state.pose, cmd.v, jitterbug_rate + wheel_rate, dt);

        let rates = body_to_wheels(&self.config.geometry, cmd.v, wheel_rate);
        let left_motor = MotorState {
            angle: state.left_motor.angle + rates.omega_left * dt,
            ..MotorState::default()
        };
        let right_motor = MotorState {
            angle: state.right_motor.angle + rates.omega_right * dt,
            ..MotorState::default()
        };

        (
            RobotState {
                pose,
                z,
                theta_cap,
                lift_motor: lift,
                left_motor,
                right_motor,
                t: state.t + dt,
            },
            StepFlags { clipped },
        )
    }

    /// Execute a whole script and record the trace.
    ///
    /// The integration step may subdivide the script's control period; the
    /// feedforward and the hold targets stay aligned with the script's
    /// sample boundaries, so refining `dt` does not shift the commands.
    pub fn run(&self, script: &MotionScript) -> Result<Trace, SimError> {
        if script.samples.len() < 2 {
            return Err(SimError::ScriptMismatch("script needs at least 2 samples".into()));
        }
        let script_dt = script.dt();
        let ratio = script_dt / self.config.dt;
        let substeps = ratio.round() as usize;
        if substeps == 0 || (ratio - substeps as f64).abs() > 1e-6 {
            return Err(SimError::ScriptMismatch(format!(
                "simulator dt = {} must evenly divide the script period {}",
                self.config.dt, script_dt
            )));
        }

        let theta_cmd: Vec<f64> = script
            .samples
            .iter()
            .map(|s| self.theta_for_motor_angle(s.motor_angle_target))
            .collect();

        let mut state = self.initial_state();
        let mut samples = Vec::with_capacity((script.samples.len() - 1) * substeps + 1);
        let mut clipped_steps = 0;
        samples.push(TraceSample {
            t: state.t,
            x: state.pose.x,
            y: state.pose.y,
            yaw: state.pose.yaw,
            z: state.z,
            theta_cap: state.theta_cap,
            motor_angle: state.lift_motor.angle,
            clipped: false,
        });

        for k in 0..script.samples.len() - 1 {
            let start = &script.samples[k];
            let end = &script.samples[k + 1];
            let dtheta_cmd = (theta_cmd[k + 1] - theta_cmd[k]) / substeps as f64;
            for sub in 1..=substeps {
                let frac = sub as f64 / substeps as f64;
                let cmd = StepCommand {
                    motor_target: start.motor_angle_target,
                    motor_target_end: start.motor_angle_target
                        + frac * (end.motor_angle_target - start.motor_angle_target),
                    dtheta_cmd,
                    v: start.v,
                    omega_extra: start.omega_extra,
                    compensation_on: start.compensation_on,
                };
                let (next, flags) = self.step(&state, &cmd);
                state = next;
                if flags.clipped {
                    clipped_steps += 1;
                }
                samples.push(TraceSample {
                    t: state.t,
                    x: state.pose.x,
                    y: state.pose.y,
                    yaw: state.pose.yaw,
                    z: state.z,
                    theta_cap: state.theta_cap,
                    motor_angle: state.lift_motor.angle,
                    clipped: flags.clipped,
                });
            }
        }

        Ok(Trace { samples, height_offset: self.config.height_offset, clipped_steps })
    }
}
