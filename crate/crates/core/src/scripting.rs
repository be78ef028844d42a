//! Deterministic generation of the experimental motion conditions as
//! time-indexed setpoint scripts.
//!
//! A script holds one sample per control period for each robot; every sample
//! carries the lift-motor angle target, the commanded body velocity, any
//! extra wheel yaw rate, and whether the wheels should cancel the base
//! rotation induced by the expansion mechanism.
//!
//! Phase boundaries (locomotion duty cycle, ramp ends) are computed in
//! integer sample counts so the generated timelines are exact.

use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::LeadScrew;
use crate::jitterbug::{base_yaw, InverseMode, JitterbugError, LookupTable};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("invalid condition: {0}")]
    InvalidCondition(String),
    #[error("invalid script parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Kinematics(#[from] JitterbugError),
    #[error("malformed script data: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The six motion kinds of the condition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionKind {
    /// No body motion.
    Nbm,
    /// Rotation only, reproduced by the wheels.
    Rm,
    /// Expansion-contraction with the induced rotation cancelled.
    Ec,
    /// Expansion-contraction with its natural rotation.
    RmEc,
    /// Locomotion duty cycle, no expansion.
    Loc,
    /// Locomotion with expansion-contraction during the move phases.
    LocRmEc,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 6] = [
        ConditionKind::Nbm,
        ConditionKind::Rm,
        ConditionKind::Ec,
        ConditionKind::RmEc,
        ConditionKind::Loc,
        ConditionKind::LocRmEc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ConditionKind::Nbm => "NBM",
            ConditionKind::Rm => "RM",
            ConditionKind::Ec => "EC",
            ConditionKind::RmEc => "RM+EC",
            ConditionKind::Loc => "LOC",
            ConditionKind::LocRmEc => "LOC+RM+EC",
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConditionKind {
    type Err = ScriptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let canon: String = s
            .trim()
            .to_ascii_uppercase()
            .chars()
            .map(|c| if c == '-' || c == '_' || c == ' ' { '+' } else { c })
            .collect();
        match canon.as_str() {
            "NBM" => Ok(ConditionKind::Nbm),
            "RM" => Ok(ConditionKind::Rm),
            "EC" => Ok(ConditionKind::Ec),
            "RM+EC" => Ok(ConditionKind::RmEc),
            "LOC" => Ok(ConditionKind::Loc),
            "LOC+RM+EC" => Ok(ConditionKind::LocRmEc),
            _ => Err(ScriptError::InvalidCondition(format!(
                "unknown condition '{s}' (expected NBM, RM, EC, RM+EC, LOC or LOC+RM+EC)"
            ))),
        }
    }
}

/// One row of the condition matrix: a motion kind plus the robot count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionCondition {
    pub kind: ConditionKind,
    pub robots: u8,
}

impl MotionCondition {
    pub fn new(kind: ConditionKind, robots: u8) -> Result<Self, ScriptError> {
        if !(robots == 1 || robots == 2) {
            return Err(ScriptError::InvalidCondition(format!(
                "robots must be 1 or 2, got {robots}"
            )));
        }
        if robots == 2 && matches!(kind, ConditionKind::Loc | ConditionKind::LocRmEc) {
            return Err(ScriptError::InvalidCondition(format!(
                "{kind} is a single-robot condition"
            )));
        }
        Ok(Self { kind, robots })
    }

    /// The full ten-row condition matrix.
    pub fn all() -> Vec<MotionCondition> {
        let mut out = Vec::with_capacity(10);
        for kind in [ConditionKind::Nbm, ConditionKind::Rm, ConditionKind::Ec, ConditionKind::RmEc] {
            out.push(MotionCondition { kind, robots: 1 });
        }
        for kind in [ConditionKind::Nbm, ConditionKind::Rm, ConditionKind::Ec, ConditionKind::RmEc] {
            out.push(MotionCondition { kind, robots: 2 });
        }
        out.push(MotionCondition { kind: ConditionKind::Loc, robots: 1 });
        out.push(MotionCondition { kind: ConditionKind::LocRmEc, robots: 1 });
        out
    }

    /// Filesystem-friendly identifier, e.g. `rm_ec_dual`.
    pub fn file_stem(&self) -> String {
        let base = self.kind.name().to_ascii_lowercase().replace('+', "_");
        if self.robots == 2 {
            format!("{base}_dual")
        } else {
            base
        }
    }
}

impl fmt::Display for MotionCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.robots == 2 {
            write!(f, "{} (2 robots)", self.kind)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}

/// Timing and amplitude parameters for script generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptParams {
    /// Expansion-contraction period for single-robot conditions, s.
    pub period: f64,
    /// Motor-angle amplitude of the triangular command, rad.
    pub amplitude: f64,
    /// Setpoint rate, Hz.
    pub control_freq: f64,
    /// Script length, s.
    pub duration: f64,
    /// Per-robot period range for dual-robot conditions, s.
    pub dual_period_range: (f64, f64),
    /// Locomotion move-phase length, s.
    pub loc_move: f64,
    /// Locomotion stop-phase length, s.
    pub loc_stop: f64,
    /// Cruise speed during locomotion move phases, mm/s.
    pub cruise_speed: f64,
    /// Seed for the dual-robot period draw.
    pub seed: u64,
}

impl Default for ScriptParams {
    /// The production parameters: 6 s period, 7π rad amplitude, 10 Hz
    /// control, 20 s scripts, dual periods drawn from [5, 7] s, 1.5 s
    /// move / 0.5 s stop locomotion cycle.
    fn default() -> Self {
        Self {
            period: 6.0,
            amplitude: 7.0 * std::f64::consts::PI,
            control_freq: 10.0,
            duration: 20.0,
            dual_period_range: (5.0, 7.0),
            loc_move: 1.5,
            loc_stop: 0.5,
            cruise_speed: 100.0,
            seed: 0,
        }
    }
}

impl ScriptParams {
    pub fn dt(&self) -> f64 {
        1.0 / self.control_freq
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        let positive = [
            ("period", self.period),
            ("control_freq", self.control_freq),
            ("duration", self.duration),
            ("loc_move", self.loc_move),
            ("loc_stop", self.loc_stop),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(ScriptError::InvalidParams(format!("{name} must be positive, got {value}")));
            }
        }
        if self.amplitude < 0.0 {
            return Err(ScriptError::InvalidParams(format!(
                "amplitude must be non-negative, got {}",
                self.amplitude
            )));
        }
        if !(self.dual_period_range.0 > 0.0 && self.dual_period_range.0 < self.dual_period_range.1) {
            return Err(ScriptError::InvalidParams(format!(
                "dual period range must satisfy 0 < min < max, got {:?}",
                self.dual_period_range
            )));
        }
        for (name, value) in [
            ("duration", self.duration),
            ("loc_move", self.loc_move),
            ("loc_stop", self.loc_stop),
        ] {
            let samples = value * self.control_freq;
            if (samples - samples.round()).abs() > 1e-6 {
                return Err(ScriptError::InvalidParams(format!(
                    "{name} = {value} s is not a whole number of control periods at {} Hz",
                    self.control_freq
                )));
            }
        }
        Ok(())
    }
}

/// One setpoint of a motion script.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptSample {
    /// Sample time, s.
    pub t: f64,
    /// Lift-motor angle target, rad.
    pub motor_angle_target: f64,
    /// Commanded body velocity, mm/s.
    pub v: f64,
    /// Extra wheel yaw rate on top of any compensation, rad/s.
    pub omega_extra: f64,
    /// Whether the wheels cancel the expansion-induced base rotation.
    pub compensation_on: bool,
}

/// Setpoint timeline for one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionScript {
    pub samples: Vec<ScriptSample>,
    /// Expansion-contraction period used for this robot, when generated.
    pub ec_period: Option<f64>,
}

impl MotionScript {
    pub fn dt(&self) -> f64 {
        self.samples[1].t - self.samples[0].t
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }
}

/// Scripts for every robot of one condition, plus generation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptBundle {
    pub condition: MotionCondition,
    pub params: ScriptParams,
    pub robots: Vec<MotionScript>,
}

/// Triangular command waveform: zero at `t = 0`, peak `amplitude` at half
/// period, back to zero at the full period, periodic thereafter.
pub fn triangular_wave(t: f64, period: f64, amplitude: f64) -> f64 {
    let phase = t.rem_euclid(period);
    let half = period / 2.0;
    if phase <= half {
        amplitude * phase / half
    } else {
        amplitude * (period - phase) / half
    }
}

/// Draw the two per-robot expansion periods for a dual-robot condition.
///
/// Deterministic and portable: a ChaCha8 stream seeded with `seed` yields two
/// 53-bit uniforms `u ∈ [0, 1)` via `(next_u64() >> 11) · 2⁻⁵³`, each mapped
/// to `min + u·(max − min)`. Identical seeds give identical pairs on every
/// platform.
pub fn dual_periods(range: (f64, f64), seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        range.0 + u * (range.1 - range.0)
    };
    (draw(), draw())
}

/// Kinematic context needed to translate motor commands into top-face
/// rotations when generating wheel-executed rotation profiles.
#[derive(Debug, Clone)]
pub struct EcKinematics {
    pub screw: LeadScrew,
    pub table: LookupTable,
}

impl EcKinematics {
    pub fn new(screw: LeadScrew, table: LookupTable) -> Self {
        Self { screw, table }
    }

    pub fn mofu() -> Self {
        Self { screw: LeadScrew::default(), table: LookupTable::mofu() }
    }

    /// Top-face rotation commanded by a lift-motor angle (piecewise-linear
    /// table inverse of the carriage height).
    pub fn theta_for_motor_angle(&self, motor_angle: f64) -> f64 {
        let z = self.table.z_min() + crate::actuation::screw_displacement(&self.screw, motor_angle);
        self.table.inverse(z, InverseMode::Interpolated).theta_cap
    }
}

/// Generate the setpoint scripts for one condition.
///
/// Every script starts contracted (`motor_angle_target = 0` at `t = 0`) and
/// has `duration·control_freq + 1` uniformly spaced samples. Generation is
/// pure, so identical inputs produce byte-identical scripts.
pub fn generate_script(
    condition: &MotionCondition,
    params: &ScriptParams,
    kin: &EcKinematics,
) -> Result<ScriptBundle, ScriptError> {
    MotionCondition::new(condition.kind, condition.robots)?;
    params.validate()?;

    let dt = params.dt();
    let n_steps = (params.duration * params.control_freq).round() as usize;
    let periods: Vec<f64> = if condition.robots == 2 {
        let (a, b) = dual_periods(params.dual_period_range, params.seed);
        vec![a, b]
    } else {
        vec![params.period]
    };

    let mut robots = Vec::with_capacity(periods.len());
    for &period in &periods {
        let mut samples = Vec::with_capacity(n_steps + 1);
        match condition.kind {
            ConditionKind::Nbm => {
                for k in 0..=n_steps {
                    samples.push(ScriptSample {
                        t: k as f64 * dt,
                        motor_angle_target: 0.0,
                        v: 0.0,
                        omega_extra: 0.0,
                        compensation_on: false,
                    });
                }
            }
            ConditionKind::Rm => {
                // Reproduce, with the wheels, the yaw the expansion would
                // induce: integrate forward differences of the commanded
                // base rotation so the pose matches it at every sample.
                let yaw_at = |k: usize| {
                    let motor = triangular_wave(k as f64 * dt, period, params.amplitude);
                    base_yaw(kin.theta_for_motor_angle(motor))
                };
                for k in 0..=n_steps {
                    let omega_extra =
                        if k < n_steps { (yaw_at(k + 1) - yaw_at(k)) / dt } else { 0.0 };
                    samples.push(ScriptSample {
                        t: k as f64 * dt,
                        motor_angle_target: 0.0,
                        v: 0.0,
                        omega_extra,
                        compensation_on: false,
                    });
                }
            }
            ConditionKind::Ec | ConditionKind::RmEc => {
                let compensation_on = condition.kind == ConditionKind::Ec;
                for k in 0..=n_steps {
                    let t = k as f64 * dt;
                    samples.push(ScriptSample {
                        t,
                        motor_angle_target: triangular_wave(t, period, params.amplitude),
                        v: 0.0,
                        omega_extra: 0.0,
                        compensation_on,
                    });
                }
            }
            ConditionKind::Loc | ConditionKind::LocRmEc => {
                let move_samples = (params.loc_move * params.control_freq).round() as usize;
                let stop_samples = (params.loc_stop * params.control_freq).round() as usize;
                let cycle_samples = move_samples + stop_samples;
                let with_ec = condition.kind == ConditionKind::LocRmEc;
                for k in 0..=n_steps {
                    let cycle = k / cycle_samples;
                    let k_in_cycle = k % cycle_samples;
                    let moving = k_in_cycle < move_samples;
                    // Expansion on even cycles, contraction on odd ones,
                    // ramping over the move phase and holding through stops.
                    let motor_angle_target = if !with_ec {
                        0.0
                    } else {
                        let (start, end) = if cycle % 2 == 0 {
                            (0.0, params.amplitude)
                        } else {
                            (params.amplitude, 0.0)
                        };
                        if moving {
                            start + (end - start) * k_in_cycle as f64 / move_samples as f64
                        } else {
                            end
                        }
                    };
                    samples.push(ScriptSample {
                        t: k as f64 * dt,
                        motor_angle_target,
                        v: if moving && k < n_steps { params.cruise_speed } else { 0.0 },
                        omega_extra: 0.0,
                        compensation_on: false,
                    });
                }
            }
        }
        robots.push(MotionScript { samples, ec_period: Some(period) });
    }

    Ok(ScriptBundle { condition: *condition, params: *params, robots })
}

const SCRIPT_CSV_HEADER: &str = "t_s,robot,motor_target_rad,v_mm_s,omega_extra_rad_s,compensation";

impl ScriptBundle {
    /// Write all robots' samples as CSV (`compensation` encoded as 0/1).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{SCRIPT_CSV_HEADER}")?;
        for (robot, script) in self.robots.iter().enumerate() {
            for s in &script.samples {
                writeln!(
                    w,
                    "{:.6},{},{:.9e},{:.9e},{:.9e},{}",
                    s.t,
                    robot,
                    s.motor_angle_target,
                    s.v,
                    s.omega_extra,
                    u8::from(s.compensation_on),
                )?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// TOML sidecar describing how the bundle was generated.
    pub fn metadata_toml(&self) -> String {
        #[derive(Serialize)]
        struct Metadata<'a> {
            format_version: u32,
            condition: String,
            robots: u8,
            seed: u64,
            ec_periods_s: Vec<f64>,
            params: &'a ScriptParams,
        }
        let meta = Metadata {
            format_version: 1,
            condition: self.condition.to_string(),
            robots: self.condition.robots,
            seed: self.params.seed,
            ec_periods_s: self.robots.iter().filter_map(|r| r.ec_period).collect(),
            params: &self.params,
        };
        toml::to_string(&meta).expect("script metadata serializes")
    }
}

/// Parse a script CSV written by [`ScriptBundle::write_csv`] back into
/// per-robot scripts.
pub fn read_script_csv<R: Read>(reader: R) -> Result<Vec<MotionScript>, ScriptError> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = csv_reader.headers().map_err(|e| ScriptError::Malformed(e.to_string()))?;
        let expected: Vec<&str> = SCRIPT_CSV_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(ScriptError::Malformed(format!(
                "unexpected header {:?}, expected {SCRIPT_CSV_HEADER:?}",
                headers
            )));
        }
    }
    let mut per_robot: Vec<Vec<ScriptSample>> = Vec::new();
    for (idx, record) in csv_reader.records().enumerate() {
        let record = record.map_err(|e| ScriptError::Malformed(e.to_string()))?;
        let line = idx + 2;
        let field = |i: usize| -> Result<f64, ScriptError> {
            record
                .get(i)
                .ok_or_else(|| ScriptError::Malformed(format!("line {line}: missing field {i}")))?
                .parse::<f64>()
                .map_err(|e| ScriptError::Malformed(format!("line {line}: {e}")))
        };
        let robot = field(1)? as usize;
        if robot >= 8 {
            return Err(ScriptError::Malformed(format!("line {line}: robot index {robot} out of range")));
        }
        while per_robot.len() <= robot {
            per_robot.push(Vec::new());
        }
        per_robot[robot].push(ScriptSample {
            t: field(0)?,
            motor_angle_target: field(2)?,
            v: field(3)?,
            omega_extra: field(4)?,
            compensation_on: field(5)? != 0.0,
        });
    }
    if per_robot.is_empty() {
        return Err(ScriptError::Malformed("script contains no samples".into()));
    }
    for (robot, samples) in per_robot.iter().enumerate() {
        if samples.len() < 2 {
            return Err(ScriptError::Malformed(format!("robot {robot}: needs at least 2 samples")));
        }
        let dt = samples[1].t - samples[0].t;
        for (i, pair) in samples.windows(2).enumerate() {
            let step = pair[1].t - pair[0].t;
            if (step - dt).abs() > 1e-6 || step <= 0.0 {
                return Err(ScriptError::Malformed(format!(
                    "robot {robot}: non-uniform sample spacing near sample {i}"
                )));
            }
        }
    }
    Ok(per_robot
        .into_iter()
        .map(|samples| MotionScript { samples, ec_period: None })
        .collect())
}
