//! Configuration file handling.
//!
//! Every knob defaults to the production value, a TOML config file overrides
//! the defaults, and command-line flags override the config. Unknown keys in
//! the file are rejected. The file path comes from `--config` or the
//! `MOFU_CONFIG` environment variable.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use mofu_core::jitterbug::{forward_height, JitterbugParams, LookupTable};
use mofu_core::scripting::{EcKinematics, ScriptParams};
use mofu_core::sim::{LiftMode, SimConfig};
use mofu_core::{DriveGeometry, LeadScrew, MotorLimits, PidGains};

/// Resolved configuration with every value filled in.
#[derive(Debug, Clone)]
pub struct MofuConfig {
    pub params: JitterbugParams,
    pub table_entries: usize,
    pub theta_max: f64,
    pub geometry: DriveGeometry,
    pub gains: PidGains,
    pub motor_limits: MotorLimits,
    pub screw: LeadScrew,
    pub script: ScriptParams,
    pub dt: f64,
    /// When absent, derived so the contracted overall height is 210 mm.
    pub height_offset: Option<f64>,
    pub flip_base_rotation: bool,
}

impl Default for MofuConfig {
    fn default() -> Self {
        Self {
            params: JitterbugParams::mofu(),
            table_entries: 45,
            theta_max: 1.0,
            geometry: DriveGeometry::default(),
            gains: PidGains::default(),
            motor_limits: MotorLimits::default(),
            screw: LeadScrew::default(),
            script: ScriptParams::default(),
            dt: 0.1,
            height_offset: None,
            flip_base_rotation: false,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    jitterbug: Option<JitterbugSection>,
    table: Option<TableSection>,
    drive: Option<DriveSection>,
    gains: Option<GainsSection>,
    motor: Option<MotorSection>,
    screw: Option<ScrewSection>,
    script: Option<ScriptSection>,
    sim: Option<SimSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct JitterbugSection {
    r_a: Option<f64>,
    r_b: Option<f64>,
    theta_dh_rad: Option<f64>,
    clearance_c: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableSection {
    entries: Option<usize>,
    theta_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DriveSection {
    wheel_radius: Option<f64>,
    track: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsSection {
    kp: Option<f64>,
    ki: Option<f64>,
    kd: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotorSection {
    rate_limit: Option<f64>,
    integral_limit: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScrewSection {
    lead: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptSection {
    period: Option<f64>,
    amplitude: Option<f64>,
    control_freq: Option<f64>,
    duration: Option<f64>,
    dual_period_min: Option<f64>,
    dual_period_max: Option<f64>,
    loc_move: Option<f64>,
    loc_stop: Option<f64>,
    cruise_speed: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    dt: Option<f64>,
    height_offset: Option<f64>,
    flip_base_rotation: Option<bool>,
}

impl MofuConfig {
    /// Load from `path`, falling back to `MOFU_CONFIG`, falling back to the
    /// built-in defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let env_path = std::env::var_os("MOFU_CONFIG").map(std::path::PathBuf::from);
        let chosen = path.map(Path::to_path_buf).or(env_path);
        let Some(file) = chosen else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(&file)
            .with_context(|| format!("reading config {}", file.display()))?;
        let parsed: ConfigFile = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", file.display()))?;
        Self::from_file(parsed).with_context(|| format!("validating config {}", file.display()))
    }

    fn from_file(file: ConfigFile) -> Result<Self> {
        let defaults = Self::default();
        let j = file.jitterbug.unwrap_or_default();
        let params = JitterbugParams::new(
            j.r_a.unwrap_or(defaults.params.r_a),
            j.r_b.unwrap_or(defaults.params.r_b),
            j.theta_dh_rad.unwrap_or(defaults.params.theta_dh),
            j.clearance_c.unwrap_or(defaults.params.clearance_c),
        )?;
        let t = file.table.unwrap_or_default();
        let d = file.drive.unwrap_or_default();
        let geometry = DriveGeometry::new(
            d.wheel_radius.unwrap_or(defaults.geometry.wheel_radius),
            d.track.unwrap_or(defaults.geometry.track),
        )?;
        let g = file.gains.unwrap_or_default();
        let gains = PidGains::new(
            g.kp.unwrap_or(defaults.gains.kp),
            g.ki.unwrap_or(defaults.gains.ki),
            g.kd.unwrap_or(defaults.gains.kd),
        )?;
        let m = file.motor.unwrap_or_default();
        let motor_limits = MotorLimits {
            rate_limit: m.rate_limit.unwrap_or(defaults.motor_limits.rate_limit),
            integral_limit: m.integral_limit.unwrap_or(defaults.motor_limits.integral_limit),
        };
        let screw = LeadScrew::new(
            file.screw.unwrap_or_default().lead.unwrap_or(defaults.screw.lead),
        )?;
        let s = file.script.unwrap_or_default();
        let script = ScriptParams {
            period: s.period.unwrap_or(defaults.script.period),
            amplitude: s.amplitude.unwrap_or(defaults.script.amplitude),
            control_freq: s.control_freq.unwrap_or(defaults.script.control_freq),
            duration: s.duration.unwrap_or(defaults.script.duration),
            dual_period_range: (
                s.dual_period_min.unwrap_or(defaults.script.dual_period_range.0),
                s.dual_period_max.unwrap_or(defaults.script.dual_period_range.1),
            ),
            loc_move: s.loc_move.unwrap_or(defaults.script.loc_move),
            loc_stop: s.loc_stop.unwrap_or(defaults.script.loc_stop),
            cruise_speed: s.cruise_speed.unwrap_or(defaults.script.cruise_speed),
            seed: s.seed.unwrap_or(defaults.script.seed),
        };
        script.validate()?;
        let sim = file.sim.unwrap_or_default();
        Ok(Self {
            params,
            table_entries: t.entries.unwrap_or(defaults.table_entries),
            theta_max: t.theta_max.unwrap_or(defaults.theta_max),
            geometry,
            gains,
            motor_limits,
            screw,
            script,
            dt: sim.dt.unwrap_or(defaults.dt),
            height_offset: sim.height_offset,
            flip_base_rotation: sim.flip_base_rotation.unwrap_or(defaults.flip_base_rotation),
        })
    }

    pub fn table(&self) -> Result<LookupTable> {
        Ok(LookupTable::build(&self.params, self.theta_max, self.table_entries)?)
    }

    pub fn kinematics(&self) -> Result<EcKinematics> {
        Ok(EcKinematics::new(self.screw, self.table()?))
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let height_offset = match self.height_offset {
            Some(offset) => offset,
            None => 210.0 - forward_height(&self.params, 0.0)?,
        };
        Ok(SimConfig {
            dt: self.dt,
            height_offset,
            geometry: self.geometry,
            params: self.params,
            gains: self.gains,
            screw: self.screw,
            motor_limits: self.motor_limits,
            table_entries: self.table_entries,
            theta_max: self.theta_max,
            flip_base_rotation: self.flip_base_rotation,
            lift_mode: LiftMode::Pid,
        })
    }
}
