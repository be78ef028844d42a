//! `mofu` — command-line front end for the expansion-contraction robot
//! library: kinematics queries, lookup-table generation, motion-script
//! generation, simulation runs, and model calibration/validation.
//!
//! Exit codes: 0 on success, 1 on data/domain errors, 2 on usage errors.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mofu_core::calibration::{
    self, fit_clearance, fit_height_offset, read_measurements, rmse_angle, write_measurements,
    CalibrationReport, MeasurementSample, RmseReport,
};
use mofu_core::jitterbug::{base_yaw, forward_height, InverseMode};
use mofu_core::scripting::{
    generate_script, read_script_csv, ConditionKind, MotionCondition, MotionScript, ScriptBundle,
    ScriptParams,
};
use mofu_core::sim::{trace_metadata_toml, Simulator, Trace};

use config::MofuConfig;

#[derive(Parser)]
#[command(name = "mofu", version, about = "Expansion-contraction robot simulator")]
struct Cli {
    /// Config file (TOML); defaults to $MOFU_CONFIG, then built-in values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward kinematics: height and base yaw for a top-face rotation.
    Fk {
        /// Top-face rotation, rad (deg with --degrees).
        theta: f64,
        /// Interpret the rotation argument in degrees.
        #[arg(long)]
        degrees: bool,
    },
    /// Inverse kinematics: rotation for a target mechanism height.
    Ik {
        /// Target mechanism height, mm.
        z: f64,
        /// Table inversion mode.
        #[arg(long, value_enum, default_value_t = IkMode::Nearest)]
        mode: IkMode,
    },
    /// Generate the rotation-to-height lookup table as CSV.
    Table {
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of table entries.
        #[arg(long)]
        entries: Option<usize>,
        /// Upper end of the rotation domain, rad.
        #[arg(long)]
        theta_max: Option<f64>,
    },
    /// Generate the setpoint script for a motion condition.
    Script {
        /// Condition name: NBM, RM, EC, RM+EC, LOC or LOC+RM+EC.
        #[arg(long)]
        condition: String,
        /// Number of robots (1 or 2).
        #[arg(long, default_value_t = 1)]
        robots: u8,
        #[command(flatten)]
        overrides: ScriptOverrides,
        /// Output CSV (default `<condition>.csv`); a `.meta.toml` sidecar is
        /// written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the simulator on a condition or a script file and export traces.
    Simulate {
        /// Condition name to generate and run.
        #[arg(long, conflicts_with_all = ["script", "all_conditions"])]
        condition: Option<String>,
        /// Number of robots (1 or 2).
        #[arg(long, default_value_t = 1)]
        robots: u8,
        /// Script CSV to run instead of generating one.
        #[arg(long, conflicts_with = "all_conditions")]
        script: Option<PathBuf>,
        /// Run every condition of the experiment matrix.
        #[arg(long)]
        all_conditions: bool,
        /// Trace output CSV (single condition/script runs).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output directory for --all-conditions.
        #[arg(long, default_value = "traces")]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: ScriptOverrides,
    },
    /// Fit the clearance constant and height offset from measurement data.
    Calibrate {
        /// Measurement CSV (`trial,z_mm,theta_rad`).
        #[arg(long)]
        data: PathBuf,
        /// Measured overall height of the contracted robot, mm.
        #[arg(long, default_value_t = 210.0)]
        overall_min: f64,
        /// Measured overall height of the expanded robot, mm.
        #[arg(long, default_value_t = 280.0)]
        overall_max: f64,
        /// Write the calibration report (TOML) here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate the model: per-trial rotation RMSE against measurements.
    Validate {
        /// Measurement CSV (`trial,z_mm,theta_rad`).
        #[arg(long, conflicts_with = "synthetic")]
        data: Option<PathBuf>,
        /// Generate seeded synthetic measurements instead of reading a file.
        #[arg(long, value_enum)]
        synthetic: Option<Placement>,
        /// Points per trial for --synthetic uniform.
        #[arg(long, default_value_t = 45)]
        points: usize,
        /// Number of synthetic trials.
        #[arg(long, default_value_t = 3)]
        trials: u32,
        /// Gaussian height noise for synthetic data, mm.
        #[arg(long, default_value_t = 0.0)]
        sigma_z: f64,
        /// Gaussian rotation noise for synthetic data, rad.
        #[arg(long, default_value_t = 0.0)]
        sigma_theta: f64,
        /// Seed for synthetic data (defaults to the config script seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the synthetic dataset to this CSV.
        #[arg(long)]
        write_data: Option<PathBuf>,
        /// Write the RMSE report (TOML) here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IkMode {
    Nearest,
    Interpolated,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Placement {
    /// Rotations exactly on the table nodes.
    Nodes,
    /// Rotations halfway between table nodes.
    Midpoints,
    /// Seeded uniform rotations over the table domain.
    Uniform,
}

/// Script parameters that may be overridden on the command line.
#[derive(Debug, Args)]
struct ScriptOverrides {
    /// Seed for the dual-robot period draw.
    #[arg(long)]
    seed: Option<u64>,
    /// Expansion-contraction period, s.
    #[arg(long)]
    period: Option<f64>,
    /// Motor-angle amplitude, rad.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Script duration, s.
    #[arg(long)]
    duration: Option<f64>,
    /// Locomotion cruise speed, mm/s.
    #[arg(long)]
    cruise_speed: Option<f64>,
}

impl ScriptOverrides {
    fn apply(&self, base: &ScriptParams) -> ScriptParams {
        ScriptParams {
            seed: self.seed.unwrap_or(base.seed),
            period: self.period.unwrap_or(base.period),
            amplitude: self.amplitude.unwrap_or(base.amplitude),
            duration: self.duration.unwrap_or(base.duration),
            cruise_speed: self.cruise_speed.unwrap_or(base.cruise_speed),
            ..*base
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = MofuConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Fk { theta, degrees } => cmd_fk(&cfg, theta, degrees),
        Command::Ik { z, mode } => cmd_ik(&cfg, z, mode),
        Command::Table { out, entries, theta_max } => cmd_table(&cfg, out, entries, theta_max),
        Command::Script { condition, robots, overrides, out } => {
            cmd_script(&cfg, &condition, robots, &overrides, out)
        }
        Command::Simulate { condition, robots, script, all_conditions, out, out_dir, overrides } => {
            cmd_simulate(&cfg, condition, robots, script, all_conditions, out, &out_dir, &overrides)
        }
        Command::Calibrate { data, overall_min, overall_max, out } => {
            cmd_calibrate(&cfg, &data, overall_min, overall_max, out)
        }
        Command::Validate {
            data,
            synthetic,
            points,
            trials,
            sigma_z,
            sigma_theta,
            seed,
            write_data,
            out,
        } => cmd_validate(
            &cfg, data, synthetic, points, trials, sigma_z, sigma_theta, seed, write_data, out,
        ),
    }
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_fk(cfg: &MofuConfig, theta: f64, degrees: bool) -> Result<()> {
    let theta = if degrees { theta.to_radians() } else { theta };
    if !(0.0..=cfg.theta_max).contains(&theta) {
        bail!(
            "theta = {theta} rad is outside the mechanism domain [0, {}] rad",
            cfg.theta_max
        );
    }
    let z = forward_height(&cfg.params, theta)?;
    println!("theta_rad={:.9e} z_mm={:.9e} base_yaw_rad={:.9e}", theta, z, base_yaw(theta));
    Ok(())
}

fn cmd_ik(cfg: &MofuConfig, z: f64, mode: IkMode) -> Result<()> {
    let table = cfg.table()?;
    let (mode_name, inverse_mode) = match mode {
        IkMode::Nearest => ("nearest", InverseMode::Nearest),
        IkMode::Interpolated => ("interpolated", InverseMode::Interpolated),
    };
    let sol = table.inverse(z, inverse_mode);
    println!(
        "z_mm={:.9e} theta_rad={:.9e} mode={} saturated={}",
        z, sol.theta_cap, mode_name, sol.saturated
    );
    Ok(())
}

fn cmd_table(
    cfg: &MofuConfig,
    out: Option<PathBuf>,
    entries: Option<usize>,
    theta_max: Option<f64>,
) -> Result<()> {
    let table = mofu_core::jitterbug::LookupTable::build(
        &cfg.params,
        theta_max.unwrap_or(cfg.theta_max),
        entries.unwrap_or(cfg.table_entries),
    )?;
    let csv = table.to_csv_string();
    match out {
        Some(path) => {
            write_output(&path, &csv)?;
            println!(
                "table entries={} theta_max_rad={:.9e} z_min_mm={:.9e} z_max_mm={:.9e} out={}",
                table.len(),
                table.theta_max(),
                table.z_min(),
                table.z_max(),
                path.display()
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn parse_condition(name: &str, robots: u8) -> Result<MotionCondition> {
    let kind: ConditionKind = name.parse()?;
    Ok(MotionCondition::new(kind, robots)?)
}

fn generate_bundle(
    cfg: &MofuConfig,
    condition: &MotionCondition,
    overrides: &ScriptOverrides,
) -> Result<ScriptBundle> {
    let params = overrides.apply(&cfg.script);
    Ok(generate_script(condition, &params, &cfg.kinematics()?)?)
}

fn cmd_script(
    cfg: &MofuConfig,
    condition: &str,
    robots: u8,
    overrides: &ScriptOverrides,
    out: Option<PathBuf>,
) -> Result<()> {
    let condition = parse_condition(condition, robots)?;
    let bundle = generate_bundle(cfg, &condition, overrides)?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", condition.file_stem())));
    write_output(&out, &bundle.to_csv_string())?;
    let sidecar = sidecar_path(&out);
    write_output(&sidecar, &bundle.metadata_toml())?;
    for (robot, script) in bundle.robots.iter().enumerate() {
        println!(
            "condition={} robot={} samples={} period_s={:.9e} out={}",
            condition,
            robot,
            script.samples.len(),
            script.ec_period.unwrap_or(f64::NAN),
            out.display()
        );
    }
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".meta.toml");
    PathBuf::from(name)
}

/// Trace file for one robot: `trace.csv` for a single robot, or
/// `trace_r0.csv`/`trace_r1.csv` for dual runs.
fn robot_trace_path(base: &Path, robot: usize, robots: usize) -> PathBuf {
    if robots == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!("{stem}_r{robot}.{ext}"))
}

fn simulate_scripts(
    cfg: &MofuConfig,
    scripts: &[MotionScript],
    label: &str,
    out_base: &Path,
) -> Result<Vec<Trace>> {
    let sim = Simulator::new(cfg.sim_config()?)?;
    let mut traces = Vec::with_capacity(scripts.len());
    for (robot, script) in scripts.iter().enumerate() {
        let trace = sim.run(script)?;
        let path = robot_trace_path(out_base, robot, scripts.len());
        write_output(&path, &trace.to_csv_string())?;
        let source = if scripts.len() == 1 {
            label.to_string()
        } else {
            format!("{label} robot {robot}")
        };
        write_output(&sidecar_path(&path), &trace_metadata_toml(sim.config(), &source, &trace))?;
        let pose = trace.final_pose();
        println!(
            "source={} robot={} net_yaw_rad={:.9e} stroke_mm={:.9e} final_x_mm={:.9e} final_y_mm={:.9e} final_yaw_rad={:.9e} clipped_steps={} out={}",
            label,
            robot,
            trace.net_yaw(),
            trace.stroke(),
            pose.x,
            pose.y,
            pose.yaw,
            trace.clipped_steps(),
            path.display()
        );
        traces.push(trace);
    }
    Ok(traces)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    cfg: &MofuConfig,
    condition: Option<String>,
    robots: u8,
    script: Option<PathBuf>,
    all_conditions: bool,
    out: Option<PathBuf>,
    out_dir: &Path,
    overrides: &ScriptOverrides,
) -> Result<()> {
    if all_conditions {
        for condition in MotionCondition::all() {
            let bundle = generate_bundle(cfg, &condition, overrides)?;
            let base = out_dir.join(format!("{}_trace.csv", condition.file_stem()));
            simulate_scripts(cfg, &bundle.robots, &condition.to_string(), &base)?;
        }
        return Ok(());
    }
    if let Some(path) = script {
        let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let scripts =
            read_script_csv(file).with_context(|| format!("parsing {}", path.display()))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("script").to_string();
        let base = out.unwrap_or_else(|| PathBuf::from(format!("{stem}_trace.csv")));
        simulate_scripts(cfg, &scripts, &stem, &base)?;
        return Ok(());
    }
    let Some(name) = condition else {
        bail!("choose one of --condition, --script or --all-conditions");
    };
    let condition = parse_condition(&name, robots)?;
    let bundle = generate_bundle(cfg, &condition, overrides)?;
    let base =
        out.unwrap_or_else(|| PathBuf::from(format!("{}_trace.csv", condition.file_stem())));
    simulate_scripts(cfg, &bundle.robots, &condition.to_string(), &base)?;
    Ok(())
}

fn print_rmse(report: &RmseReport) {
    for trial in &report.per_trial {
        println!("trial={} n={} rmse_rad={:.9e}", trial.trial, trial.n, trial.rmse_rad);
    }
    println!("pooled_rmse_rad={:.9e}", report.pooled_rad);
}

fn cmd_calibrate(
    cfg: &MofuConfig,
    data: &Path,
    overall_min: f64,
    overall_max: f64,
    out: Option<PathBuf>,
) -> Result<()> {
    let file = fs::File::open(data).with_context(|| format!("opening {}", data.display()))?;
    let samples =
        read_measurements(file).with_context(|| format!("reading {}", data.display()))?;
    let fitted_c = fit_clearance(&samples, &cfg.params)?;
    let calibrated = cfg.params.with_clearance(fitted_c.max(0.0));
    let table = mofu_core::jitterbug::LookupTable::build(
        &calibrated,
        cfg.theta_max,
        cfg.table_entries,
    )?;
    let rmse = rmse_angle(&samples, &table)?;
    let offset = fit_height_offset(table.z_min(), table.z_max(), overall_min, overall_max);
    let report = CalibrationReport {
        samples: samples.len(),
        fitted_clearance_mm: fitted_c,
        height_offset_mm: offset.offset,
        height_offset_residual_mm: offset.residual,
        rmse,
    };
    println!("samples={} fitted_c_mm={:.9e}", report.samples, report.fitted_clearance_mm);
    println!(
        "height_offset_mm={:.9e} height_offset_residual_mm={:.9e}",
        report.height_offset_mm, report.height_offset_residual_mm
    );
    print_rmse(&report.rmse);
    match out {
        Some(path) => write_output(&path, &report.to_toml())?,
        None => print!("{}", report.to_toml()),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_validate(
    cfg: &MofuConfig,
    data: Option<PathBuf>,
    synthetic: Option<Placement>,
    points: usize,
    trials: u32,
    sigma_z: f64,
    sigma_theta: f64,
    seed: Option<u64>,
    write_data: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let table = cfg.table()?;
    let samples: Vec<MeasurementSample> = match (&data, synthetic) {
        (Some(path), None) => {
            let file =
                fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            read_measurements(file).with_context(|| format!("reading {}", path.display()))?
        }
        (None, Some(placement)) => {
            let seed = seed.unwrap_or(cfg.script.seed);
            let thetas = match placement {
                Placement::Nodes => calibration::node_thetas(&table),
                Placement::Midpoints => calibration::midpoint_thetas(&table),
                Placement::Uniform => calibration::uniform_thetas(cfg.theta_max, points, seed),
            };
            calibration::synthetic_samples(&cfg.params, &thetas, trials, sigma_z, sigma_theta, seed)?
        }
        _ => bail!("choose exactly one of --data or --synthetic"),
    };
    if let Some(path) = &write_data {
        let mut buf = Vec::new();
        write_measurements(
            &mut buf,
            &samples,
            Some("synthetic data generated from the height model; not a physical measurement"),
        )?;
        write_output(path, std::str::from_utf8(&buf).expect("CSV is ASCII"))?;
    }
    let report = rmse_angle(&samples, &table)?;
    println!("samples={}", samples.len());
    print_rmse(&report);
    if let Some(path) = out {
        let toml = toml::to_string(&report).expect("report serializes");
        write_output(&path, &toml)?;
    }
    Ok(())
}
