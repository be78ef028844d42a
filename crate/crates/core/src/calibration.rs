//! Model calibration and validation against measured `(Z, Θ)` pairs.
//!
//! The clearance constant enters the height model additively, so it is
//! fitted as the mean residual between measured heights and the
//! clearance-free model. Validation reproduces the table-based angle
//! estimation: each measured height is inverted through the lookup table
//! (nearest entry) and compared against the measured rotation, per trial.
//!
//! Real jig measurements are not bundled, so the module also ships a seeded
//! synthetic-data generator (model curve plus configurable Gaussian noise)
//! that exercises the whole pipeline end to end. Data produced by it is
//! synthetic and is labelled as such wherever it is written.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::jitterbug::{forward_height, InverseMode, JitterbugError, JitterbugParams, LookupTable};

/// Accepted physical bounds for measured heights, mm.
const Z_BOUNDS: (f64, f64) = (50.0, 400.0);
/// Accepted bounds for measured rotations, rad.
const THETA_BOUNDS: (f64, f64) = (-0.2, 1.2);

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("trial {trial}: measured rotation outside the model domain: {source}")]
    OutOfDomain {
        trial: u32,
        #[source]
        source: JitterbugError,
    },
    #[error("measurement data line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One measured `(Z, Θ)` pair from a validation experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSample {
    pub trial: u32,
    /// Measured mechanism height, mm.
    pub z_measured: f64,
    /// Measured top-face rotation, rad.
    pub theta_measured: f64,
}

/// Read measurement CSV: header `trial,z_mm,theta_rad`, UTF-8, lines
/// starting with `#` ignored.
pub fn read_measurements<R: Read>(reader: R) -> Result<Vec<MeasurementSample>, CalibrationError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    {
        let headers = csv_reader
            .headers()
            .map_err(|e| CalibrationError::Malformed { line: 1, msg: e.to_string() })?;
        let got: Vec<&str> = headers.iter().collect();
        if got != ["trial", "z_mm", "theta_rad"] {
            return Err(CalibrationError::Malformed {
                line: 1,
                msg: format!("expected header trial,z_mm,theta_rad, got {got:?}"),
            });
        }
    }
    let mut samples = Vec::new();
    for record in csv_reader.records() {
        let record = record.map_err(|e| CalibrationError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |i: usize, name: &str| -> Result<f64, CalibrationError> {
            record
                .get(i)
                .ok_or_else(|| CalibrationError::Malformed {
                    line,
                    msg: format!("missing column {name}"),
                })?
                .parse::<f64>()
                .map_err(|e| CalibrationError::Malformed { line, msg: format!("{name}: {e}") })
        };
        let trial = parse(0, "trial")? as u32;
        let z_measured = parse(1, "z_mm")?;
        let theta_measured = parse(2, "theta_rad")?;
        if !(Z_BOUNDS.0..=Z_BOUNDS.1).contains(&z_measured) {
            return Err(CalibrationError::Malformed {
                line,
                msg: format!("z = {z_measured} mm outside plausible bounds {Z_BOUNDS:?}"),
            });
        }
        if !(THETA_BOUNDS.0..=THETA_BOUNDS.1).contains(&theta_measured) {
            return Err(CalibrationError::Malformed {
                line,
                msg: format!("theta = {theta_measured} rad outside plausible bounds {THETA_BOUNDS:?}"),
            });
        }
        samples.push(MeasurementSample { trial, z_measured, theta_measured });
    }
    Ok(samples)
}

/// Write measurement CSV in the format accepted by [`read_measurements`].
pub fn write_measurements<W: Write>(
    mut w: W,
    samples: &[MeasurementSample],
    comment: Option<&str>,
) -> io::Result<()> {
    if let Some(comment) = comment {
        for line in comment.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    writeln!(w, "trial,z_mm,theta_rad")?;
    for s in samples {
        writeln!(w, "{},{:.9e},{:.9e}", s.trial, s.z_measured, s.theta_measured)?;
    }
    Ok(())
}

/// Least-squares estimate of the clearance constant.
///
/// Clearance additivity makes this a closed form: the mean over samples of
/// `z_measured − Z_{C=0}(θ_measured)`.
pub fn fit_clearance(
    samples: &[MeasurementSample],
    params: &JitterbugParams,
) -> Result<f64, CalibrationError> {
    if samples.is_empty() {
        return Err(CalibrationError::EmptyDataset);
    }
    let clearance_free = params.with_clearance(0.0);
    let mut sum = 0.0;
    for s in samples {
        let model = forward_height(&clearance_free, s.theta_measured)
            .map_err(|source| CalibrationError::OutOfDomain { trial: s.trial, source })?;
        sum += s.z_measured - model;
    }
    Ok(sum / samples.len() as f64)
}

/// Rotation RMSE of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRmse {
    pub trial: u32,
    pub n: usize,
    pub rmse_rad: f64,
}

/// Per-trial and pooled rotation RMSE.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseReport {
    pub per_trial: Vec<TrialRmse>,
    pub pooled_rad: f64,
}

/// RMSE between measured rotations and the rotations the controller would
/// estimate for the measured heights (nearest table entry).
pub fn rmse_angle(
    samples: &[MeasurementSample],
    table: &LookupTable,
) -> Result<RmseReport, CalibrationError> {
    if samples.is_empty() {
        return Err(CalibrationError::EmptyDataset);
    }
    let mut by_trial: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    let mut pooled = 0.0;
    for s in samples {
        let predicted = table.inverse(s.z_measured, InverseMode::Nearest).theta_cap;
        let sq = (predicted - s.theta_measured).powi(2);
        let entry = by_trial.entry(s.trial).or_insert((0.0, 0));
        entry.0 += sq;
        entry.1 += 1;
        pooled += sq;
    }
    let per_trial = by_trial
        .into_iter()
        .map(|(trial, (sum, n))| TrialRmse { trial, n, rmse_rad: (sum / n as f64).sqrt() })
        .collect();
    Ok(RmseReport { per_trial, pooled_rad: (pooled / samples.len() as f64).sqrt() })
}

/// Result of matching the model height range to the measured overall range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffsetFit {
    /// Frame-plus-wheels offset between mechanism height and overall height.
    pub offset: f64,
    /// Half the stroke mismatch between model and measurement; reported, not
    /// hidden.
    pub residual: f64,
}

/// Fit the height offset from the model's `[z_min, z_max]` and the measured
/// overall range: the offset is the mean of the two endpoint differences,
/// the residual half their disagreement.
pub fn fit_height_offset(
    z_min_model: f64,
    z_max_model: f64,
    overall_min: f64,
    overall_max: f64,
) -> OffsetFit {
    debug_assert!(z_max_model > z_min_model);
    debug_assert!(overall_max > overall_min);
    let low = overall_min - z_min_model;
    let high = overall_max - z_max_model;
    OffsetFit { offset: (low + high) / 2.0, residual: (low - high).abs() / 2.0 }
}

/// Rotations at the table nodes.
pub fn node_thetas(table: &LookupTable) -> Vec<f64> {
    table.entries().iter().map(|e| e.theta_cap).collect()
}

/// Rotations halfway between consecutive table nodes.
pub fn midpoint_thetas(table: &LookupTable) -> Vec<f64> {
    table.entries().windows(2).map(|w| (w[0].theta_cap + w[1].theta_cap) / 2.0).collect()
}

/// `n` seeded uniform rotations in `[0, theta_max]`.
pub fn uniform_thetas(theta_max: f64, n: usize, seed: u64) -> Vec<f64> {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            u * theta_max
        })
        .collect()
}

/// Generate synthetic measurement trials on the model curve.
///
/// For every trial and every rotation in `thetas`, the sample carries
/// `z = Z(θ) + N(0, sigma_z)` and `θ_measured = θ + N(0, sigma_theta)`,
/// drawn from a ChaCha8 stream seeded with `seed`. Trials are numbered from
/// 1. The output is synthetic data for pipeline testing, not a record of any
/// physical measurement.
pub fn synthetic_samples(
    params: &JitterbugParams,
    thetas: &[f64],
    trials: u32,
    sigma_z: f64,
    sigma_theta: f64,
    seed: u64,
) -> Result<Vec<MeasurementSample>, CalibrationError> {
    if thetas.is_empty() || trials == 0 {
        return Err(CalibrationError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_z = Normal::new(0.0, sigma_z.max(0.0)).expect("sigma is non-negative");
    let noise_theta = Normal::new(0.0, sigma_theta.max(0.0)).expect("sigma is non-negative");
    let mut samples = Vec::with_capacity(thetas.len() * trials as usize);
    for trial in 1..=trials {
        for &theta in thetas {
            let z = forward_height(params, theta)
                .map_err(|source| CalibrationError::OutOfDomain { trial, source })?;
            samples.push(MeasurementSample {
                trial,
                z_measured: z + noise_z.sample(&mut rng),
                theta_measured: theta + noise_theta.sample(&mut rng),
            });
        }
    }
    Ok(samples)
}

/// Calibration summary written by the command-line front end.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub samples: usize,
    pub fitted_clearance_mm: f64,
    pub height_offset_mm: f64,
    pub height_offset_residual_mm: f64,
    pub rmse: RmseReport,
}

impl CalibrationReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> JitterbugParams {
        JitterbugParams::mofu()
    }

    fn table() -> LookupTable {
        LookupTable::mofu()
    }

    #[test]
    fn fit_recovers_the_clearance_exactly_without_noise() {
        let t = table();
        let samples =
            synthetic_samples(&params(), &node_thetas(&t), 3, 0.0, 0.0, 1).unwrap();
        let fitted = fit_clearance(&samples, &params()).unwrap();
        assert_relative_eq!(fitted, 13.0, epsilon = 1e-9);
    }

    #[test]
    fn fit_on_a_single_sample_is_its_residual() {
        let p = params();
        let z_model_c0 = forward_height(&p.with_clearance(0.0), 0.4).unwrap();
        let sample = MeasurementSample { trial: 1, z_measured: z_model_c0 + 21.5, theta_measured: 0.4 };
        let fitted = fit_clearance(&[sample], &p).unwrap();
        assert_relative_eq!(fitted, 21.5, epsilon = 1e-9);
    }

    #[test]
    fn fit_rejects_empty_and_out_of_domain_data() {
        assert!(matches!(fit_clearance(&[], &params()), Err(CalibrationError::EmptyDataset)));
        let bad = MeasurementSample { trial: 2, z_measured: 140.0, theta_measured: -0.15 };
        assert!(matches!(
            fit_clearance(&[bad], &params()),
            Err(CalibrationError::OutOfDomain { trial: 2, .. })
        ));
    }

    #[test]
    fn fit_tolerates_gaussian_height_noise() {
        // 1000 seeded resamples at sigma_z = 0.5 mm, 45 points each: the
        // estimate stays within 0.25 mm of the true 13 mm almost always.
        let t = table();
        let thetas = node_thetas(&t);
        let mut inside = 0;
        for seed in 0..1000u64 {
            let samples = synthetic_samples(&params(), &thetas, 1, 0.5, 0.0, seed).unwrap();
            let fitted = fit_clearance(&samples, &params()).unwrap();
            if (fitted - 13.0).abs() < 0.25 {
                inside += 1;
            }
        }
        assert!(inside >= 990, "only {inside}/1000 fits within 0.25 mm");
    }

    #[test]
    fn rmse_is_zero_on_node_aligned_data() {
        let t = table();
        let samples = synthetic_samples(&params(), &node_thetas(&t), 3, 0.0, 0.0, 1).unwrap();
        let report = rmse_angle(&samples, &t).unwrap();
        assert_eq!(report.per_trial.len(), 3);
        for trial in &report.per_trial {
            assert_eq!(trial.rmse_rad, 0.0);
            assert_eq!(trial.n, 45);
        }
        assert_eq!(report.pooled_rad, 0.0);
    }

    #[test]
    fn rmse_on_midpoints_is_the_quantization_bound() {
        let t = table();
        let samples = synthetic_samples(&params(), &midpoint_thetas(&t), 1, 0.0, 0.0, 1).unwrap();
        let report = rmse_angle(&samples, &t).unwrap();
        let half_step = t.grid_step() / 2.0;
        assert!(report.pooled_rad <= half_step + 1e-9, "rmse {}", report.pooled_rad);
        assert!(report.pooled_rad > 0.011);
    }

    #[test]
    fn rmse_shift_obeys_the_triangle_inequality() {
        let t = table();
        let samples = synthetic_samples(&params(), &uniform_thetas(1.0, 40, 5), 1, 0.0, 0.02, 7)
            .unwrap();
        let base = rmse_angle(&samples, &t).unwrap().pooled_rad;
        for delta in [-0.05, 0.01, 0.08] {
            let shifted: Vec<MeasurementSample> = samples
                .iter()
                .map(|s| MeasurementSample { theta_measured: s.theta_measured + delta, ..*s })
                .collect();
            let moved = rmse_angle(&shifted, &t).unwrap().pooled_rad;
            assert!(
                (moved - base).abs() <= delta.abs() + 1e-12,
                "delta {delta}: {base} -> {moved}"
            );
        }
    }

    #[test]
    fn offset_fit_examples() {
        let exact = fit_height_offset(140.0, 210.0, 210.0, 280.0);
        assert_relative_eq!(exact.offset, 70.0);
        assert_relative_eq!(exact.residual, 0.0);

        // Frozen from the model endpoints: stroke 79.65 mm vs the 70 mm
        // overall range.
        let p = params();
        let z0 = forward_height(&p, 0.0).unwrap();
        let z1 = forward_height(&p, 1.0).unwrap();
        let fit = fit_height_offset(z0, z1, 210.0, 280.0);
        assert_relative_eq!(fit.offset, 69.9768030760319, epsilon = 1e-9);
        assert_relative_eq!(fit.residual, 4.82401528720822, epsilon = 1e-9);

        let shifted = fit_height_offset(100.0, 170.0, 100.0 + 42.0, 170.0 + 42.0);
        assert_relative_eq!(shifted.offset, 42.0);
        assert_relative_eq!(shifted.residual, 0.0);
    }

    #[test]
    fn csv_roundtrip_with_comments() {
        let t = table();
        let samples = synthetic_samples(&params(), &node_thetas(&t), 2, 0.3, 0.01, 9).unwrap();
        let mut buf = Vec::new();
        write_measurements(&mut buf, &samples, Some("synthetic test data")).unwrap();
        let parsed = read_measurements(buf.as_slice()).unwrap();
        assert_eq!(parsed.len(), samples.len());
        // Ten significant digits in the file.
        for (a, b) in parsed.iter().zip(&samples) {
            assert_eq!(a.trial, b.trial);
            assert!((a.z_measured - b.z_measured).abs() < 1e-6);
            assert!((a.theta_measured - b.theta_measured).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_reader_rejects_bad_input() {
        let missing_header = "a,b,c\n1,140.0,0.1\n";
        assert!(matches!(
            read_measurements(missing_header.as_bytes()),
            Err(CalibrationError::Malformed { line: 1, .. })
        ));

        let bad_number = "trial,z_mm,theta_rad\n1,140.0,0.1\n2,oops,0.2\n";
        match read_measurements(bad_number.as_bytes()) {
            Err(CalibrationError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed error, got {other:?}"),
        }

        let out_of_bounds = "trial,z_mm,theta_rad\n1,700.0,0.1\n";
        assert!(read_measurements(out_of_bounds.as_bytes()).is_err());
    }

    #[test]
    fn synthetic_generation_is_seed_deterministic() {
        let thetas = uniform_thetas(1.0, 45, 3);
        assert_eq!(thetas, uniform_thetas(1.0, 45, 3));
        let a = synthetic_samples(&params(), &thetas, 3, 0.5, 0.03, 11).unwrap();
        let b = synthetic_samples(&params(), &thetas, 3, 0.5, 0.03, 11).unwrap();
        assert_eq!(a, b);
        let c = synthetic_samples(&params(), &thetas, 3, 0.5, 0.03, 12).unwrap();
        assert_ne!(a, c);
    }
}
