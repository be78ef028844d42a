//! Forward and inverse kinematics of the Jitterbug expansion mechanism.
//!
//! The mechanism converts a rotation `Θ` of the top face relative to the base
//! into a height change. With component radii
//!
//! ```text
//! r_x(μ) = R_A cos μ
//! r_y(μ) = R_A sin μ
//! r_z(μ) = (R_A cos θ_dh cos μ + sqrt(R_B² − R_A² sin²μ)) / sin θ_dh
//! ```
//!
//! the height is `Z(Θ) = 2·|(r_x, r_y, r_z)| + C`, where `C` is a clearance
//! constant absorbing joint play, `μ = μ₀ − Θ/2` and `μ₀ = arcsin(R_B/R_A)`.
//!
//! Sign convention: `μ` *decreases* from `μ₀` as `Θ` grows. `μ₀` is the zero
//! of the radicand, so this is the only direction in which the square root
//! stays real; it also makes `Z` strictly increasing on `Θ ∈ [0, 1]` for the
//! MOFU geometry, matching a mechanism that starts contracted at `Θ = 0` and
//! is fully expanded at `Θ = 1.0 rad`.
//!
//! The closed form has no tractable inverse, so control goes through a
//! [`LookupTable`] of `(Θ, Z)` samples that is inverted by nearest-sample or
//! piecewise-linear search.

use std::io::{self, Write};

use thiserror::Error;

/// Radicand magnitudes below this are treated as exactly zero.
///
/// `μ = μ₀` sits exactly on the boundary of the square-root domain, where
/// the radicand is pure floating-point noise (about 1 ulp of `r_b²`, either
/// sign). The square root would amplify that noise to ~1e-6 mm, so a small
/// symmetric dead-band pins the boundary to its algebraic limit.
const EPS_RADICAND: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JitterbugError {
    /// Parameters violate the constructor invariants.
    #[error("invalid Jitterbug parameters: {0}")]
    InvalidParams(String),
    /// `μ` fell outside the domain where the radicand is non-negative.
    #[error("mu = {mu} rad is outside the mechanism domain (radicand = {radicand} mm^2)")]
    OutOfDomain { mu: f64, radicand: f64 },
    /// A lookup table failed its invariants.
    #[error("invalid lookup table: {0}")]
    InvalidTable(String),
}

/// Geometric constants of the expansion mechanism.
///
/// All lengths in millimetres, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct JitterbugParams {
    /// Radius associated with geometry A.
    pub r_a: f64,
    /// Radius associated with geometry B. Must satisfy `0 < r_b < r_a`.
    pub r_b: f64,
    /// Dihedral angle of the linkage, in `(0, π/2)`.
    pub theta_dh: f64,
    /// Additive clearance constant accounting for joint gaps.
    pub clearance_c: f64,
}

impl JitterbugParams {
    pub fn new(r_a: f64, r_b: f64, theta_dh: f64, clearance_c: f64) -> Result<Self, JitterbugError> {
        if !(r_a.is_finite() && r_b.is_finite() && theta_dh.is_finite() && clearance_c.is_finite()) {
            return Err(JitterbugError::InvalidParams("non-finite value".into()));
        }
        if r_b <= 0.0 || r_a <= 0.0 {
            return Err(JitterbugError::InvalidParams(format!(
                "radii must be positive (r_a = {r_a}, r_b = {r_b})"
            )));
        }
        if r_b >= r_a {
            return Err(JitterbugError::InvalidParams(format!(
                "need r_b < r_a so arcsin(r_b/r_a) is defined (r_a = {r_a}, r_b = {r_b})"
            )));
        }
        if theta_dh <= 0.0 || theta_dh >= std::f64::consts::FRAC_PI_2 {
            return Err(JitterbugError::InvalidParams(format!(
                "theta_dh must lie in (0, pi/2), got {theta_dh}"
            )));
        }
        if clearance_c < 0.0 {
            return Err(JitterbugError::InvalidParams(format!(
                "clearance must be non-negative, got {clearance_c}"
            )));
        }
        Ok(Self { r_a, r_b, theta_dh, clearance_c })
    }

    /// The MOFU geometry: `R_A = 80·√2/2`, `R_B = 80·√3/3`, `θ_dh = 54.74°`,
    /// `C = 13 mm`.
    pub fn mofu() -> Self {
        Self {
            r_a: 40.0 * std::f64::consts::SQRT_2,
            r_b: 80.0 / 3.0_f64.sqrt(),
            theta_dh: 54.74_f64.to_radians(),
            clearance_c: 13.0,
        }
    }

    /// Same geometry with a different clearance constant.
    pub fn with_clearance(mut self, clearance_c: f64) -> Self {
        self.clearance_c = clearance_c;
        self
    }

    /// `μ₀ = arcsin(r_b / r_a)`, the radicand zero; lies in `(0, π/2)`.
    pub fn mu_zero(&self) -> f64 {
        (self.r_b / self.r_a).asin()
    }
}

/// Component radii `(r_x, r_y, r_z)` of the linkage at a given `μ`.
///
/// Fails when the radicand `r_b² − r_a²·sin²μ` is below `-1e-9 mm²`;
/// magnitudes inside that tolerance count as exactly zero.
pub fn intermediate_radii(
    params: &JitterbugParams,
    mu: f64,
) -> Result<(f64, f64, f64), JitterbugError> {
    let radicand = params.r_b * params.r_b - params.r_a * params.r_a * mu.sin() * mu.sin();
    if radicand < -EPS_RADICAND {
        return Err(JitterbugError::OutOfDomain { mu, radicand });
    }
    let root = if radicand.abs() < EPS_RADICAND { 0.0 } else { radicand.sqrt() };
    let r_x = params.r_a * mu.cos();
    let r_y = params.r_a * mu.sin();
    let r_z = (params.r_a * params.theta_dh.cos() * mu.cos() + root) / params.theta_dh.sin();
    Ok((r_x, r_y, r_z))
}

/// Height `Z(Θ)` of the mechanism for a top-face rotation `theta_cap`.
///
/// Uses `μ = μ₀ − Θ/2` (see the module docs for why the sign is pinned this
/// way); strictly increasing in `Θ` over `[0, 1.0]` for the MOFU geometry.
pub fn forward_height(params: &JitterbugParams, theta_cap: f64) -> Result<f64, JitterbugError> {
    let mu = params.mu_zero() - theta_cap / 2.0;
    let (r_x, r_y, r_z) = intermediate_radii(params, mu)?;
    Ok(2.0 * (r_x * r_x + r_y * r_y + r_z * r_z).sqrt() + params.clearance_c)
}

/// Base rotation induced by a top-face rotation `Θ`: exactly `Θ/2`.
///
/// Linear coupling; the full 1.0 rad stroke turns the base by 0.5 rad
/// (28.65°). The rotation direction is a simulator configuration choice.
pub fn base_yaw(theta_cap: f64) -> f64 {
    theta_cap / 2.0
}

/// How the lookup table is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseMode {
    /// Return the `Θ` of the entry whose `Z` is closest to the target
    /// (ties break toward the lower index, i.e. the smaller `Θ`).
    Nearest,
    /// Piecewise-linear inverse between bracketing entries.
    Interpolated,
}

/// Result of a table inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseSolution {
    pub theta_cap: f64,
    /// Set when the target height was outside `[z_min, z_max]` and the
    /// result was clamped to the nearer endpoint.
    pub saturated: bool,
}

/// One `(Θ, Z)` sample of the forward model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub theta_cap: f64,
    pub z: f64,
}

/// Sampled `(Θ, Z)` correspondence used as the invertible control map.
///
/// Entries are evenly spaced in `Θ` over `[0, theta_max]` with strictly
/// increasing `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    entries: Vec<TableEntry>,
    theta_max: f64,
}

impl LookupTable {
    /// Sample `forward_height` at `n` evenly spaced rotations over
    /// `[0, theta_max]`.
    pub fn build(params: &JitterbugParams, theta_max: f64, n: usize) -> Result<Self, JitterbugError> {
        if n < 2 {
            return Err(JitterbugError::InvalidTable(format!("need at least 2 entries, got {n}")));
        }
        if !(theta_max > 0.0) {
            return Err(JitterbugError::InvalidTable(format!(
                "theta_max must be positive, got {theta_max}"
            )));
        }
        let step = theta_max / (n - 1) as f64;
        let mut entries = Vec::with_capacity(n);
        for i in 0..n {
            // Hit the endpoints exactly regardless of rounding in `step`.
            let theta_cap = if i + 1 == n { theta_max } else { i as f64 * step };
            let z = forward_height(params, theta_cap)?;
            entries.push(TableEntry { theta_cap, z });
        }
        for pair in entries.windows(2) {
            if pair[1].z <= pair[0].z {
                return Err(JitterbugError::InvalidTable(format!(
                    "heights not strictly increasing between theta = {} and {}",
                    pair[0].theta_cap, pair[1].theta_cap
                )));
            }
        }
        Ok(Self { entries, theta_max })
    }

    /// The default control table for the MOFU geometry: 45 points over
    /// `[0, 1.0 rad]`.
    pub fn mofu() -> Self {
        Self::build(&JitterbugParams::mofu(), 1.0, 45).expect("MOFU table is well defined")
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    /// Spacing of the `Θ` grid.
    pub fn grid_step(&self) -> f64 {
        self.theta_max / (self.entries.len() - 1) as f64
    }

    pub fn z_min(&self) -> f64 {
        self.entries[0].z
    }

    pub fn z_max(&self) -> f64 {
        self.entries[self.entries.len() - 1].z
    }

    /// Invert the table: find the rotation whose height matches `z_target`.
    ///
    /// Out-of-range targets clamp to the nearer endpoint and set the
    /// `saturated` flag instead of failing; command waveforms may slightly
    /// overshoot the mechanical domain.
    pub fn inverse(&self, z_target: f64, mode: InverseMode) -> InverseSolution {
        if z_target < self.z_min() {
            return InverseSolution { theta_cap: self.entries[0].theta_cap, saturated: true };
        }
        if z_target > self.z_max() {
            let last = self.entries[self.entries.len() - 1];
            return InverseSolution { theta_cap: last.theta_cap, saturated: true };
        }
        match mode {
            InverseMode::Nearest => {
                // First entry with z >= target; compare against its lower
                // neighbour, ties keep the lower index.
                let idx = self.entries.partition_point(|e| e.z < z_target);
                let best = if idx == 0 {
                    0
                } else if idx == self.entries.len() {
                    idx - 1
                } else {
                    let below = z_target - self.entries[idx - 1].z;
                    let above = self.entries[idx].z - z_target;
                    if above < below {
                        idx
                    } else {
                        idx - 1
                    }
                };
                InverseSolution { theta_cap: self.entries[best].theta_cap, saturated: false }
            }
            InverseMode::Interpolated => {
                let idx = self.entries.partition_point(|e| e.z < z_target);
                if idx == 0 {
                    return InverseSolution { theta_cap: self.entries[0].theta_cap, saturated: false };
                }
                let hi = if idx == self.entries.len() { idx - 1 } else { idx };
                let lo = hi - 1;
                let a = self.entries[lo];
                let b = self.entries[hi];
                let frac = (z_target - a.z) / (b.z - a.z);
                InverseSolution {
                    theta_cap: a.theta_cap + frac * (b.theta_cap - a.theta_cap),
                    saturated: false,
                }
            }
        }
    }

    /// Write the table as CSV with header `theta_rad,z_mm`, nine significant
    /// digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "theta_rad,z_mm")?;
        for e in &self.entries {
            writeln!(w, "{:.8e},{:.8e}", e.theta_cap, e.z)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Frozen from a high-precision evaluation of the closed form with the
    // exact MOFU geometry (50-digit arithmetic, rounded to f64).
    const Z_CONTRACTED: f64 = 135.19918163675992;
    const Z_EXPANDED: f64 = 214.84721221117637;
    const Z_CONTRACTED_NO_CLEARANCE: f64 = 122.19918163675992;
    const MU0_MOFU: f64 = 0.95531661812450928;
    const MU0_ROUNDED: f64 = 0.95489730214599325;

    #[test]
    fn mu_zero_matches_high_precision_values() {
        let p = JitterbugParams::mofu();
        assert_relative_eq!(p.mu_zero(), MU0_MOFU, epsilon = 1e-14);
        assert!(p.mu_zero() > 0.0 && p.mu_zero() < std::f64::consts::FRAC_PI_2);

        let rounded = JitterbugParams::new(56.6, 46.2, 54.74_f64.to_radians(), 13.0).unwrap();
        assert_relative_eq!(rounded.mu_zero(), MU0_ROUNDED, epsilon = 1e-14);
    }

    #[test]
    fn mu_zero_is_identity_through_sine() {
        let r = 25.0;
        let p = JitterbugParams::new(r, r * (std::f64::consts::PI / 6.0).sin(), 0.9, 0.0).unwrap();
        assert_relative_eq!(p.mu_zero(), std::f64::consts::PI / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn equal_radii_are_rejected() {
        let err = JitterbugParams::new(10.0, 10.0, 0.9, 0.0).unwrap_err();
        assert!(matches!(err, JitterbugError::InvalidParams(_)));
    }

    #[test]
    fn radii_at_mu_zero_hit_the_radicand_boundary() {
        let p = JitterbugParams::mofu();
        let (_, r_y, r_z) = intermediate_radii(&p, p.mu_zero()).unwrap();
        assert_relative_eq!(r_y, p.r_b, epsilon = 1e-9);
        let expected_rz = p.r_a * p.theta_dh.cos() * p.mu_zero().cos() / p.theta_dh.sin();
        assert_relative_eq!(r_z, expected_rz, epsilon = 1e-6);
    }

    #[test]
    fn radii_match_oracle_at_mid_stroke() {
        // mu = 0.4553 rad, evaluated independently at high precision.
        let p = JitterbugParams::mofu();
        let (r_x, r_y, r_z) = intermediate_radii(&p, 0.4553).unwrap();
        assert_relative_eq!(r_x, 50.8058569348, epsilon = 1e-8);
        assert_relative_eq!(r_y, 24.8749854497, epsilon = 1e-8);
        assert_relative_eq!(r_z, 83.5807011338, epsilon = 1e-8);
    }

    #[test]
    fn radii_fail_beyond_the_domain() {
        let p = JitterbugParams::mofu();
        let err = intermediate_radii(&p, 1.4553).unwrap_err();
        match err {
            JitterbugError::OutOfDomain { radicand, .. } => {
                assert_relative_eq!(radicand, -1024.17004687, epsilon = 1e-6)
            }
            other => panic!("unexpected error: {other:?}"),
        }
    }

    #[test]
    fn forward_height_endpoints_match_oracle() {
        let p = JitterbugParams::mofu();
        assert_relative_eq!(forward_height(&p, 0.0).unwrap(), Z_CONTRACTED, epsilon = 1e-9);
        assert_relative_eq!(forward_height(&p, 1.0).unwrap(), Z_EXPANDED, epsilon = 1e-9);
        assert_relative_eq!(
            forward_height(&p.with_clearance(0.0), 0.0).unwrap(),
            Z_CONTRACTED_NO_CLEARANCE,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            forward_height(&p, 0.5).unwrap(),
            185.096486517361,
            epsilon = 1e-9
        );
    }

    #[test]
    fn forward_height_rejects_negative_rotation() {
        // Negative rotation pushes mu above mu0 where the radicand is negative.
        let p = JitterbugParams::mofu();
        assert!(forward_height(&p, -0.1).is_err());
    }

    #[test]
    fn forward_height_is_strictly_increasing() {
        let p = JitterbugParams::mofu();
        let mut prev = forward_height(&p, 0.0).unwrap();
        for i in 1..=1000 {
            let z = forward_height(&p, i as f64 / 1000.0).unwrap();
            assert!(z > prev, "not increasing at theta = {}", i as f64 / 1000.0);
            prev = z;
        }
    }

    #[test]
    fn stroke_is_consistent_with_the_physical_range() {
        let p = JitterbugParams::mofu();
        let stroke = forward_height(&p, 1.0).unwrap() - forward_height(&p, 0.0).unwrap();
        assert_relative_eq!(stroke, 79.648030574416449, epsilon = 1e-9);
        assert!((60.0..=85.0).contains(&stroke));
    }

    #[test]
    fn base_yaw_is_half_the_top_rotation() {
        assert_relative_eq!(base_yaw(1.0), 0.5);
        assert_eq!(base_yaw(0.0), 0.0);
        assert_relative_eq!(base_yaw(0.4), 0.2);
        // 0.5 rad = 28.65 degrees, the reported full-stroke base rotation.
        assert!((base_yaw(1.0).to_degrees() - 28.6).abs() < 0.2);
    }

    #[test]
    fn table_has_the_requested_shape() {
        let table = LookupTable::mofu();
        assert_eq!(table.len(), 45);
        assert_relative_eq!(table.grid_step(), 1.0 / 44.0, epsilon = 1e-15);
        assert_eq!(table.entries()[0].theta_cap, 0.0);
        assert_eq!(table.entries()[44].theta_cap, 1.0);
        assert_relative_eq!(table.z_min(), Z_CONTRACTED, epsilon = 1e-9);
        assert_relative_eq!(table.z_max(), Z_EXPANDED, epsilon = 1e-9);
    }

    #[test]
    fn minimal_table_is_the_two_endpoints() {
        let p = JitterbugParams::mofu();
        let table = LookupTable::build(&p, 0.8, 2).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.entries()[0].theta_cap, 0.0);
        assert_eq!(table.entries()[1].theta_cap, 0.8);
        assert!(LookupTable::build(&p, 1.0, 1).is_err());
    }

    #[test]
    fn inverse_returns_exact_hits() {
        let table = LookupTable::mofu();
        for &k in &[0usize, 7, 22, 44] {
            let e = table.entries()[k];
            for mode in [InverseMode::Nearest, InverseMode::Interpolated] {
                let sol = table.inverse(e.z, mode);
                assert_eq!(sol.theta_cap, e.theta_cap, "mode {mode:?} node {k}");
                assert!(!sol.saturated);
            }
        }
    }

    #[test]
    fn inverse_ties_break_toward_the_lower_index() {
        let table = LookupTable::mofu();
        let (a, b) = (table.entries()[10], table.entries()[11]);
        let mid = 0.5 * (a.z + b.z);
        let sol = table.inverse(mid, InverseMode::Nearest);
        // The midpoint is equidistant (up to rounding); the lower entry wins
        // whenever the distances compare equal.
        let below = mid - a.z;
        let above = b.z - mid;
        if above >= below {
            assert_eq!(sol.theta_cap, a.theta_cap);
        } else {
            assert_eq!(sol.theta_cap, b.theta_cap);
        }
    }

    #[test]
    fn inverse_clamps_and_flags_out_of_range_targets() {
        let table = LookupTable::mofu();
        for mode in [InverseMode::Nearest, InverseMode::Interpolated] {
            let lo = table.inverse(table.z_min() - 5.0, mode);
            assert_eq!(lo.theta_cap, 0.0);
            assert!(lo.saturated);
            let hi = table.inverse(table.z_max() + 5.0, mode);
            assert_eq!(hi.theta_cap, 1.0);
            assert!(hi.saturated);
            // Exactly on the endpoints is in range.
            assert!(!table.inverse(table.z_min(), mode).saturated);
            assert!(!table.inverse(table.z_max(), mode).saturated);
        }
    }

    /// Dense-sweep roundtrip behaviour, frozen from a brute-force oracle.
    ///
    /// The height curve has infinite slope at Θ = 0 (the radicand vanishes
    /// there), so the first table gap is 6.47 mm against a 1.81 mm average
    /// and roundtrips through the low end of the table are much coarser than
    /// everywhere else. The frozen numbers document the real behaviour.
    #[test]
    fn roundtrip_error_profile_matches_brute_force_oracle() {
        let p = JitterbugParams::mofu();
        let table = LookupTable::mofu();
        let half_step = table.grid_step() / 2.0;

        let mut max_nearest = 0.0_f64;
        let mut max_nearest_tail = 0.0_f64; // theta >= 0.1
        let mut max_interp_height = 0.0_f64;
        let mut max_interp_height_tail = 0.0_f64; // z >= second node
        let z1 = table.entries()[1].z;
        let n = 20_000;
        for i in 0..=n {
            let theta = i as f64 / n as f64;
            let z = forward_height(&p, theta).unwrap();

            let e_near = (table.inverse(z, InverseMode::Nearest).theta_cap - theta).abs();
            max_nearest = max_nearest.max(e_near);
            if theta >= 0.1 {
                max_nearest_tail = max_nearest_tail.max(e_near);
            }

            let ti = table.inverse(z, InverseMode::Interpolated).theta_cap;
            let e_h = (forward_height(&p, ti).unwrap() - z).abs();
            max_interp_height = max_interp_height.max(e_h);
            if z >= z1 {
                max_interp_height_tail = max_interp_height_tail.max(e_h);
            }
        }

        // Worst nearest-mode rotation error lives in the first segments.
        assert!((0.0159..=0.0161).contains(&max_nearest), "max_nearest = {max_nearest}");
        assert!(max_nearest_tail <= 0.0115, "tail = {max_nearest_tail}");
        assert!(max_nearest_tail > half_step - 1e-6);

        // Interpolated height roundtrip: 1.35 mm in the first segment,
        // below a tenth of a millimetre everywhere after it.
        assert!((1.30..=1.40).contains(&max_interp_height), "max = {max_interp_height}");
        assert!(max_interp_height_tail <= 0.10, "tail = {max_interp_height_tail}");
    }

    #[test]
    fn csv_export_has_nine_significant_digits() {
        let table = LookupTable::mofu();
        let csv = table.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("theta_rad,z_mm"));
        assert_eq!(csv.lines().count(), 46);
        let first = csv.lines().nth(1).unwrap();
        assert_eq!(first, "0.00000000e0,1.35199182e2");
    }

    proptest! {
        /// The clearance enters the height additively, so two parameter sets
        /// that differ only in C differ in Z by exactly the same amount.
        #[test]
        fn clearance_additivity(theta in 0.0..1.0f64, c1 in 0.0..30.0f64, c2 in 0.0..30.0f64) {
            let base = JitterbugParams::mofu();
            let z1 = forward_height(&base.with_clearance(c1), theta).unwrap();
            let z2 = forward_height(&base.with_clearance(c2), theta).unwrap();
            prop_assert!(((z1 - z2) - (c1 - c2)).abs() < 1e-9);
        }

        /// The radicand stays non-negative over the control domain.
        #[test]
        fn radicand_non_negative_over_domain(theta in 0.0..=1.0f64) {
            let p = JitterbugParams::mofu();
            let mu = p.mu_zero() - theta / 2.0;
            prop_assert!(intermediate_radii(&p, mu).is_ok());
        }

        /// Interpolated inversion of an in-range height never saturates and
        /// stays within one grid cell of the true rotation.
        #[test]
        fn interpolated_inverse_is_local(theta in 0.0..=1.0f64) {
            let p = JitterbugParams::mofu();
            let table = LookupTable::mofu();
            let z = forward_height(&p, theta).unwrap();
            let sol = table.inverse(z, InverseMode::Interpolated);
            prop_assert!(!sol.saturated);
            prop_assert!((sol.theta_cap - theta).abs() <= table.grid_step());
        }
    }
}
