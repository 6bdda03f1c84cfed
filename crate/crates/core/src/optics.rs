//! Pointing geometry and the optical path from the lens to the cell.
//!
//! Directions are handled as azimuth/elevation pairs in degrees. Angular
//! deviations are computed on the sphere, never as planar differences of
//! azimuth and elevation, since those diverge quickly at high sun.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::SubModuleSpec;

/// Fraction of peak transmission that defines the acceptance angle.
pub const ACCEPTANCE_LEVEL: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum OpticsError {
    #[error("invalid acceptance profile: {0}")]
    InvalidProfile(String),
    #[error("invalid mount offset: {0}")]
    InvalidOffset(String),
    #[error("optics calibration failed: {0}")]
    Calibration(String),
}

/// An azimuth/elevation direction in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AzEl {
    pub az_deg: f64,
    pub el_deg: f64,
}

impl AzEl {
    pub const fn new(az_deg: f64, el_deg: f64) -> Self {
        Self { az_deg, el_deg }
    }

    /// Unit vector in an east-north-up frame.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (az, el) = (self.az_deg.to_radians(), self.el_deg.to_radians());
        [el.cos() * az.sin(), el.cos() * az.cos(), el.sin()]
    }

    pub fn offset(&self, d_az: f64, d_el: f64) -> Self {
        Self::new(self.az_deg + d_az, self.el_deg + d_el)
    }
}

/// Misalignment between the module's optical axis and the tracker frame.
///
/// The optical axis points at `pointing - offset`, so the tracker has to be
/// commanded to `sun + offset` for the module to face the sun.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MountOffset {
    pub d_az: f64,
    pub d_el: f64,
}

impl MountOffset {
    pub fn new(d_az: f64, d_el: f64) -> Result<Self, OpticsError> {
        let offset = Self { d_az, d_el };
        offset.validate()?;
        Ok(offset)
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        if !self.d_az.is_finite() || !self.d_el.is_finite() {
            return Err(OpticsError::InvalidOffset("components must be finite".into()));
        }
        if self.d_az.hypot(self.d_el) >= 90.0 {
            return Err(OpticsError::InvalidOffset("magnitude must stay below 90 deg".into()));
        }
        Ok(())
    }

    pub fn optical_axis(&self, pointing: AzEl) -> AzEl {
        pointing.offset(-self.d_az, -self.d_el)
    }
}

/// Super-Gaussian acceptance plateau pinned to 90 % at the two semi-axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceProfile {
    pub theta90_az: f64,
    pub theta90_el: f64,
    pub shape_exponent: f64,
}

impl Default for AcceptanceProfile {
    fn default() -> Self {
        Self::circular(0.78, 6.0)
    }
}

impl AcceptanceProfile {
    pub fn new(theta90_az: f64, theta90_el: f64, shape_exponent: f64) -> Result<Self, OpticsError> {
        let profile = Self { theta90_az, theta90_el, shape_exponent };
        profile.validate()?;
        Ok(profile)
    }

    pub const fn circular(theta90: f64, shape_exponent: f64) -> Self {
        Self { theta90_az: theta90, theta90_el: theta90, shape_exponent }
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.theta90_az) || !ok(self.theta90_el) {
            return Err(OpticsError::InvalidProfile("theta90 values must be > 0".into()));
        }
        if !ok(self.shape_exponent) {
            return Err(OpticsError::InvalidProfile("shape exponent must be > 0".into()));
        }
        Ok(())
    }

    /// Transmission for a deviation split into its azimuth-like and
    /// elevation-like components (degrees).
    pub fn transmission_components(&self, theta_az: f64, theta_el: f64) -> f64 {
        let rho = (theta_az / self.theta90_az).hypot(theta_el / self.theta90_el);
        ACCEPTANCE_LEVEL.powf(rho.powf(self.shape_exponent))
    }

    /// Radius of the 90 % ellipse along a direction in the deviation plane.
    pub fn theta90_along(&self, direction: DeviationDirection) -> f64 {
        let (u_az, u_el) = (direction.u_az, direction.u_el);
        1.0 / (u_az / self.theta90_az).hypot(u_el / self.theta90_el)
    }
}

/// Unit direction of a deviation in the module's az/el tangent plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationDirection {
    pub u_az: f64,
    pub u_el: f64,
}

impl DeviationDirection {
    pub const AZIMUTH: Self = Self { u_az: 1.0, u_el: 0.0 };
    pub const ELEVATION: Self = Self { u_az: 0.0, u_el: 1.0 };

    pub fn from_components(d_az: f64, d_el: f64) -> Self {
        let norm = d_az.hypot(d_el);
        if norm == 0.0 {
            Self::AZIMUTH
        } else {
            Self { u_az: d_az / norm, u_el: d_el / norm }
        }
    }
}

/// Angular deviation of the sun as seen from the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    /// Great-circle angle, degrees.
    pub theta: f64,
    pub direction: DeviationDirection,
}

impl Deviation {
    pub fn theta_az(&self) -> f64 {
        self.theta * self.direction.u_az
    }

    pub fn theta_el(&self) -> f64 {
        self.theta * self.direction.u_el
    }
}

/// Great-circle angle between two directions, degrees.
///
/// Uses `atan2(|a x b|, a . b)` which stays accurate for tiny angles where
/// the plain law of cosines loses all precision.
pub fn great_circle(a: AzEl, b: AzEl) -> f64 {
    let (u, v) = (a.unit_vector(), b.unit_vector());
    let cross = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let cos = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    sin.atan2(cos).to_degrees()
}

/// Angle between the optical axis (pointing shifted by the mount offset)
/// and the sun, degrees.
pub fn angular_deviation(pointing: AzEl, sun: AzEl, offset: MountOffset) -> f64 {
    great_circle(offset.optical_axis(pointing), sun)
}

/// Deviation of the sun from the optical axis with its decomposition along
/// the axis' local azimuth and elevation directions.
pub fn deviation(pointing: AzEl, sun: AzEl, offset: MountOffset) -> Deviation {
    let axis = offset.optical_axis(pointing);
    let a = axis.unit_vector();
    let s = sun.unit_vector();
    let (az, el) = (axis.az_deg.to_radians(), axis.el_deg.to_radians());
    let e_az = [az.cos(), -az.sin(), 0.0];
    let e_el = [-el.sin() * az.sin(), -el.sin() * az.cos(), el.cos()];
    let dot = |p: [f64; 3], q: [f64; 3]| p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    let (x, y, z) = (dot(s, e_az), dot(s, e_el), dot(s, a));
    let theta = x.hypot(y).atan2(z).to_degrees();
    Deviation { theta, direction: DeviationDirection::from_components(x, y) }
}

/// Relative optical transmission at deviation `theta` along `direction`.
pub fn transmission(theta: f64, profile: &AcceptanceProfile, direction: DeviationDirection) -> f64 {
    let theta = theta.max(0.0);
    profile.transmission_components(theta * direction.u_az, theta * direction.u_el)
}

/// Solves for the lumped optical efficiency that makes the sub-module
/// deliver `target_isc_900` amperes at 900 W/m² on axis.
pub fn calibrate_optics(target_isc_900: f64, spec: &SubModuleSpec) -> Result<f64, OpticsError> {
    if !(target_isc_900 > 0.0) {
        return Err(OpticsError::Calibration("target Isc must be > 0".into()));
    }
    let ideal = spec.jsc_eqe * 1e-3 * spec.cell_area * spec.c_geo * 0.9;
    if !(ideal > 0.0) {
        return Err(OpticsError::Calibration("Jsc, cell area and concentration must all be > 0".into()));
    }
    Ok(target_isc_900 / ideal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_deviation_when_pointing_at_sun() {
        let sun = AzEl::new(140.0, 35.0);
        assert_abs_diff_eq!(angular_deviation(sun, sun, MountOffset::default()), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn horizon_azimuth_step_is_the_full_angle() {
        let sun = AzEl::new(180.0, 0.0);
        let pointing = AzEl::new(180.78, 0.0);
        assert_abs_diff_eq!(angular_deviation(pointing, sun, MountOffset::default()), 0.78, epsilon = 1e-10);
    }

    #[test]
    fn azimuth_step_shrinks_with_elevation() {
        // spherical law of cosines: cos d = sin^2 e + cos^2 e cos(1 deg)
        let e = 60f64.to_radians();
        let oracle = (e.sin().powi(2) + e.cos().powi(2) * 1f64.to_radians().cos()).acos().to_degrees();
        let d = angular_deviation(AzEl::new(181.0, 60.0), AzEl::new(180.0, 60.0), MountOffset::default());
        assert_abs_diff_eq!(d, oracle, epsilon = 1e-6);
        assert_abs_diff_eq!(d, 0.5, epsilon = 0.002);
    }

    #[test]
    fn offset_moves_the_optical_axis() {
        let sun = AzEl::new(200.0, 20.0);
        let off = MountOffset::new(0.5, -0.3).unwrap();
        let pointing = sun.offset(0.5, -0.3);
        assert_abs_diff_eq!(angular_deviation(pointing, sun, off), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn deviation_components_follow_axes() {
        let sun = AzEl::new(180.0, 0.0);
        let d = deviation(AzEl::new(180.0, 0.4), sun, MountOffset::default());
        assert_abs_diff_eq!(d.theta, 0.4, epsilon = 1e-10);
        assert_abs_diff_eq!(d.direction.u_el.abs(), 1.0, epsilon = 1e-9);
        let d = deviation(AzEl::new(180.4, 0.0), sun, MountOffset::default());
        assert_abs_diff_eq!(d.direction.u_az.abs(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn transmission_anchor_points() {
        let p = AcceptanceProfile::circular(0.78, 6.0);
        assert_eq!(transmission(0.0, &p, DeviationDirection::AZIMUTH), 1.0);
        assert_abs_diff_eq!(transmission(0.78, &p, DeviationDirection::AZIMUTH), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(transmission(0.78, &p, DeviationDirection::ELEVATION), 0.9, epsilon = 1e-15);
        let expected = 0.9f64.powf(2f64.powi(6));
        assert_abs_diff_eq!(transmission(1.56, &p, DeviationDirection::AZIMUTH), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 1.18e-3, epsilon = 0.01e-3);
    }

    #[test]
    fn elliptical_level_set() {
        let p = AcceptanceProfile::new(0.9, 0.7, 6.0).unwrap();
        assert_abs_diff_eq!(transmission(0.9, &p, DeviationDirection::AZIMUTH), 0.9, epsilon = 1e-14);
        assert_abs_diff_eq!(transmission(0.7, &p, DeviationDirection::ELEVATION), 0.9, epsilon = 1e-14);
        let diag = DeviationDirection::from_components(1.0, 1.0);
        // elliptical norm: r = 1 / sqrt(cos^2/a^2 + sin^2/b^2)
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let r45 = 1.0 / ((c / 0.9).powi(2) + (c / 0.7).powi(2)).sqrt();
        assert_abs_diff_eq!(p.theta90_along(diag), r45, epsilon = 1e-14);
        assert_abs_diff_eq!(transmission(r45, &p, diag), 0.9, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_profiles_and_offsets() {
        assert!(AcceptanceProfile::new(0.0, 0.7, 6.0).is_err());
        assert!(AcceptanceProfile::new(0.7, 0.7, -1.0).is_err());
        assert!(MountOffset::new(f64::NAN, 0.0).is_err());
        assert!(MountOffset::new(80.0, 60.0).is_err());
    }
}
