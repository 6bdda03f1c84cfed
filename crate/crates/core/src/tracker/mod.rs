//! Two-axis tracker: open-loop astronomical pointing and the closed-loop
//! short-circuit-current scan that re-centres each sub-module on the sun.

mod surface;

pub use surface::{fit_profile, CoarseGrid, ProfileSurface};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::SubModuleSpec;
use crate::env::{SunState, WeatherSample, WeatherSeries};
use crate::optics::AzEl;

/// Smallest commanded step of the tracker, degrees.
pub const DEFAULT_RESOLUTION: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("sun below horizon, tracker parked")]
    Parked,
    #[error("scan grid leaves the mechanical range (elevation {el_deg:.3} deg)")]
    OutOfRange { el_deg: f64 },
    #[error("alignment failed: no short-circuit current anywhere in the scan window")]
    AlignmentFailed,
    #[error("invalid scan config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingMode {
    OpenLoop,
    ScanAlign,
}

impl TrackingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackingMode::OpenLoop => "open_loop",
            TrackingMode::ScanAlign => "scan_align",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "open_loop" => Some(TrackingMode::OpenLoop),
            "scan_align" => Some(TrackingMode::ScanAlign),
            _ => None,
        }
    }
}

/// How the coarse scan is interpolated onto the fine grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanSurface {
    /// Acceptance-shaped surface fitted through the coarse samples.
    #[default]
    ProfileFit,
    /// Piecewise bilinear interpolation. Its maximum always sits on a
    /// coarse node, so it cannot resolve the peak finer than the coarse pitch.
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub coarse_n: usize,
    pub fine_n: usize,
    /// Full width of the scan window per axis, degrees.
    pub range_deg: f64,
    pub surface: ScanSurface,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { coarse_n: 4, fine_n: 10, range_deg: 2.25, surface: ScanSurface::ProfileFit }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if self.coarse_n < 2 {
            return Err(TrackerError::InvalidConfig("coarse_n must be >= 2".into()));
        }
        if self.fine_n < self.coarse_n {
            return Err(TrackerError::InvalidConfig("fine_n must be >= coarse_n".into()));
        }
        if !(self.range_deg > 0.0) {
            return Err(TrackerError::InvalidConfig("range must be > 0".into()));
        }
        Ok(())
    }

    /// `n` equally spaced offsets spanning the window, both ends included.
    pub fn nodes(&self, n: usize) -> Vec<f64> {
        let half = 0.5 * self.range_deg;
        (0..n).map(|i| -half + self.range_deg * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanWarning {
    /// The best position sits on the edge of the scan window.
    PeakAtBoundary,
    /// The profile fit did not converge; the bilinear surface was used.
    FitFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome {
    /// Commanded pointing after alignment, quantised to the tracker resolution.
    pub pointing: AzEl,
    /// Chosen fine-grid offset from the astronomical position.
    pub offset: (f64, f64),
    /// Interpolated current at the chosen node, A.
    pub peak_isc: f64,
    pub coarse: CoarseGrid,
    pub warnings: Vec<ScanWarning>,
}

/// Tracker pose and settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerState {
    pub mode: TrackingMode,
    pub pointing: AzEl,
    /// Degrees per second; only used to cost moves.
    pub slew_rate: f64,
    pub resolution: f64,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self {
            mode: TrackingMode::ScanAlign,
            pointing: AzEl::new(0.0, 0.0),
            slew_rate: 1.0,
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

impl TrackerState {
    /// Commands a move; returns the quantised pose actually reached.
    pub fn move_to(&mut self, target: AzEl) -> AzEl {
        self.pointing = quantize_pointing(target, self.resolution);
        self.pointing
    }
}

/// Rounds `x` to the nearest multiple of `resolution`, halves upward.
pub fn quantize(x: f64, resolution: f64) -> f64 {
    let steps = (x / resolution + 0.5).floor();
    let inverse = 1.0 / resolution;
    if (inverse - inverse.round()).abs() < 1e-9 {
        steps / inverse.round()
    } else {
        steps * resolution
    }
}

pub fn quantize_pointing(p: AzEl, resolution: f64) -> AzEl {
    AzEl::new(quantize(p.az_deg, resolution).rem_euclid(360.0), quantize(p.el_deg, resolution))
}

/// Open-loop pointing at the ephemeris position.
pub fn astro_pointing(sun: &SunState, resolution: f64) -> Result<AzEl, TrackerError> {
    if sun.true_elevation < 0.0 || sun.astro_elevation < 0.0 {
        return Err(TrackerError::Parked);
    }
    Ok(quantize_pointing(sun.astro(), resolution))
}

/// Closed-loop alignment: measures Isc on the coarse grid around the
/// ephemeris position, interpolates onto the fine grid and returns the best
/// fine node. Ties go to the first maximum in row-major order (rows along
/// elevation, columns along azimuth).
pub fn scan_align<F>(
    submodule: &SubModuleSpec,
    sun: &SunState,
    cfg: &ScanConfig,
    resolution: f64,
    mut measure_isc: F,
) -> Result<ScanOutcome, TrackerError>
where
    F: FnMut(AzEl) -> f64,
{
    cfg.validate()?;
    let center = astro_pointing(sun, resolution)?;
    let coarse_nodes = cfg.nodes(cfg.coarse_n);
    for &d_el in [coarse_nodes[0], coarse_nodes[cfg.coarse_n - 1]].iter() {
        let el = center.el_deg + d_el;
        if !(0.0..=90.0).contains(&el) {
            return Err(TrackerError::OutOfRange { el_deg: el });
        }
    }

    let mut values = Vec::with_capacity(cfg.coarse_n * cfg.coarse_n);
    for &d_el in &coarse_nodes {
        for &d_az in &coarse_nodes {
            let pose = quantize_pointing(center.offset(d_az, d_el), resolution);
            values.push(measure_isc(pose));
        }
    }
    if values.iter().all(|&v| !(v > 0.0)) {
        return Err(TrackerError::AlignmentFailed);
    }
    let coarse = CoarseGrid { az: coarse_nodes.clone(), el: coarse_nodes, values };

    let mut warnings = Vec::new();
    let half = 0.5 * cfg.range_deg;
    let fitted = match cfg.surface {
        ScanSurface::Bilinear => None,
        ScanSurface::ProfileFit => {
            let cos_el = sun.astro_elevation.to_radians().cos().max(0.05);
            let guess = (submodule.profile.theta90_az / cos_el, submodule.profile.theta90_el);
            let fit = fit_profile(&coarse, submodule.profile.shape_exponent, guess);
            if fit.is_none() {
                warnings.push(ScanWarning::FitFallback);
            }
            fit
        }
    };

    let fine = cfg.nodes(cfg.fine_n);
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for &d_el in &fine {
        for &d_az in &fine {
            let v = match &fitted {
                Some(surface) => surface.eval(d_az, d_el),
                None => coarse.bilinear(d_az, d_el),
            };
            if v > best.2 {
                best = (d_az, d_el, v);
            }
        }
    }

    let at_edge = match &fitted {
        Some(s) => s.center_az.abs() > half || s.center_el.abs() > half,
        None => best.0.abs() >= half - 1e-12 || best.1.abs() >= half - 1e-12,
    };
    if at_edge {
        log::warn!("sub-module {}: peak at scan boundary", submodule.id);
        warnings.push(ScanWarning::PeakAtBoundary);
    }

    Ok(ScanOutcome {
        pointing: quantize_pointing(center.offset(best.0, best.1), resolution),
        offset: (best.0, best.1),
        peak_isc: best.2,
        coarse,
        warnings,
    })
}

/// Sky-stability gate used before aligning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudlessConfig {
    pub window_s: i64,
    pub max_relative_spread: f64,
    pub max_diffuse_wm2: f64,
}

impl Default for CloudlessConfig {
    fn default() -> Self {
        Self { window_s: 120, max_relative_spread: 0.02, max_diffuse_wm2: 140.0 }
    }
}

/// True iff the DNI spread `(max - min) / mean` over the window stays
/// within the limit and diffuse light never exceeds its threshold.
pub fn cloudless_check(recent: &[WeatherSample], cfg: &CloudlessConfig) -> bool {
    if recent.is_empty() {
        return false;
    }
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for s in recent {
        if s.diffuse > cfg.max_diffuse_wm2 {
            return false;
        }
        lo = lo.min(s.dni);
        hi = hi.max(s.dni);
        sum += s.dni;
    }
    let mean = sum / recent.len() as f64;
    mean > 0.0 && (hi - lo) / mean <= cfg.max_relative_spread
}

/// [`cloudless_check`] over the trailing window ending at `t`.
pub fn cloudless_at(series: &WeatherSeries, t: i64, cfg: &CloudlessConfig) -> bool {
    cloudless_check(series.window(t - cfg.window_s, t), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sun(az: f64, el: f64) -> SunState {
        SunState { true_azimuth: az, true_elevation: el, astro_azimuth: az, astro_elevation: el }
    }

    #[test]
    fn quantisation_rounds_half_up() {
        assert_eq!(quantize(123.4567, 0.01), 123.46);
        assert_eq!(quantize(0.125, 0.25), 0.25);
        assert_eq!(quantize(-0.005, 0.01), 0.0);
        assert_eq!(quantize(10.0, 0.01), 10.0);
    }

    #[test]
    fn open_loop_points_at_ephemeris() {
        let s = SunState { true_azimuth: 150.0, true_elevation: 40.0, astro_azimuth: 150.1, astro_elevation: 39.8 };
        let p = astro_pointing(&s, 0.01).unwrap();
        assert_abs_diff_eq!(p.az_deg, 150.1, epsilon = 1e-12);
        assert_abs_diff_eq!(p.el_deg, 39.8, epsilon = 1e-12);
        assert_eq!(astro_pointing(&sun(10.0, -1.0), 0.01), Err(TrackerError::Parked));
    }

    #[test]
    fn coarse_nodes_span_range_inclusive() {
        let n = ScanConfig::default().nodes(4);
        assert_eq!(n, vec![-1.125, -0.375, 0.375, 1.125]);
        let f = ScanConfig::default().nodes(10);
        assert_abs_diff_eq!(f[1] - f[0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(ScanConfig { coarse_n: 1, ..Default::default() }.validate().is_err());
        assert!(ScanConfig { fine_n: 3, ..Default::default() }.validate().is_err());
        assert!(ScanConfig { range_deg: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn cloudless_rules() {
        let w = |dni: f64, diffuse: f64| WeatherSample { timestamp: 0, dni, diffuse, t_ambient: 20.0 };
        let cfg = CloudlessConfig::default();
        assert!(cloudless_check(&vec![w(900.0, 80.0); 13], &cfg));
        let mut dip = vec![w(900.0, 80.0); 13];
        dip[6].dni = 855.0;
        assert!(!cloudless_check(&dip, &cfg));
        assert!(!cloudless_check(&vec![w(900.0, 150.0); 13], &cfg));
        assert!(!cloudless_check(&[], &cfg));
    }
}
