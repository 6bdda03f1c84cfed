use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::optics::AzEl;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Combined module + tracker misalignment visible on the morning acceptance
/// maps, (azimuth, elevation) in degrees.
pub const OBSERVED_MAP_MISALIGNMENT: (f64, f64) = (1.25, 3.5);

/// Error of the tracker's ephemeris: a constant offset plus a linear drift
/// around solar noon.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AstroError {
    pub d_az_deg: f64,
    pub d_el_deg: f64,
    pub drift_az_deg_per_hour: f64,
    pub drift_el_deg_per_hour: f64,
}

/// Parametric sun arc repeated every day between sunrise and sunset (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DayConfig {
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    pub peak_elevation_deg: f64,
    pub azimuth_sunrise_deg: f64,
    pub azimuth_sunset_deg: f64,
    pub astro_error: AstroError,
}

impl Default for DayConfig {
    fn default() -> Self {
        Self {
            sunrise_hour: 6.0,
            sunset_hour: 20.0,
            peak_elevation_deg: 60.0,
            azimuth_sunrise_deg: 70.0,
            azimuth_sunset_deg: 290.0,
            astro_error: AstroError::default(),
        }
    }
}

impl DayConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(0.0..24.0).contains(&self.sunrise_hour)
            || !(self.sunset_hour > self.sunrise_hour)
            || self.sunset_hour > 24.0
        {
            return Err(EnvError::InvalidDay(format!(
                "need 0 <= sunrise < sunset <= 24 h, got {} .. {}",
                self.sunrise_hour, self.sunset_hour
            )));
        }
        if !(self.peak_elevation_deg > 0.0 && self.peak_elevation_deg <= 90.0) {
            return Err(EnvError::InvalidDay("peak elevation must be in (0, 90]".into()));
        }
        if self.azimuth_sunrise_deg == self.azimuth_sunset_deg {
            return Err(EnvError::InvalidDay("azimuth must sweep during the day".into()));
        }
        Ok(())
    }

    pub fn sunrise_s(&self) -> f64 {
        self.sunrise_hour * 3600.0
    }

    pub fn sunset_s(&self) -> f64 {
        self.sunset_hour * 3600.0
    }

    pub fn solar_noon_s(&self) -> f64 {
        0.5 * (self.sunrise_s() + self.sunset_s())
    }

    /// Fraction of the daylight window elapsed at `time`, if the sun is up.
    pub fn day_fraction(&self, time: i64) -> Option<f64> {
        let tod = time.rem_euclid(SECONDS_PER_DAY) as f64;
        if tod < self.sunrise_s() || tod > self.sunset_s() {
            None
        } else {
            Some((tod - self.sunrise_s()) / (self.sunset_s() - self.sunrise_s()))
        }
    }
}

/// True and astronomically estimated sun direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SunState {
    pub true_azimuth: f64,
    pub true_elevation: f64,
    pub astro_azimuth: f64,
    pub astro_elevation: f64,
}

impl SunState {
    pub fn truth(&self) -> AzEl {
        AzEl::new(self.true_azimuth, self.true_elevation)
    }

    pub fn astro(&self) -> AzEl {
        AzEl::new(self.astro_azimuth, self.astro_elevation)
    }
}

/// Sun position at `time` (seconds since epoch, UTC).
pub fn sun_path(time: i64, day: &DayConfig) -> Result<SunState, EnvError> {
    let f = day.day_fraction(time).ok_or(EnvError::SunBelowHorizon { timestamp: time })?;
    let elevation = day.peak_elevation_deg * (std::f64::consts::PI * f).sin();
    let azimuth = (day.azimuth_sunrise_deg + (day.azimuth_sunset_deg - day.azimuth_sunrise_deg) * f).rem_euclid(360.0);

    let tod = time.rem_euclid(SECONDS_PER_DAY) as f64;
    let hours_from_noon = (tod - day.solar_noon_s()) / 3600.0;
    let e = &day.astro_error;
    let d_az = e.d_az_deg + e.drift_az_deg_per_hour * hours_from_noon;
    let d_el = e.d_el_deg + e.drift_el_deg_per_hour * hours_from_noon;
    Ok(SunState {
        true_azimuth: azimuth,
        true_elevation: elevation,
        astro_azimuth: azimuth + d_az,
        astro_elevation: elevation + d_el,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const DAY0: i64 = 19_219 * SECONDS_PER_DAY; // 2022-08-15

    #[test]
    fn noon_reaches_peak() {
        let day = DayConfig::default();
        let s = sun_path(DAY0 + 13 * 3600, &day).unwrap();
        assert_eq!(s.true_elevation, 60.0);
        assert_eq!(s.astro_elevation, 60.0);
        assert_abs_diff_eq!(s.true_azimuth, 180.0, epsilon = 1e-12);
    }

    #[test]
    fn sunrise_is_on_the_horizon() {
        let s = sun_path(DAY0 + 6 * 3600, &DayConfig::default()).unwrap();
        assert_eq!(s.true_elevation, 0.0);
        assert!(matches!(sun_path(DAY0 + 5 * 3600, &DayConfig::default()), Err(EnvError::SunBelowHorizon { .. })));
    }

    #[test]
    fn astro_error_is_additive() {
        let day = DayConfig {
            astro_error: AstroError { d_az_deg: 0.1, d_el_deg: -0.2, ..Default::default() },
            ..Default::default()
        };
        let s = sun_path(DAY0 + 9 * 3600 + 30 * 60, &day).unwrap();
        assert_abs_diff_eq!(s.astro_azimuth - s.true_azimuth, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(s.astro_elevation - s.true_elevation, -0.2, epsilon = 1e-12);
    }

    #[test]
    fn drift_grows_away_from_noon() {
        let day = DayConfig {
            astro_error: AstroError { drift_el_deg_per_hour: 0.05, ..Default::default() },
            ..Default::default()
        };
        let s = sun_path(DAY0 + 15 * 3600, &day).unwrap();
        assert_abs_diff_eq!(s.astro_elevation - s.true_elevation, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn azimuth_monotone_elevation_unimodal() {
        let day = DayConfig::default();
        let samples: Vec<SunState> = (0..=14 * 60).map(|m| sun_path(DAY0 + 6 * 3600 + m * 60, &day).unwrap()).collect();
        assert!(samples.windows(2).all(|w| w[1].true_azimuth > w[0].true_azimuth));
        let peak =
            samples.iter().enumerate().max_by(|a, b| a.1.true_elevation.total_cmp(&b.1.true_elevation)).unwrap().0;
        assert!(samples[..=peak].windows(2).all(|w| w[1].true_elevation >= w[0].true_elevation));
        assert!(samples[peak..].windows(2).all(|w| w[1].true_elevation <= w[0].true_elevation));
    }
}
