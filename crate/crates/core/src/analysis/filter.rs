use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::campaign::MeasurementRecord;
use crate::env::WeatherSeries;

/// Outdoor rating filter thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub t_min_c: f64,
    pub t_max_c: f64,
    /// Records need DNI strictly above this, W/m².
    pub dni_min_wm2: f64,
    pub diffuse_max_wm2: f64,
    /// Full width of the DNI stability window centred on the record, s.
    pub stability_window_s: i64,
    /// Largest allowed (max - min) / mean of DNI over the window.
    pub max_dni_spread: f64,
    /// Largest gap between a record and its nearest weather sample, s.
    pub coverage_tolerance_s: i64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            t_min_c: 10.0,
            t_max_c: 30.0,
            dni_min_wm2: 750.0,
            diffuse_max_wm2: 140.0,
            stability_window_s: 600,
            max_dni_spread: 0.02,
            coverage_tolerance_s: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterRule {
    Temperature,
    Dni,
    Diffuse,
    DniStability,
}

impl FilterRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Temperature => "temperature",
            Self::Dni => "DNI",
            Self::Diffuse => "diffuse",
            Self::DniStability => "DNI stability",
        }
    }
}

impl std::fmt::Display for FilterRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub timestamp: i64,
    pub submodule_id: String,
    pub rule: FilterRule,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<MeasurementRecord>,
    pub rejected: Vec<Rejection>,
}

/// Applies the four rules in order and tags each rejected record with the
/// first rule it fails. Ambient temperature, DNI and diffuse come from the
/// record's own weather snapshot; stability is judged on the series.
pub fn filter_samples(
    records: &[MeasurementRecord],
    weather: &WeatherSeries,
    cfg: &FilterConfig,
) -> Result<FilterOutcome, AnalysisError> {
    let mut out = FilterOutcome::default();
    for rec in records {
        match first_failed_rule(rec, weather, cfg)? {
            None => out.kept.push(rec.clone()),
            Some(rule) => {
                out.rejected.push(Rejection { timestamp: rec.timestamp, submodule_id: rec.submodule_id.clone(), rule })
            }
        }
    }
    Ok(out)
}

fn first_failed_rule(
    rec: &MeasurementRecord,
    weather: &WeatherSeries,
    cfg: &FilterConfig,
) -> Result<Option<FilterRule>, AnalysisError> {
    let t = rec.timestamp;
    match weather.nearest(t) {
        Some(s) if (s.timestamp - t).abs() <= cfg.coverage_tolerance_s => {}
        _ => return Err(AnalysisError::Coverage { timestamp: t }),
    }
    let w = &rec.weather;
    if !(w.t_ambient >= cfg.t_min_c && w.t_ambient <= cfg.t_max_c) {
        return Ok(Some(FilterRule::Temperature));
    }
    if !(w.dni > cfg.dni_min_wm2) {
        return Ok(Some(FilterRule::Dni));
    }
    if !(w.diffuse <= cfg.diffuse_max_wm2) {
        return Ok(Some(FilterRule::Diffuse));
    }
    let half = cfg.stability_window_s / 2;
    let window = weather.window(t - half, t + half);
    if window.is_empty() {
        return Ok(Some(FilterRule::DniStability));
    }
    let (min, max, sum) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY, 0.0), |(lo, hi, s), w| (lo.min(w.dni), hi.max(w.dni), s + w.dni));
    let mean = sum / window.len() as f64;
    if !(mean > 0.0) || (max - min) / mean > cfg.max_dni_spread {
        return Ok(Some(FilterRule::DniStability));
    }
    Ok(None)
}
