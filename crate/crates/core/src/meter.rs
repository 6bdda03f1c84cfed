//! Simulated source-measure unit: open-circuit voltage first, then the
//! 8/16/8 segmented voltage sweep, then extraction of Isc, Voc, Pmax and FF.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{self, CellError, SubModuleSpec};
use crate::env::WeatherSample;
use crate::optics::{self, AzEl};

pub const SWEEP_POINTS: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum MeterError {
    #[error("open-circuit voltage must be > 0, got {0}")]
    BadVoc(f64),
    #[error("sub-module {0} is dark (no photocurrent), I-V curve is degenerate")]
    DarkCell(String),
    #[error("I-V curve needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("I-V voltages must be strictly increasing (index {0})")]
    NonMonotone(usize),
    #[error(transparent)]
    Cell(#[from] CellError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IVCurve {
    /// (voltage V, current A), voltages strictly increasing from 0 to Voc.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IVSummary {
    pub isc: f64,
    pub voc: f64,
    pub p_max: f64,
    pub v_mp: f64,
    pub i_mp: f64,
    pub ff: f64,
}

/// The 32 sweep voltages: 8 points on [0, 0.7 Voc), 16 on [0.7, 0.95 Voc)
/// and 8 on [0.95 Voc, Voc].
pub fn sweep_voltages(voc: f64) -> Result<Vec<f64>, MeterError> {
    if !(voc > 0.0) || !voc.is_finite() {
        return Err(MeterError::BadVoc(voc));
    }
    let mut v = Vec::with_capacity(SWEEP_POINTS);
    v.extend((0..8).map(|k| 0.7 * voc * k as f64 / 8.0));
    v.extend((0..16).map(|k| voc * (0.7 + 0.25 * k as f64 / 16.0)));
    v.extend((0..8).map(|k| voc * (0.95 + 0.05 * k as f64 / 7.0)));
    v[SWEEP_POINTS - 1] = voc;
    Ok(v)
}

/// Run-wide measurement settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeterConfig {
    /// Standard deviation of additive current noise, A.
    pub noise_sigma_a: f64,
    /// Apply the cell temperature model.
    pub thermal: bool,
}

impl Default for MeterConfig {
    fn default() -> Self {
        Self { noise_sigma_a: 0.0, thermal: false }
    }
}

/// Simulated SMU with its own noise stream.
#[derive(Debug, Clone)]
pub struct SourceMeter {
    pub config: MeterConfig,
    rng: ChaCha8Rng,
}

impl SourceMeter {
    pub fn new(config: MeterConfig, seed: u64) -> Self {
        Self { config, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn noise(&mut self) -> f64 {
        if self.config.noise_sigma_a > 0.0 {
            Normal::new(0.0, self.config.noise_sigma_a).map(|n| n.sample(&mut self.rng)).unwrap_or(0.0)
        } else {
            0.0
        }
    }

    fn operating_point(
        &self,
        spec: &SubModuleSpec,
        pointing: AzEl,
        sun: AzEl,
        weather: &WeatherSample,
    ) -> (f64, cell::DiodeParams) {
        let dev = optics::deviation(pointing, sun, spec.mount_offset);
        cell::operating_point(spec, weather.dni, weather.t_ambient, &dev, self.config.thermal)
    }

    /// Short-circuit current at the given pointing, A.
    pub fn measure_isc(
        &mut self,
        spec: &SubModuleSpec,
        pointing: AzEl,
        sun: AzEl,
        weather: &WeatherSample,
    ) -> Result<f64, MeterError> {
        let (iph, d) = self.operating_point(spec, pointing, sun, weather);
        Ok(cell::iv_current(0.0, iph, &d)? + self.noise())
    }

    pub fn measure_iv(
        &mut self,
        spec: &SubModuleSpec,
        pointing: AzEl,
        sun: AzEl,
        weather: &WeatherSample,
    ) -> Result<IVCurve, MeterError> {
        let (iph, d) = self.operating_point(spec, pointing, sun, weather);
        if !(iph > 0.0) {
            return Err(MeterError::DarkCell(spec.id.clone()));
        }
        let voc = cell::open_circuit_voltage(iph, &d)?;
        let voltages = sweep_voltages(voc)?;
        let mut points = Vec::with_capacity(voltages.len());
        for v in voltages {
            let i = cell::iv_current(v, iph, &d)? + self.noise();
            points.push((v, i));
        }
        Ok(IVCurve { points })
    }
}

/// Extracts the summary quantities. The maximum-power point is refined with
/// a parabola through the best sample and its two neighbours.
pub fn summarize(curve: &IVCurve) -> Result<IVSummary, MeterError> {
    let pts = &curve.points;
    if pts.len() < 3 {
        return Err(MeterError::TooFewPoints(pts.len()));
    }
    if let Some(k) = pts.windows(2).position(|w| !(w[1].0 > w[0].0)) {
        return Err(MeterError::NonMonotone(k + 1));
    }
    let isc = pts[0].1;
    let voc = pts[pts.len() - 1].0;
    let power: Vec<f64> = pts.iter().map(|&(v, i)| v * i).collect();
    let k = power.iter().enumerate().fold(0, |best, (idx, &p)| if p > power[best] { idx } else { best });

    let (mut v_mp, mut p_max) = (pts[k].0, power[k]);
    if k > 0 && k + 1 < pts.len() {
        if let Some((v, p)) =
            parabola_vertex((pts[k - 1].0, power[k - 1]), (pts[k].0, power[k]), (pts[k + 1].0, power[k + 1]))
        {
            if p >= p_max {
                v_mp = v;
                p_max = p;
            }
        }
    }
    let i_mp = if v_mp > 0.0 { p_max / v_mp } else { pts[k].1 };
    Ok(IVSummary { isc, voc, p_max, v_mp, i_mp, ff: p_max / (isc * voc) })
}

fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Option<(f64, f64)> {
    let (x0, y0) = a;
    let (x1, y1) = b;
    let (x2, y2) = c;
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if den == 0.0 || !den.is_finite() {
        return None;
    }
    let x = (x1 - 0.5 * num / den).clamp(x0, x2);
    let l0 = (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2));
    let l1 = (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2));
    let l2 = (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
    Some((x, y0 * l0 + y1 * l1 + y2 * l2))
}
