use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::campaign::MeasurementRecord;

/// Functional form of the rating regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionMode {
    /// y = DNI (c1 + c2 DNI + c3 Ta)
    #[default]
    Astm,
    /// y = c DNI
    Linear,
}

impl RegressionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Astm => "astm",
            Self::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatingConfig {
    pub min_samples: usize,
    pub min_dni_span_wm2: f64,
    pub mode: RegressionMode,
    pub dni_ref_wm2: f64,
    pub t_ref_c: f64,
}

impl Default for RatingConfig {
    fn default() -> Self {
        Self { min_samples: 20, min_dni_span_wm2: 100.0, mode: RegressionMode::Astm, dni_ref_wm2: 900.0, t_ref_c: 20.0 }
    }
}

/// Least-squares fit of one quantity against DNI and ambient temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct LawFit {
    pub mode: RegressionMode,
    /// `[c1, c2, c3]` for the full form, `[c1, c2]` when the temperature
    /// term had to be dropped, `[c]` for the linear form.
    pub coefficients: Vec<f64>,
    /// The design was rank-deficient and the temperature term was dropped.
    pub reduced: bool,
    pub residual_rms: f64,
}

impl LawFit {
    pub fn predict(&self, dni: f64, t_ambient: f64) -> f64 {
        let c = &self.coefficients;
        match (self.mode, c.len()) {
            (RegressionMode::Linear, _) => c[0] * dni,
            (_, 2) => dni * (c[0] + c[1] * dni),
            _ => dni * (c[0] + c[1] * dni + c[2] * t_ambient),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsocRating {
    pub isc_csoc: f64,
    pub pmax_csoc: f64,
    pub ff_csoc: f64,
    pub efficiency_csoc: f64,
    pub isc_fit: LawFit,
    pub pmax_fit: LawFit,
    pub voc_mean: f64,
    pub n_samples: usize,
}

impl CsocRating {
    pub fn reduced_model(&self) -> bool {
        self.isc_fit.reduced || self.pmax_fit.reduced
    }
}

const RANK_TOL: f64 = 1e-10;

fn solve(columns: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let (n, k) = (y.len(), columns.len());
    let scale: Vec<f64> = columns.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return None;
    }
    let a = DMatrix::from_fn(n, k, |i, j| columns[j][i] / scale[j]);
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    if !(svd.singular_values.min() > RANK_TOL * s_max) {
        return None;
    }
    let x = svd.solve(&DVector::from_column_slice(y), RANK_TOL * s_max).ok()?;
    Some(x.iter().zip(&scale).map(|(v, s)| v / s).collect())
}

/// Fits `y` against DNI (and Ta in the full form). A rank-deficient full
/// design falls back to the form without the temperature term.
pub fn fit_law(dni: &[f64], t_ambient: &[f64], y: &[f64], mode: RegressionMode) -> Result<LawFit, AnalysisError> {
    if dni.len() != y.len() || t_ambient.len() != y.len() {
        return Err(AnalysisError::Input("regression columns differ in length".into()));
    }
    let d2: Vec<f64> = dni.iter().map(|d| d * d).collect();
    let (coefficients, reduced) = match mode {
        RegressionMode::Linear => (solve(&[dni.to_vec()], y), false),
        RegressionMode::Astm => {
            let dt: Vec<f64> = dni.iter().zip(t_ambient).map(|(d, t)| d * t).collect();
            match solve(&[dni.to_vec(), d2.clone(), dt], y) {
                Some(c) => (Some(c), false),
                None => (solve(&[dni.to_vec(), d2], y), true),
            }
        }
    };
    let coefficients = coefficients.ok_or_else(|| AnalysisError::Regression("design matrix is singular".into()))?;
    let mut fit = LawFit { mode, coefficients, reduced, residual_rms: 0.0 };
    let sse: f64 = dni.iter().zip(t_ambient).zip(y).map(|((&d, &t), &v)| (v - fit.predict(d, t)).powi(2)).sum();
    fit.residual_rms = (sse / y.len().max(1) as f64).sqrt();
    Ok(fit)
}

fn check_support(records: &[MeasurementRecord], cfg: &RatingConfig) -> Result<(), AnalysisError> {
    if records.len() < cfg.min_samples.max(1) {
        return Err(AnalysisError::InsufficientData { n: records.len(), min: cfg.min_samples });
    }
    let (lo, hi) = records
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.weather.dni), hi.max(r.weather.dni)));
    if !(hi - lo >= cfg.min_dni_span_wm2) {
        return Err(AnalysisError::DniSpan { span: hi - lo, min: cfg.min_dni_span_wm2 });
    }
    Ok(())
}

/// Rates one sub-module at the reference DNI and ambient temperature.
pub fn regress_csoc(
    records: &[MeasurementRecord],
    aperture_cm2: f64,
    cfg: &RatingConfig,
) -> Result<CsocRating, AnalysisError> {
    check_support(records, cfg)?;
    let dni: Vec<f64> = records.iter().map(|r| r.weather.dni).collect();
    let ta: Vec<f64> = records.iter().map(|r| r.weather.t_ambient).collect();
    let isc: Vec<f64> = records.iter().map(|r| r.summary.isc).collect();
    let pmax: Vec<f64> = records.iter().map(|r| r.summary.p_max).collect();
    let isc_fit = fit_law(&dni, &ta, &isc, cfg.mode)?;
    let pmax_fit = fit_law(&dni, &ta, &pmax, cfg.mode)?;
    let isc_csoc = isc_fit.predict(cfg.dni_ref_wm2, cfg.t_ref_c);
    let pmax_csoc = pmax_fit.predict(cfg.dni_ref_wm2, cfg.t_ref_c);
    let voc_mean = records.iter().map(|r| r.summary.voc).sum::<f64>() / records.len() as f64;
    if !(isc_csoc > 0.0 && voc_mean > 0.0) {
        return Err(AnalysisError::Regression(format!("non-physical rating: isc {isc_csoc}, voc {voc_mean}")));
    }
    Ok(CsocRating {
        isc_csoc,
        pmax_csoc,
        ff_csoc: pmax_csoc / (isc_csoc * voc_mean),
        efficiency_csoc: efficiency(pmax_csoc, cfg.dni_ref_wm2, aperture_cm2)?,
        isc_fit,
        pmax_fit,
        voc_mean,
        n_samples: records.len(),
    })
}

fn positive(name: &str, x: f64) -> Result<(), AnalysisError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(AnalysisError::Input(format!("{name} must be > 0, got {x}")))
    }
}

/// Module Isc (A) over the one-sun cell Isc from the EQE-derived Jsc
/// (mA/cm²) and the cell area (cm²).
pub fn effective_concentration(isc_900: f64, jsc_eqe: f64, area_cm2: f64) -> Result<f64, AnalysisError> {
    positive("isc", isc_900)?;
    positive("jsc", jsc_eqe)?;
    positive("cell area", area_cm2)?;
    Ok(isc_900 / (jsc_eqe * 1e-3 * area_cm2))
}

pub fn ctm(c_eff: f64, c_geo: f64) -> Result<f64, AnalysisError> {
    positive("geometric concentration", c_geo)?;
    Ok(c_eff / c_geo)
}

/// Pmax (W) over the power incident on the lens aperture (cm²).
pub fn efficiency(pmax: f64, dni: f64, aperture_cm2: f64) -> Result<f64, AnalysisError> {
    positive("DNI", dni)?;
    positive("aperture", aperture_cm2)?;
    Ok(pmax / (dni * aperture_cm2 * 1e-4))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FfSlope {
    /// Fill-factor change per W/m².
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
}

/// Ordinary least-squares line of FF against DNI.
pub fn ff_slope(records: &[MeasurementRecord], cfg: &RatingConfig) -> Result<FfSlope, AnalysisError> {
    check_support(records, cfg)?;
    let n = records.len() as f64;
    let mx = records.iter().map(|r| r.weather.dni).sum::<f64>() / n;
    let my = records.iter().map(|r| r.summary.ff).sum::<f64>() / n;
    let (sxy, sxx) = records.iter().fold((0.0, 0.0), |(sxy, sxx), r| {
        let dx = r.weather.dni - mx;
        (sxy + dx * (r.summary.ff - my), sxx + dx * dx)
    });
    let slope = sxy / sxx;
    Ok(FfSlope { slope, intercept: my - slope * mx, n: records.len() })
}
