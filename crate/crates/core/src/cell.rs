//! Lumped electrical model of one triple-junction cell behind its lens.
//!
//! The three junctions are collapsed into a single diode with a lumped
//! `n_vt`, series and shunt resistance. The implicit equation
//!
//! ```text
//! I = Iph - i0 (exp((V + I rs) / n_vt) - 1) - (V + I rs) / rsh
//! ```
//!
//! is solved with a damped Newton iteration kept inside a sign bracket.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::{self, AcceptanceProfile, Deviation, MountOffset};

pub const KELVIN: f64 = 273.15;
/// Newton stops once a step is below this, amperes.
pub const CURRENT_TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 100;
/// Default lumped thermal-voltage product, three junctions at n = 1.1.
pub const DEFAULT_N_VT: f64 = 0.0848;
pub const DEFAULT_THERMAL_K: f64 = 0.03;

#[derive(Debug, Error, PartialEq)]
pub enum CellError {
    #[error("invalid sub-module spec {id}: {reason}")]
    InvalidSpec { id: String, reason: String },
    #[error("invalid diode parameters: {0}")]
    InvalidDiode(String),
    #[error("diode solve did not converge (v = {v} V, iph = {iph} A, after {iterations} iterations)")]
    NoConvergence { v: f64, iph: f64, iterations: usize },
    #[error("diode calibration failed: {0}")]
    Calibration(String),
    #[error("invalid defect config: {0}")]
    InvalidDefect(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcType {
    MicroBeads,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiodeParams {
    /// Saturation current, A.
    pub i0: f64,
    /// Lumped n·kT/q at the reference temperature, V.
    pub n_vt: f64,
    pub r_s: f64,
    pub r_sh: f64,
}

impl DiodeParams {
    pub fn validate(&self) -> Result<(), CellError> {
        if !(self.i0 > 0.0 && self.i0.is_finite()) {
            return Err(CellError::InvalidDiode(format!("i0 must be > 0, got {}", self.i0)));
        }
        if !(self.n_vt > 0.0 && self.n_vt.is_finite()) {
            return Err(CellError::InvalidDiode(format!("n_vt must be > 0, got {}", self.n_vt)));
        }
        if !(self.r_s >= 0.0 && self.r_s.is_finite()) {
            return Err(CellError::InvalidDiode(format!("r_s must be >= 0, got {}", self.r_s)));
        }
        if !(self.r_sh > 0.0) {
            return Err(CellError::InvalidDiode(format!("r_sh must be > 0, got {}", self.r_sh)));
        }
        Ok(())
    }
}

/// Temperature behaviour of a cell. Only used when a run enables thermal
/// effects; rating runs leave it off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalParams {
    /// Heating per unit DNI, °C per W/m².
    pub thermal_k: f64,
    /// Relative photocurrent change per °C.
    pub isc_coeff_per_c: f64,
    /// Open-circuit voltage change per °C, V.
    pub voc_coeff_v_per_c: f64,
    /// Temperature at which the diode parameters hold, °C.
    pub t_ref_c: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self { thermal_k: DEFAULT_THERMAL_K, isc_coeff_per_c: 6e-4, voc_coeff_v_per_c: -4.5e-3, t_ref_c: 25.0 }
    }
}

/// Series-resistance growth and photocurrent loss of a degraded device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectConfig {
    pub rs_multiplier: f64,
    #[serde(default = "one")]
    pub isc_derating: f64,
    /// Optional linear onset: the defect grows from nothing at `start` to
    /// full strength at `end` (seconds since epoch).
    #[serde(default)]
    pub onset: Option<DefectOnset>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectOnset {
    #[serde(rename = "start_epoch_s")]
    pub start: i64,
    #[serde(rename = "end_epoch_s")]
    pub end: i64,
}

impl DefectConfig {
    /// Series-resistance multiplier and photocurrent derating that bring a
    /// sub-module calibrated like reference C down to the defective D row.
    pub const D_SCENARIO: DefectConfig = DefectConfig { rs_multiplier: 3.6, isc_derating: 0.836, onset: None };

    pub fn validate(&self) -> Result<(), CellError> {
        if !(self.rs_multiplier >= 0.0) || !self.rs_multiplier.is_finite() {
            return Err(CellError::InvalidDefect(format!("rs multiplier must be >= 0, got {}", self.rs_multiplier)));
        }
        if !(self.isc_derating >= 0.0) || !self.isc_derating.is_finite() {
            return Err(CellError::InvalidDefect(format!("isc derating must be >= 0, got {}", self.isc_derating)));
        }
        if let Some(onset) = self.onset {
            if onset.end < onset.start {
                return Err(CellError::InvalidDefect("onset ends before it starts".into()));
            }
        }
        Ok(())
    }

    /// Fraction of full strength reached at `timestamp`.
    pub fn progress(&self, timestamp: i64) -> f64 {
        match self.onset {
            None => 1.0,
            Some(DefectOnset { start, end }) if end == start => {
                if timestamp >= end {
                    1.0
                } else {
                    0.0
                }
            }
            Some(DefectOnset { start, end }) => ((timestamp - start) as f64 / (end - start) as f64).clamp(0.0, 1.0),
        }
    }
}

/// One lens + cell pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubModuleSpec {
    pub id: String,
    pub arc_type: ArcType,
    /// One-sun short-circuit density from EQE, mA/cm².
    pub jsc_eqe: f64,
    /// Active cell area, cm².
    pub cell_area: f64,
    pub c_geo: f64,
    pub eta_opt: f64,
    /// Clear lens aperture, cm².
    pub lens_aperture: f64,
    pub profile: AcceptanceProfile,
    pub mount_offset: MountOffset,
    pub diode: DiodeParams,
    pub thermal: ThermalParams,
    /// Photocurrent multiplier left by defect injection (1 for a healthy cell).
    #[serde(default = "one")]
    pub derating: f64,
    /// Defect still to be applied over time, if the device degrades during a run.
    #[serde(default)]
    pub defect: Option<DefectConfig>,
}

impl SubModuleSpec {
    pub fn validate(&self) -> Result<(), CellError> {
        let fail = |reason: &str| CellError::InvalidSpec { id: self.id.clone(), reason: reason.into() };
        if !(self.jsc_eqe > 0.0) {
            return Err(fail("jsc_eqe must be > 0"));
        }
        if !(self.cell_area > 0.0) {
            return Err(fail("cell_area must be > 0"));
        }
        if !(self.c_geo >= 1.0) {
            return Err(fail("c_geo must be >= 1"));
        }
        if !(self.eta_opt > 0.0 && self.eta_opt <= 1.2) {
            return Err(fail("eta_opt must be in (0, 1.2]"));
        }
        if !(self.lens_aperture > 0.0) {
            return Err(fail("lens_aperture must be > 0"));
        }
        if !(self.derating >= 0.0) {
            return Err(fail("derating must be >= 0"));
        }
        self.profile.validate().map_err(|e| fail(&e.to_string()))?;
        self.mount_offset.validate().map_err(|e| fail(&e.to_string()))?;
        self.diode.validate()?;
        if let Some(defect) = &self.defect {
            defect.validate()?;
        }
        Ok(())
    }

    /// Photocurrent at 1000 W/m² on axis, A.
    pub fn one_sun_module_current(&self) -> f64 {
        self.jsc_eqe * 1e-3 * self.cell_area * self.c_geo * self.eta_opt * self.derating
    }

    /// The spec as it stands at `timestamp`, with any time-dependent defect applied.
    pub fn at_time(&self, timestamp: i64) -> SubModuleSpec {
        match self.defect {
            None => self.clone(),
            Some(defect) => {
                let k = defect.progress(timestamp);
                let mut spec = self.clone();
                spec.defect = None;
                spec.diode.r_s *= 1.0 + k * (defect.rs_multiplier - 1.0);
                spec.derating *= 1.0 + k * (defect.isc_derating - 1.0);
                spec
            }
        }
    }
}

/// Photocurrent in amperes for a given DNI and sun deviation, without
/// thermal effects.
pub fn photocurrent(spec: &SubModuleSpec, dni: f64, deviation: &Deviation) -> f64 {
    if dni <= 0.0 {
        return 0.0;
    }
    let t = optics::transmission(deviation.theta, &spec.profile, deviation.direction);
    spec.one_sun_module_current() * t * dni / 1000.0
}

/// Linear lumped cell temperature, °C.
pub fn cell_temperature(t_ambient: f64, dni: f64, thermal_k: f64) -> f64 {
    t_ambient + thermal_k * dni.max(0.0)
}

/// Photocurrent and diode parameters at the given operating conditions.
///
/// With `thermal` off the cell sits at its reference temperature and the
/// stored diode parameters are used unchanged.
pub fn operating_point(
    spec: &SubModuleSpec,
    dni: f64,
    t_ambient: f64,
    deviation: &Deviation,
    thermal: bool,
) -> (f64, DiodeParams) {
    let iph = photocurrent(spec, dni, deviation);
    if !thermal {
        return (iph, spec.diode);
    }
    let th = &spec.thermal;
    let t_cell = cell_temperature(t_ambient, dni, th.thermal_k);
    let dt = t_cell - th.t_ref_c;
    let iph_t = (iph * (1.0 + th.isc_coeff_per_c * dt)).max(0.0);
    let mut d = spec.diode;
    d.n_vt = spec.diode.n_vt * (t_cell + KELVIN) / (th.t_ref_c + KELVIN);
    if iph_t > 0.0 {
        // keep Voc(T) = Voc(Tref) + coeff * dT at the present photocurrent
        let voc_ref = spec.diode.n_vt * (iph_t / spec.diode.i0).ln_1p();
        let voc_t = voc_ref + th.voc_coeff_v_per_c * dt;
        let ratio = voc_t / d.n_vt;
        d.i0 = iph_t * (-ratio).exp() / (-(-ratio).exp_m1());
    }
    (iph_t, d)
}

fn residual(i: f64, v: f64, iph: f64, d: &DiodeParams) -> (f64, f64) {
    let vd = v + i * d.r_s;
    let e = (vd / d.n_vt).exp();
    let f = iph - d.i0 * (e - 1.0) - vd / d.r_sh - i;
    let df = -d.i0 * e * d.r_s / d.n_vt - d.r_s / d.r_sh - 1.0;
    (f, df)
}

/// Terminal current at voltage `v`.
pub fn iv_current(v: f64, iph: f64, d: &DiodeParams) -> Result<f64, CellError> {
    d.validate()?;
    // f(I) is strictly decreasing; f(hi) <= 0 for v >= 0.
    let mut hi = iph.max(0.0) + d.i0;
    let mut lo = iph.min(0.0) - 1.0;
    let (mut f_lo, _) = residual(lo, v, iph, d);
    let mut expansions = 0;
    while f_lo < 0.0 {
        lo = 2.0 * lo - 1.0;
        f_lo = residual(lo, v, iph, d).0;
        expansions += 1;
        if expansions > 200 {
            return Err(CellError::NoConvergence { v, iph, iterations: 0 });
        }
    }
    if residual(hi, v, iph, d).0 > 0.0 {
        // only possible for v < 0; widen upwards
        while residual(hi, v, iph, d).0 > 0.0 {
            hi = 2.0 * hi + 1.0;
            expansions += 1;
            if expansions > 400 {
                return Err(CellError::NoConvergence { v, iph, iterations: 0 });
            }
        }
    }

    let mut i = iph.clamp(lo, hi);
    for iteration in 0..MAX_ITERATIONS {
        let (f, df) = residual(i, v, iph, d);
        if f == 0.0 {
            return Ok(i);
        }
        if f > 0.0 {
            lo = i;
        } else {
            hi = i;
        }
        let newton = i - f / df;
        let next = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let step = (next - i).abs();
        i = next;
        if step < CURRENT_TOLERANCE * 1e-3 || (hi - lo) < CURRENT_TOLERANCE * 1e-3 {
            let (f, _) = residual(i, v, iph, d);
            if f.abs() < CURRENT_TOLERANCE {
                return Ok(i);
            }
        }
        if iteration + 1 == MAX_ITERATIONS {
            break;
        }
    }
    let (f, _) = residual(i, v, iph, d);
    if f.abs() < CURRENT_TOLERANCE {
        Ok(i)
    } else {
        Err(CellError::NoConvergence { v, iph, iterations: MAX_ITERATIONS })
    }
}

/// Open-circuit voltage: the V >= 0 where the terminal current vanishes.
pub fn open_circuit_voltage(iph: f64, d: &DiodeParams) -> Result<f64, CellError> {
    d.validate()?;
    if iph <= 0.0 {
        return Ok(0.0);
    }
    // At I = 0 the series resistance drops out: g(V) = iph - i0 (e^{V/nvt} - 1) - V/rsh.
    let g = |v: f64| {
        let e = (v / d.n_vt).exp();
        (iph - d.i0 * (e - 1.0) - v / d.r_sh, -d.i0 * e / d.n_vt - 1.0 / d.r_sh)
    };
    let (mut lo, mut hi) = (0.0, d.n_vt * (iph / d.i0).ln_1p());
    let mut v = hi;
    for _ in 0..MAX_ITERATIONS {
        let (f, df) = g(v);
        if f > 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        let newton = v - f / df;
        let next = if newton.is_finite() && newton >= lo && newton <= hi { newton } else { 0.5 * (lo + hi) };
        if (next - v).abs() < 1e-15 || hi - lo < 1e-15 {
            return Ok(next);
        }
        v = next;
    }
    Ok(v)
}

/// Saturation current that puts the open-circuit voltage at `voc_target`
/// for photocurrent `iph_ref`.
pub fn calibrate_diode(
    voc_target: f64,
    iph_ref: f64,
    n_vt: f64,
    r_s: f64,
    r_sh: f64,
) -> Result<DiodeParams, CellError> {
    if !(voc_target > 0.0) || !(iph_ref > 0.0) {
        return Err(CellError::Calibration("voc_target and iph_ref must be > 0".into()));
    }
    let drive = iph_ref - voc_target / r_sh;
    let x = voc_target / n_vt;
    // i0 = drive / (e^x - 1), evaluated as drive e^-x / (1 - e^-x) so large x cannot overflow
    let i0 = drive * (-x).exp() / -(-x).exp_m1();
    if !(i0 > 0.0) || !i0.is_finite() {
        return Err(CellError::Calibration(format!(
            "no positive saturation current reaches Voc = {voc_target} V at Iph = {iph_ref} A (i0 = {i0:e})"
        )));
    }
    let params = DiodeParams { i0, n_vt, r_s, r_sh };
    params.validate()?;
    let i_at_voc = iv_current(voc_target, iph_ref, &params)?;
    if i_at_voc.abs() > 1e-6 * iph_ref {
        return Err(CellError::Calibration(format!("calibrated diode leaves {i_at_voc:e} A at Voc")));
    }
    Ok(params)
}

/// Maximum power point of the model curve found by golden-section search
/// on [0, Voc]. Returns (v_mp, i_mp, p_max).
pub fn max_power_point(iph: f64, d: &DiodeParams) -> Result<(f64, f64, f64), CellError> {
    let voc = open_circuit_voltage(iph, d)?;
    let power = |v: f64| iv_current(v, iph, d).map(|i| v * i);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, voc);
    let mut c = b - ratio * (b - a);
    let mut e = a + ratio * (b - a);
    let (mut pc, mut pe) = (power(c)?, power(e)?);
    while b - a > 1e-10 {
        if pc > pe {
            b = e;
            e = c;
            pe = pc;
            c = b - ratio * (b - a);
            pc = power(c)?;
        } else {
            a = c;
            c = e;
            pc = pe;
            e = a + ratio * (b - a);
            pe = power(e)?;
        }
    }
    let v = 0.5 * (a + b);
    let i = iv_current(v, iph, d)?;
    Ok((v, i, v * i))
}

/// Fill factor of the model curve.
pub fn fill_factor(iph: f64, d: &DiodeParams) -> Result<f64, CellError> {
    let isc = iv_current(0.0, iph, d)?;
    let voc = open_circuit_voltage(iph, d)?;
    let (_, _, p) = max_power_point(iph, d)?;
    Ok(p / (isc * voc))
}

/// Series resistance giving `target_ff` at photocurrent `iph`, found by
/// bisection (the fill factor falls monotonically with r_s).
pub fn calibrate_series_resistance(target_ff: f64, iph: f64, d: &DiodeParams) -> Result<f64, CellError> {
    let ff_at = |r_s: f64| fill_factor(iph, &DiodeParams { r_s, ..*d });
    let ff0 = ff_at(0.0)?;
    if !(target_ff > 0.0 && target_ff <= ff0) {
        return Err(CellError::Calibration(format!("target FF {target_ff} unreachable (zero-r_s FF is {ff0:.4})")));
    }
    let mut hi = 1.0;
    while ff_at(hi)? > target_ff {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(CellError::Calibration("series resistance search diverged".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ff_at(mid)? > target_ff {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Applies a defect at full strength.
pub fn inject_defect(spec: &SubModuleSpec, defect: &DefectConfig) -> Result<SubModuleSpec, CellError> {
    defect.validate()?;
    let mut out = spec.clone();
    out.diode.r_s *= defect.rs_multiplier;
    out.derating *= defect.isc_derating;
    Ok(out)
}

/// Attaches a defect that grows over time according to its onset window.
pub fn schedule_defect(spec: &SubModuleSpec, defect: &DefectConfig) -> Result<SubModuleSpec, CellError> {
    defect.validate()?;
    let mut out = spec.clone();
    out.defect = Some(*defect);
    Ok(out)
}
