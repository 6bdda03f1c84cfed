//! Measurement campaign over simulated time.
//!
//! Each cycle visits the sub-modules in order, one slot each. Within a slot
//! the sun and weather are frozen at the slot start: the sky gate is
//! checked, the tracker aligns (or simply follows the ephemeris) and the
//! I-V sweep is taken. The rig is one physical actor, so a campaign is
//! strictly sequential.

mod log;

pub use self::log::{
    read_log, read_session, write_log, write_session, CsvLogSink, NullSink, RecordSink, SessionRow, LOG_HEADER,
    SESSION_HEADER,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::SubModuleSpec;
use crate::env::{sun_path, DayConfig, EnvError, WeatherSample, WeatherSeries};
use crate::meter::{self, IVSummary, MeterConfig, MeterError, SourceMeter};
use crate::optics::{self, AzEl};
use crate::tracker::{
    self, astro_pointing, cloudless_at, scan_align, CloudlessConfig, ScanConfig, TrackerError, TrackerState,
    TrackingMode,
};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("unknown sub-module `{0}`")]
    UnknownSubModule(String),
    #[error("weather series is empty")]
    NoWeather,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Meter(#[from] MeterError),
}

/// Tracking mode in force from `from` (seconds since epoch) onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSwitch {
    pub from: i64,
    pub mode: TrackingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub cycle_period_s: i64,
    pub slot_s: i64,
    /// Visiting order by sub-module id; empty means declaration order.
    pub order: Vec<String>,
    /// Optional campaign window, seconds since epoch.
    pub start: Option<i64>,
    pub end: Option<i64>,
    pub mode: TrackingMode,
    pub schedule: Vec<ModeSwitch>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            cycle_period_s: 196,
            slot_s: 10,
            order: Vec::new(),
            start: None,
            end: None,
            mode: TrackingMode::ScanAlign,
            schedule: Vec::new(),
        }
    }
}

impl CampaignConfig {
    pub fn mode_at(&self, t: i64) -> TrackingMode {
        self.schedule.iter().filter(|s| s.from <= t).max_by_key(|s| s.from).map_or(self.mode, |s| s.mode)
    }
}

/// Everything the simulated rig needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub day: DayConfig,
    pub submodules: Vec<SubModuleSpec>,
    pub campaign: CampaignConfig,
    pub scan: ScanConfig,
    pub resolution: f64,
    pub meter: MeterConfig,
    pub cloudless: CloudlessConfig,
    pub seed: u64,
}

impl Rig {
    pub fn new(day: DayConfig, submodules: Vec<SubModuleSpec>) -> Self {
        Self {
            day,
            submodules,
            campaign: CampaignConfig::default(),
            scan: ScanConfig::default(),
            resolution: tracker::DEFAULT_RESOLUTION,
            meter: MeterConfig::default(),
            cloudless: CloudlessConfig::default(),
            seed: 0,
        }
    }

    pub fn submodule(&self, id: &str) -> Result<&SubModuleSpec, CampaignError> {
        self.submodules.iter().find(|s| s.id == id).ok_or_else(|| CampaignError::UnknownSubModule(id.into()))
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let cfg = &self.campaign;
        if cfg.cycle_period_s <= 0 || cfg.slot_s <= 0 {
            return Err(CampaignError::Config("cycle period and slot length must be > 0".into()));
        }
        let n = self.visit_order()?.len() as i64;
        if cfg.slot_s * n > cfg.cycle_period_s {
            return Err(CampaignError::Config(format!(
                "{n} slots of {} s do not fit in a {} s cycle",
                cfg.slot_s, cfg.cycle_period_s
            )));
        }
        for (i, s) in self.submodules.iter().enumerate() {
            s.validate().map_err(|e| CampaignError::Config(e.to_string()))?;
            if self.submodules[..i].iter().any(|o| o.id == s.id) {
                return Err(CampaignError::Config(format!("duplicate sub-module id `{}`", s.id)));
            }
        }
        self.day.validate().map_err(|e| CampaignError::Config(e.to_string()))?;
        self.scan.validate().map_err(|e| CampaignError::Config(e.to_string()))?;
        if !(self.resolution > 0.0) {
            return Err(CampaignError::Config("tracker resolution must be > 0".into()));
        }
        Ok(())
    }

    fn visit_order(&self) -> Result<Vec<&SubModuleSpec>, CampaignError> {
        if self.campaign.order.is_empty() {
            Ok(self.submodules.iter().collect())
        } else {
            self.campaign.order.iter().map(|id| self.submodule(id)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub timestamp: i64,
    pub submodule_id: String,
    pub summary: IVSummary,
    pub pointing: AzEl,
    /// Angle between optical axis and true sun, degrees.
    pub deviation: f64,
    pub weather: WeatherSample,
    pub mode: TrackingMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipEntry {
    pub timestamp: i64,
    pub submodule_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CampaignLog {
    pub records: Vec<MeasurementRecord>,
    pub skips: Vec<SkipEntry>,
    pub cycles: usize,
}

/// Smallest spacing between consecutive weather samples.
fn sample_interval(weather: &WeatherSeries) -> i64 {
    weather.samples().windows(2).map(|w| w[1].timestamp - w[0].timestamp).min().unwrap_or(0)
}

/// Weather sample frozen for a slot starting at `t`.
fn snapshot(weather: &WeatherSeries, t: i64, interval: i64) -> Option<WeatherSample> {
    weather.at_or_before(t).filter(|s| t - s.timestamp <= interval).copied()
}

enum SlotOutcome {
    Record(MeasurementRecord),
    Skip(String),
    Idle,
}

fn run_slot(
    rig: &Rig,
    spec: &SubModuleSpec,
    t: i64,
    weather: &WeatherSeries,
    interval: i64,
    tracker: &mut TrackerState,
    meter: &mut SourceMeter,
) -> Result<SlotOutcome, CampaignError> {
    let sun = match sun_path(t, &rig.day) {
        Ok(s) => s,
        Err(EnvError::SunBelowHorizon { .. }) => return Ok(SlotOutcome::Idle),
        Err(e) => return Err(CampaignError::Config(e.to_string())),
    };
    let Some(snap) = snapshot(weather, t, interval) else {
        return Ok(SlotOutcome::Idle);
    };
    if !cloudless_at(weather, t, &rig.cloudless) {
        return Ok(SlotOutcome::Skip("sky not stable".into()));
    }
    let spec = spec.at_time(t);
    let mode = rig.campaign.mode_at(t);
    tracker.mode = mode;
    let truth = sun.truth();

    let target = match mode {
        TrackingMode::OpenLoop => match astro_pointing(&sun, rig.resolution) {
            Ok(p) => p,
            Err(e) => return Ok(SlotOutcome::Skip(e.to_string())),
        },
        TrackingMode::ScanAlign => {
            let mut failure = None;
            let outcome = scan_align(&spec, &sun, &rig.scan, rig.resolution, |pose| {
                let reached = tracker.move_to(pose);
                match meter.measure_isc(&spec, reached, truth, &snap) {
                    Ok(i) => i,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            });
            if let Some(e) = failure {
                return Err(e.into());
            }
            match outcome {
                Ok(o) => o.pointing,
                Err(e @ (TrackerError::AlignmentFailed | TrackerError::OutOfRange { .. } | TrackerError::Parked)) => {
                    ::log::info!("{} at {t}: {e}", spec.id);
                    return Ok(SlotOutcome::Skip(e.to_string()));
                }
                Err(e) => return Err(CampaignError::Config(e.to_string())),
            }
        }
    };
    let pointing = tracker.move_to(target);
    let curve = match meter.measure_iv(&spec, pointing, truth, &snap) {
        Ok(c) => c,
        Err(e @ MeterError::DarkCell(_)) => return Ok(SlotOutcome::Skip(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let summary = meter::summarize(&curve)?;
    Ok(SlotOutcome::Record(MeasurementRecord {
        timestamp: t,
        submodule_id: spec.id.clone(),
        summary,
        pointing,
        deviation: optics::angular_deviation(pointing, truth, spec.mount_offset),
        weather: snap,
        mode,
    }))
}

/// Runs the campaign until the weather series (or the configured window)
/// runs out. A cycle only starts if the weather covers all of it.
pub fn run_campaign(
    rig: &Rig,
    weather: &WeatherSeries,
    sink: &mut dyn RecordSink,
) -> Result<CampaignLog, CampaignError> {
    rig.validate()?;
    let (Some(first), Some(last)) = (weather.first(), weather.last()) else {
        return Err(CampaignError::NoWeather);
    };
    let interval = sample_interval(weather).max(1);
    let start = rig.campaign.start.map_or(first.timestamp, |s| s.max(first.timestamp));
    let end = rig.campaign.end.map_or(last.timestamp, |e| e.min(last.timestamp));
    let order = rig.visit_order()?;
    let mut tracker = TrackerState { resolution: rig.resolution, mode: rig.campaign.mode, ..Default::default() };
    let mut meter = SourceMeter::new(rig.meter, rig.seed);

    let mut log = CampaignLog::default();
    let mut cycle_start = start;
    while cycle_start + rig.campaign.cycle_period_s <= end {
        let mut active = false;
        for (k, spec) in order.iter().enumerate() {
            let t = cycle_start + k as i64 * rig.campaign.slot_s;
            match run_slot(rig, spec, t, weather, interval, &mut tracker, &mut meter)? {
                SlotOutcome::Record(r) => {
                    sink.write(&r)?;
                    log.records.push(r);
                    active = true;
                }
                SlotOutcome::Skip(reason) => {
                    log.skips.push(SkipEntry { timestamp: t, submodule_id: spec.id.clone(), reason });
                    active = true;
                }
                SlotOutcome::Idle => {}
            }
        }
        if active {
            log.cycles += 1;
        }
        cycle_start += rig.campaign.cycle_period_s;
    }
    Ok(log)
}

/// Timing of an acceptance-mapping session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub start: i64,
    pub frame_deg: f64,
    pub step_deg: f64,
    /// Time spent on each grid node, s.
    pub dwell_s: i64,
}

impl SessionPlan {
    pub fn at(start: i64) -> Self {
        Self { start, frame_deg: 3.0, step_deg: 0.25, dwell_s: 2 }
    }

    pub fn offsets(&self) -> Vec<f64> {
        let n = (self.frame_deg / self.step_deg).round() as usize + 1;
        (0..n).map(|i| -0.5 * self.frame_deg + i as f64 * self.step_deg).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceSample {
    pub d_az: f64,
    pub d_el: f64,
    /// Short-circuit current over DNI, A per W/m².
    pub isc_over_dni: f64,
    pub timestamp: i64,
    pub sun_elevation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceSession {
    pub submodule_id: String,
    pub samples: Vec<AcceptanceSample>,
    /// The sky failed the stability gate before the grid was complete.
    pub aborted: bool,
    /// Every sample read zero current.
    pub degenerate: bool,
}

/// Maps Isc/DNI over a square frame of pointing offsets around the
/// ephemeris position, rows along elevation.
pub fn run_acceptance_session(
    rig: &Rig,
    weather: &WeatherSeries,
    submodule_id: &str,
    plan: &SessionPlan,
) -> Result<AcceptanceSession, CampaignError> {
    if !(plan.step_deg > 0.0 && plan.frame_deg > 0.0) || plan.dwell_s < 0 {
        return Err(CampaignError::Config("session frame and step must be > 0".into()));
    }
    let spec = rig.submodule(submodule_id)?;
    let interval = sample_interval(weather).max(1);
    let offsets = plan.offsets();
    let mut meter = SourceMeter::new(rig.meter, rig.seed);
    let mut tracker = TrackerState { resolution: rig.resolution, ..Default::default() };
    let mut samples = Vec::with_capacity(offsets.len() * offsets.len());
    let mut aborted = false;

    'grid: for &d_el in &offsets {
        for &d_az in &offsets {
            let t = plan.start + samples.len() as i64 * plan.dwell_s;
            let sun = sun_path(t, &rig.day).ok();
            let snap = snapshot(weather, t, interval);
            let (Some(sun), Some(snap)) = (sun, snap) else {
                aborted = true;
                break 'grid;
            };
            if !cloudless_at(weather, t, &rig.cloudless) || snap.dni <= 0.0 {
                aborted = true;
                break 'grid;
            }
            let Ok(center) = astro_pointing(&sun, rig.resolution) else {
                aborted = true;
                break 'grid;
            };
            let spec_t = spec.at_time(t);
            let pointing = tracker.move_to(center.offset(d_az, d_el));
            let isc = meter.measure_isc(&spec_t, pointing, sun.truth(), &snap)?;
            samples.push(AcceptanceSample {
                d_az,
                d_el,
                isc_over_dni: isc / snap.dni,
                timestamp: t,
                sun_elevation: sun.true_elevation,
            });
        }
    }
    if aborted {
        ::log::warn!("acceptance session for {submodule_id} aborted after {} samples", samples.len());
    }
    let degenerate = samples.iter().all(|s| s.isc_over_dni.abs() < 1e-15);
    Ok(AcceptanceSession { submodule_id: submodule_id.to_string(), samples, aborted, degenerate })
}
