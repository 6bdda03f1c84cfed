//! Scenario files: one TOML document describing the rig, the sky, the
//! campaign and the analysis settings. Every physical quantity carries its
//! unit in the key name.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use cpvbench::analysis::{FilterConfig, RatingConfig};
use cpvbench::campaign::{CampaignConfig, ModeSwitch, Rig, SessionPlan};
use cpvbench::env::{
    load_weather, parse_timestamp, synth_weather, CloudEvent, DayConfig, SynthWeatherConfig, WeatherSeries,
    SECONDS_PER_DAY,
};
use cpvbench::meter::MeterConfig;
use cpvbench::presets::SubModuleTargets;
use cpvbench::tracker::{CloudlessConfig, ScanConfig, TrackingMode, DEFAULT_RESOLUTION};
use serde::Deserialize;

use crate::CliError;

/// Environment variable that replaces the scenario seed.
pub const SEED_ENV: &str = "CPVBENCH_SEED";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    day: DayConfig,
    weather: WeatherSection,
    #[serde(rename = "submodule")]
    submodules: Vec<SubModuleTargets>,
    #[serde(default)]
    campaign: CampaignSection,
    #[serde(default)]
    tracker: TrackerSection,
    #[serde(default)]
    scan: ScanConfig,
    #[serde(default)]
    meter: MeterConfig,
    #[serde(default)]
    cloudless: CloudlessConfig,
    #[serde(default)]
    acceptance: AcceptanceSection,
    #[serde(default)]
    analysis: AnalysisSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeatherSection {
    /// CSV weather file, relative to the scenario file.
    file: Option<PathBuf>,
    synth: Option<SynthSection>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthSection {
    start_date: String,
    n_days: u32,
    interval_s: i64,
    sunrise_hour: f64,
    sunset_hour: f64,
    peak_dni_wm2: f64,
    dni_shape_exponent: f64,
    diffuse_clear_wm2: f64,
    t_min_c: f64,
    t_max_c: f64,
    dni_noise_wm2: f64,
    t_noise_c: f64,
    day_dni_jitter_wm2: f64,
    day_temp_jitter_c: f64,
    clouds: Vec<CloudEvent>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthWeatherConfig::default();
        Self {
            start_date: String::new(),
            n_days: d.n_days,
            interval_s: d.interval_s,
            sunrise_hour: d.sunrise_hour,
            sunset_hour: d.sunset_hour,
            peak_dni_wm2: d.peak_dni_wm2,
            dni_shape_exponent: d.dni_shape_exponent,
            diffuse_clear_wm2: d.diffuse_clear_wm2,
            t_min_c: d.t_min_c,
            t_max_c: d.t_max_c,
            dni_noise_wm2: d.dni_noise_wm2,
            t_noise_c: d.t_noise_c,
            day_dni_jitter_wm2: d.day_dni_jitter_wm2,
            day_temp_jitter_c: d.day_temp_jitter_c,
            clouds: d.clouds,
        }
    }
}

impl SynthSection {
    fn resolve(self) -> Result<SynthWeatherConfig, CliError> {
        let default = SynthWeatherConfig::default();
        let start_epoch = if self.start_date.is_empty() {
            default.start_epoch
        } else {
            let t = utc(&format!("{}T00:00:00Z", self.start_date), "weather.synth.start_date")?;
            t - t.rem_euclid(SECONDS_PER_DAY)
        };
        let cfg = SynthWeatherConfig {
            start_epoch,
            n_days: self.n_days,
            interval_s: self.interval_s,
            sunrise_hour: self.sunrise_hour,
            sunset_hour: self.sunset_hour,
            peak_dni_wm2: self.peak_dni_wm2,
            dni_shape_exponent: self.dni_shape_exponent,
            diffuse_clear_wm2: self.diffuse_clear_wm2,
            t_min_c: self.t_min_c,
            t_max_c: self.t_max_c,
            dni_noise_wm2: self.dni_noise_wm2,
            t_noise_c: self.t_noise_c,
            day_dni_jitter_wm2: self.day_dni_jitter_wm2,
            day_temp_jitter_c: self.day_temp_jitter_c,
            clouds: self.clouds,
        };
        cfg.validate().map_err(|e| CliError::Config(format!("weather.synth: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CampaignSection {
    cycle_period_s: i64,
    slot_s: i64,
    order: Vec<String>,
    start_utc: Option<String>,
    end_utc: Option<String>,
    mode: TrackingMode,
    schedule: Vec<ScheduleEntry>,
}

impl Default for CampaignSection {
    fn default() -> Self {
        let d = CampaignConfig::default();
        Self {
            cycle_period_s: d.cycle_period_s,
            slot_s: d.slot_s,
            order: d.order,
            start_utc: None,
            end_utc: None,
            mode: d.mode,
            schedule: Vec::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleEntry {
    from_utc: String,
    mode: TrackingMode,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrackerSection {
    resolution_deg: f64,
}

impl Default for TrackerSection {
    fn default() -> Self {
        Self { resolution_deg: DEFAULT_RESOLUTION }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AcceptanceSection {
    sessions_utc: Vec<String>,
    /// Sub-modules to map; empty means all.
    submodules: Vec<String>,
    frame_deg: f64,
    step_deg: f64,
    dwell_s: i64,
}

impl Default for AcceptanceSection {
    fn default() -> Self {
        let d = SessionPlan::at(0);
        Self {
            sessions_utc: Vec::new(),
            submodules: Vec::new(),
            frame_deg: d.frame_deg,
            step_deg: d.step_deg,
            dwell_s: d.dwell_s,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AnalysisSection {
    filter: FilterConfig,
    rating: RatingConfig,
    report_decimals: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self { filter: FilterConfig::default(), rating: RatingConfig::default(), report_decimals: 2 }
    }
}

/// Where the weather stream comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum WeatherSource {
    File(PathBuf),
    Synth(SynthWeatherConfig),
}

/// A loaded and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub rig: Rig,
    pub targets: Vec<SubModuleTargets>,
    pub weather: WeatherSource,
    pub sessions: Vec<SessionPlan>,
    /// Sub-modules mapped in each session, in rig order.
    pub session_submodules: Vec<String>,
    pub filter: FilterConfig,
    pub rating: RatingConfig,
    pub report_decimals: usize,
}

fn utc(s: &str, key: &str) -> Result<i64, CliError> {
    parse_timestamp(s).ok_or_else(|| CliError::Config(format!("{key}: bad timestamp `{s}`")))
}

fn positive(key: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{key} must be > 0, got {x}")))
    }
}

impl Scenario {
    /// Reads a scenario file. `seed` replaces the file's seed when given;
    /// relative paths inside the file resolve against its directory.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, seed).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str, base_dir: &Path, seed: Option<u64>) -> Result<Self, CliError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;

        let weather = match (file.weather.file, file.weather.synth) {
            (Some(p), None) => {
                let p = if p.is_absolute() { p } else { base_dir.join(p) };
                if !p.is_file() {
                    return Err(CliError::Config(format!("weather.file: no such file {}", p.display())));
                }
                WeatherSource::File(p)
            }
            (None, Some(s)) => WeatherSource::Synth(s.resolve()?),
            _ => return Err(CliError::Config("weather: give exactly one of `file` and `[weather.synth]`".into())),
        };

        if file.submodules.is_empty() {
            return Err(CliError::Config("at least one [[submodule]] is required".into()));
        }
        let mut seen = HashSet::new();
        for t in &file.submodules {
            if !seen.insert(t.id.as_str()) {
                return Err(CliError::Config(format!("submodule id `{}` is used twice", t.id)));
            }
        }
        let specs = file
            .submodules
            .iter()
            .map(|t| t.build().map_err(|e| CliError::Config(format!("submodule {}: {e}", t.id))))
            .collect::<Result<Vec<_>, _>>()?;

        let c = file.campaign;
        let campaign = CampaignConfig {
            cycle_period_s: c.cycle_period_s,
            slot_s: c.slot_s,
            order: c.order,
            start: c.start_utc.as_deref().map(|s| utc(s, "campaign.start_utc")).transpose()?,
            end: c.end_utc.as_deref().map(|s| utc(s, "campaign.end_utc")).transpose()?,
            mode: c.mode,
            schedule: c
                .schedule
                .iter()
                .map(|e| Ok(ModeSwitch { from: utc(&e.from_utc, "campaign.schedule.from_utc")?, mode: e.mode }))
                .collect::<Result<_, CliError>>()?,
        };

        let seed = seed.unwrap_or(file.seed);
        let mut rig = Rig::new(file.day, specs);
        rig.campaign = campaign;
        rig.scan = file.scan;
        rig.resolution = file.tracker.resolution_deg;
        rig.meter = file.meter;
        rig.cloudless = file.cloudless;
        rig.seed = seed;
        file.day.validate().map_err(|e| CliError::Config(format!("day: {e}")))?;
        rig.scan.validate().map_err(|e| CliError::Config(format!("scan: {e}")))?;
        positive("tracker.resolution_deg", rig.resolution)?;
        rig.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let a = file.acceptance;
        positive("acceptance.frame_deg", a.frame_deg)?;
        positive("acceptance.step_deg", a.step_deg)?;
        if a.dwell_s < 0 {
            return Err(CliError::Config("acceptance.dwell_s must be >= 0".into()));
        }
        let sessions = a
            .sessions_utc
            .iter()
            .map(|s| {
                let start = utc(s, "acceptance.sessions_utc")?;
                Ok(SessionPlan { start, frame_deg: a.frame_deg, step_deg: a.step_deg, dwell_s: a.dwell_s })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        for id in &a.submodules {
            if !seen.contains(id.as_str()) {
                return Err(CliError::Config(format!("acceptance.submodules: unknown sub-module `{id}`")));
            }
        }
        let session_submodules = rig
            .submodules
            .iter()
            .map(|s| s.id.clone())
            .filter(|id| a.submodules.is_empty() || a.submodules.contains(id))
            .collect();

        let f = file.analysis.filter;
        positive("analysis.filter.dni_min_wm2", f.dni_min_wm2)?;
        positive("analysis.filter.diffuse_max_wm2", f.diffuse_max_wm2)?;
        positive("analysis.filter.stability_window_s", f.stability_window_s as f64)?;
        positive("analysis.filter.max_dni_spread", f.max_dni_spread)?;
        positive("analysis.filter.coverage_tolerance_s", f.coverage_tolerance_s as f64)?;
        if !(f.t_min_c < f.t_max_c) {
            return Err(CliError::Config("analysis.filter: t_min_c must be below t_max_c".into()));
        }
        let r = file.analysis.rating;
        positive("analysis.rating.min_samples", r.min_samples as f64)?;
        positive("analysis.rating.min_dni_span_wm2", r.min_dni_span_wm2)?;
        positive("analysis.rating.dni_ref_wm2", r.dni_ref_wm2)?;

        Ok(Self {
            name: file.name,
            seed,
            rig,
            targets: file.submodules,
            weather,
            sessions,
            session_submodules,
            filter: f,
            rating: r,
            report_decimals: file.analysis.report_decimals,
        })
    }

    /// Loads or synthesises the weather stream. Synthetic weather draws
    /// from the scenario seed.
    pub fn weather(&self) -> Result<WeatherSeries, CliError> {
        match &self.weather {
            WeatherSource::File(p) => load_weather(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
            WeatherSource::Synth(cfg) => synth_weather(cfg, self.seed).map_err(|e| CliError::Config(e.to_string())),
        }
    }
}
