use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::sun::SECONDS_PER_DAY;
use super::EnvError;

pub const WEATHER_HEADER: [&str; 4] = ["timestamp_utc", "dni_wm2", "dhi_wm2", "t_ambient_c"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherSample {
    /// Seconds since epoch, UTC.
    pub timestamp: i64,
    pub dni: f64,
    pub diffuse: f64,
    pub t_ambient: f64,
}

/// Weather samples with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeatherSeries(Vec<WeatherSample>);

impl WeatherSeries {
    pub fn new(samples: Vec<WeatherSample>) -> Result<Self, EnvError> {
        for (idx, s) in samples.iter().enumerate() {
            let line = idx as u64 + 2;
            if !(s.dni >= 0.0) || !(s.diffuse >= 0.0) || !s.t_ambient.is_finite() {
                return Err(EnvError::Row { line, message: "irradiance must be >= 0 and temperature finite".into() });
            }
            if idx > 0 && s.timestamp <= samples[idx - 1].timestamp {
                return Err(EnvError::NonMonotone {
                    line,
                    timestamp: format_timestamp(s.timestamp),
                    previous: format_timestamp(samples[idx - 1].timestamp),
                });
            }
        }
        Ok(Self(samples))
    }

    pub fn samples(&self) -> &[WeatherSample] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<&WeatherSample> {
        self.0.first()
    }

    pub fn last(&self) -> Option<&WeatherSample> {
        self.0.last()
    }

    /// Latest sample with `timestamp <= t`.
    pub fn at_or_before(&self, t: i64) -> Option<&WeatherSample> {
        let idx = self.0.partition_point(|s| s.timestamp <= t);
        idx.checked_sub(1).map(|i| &self.0[i])
    }

    /// Sample closest in time to `t`; ties go to the earlier sample.
    pub fn nearest(&self, t: i64) -> Option<&WeatherSample> {
        let idx = self.0.partition_point(|s| s.timestamp < t);
        let after = self.0.get(idx);
        let before = idx.checked_sub(1).and_then(|i| self.0.get(i));
        match (before, after) {
            (Some(b), Some(a)) => Some(if t - b.timestamp <= a.timestamp - t { b } else { a }),
            (b, a) => b.or(a),
        }
    }

    /// Samples with `start <= timestamp <= end`.
    pub fn window(&self, start: i64, end: i64) -> &[WeatherSample] {
        let lo = self.0.partition_point(|s| s.timestamp < start);
        let hi = self.0.partition_point(|s| s.timestamp <= end);
        &self.0[lo..hi.max(lo)]
    }
}

pub fn format_timestamp(t: i64) -> String {
    match DateTime::<Utc>::from_timestamp(t, 0) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => t.to_string(),
    }
}

/// Parses an ISO-8601 timestamp. Offsets are honoured; a timestamp without
/// one is taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(naive.and_utc().timestamp());
        }
    }
    None
}

pub fn load_weather(path: &Path) -> Result<WeatherSeries, EnvError> {
    let file = std::fs::File::open(path).map_err(|source| EnvError::Io { path: path.display().to_string(), source })?;
    read_weather(file)
}

pub fn read_weather<R: Read>(reader: R) -> Result<WeatherSeries, EnvError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| EnvError::Row { line: 1, message: e.to_string() })?.clone();
    let mut columns = [0usize; 4];
    for (slot, name) in columns.iter_mut().zip(WEATHER_HEADER) {
        *slot = headers.iter().position(|h| h == name).ok_or(EnvError::MissingColumn { column: name })?;
    }

    let mut samples: Vec<WeatherSample> = Vec::new();
    for record in rdr.records() {
        let record =
            record.map_err(|e| EnvError::Row { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(columns[i]).unwrap_or("");
        let timestamp = parse_timestamp(field(0))
            .ok_or_else(|| EnvError::Row { line, message: format!("bad timestamp `{}`", field(0)) })?;
        let number = |i: usize| -> Result<f64, EnvError> {
            let raw = field(i);
            raw.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| EnvError::Row { line, message: format!("bad {} `{raw}`", WEATHER_HEADER[i]) })
        };
        let sample = WeatherSample { timestamp, dni: number(1)?, diffuse: number(2)?, t_ambient: number(3)? };
        if sample.dni < 0.0 {
            return Err(EnvError::Row { line, message: format!("negative DNI {}", sample.dni) });
        }
        if sample.diffuse < 0.0 {
            return Err(EnvError::Row { line, message: format!("negative diffuse irradiance {}", sample.diffuse) });
        }
        if let Some(prev) = samples.last() {
            if timestamp <= prev.timestamp {
                return Err(EnvError::NonMonotone {
                    line,
                    timestamp: field(0).to_string(),
                    previous: format_timestamp(prev.timestamp),
                });
            }
        }
        samples.push(sample);
    }
    WeatherSeries::new(samples)
}

pub fn write_weather<W: Write>(series: &WeatherSeries, out: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(WEATHER_HEADER)?;
    for s in series.samples() {
        wtr.write_record([
            format_timestamp(s.timestamp),
            s.dni.to_string(),
            s.diffuse.to_string(),
            s.t_ambient.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Interval of depressed DNI and raised diffuse light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudEvent {
    /// Day index within the series, starting at 0.
    pub day: u32,
    pub start_hour: f64,
    pub duration_min: f64,
    /// DNI never exceeds this inside the event, W/m².
    pub dni_wm2: f64,
    pub diffuse_wm2: f64,
}

impl CloudEvent {
    fn covers(&self, day: u32, hour: f64) -> bool {
        day == self.day && hour >= self.start_hour && hour < self.start_hour + self.duration_min / 60.0
    }
}

/// Clear-sky template with optional noise, day-to-day variation and clouds.
///
/// Each day DNI follows `peak * sin(pi f)^shape` over the daylight fraction
/// `f`, diffuse follows `diffuse_clear * sin(pi f)^0.5` and the ambient
/// temperature rises from `t_min` to `t_max` at solar noon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthWeatherConfig {
    /// Midnight UTC of the first day, seconds since epoch.
    pub start_epoch: i64,
    pub n_days: u32,
    pub interval_s: i64,
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    pub peak_dni_wm2: f64,
    pub dni_shape_exponent: f64,
    pub diffuse_clear_wm2: f64,
    pub t_min_c: f64,
    pub t_max_c: f64,
    pub dni_noise_wm2: f64,
    pub t_noise_c: f64,
    /// Uniform day-to-day spread of the peak DNI, ± W/m².
    pub day_dni_jitter_wm2: f64,
    /// Uniform day-to-day shift of the temperature profile, ± °C.
    pub day_temp_jitter_c: f64,
    pub clouds: Vec<CloudEvent>,
}

impl Default for SynthWeatherConfig {
    fn default() -> Self {
        Self {
            start_epoch: 19_219 * SECONDS_PER_DAY,
            n_days: 1,
            interval_s: 10,
            sunrise_hour: 6.0,
            sunset_hour: 20.0,
            peak_dni_wm2: 950.0,
            dni_shape_exponent: 0.25,
            diffuse_clear_wm2: 90.0,
            t_min_c: 14.0,
            t_max_c: 26.0,
            dni_noise_wm2: 0.0,
            t_noise_c: 0.0,
            day_dni_jitter_wm2: 0.0,
            day_temp_jitter_c: 0.0,
            clouds: Vec::new(),
        }
    }
}

impl SynthWeatherConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.interval_s <= 0 {
            return Err(EnvError::Config(format!("sample interval must be > 0 s, got {}", self.interval_s)));
        }
        if !(0.0..24.0).contains(&self.sunrise_hour)
            || !(self.sunset_hour > self.sunrise_hour)
            || self.sunset_hour > 24.0
        {
            return Err(EnvError::Config("need 0 <= sunrise < sunset <= 24 h".into()));
        }
        let non_negative = [
            ("peak_dni_wm2", self.peak_dni_wm2),
            ("diffuse_clear_wm2", self.diffuse_clear_wm2),
            ("dni_noise_wm2", self.dni_noise_wm2),
            ("t_noise_c", self.t_noise_c),
            ("day_dni_jitter_wm2", self.day_dni_jitter_wm2),
            ("day_temp_jitter_c", self.day_temp_jitter_c),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(EnvError::Config(format!("{name} must be >= 0")));
            }
        }
        if !(self.dni_shape_exponent > 0.0) {
            return Err(EnvError::Config("dni_shape_exponent must be > 0".into()));
        }
        if self.n_days == 0 {
            return Err(EnvError::Config("n_days must be >= 1".into()));
        }
        Ok(())
    }
}

pub fn synth_weather(params: &SynthWeatherConfig, seed: u64) -> Result<WeatherSeries, EnvError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let draw = |rng: &mut ChaCha8Rng, sigma: f64| if sigma > 0.0 { sigma * unit.sample(rng) } else { 0.0 };
    let uniform = |rng: &mut ChaCha8Rng, half: f64| {
        if half > 0.0 {
            half * (2.0 * rand::Rng::random::<f64>(rng) - 1.0)
        } else {
            0.0
        }
    };

    let rise = (params.sunrise_hour * 3600.0).round() as i64;
    let set = (params.sunset_hour * 3600.0).round() as i64;
    let span = (set - rise) as f64;
    let mut samples = Vec::new();
    for day in 0..params.n_days {
        let peak = params.peak_dni_wm2 + uniform(&mut rng, params.day_dni_jitter_wm2);
        let t_shift = uniform(&mut rng, params.day_temp_jitter_c);
        let midnight = params.start_epoch + day as i64 * SECONDS_PER_DAY;
        let mut tod = rise;
        while tod <= set {
            let f = (tod - rise) as f64 / span;
            let s = (std::f64::consts::PI * f).sin().max(0.0);
            let hour = tod as f64 / 3600.0;
            let mut dni = peak * s.powf(params.dni_shape_exponent) + draw(&mut rng, params.dni_noise_wm2);
            let mut diffuse = params.diffuse_clear_wm2 * s.sqrt();
            let t_ambient =
                params.t_min_c + (params.t_max_c - params.t_min_c) * s + t_shift + draw(&mut rng, params.t_noise_c);
            if let Some(cloud) = params.clouds.iter().find(|c| c.covers(day, hour)) {
                dni = dni.min(cloud.dni_wm2 * s.powf(params.dni_shape_exponent));
                diffuse = cloud.diffuse_wm2;
            }
            samples.push(WeatherSample { timestamp: midnight + tod, dni: dni.max(0.0), diffuse, t_ambient });
            tod += params.interval_s;
        }
    }
    WeatherSeries::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV_OK: &str = "timestamp_utc,dni_wm2,dhi_wm2,t_ambient_c\n\
        2022-08-15T12:00:00Z,850.5,80,21.5\n\
        2022-08-15T12:00:10Z,851,80.2,21.5\n\
        2022-08-15T12:00:20Z,852,79.9,21.6\n";

    #[test]
    fn reads_valid_file() {
        let s = read_weather(CSV_OK.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.samples()[0].timestamp, 1_660_564_800);
        assert_eq!(s.samples()[2].dni, 852.0);
    }

    #[test]
    fn negative_dni_names_line() {
        let csv = CSV_OK.replace("851,", "-5,");
        match read_weather(csv.as_bytes()) {
            Err(EnvError::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shuffled_timestamps_rejected() {
        let csv = "timestamp_utc,dni_wm2,dhi_wm2,t_ambient_c\n\
            2022-08-15T12:00:10Z,850,80,21\n\
            2022-08-15T12:00:00Z,850,80,21\n";
        assert!(matches!(read_weather(csv.as_bytes()), Err(EnvError::NonMonotone { line: 3, .. })));
    }

    #[test]
    fn missing_column_and_bad_numbers() {
        let csv = "timestamp_utc,dni_wm2,t_ambient_c\n2022-08-15T12:00:00Z,850,21\n";
        assert!(matches!(read_weather(csv.as_bytes()), Err(EnvError::MissingColumn { column: "dhi_wm2" })));
        let csv = CSV_OK.replace("80.2", "8o.2");
        assert!(matches!(read_weather(csv.as_bytes()), Err(EnvError::Row { line: 3, .. })));
    }

    #[test]
    fn write_then_read() {
        let series = synth_weather(&SynthWeatherConfig { dni_noise_wm2: 3.0, ..Default::default() }, 7).unwrap();
        let mut buf = Vec::new();
        write_weather(&series, &mut buf).unwrap();
        assert_eq!(read_weather(buf.as_slice()).unwrap(), series);
    }

    #[test]
    fn lookup_helpers() {
        let s = read_weather(CSV_OK.as_bytes()).unwrap();
        let t0 = s.samples()[0].timestamp;
        assert_eq!(s.at_or_before(t0 + 15).unwrap().timestamp, t0 + 10);
        assert!(s.at_or_before(t0 - 1).is_none());
        assert_eq!(s.nearest(t0 + 16).unwrap().timestamp, t0 + 20);
        assert_eq!(s.nearest(t0 + 5).unwrap().timestamp, t0);
        assert_eq!(s.window(t0 + 5, t0 + 20).len(), 2);
    }

    #[test]
    fn clear_template_midday_passes_dni_threshold() {
        let cfg = SynthWeatherConfig::default();
        let s = synth_weather(&cfg, 1).unwrap();
        let noon = cfg.start_epoch + 13 * 3600;
        let midday = s.window(noon - 3 * 3600, noon + 3 * 3600);
        assert!(!midday.is_empty());
        assert!(midday.iter().all(|w| w.dni > 750.0 && w.dni <= 950.0));
        assert_eq!(s.samples().iter().map(|w| w.dni).fold(0.0, f64::max), 950.0);
    }

    #[test]
    fn deterministic_and_seed_free_without_noise() {
        let cfg = SynthWeatherConfig { n_days: 2, ..Default::default() };
        assert_eq!(synth_weather(&cfg, 1).unwrap(), synth_weather(&cfg, 99).unwrap());
        let noisy = SynthWeatherConfig { dni_noise_wm2: 5.0, day_dni_jitter_wm2: 20.0, ..cfg };
        assert_eq!(synth_weather(&noisy, 3).unwrap(), synth_weather(&noisy, 3).unwrap());
        assert_ne!(synth_weather(&noisy, 3).unwrap(), synth_weather(&noisy, 4).unwrap());
    }

    #[test]
    fn timestamps_step_by_interval() {
        let cfg = SynthWeatherConfig { n_days: 2, ..Default::default() };
        let s = synth_weather(&cfg, 0).unwrap();
        let per_day = (14 * 3600 / 10 + 1) as usize;
        assert_eq!(s.len(), 2 * per_day);
        for day in s.samples().chunks(per_day) {
            assert!(day.windows(2).all(|w| w[1].timestamp - w[0].timestamp == 10));
        }
    }

    #[test]
    fn cloud_event_depresses_dni() {
        let cloud = CloudEvent { day: 0, start_hour: 12.0, duration_min: 20.0, dni_wm2: 300.0, diffuse_wm2: 250.0 };
        let cfg = SynthWeatherConfig { clouds: vec![cloud], dni_noise_wm2: 10.0, ..Default::default() };
        let s = synth_weather(&cfg, 5).unwrap();
        let start = cfg.start_epoch + 12 * 3600;
        let inside = s.window(start, start + 20 * 60 - 1);
        assert_eq!(inside.len(), 120);
        assert!(inside.iter().all(|w| w.dni <= 300.0 && w.diffuse == 250.0));
        assert!(s.window(start + 20 * 60, start + 30 * 60).iter().all(|w| w.dni > 750.0));
    }

    #[test]
    fn rejects_nonpositive_interval() {
        let cfg = SynthWeatherConfig { interval_s: 0, ..Default::default() };
        assert!(matches!(synth_weather(&cfg, 0), Err(EnvError::Config(_))));
    }
}
