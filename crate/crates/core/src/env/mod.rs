//! Environmental inputs: the sun's arc across the sky and the weather
//! stream measured (or synthesised) next to the rig.

mod sun;
mod weather;

pub use sun::{sun_path, AstroError, DayConfig, SunState, OBSERVED_MAP_MISALIGNMENT, SECONDS_PER_DAY};
pub use weather::{
    format_timestamp, load_weather, parse_timestamp, read_weather, synth_weather, write_weather, CloudEvent,
    SynthWeatherConfig, WeatherSample, WeatherSeries, WEATHER_HEADER,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("sun below horizon at t = {timestamp}")]
    SunBelowHorizon { timestamp: i64 },
    #[error("invalid day config: {0}")]
    InvalidDay(String),
    #[error("invalid weather config: {0}")]
    Config(String),
    #[error("cannot read weather file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("weather file is missing column `{column}`")]
    MissingColumn { column: &'static str },
    #[error("weather line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("weather line {line}: timestamp {timestamp} does not increase (previous {previous})")]
    NonMonotone { line: u64, timestamp: String, previous: String },
    #[error("weather series is empty")]
    Empty,
}
