//! Post-processing of campaign data: sample filtering, CSOC regression
//! rating, concentration figures, and acceptance-angle extraction.

mod acceptance;
mod filter;
mod rating;

pub use acceptance::{
    acceptance_angle, analyze_sessions, build_map, contour90, project_angles, AcceptanceMap, AcceptanceResult,
    AngleEstimate, Contour, MapGrid, MapPoint, ACCEPTANCE_BAND,
};
pub use filter::{filter_samples, FilterConfig, FilterOutcome, FilterRule, Rejection};
pub use rating::{
    ctm, effective_concentration, efficiency, ff_slope, fit_law, regress_csoc, CsocRating, FfSlope, LawFit,
    RatingConfig, RegressionMode,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("record at {timestamp} is outside weather coverage")]
    Coverage { timestamp: i64 },
    #[error("insufficient filtered data (n = {n}, need {min})")]
    InsufficientData { n: usize, min: usize },
    #[error("DNI span {span:.1} W/m² is below the required {min:.1} W/m²")]
    DniSpan { span: f64, min: f64 },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("regression failed: {0}")]
    Regression(String),
    #[error("no map samples")]
    NoSamples,
    #[error("map needs at least 4 non-collinear samples")]
    TooFewMapSamples,
    #[error("uniform map has no maximum region")]
    UniformMap,
    #[error("contour exceeds frame")]
    ContourExceedsFrame,
    #[error("no 90% crossing sampled; map with a finer angular step")]
    NoCrossing,
}
