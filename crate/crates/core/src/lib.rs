//! Simulator and data pipeline for an outdoor concentrator-photovoltaic
//! test rig: sun and weather, lens optics, cell electrics, a two-axis
//! tracker, a source-measure unit, the measurement campaign, and the
//! rating and acceptance-angle analyses.

pub mod analysis;
pub mod campaign;
pub mod cell;
pub mod env;
pub mod meter;
pub mod optics;
pub mod presets;
pub mod tracker;
