//! Metric selection and calibration analysis of meta models.

pub mod calibration;
pub mod selection;

pub use calibration::{calibration, CalibrationBin, CalibrationReport, ConfidenceMode};
pub use selection::{greedy_select, SelectionConfig, SelectionStep, SelectionTrace};
