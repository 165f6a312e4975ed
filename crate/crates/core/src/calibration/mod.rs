//! Evaluation-time calibration: confidence binning, ECE/MCE/ACE, Brier,
//! NLL, temperature scaling, harmonic-mean reporting and reliability
//! diagrams. Reported values are fractions; multiply by 100 for percent.

mod batch;
mod bins;
mod metrics;
mod reliability;
mod temperature;

pub use batch::{LogitBatch, ProbBatch};
pub use bins::{bin_predictions, equal_width_index, BinScheme, BinStat, ReliabilityBins};
pub use metrics::{
    calibration_report, harmonic_mean, AceMode, CalibrationReport, MetricConfig, MetricSummary,
};
pub use reliability::{reliability_export, DiagramRow, ReliabilityDiagram};
pub use temperature::{
    apply_temperature, fit_temperature, nll_at, temperature_sweep, TemperatureScaler, TAU_MAX,
    TAU_MIN,
};
