use serde::{Deserialize, Serialize};

use crate::calibration::metrics::{calibration_report, MetricConfig};
use crate::calibration::{LogitBatch, ProbBatch};
use crate::error::{invalid, Result};
use crate::numerics::softmax_rows;
use crate::scalar::Scalar;

pub const TAU_MIN: f64 = 0.05;
pub const TAU_MAX: f64 = 10.0;
const GRID_POINTS: usize = 50;
const TAU_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureScaler {
    tau: f64,
}

impl TemperatureScaler {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return invalid(format!("temperature must be positive, got {tau}"));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Mean NLL of `softmax(z / tau)`, computed through log-sum-exp.
pub fn nll_at<T: Scalar>(batch: &LogitBatch<T>, tau: f64) -> f64 {
    let inv = 1.0 / tau;
    let mut total = 0.0;
    for (i, &y) in batch.labels().iter().enumerate() {
        let row = batch.logits().row(i);
        let scaled: Vec<f64> = row.iter().map(|z| z.to_f64_lossy() * inv).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scaled.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - scaled[y];
    }
    total / batch.len() as f64
}

/// Fit tau on [0.05, 10] by a 50-point log grid followed by golden-section
/// refinement; never returns a tau whose NLL exceeds that of tau = 1.
pub fn fit_temperature<T: Scalar>(validation: &LogitBatch<T>) -> Result<TemperatureScaler> {
    if validation.is_empty() {
        return invalid("temperature fitting needs at least one sample");
    }
    let (lo, hi) = (TAU_MIN.ln(), TAU_MAX.ln());
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| (lo + (hi - lo) * k as f64 / (GRID_POINTS - 1) as f64).exp())
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| nll_at(validation, t)).collect();
    let best = (0..GRID_POINTS)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty grid");

    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(GRID_POINTS - 1)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (nll_at(validation, c), nll_at(validation, d));
    while (b - a).abs() > TAU_TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = nll_at(validation, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = nll_at(validation, d);
        }
    }

    let candidates = [0.5 * (a + b), a, b, grid[best], 1.0];
    let tau = candidates
        .iter()
        .copied()
        .min_by(|&x, &y| nll_at(validation, x).total_cmp(&nll_at(validation, y)))
        .expect("candidates");
    TemperatureScaler::new(tau)
}

/// Row-wise `softmax(z / tau)`.
pub fn apply_temperature<T: Scalar>(
    logits: &LogitBatch<T>,
    scaler: &TemperatureScaler,
) -> Result<ProbBatch<T>> {
    let tau = TemperatureScaler::new(scaler.tau())?.tau();
    let scaled = logits.logits().scale(T::one() / T::of(tau));
    ProbBatch::new(softmax_rows(&scaled)?, logits.labels().to_vec())
}

/// ECE of `softmax(z / tau)` for every tau of a user grid.
pub fn temperature_sweep<T: Scalar>(
    logits: &LogitBatch<T>,
    taus: &[f64],
    metrics: &MetricConfig,
) -> Result<Vec<(f64, f64)>> {
    taus.iter()
        .map(|&tau| {
            let probs = apply_temperature(logits, &TemperatureScaler::new(tau)?)?;
            Ok((tau, calibration_report(&probs, metrics)?.metrics.ece))
        })
        .collect()
}
