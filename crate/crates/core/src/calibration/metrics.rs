use serde::{Deserialize, Serialize};

use crate::calibration::bins::{bin_predictions, BinScheme, ReliabilityBins};
use crate::calibration::ProbBatch;
use crate::error::{invalid, Result};
use crate::losses::PROB_FLOOR;
use crate::scalar::Scalar;

/// How the third bin-based metric is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AceMode {
    /// Unweighted mean gap over the nonempty bins of the shared binning.
    #[default]
    Average,
    /// Unweighted mean gap over nonempty equal-mass bins (adaptive binning).
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub bins: usize,
    pub scheme: BinScheme,
    pub ace_mode: AceMode,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            bins: 15,
            scheme: BinScheme::EqualWidth,
            ace_mode: AceMode::Average,
        }
    }
}

impl MetricConfig {
    pub fn with_bins(bins: usize) -> Self {
        Self {
            bins,
            ..Self::default()
        }
    }
}

/// Headline metrics, all as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub ece: f64,
    pub mce: f64,
    pub ace: f64,
    pub brier: f64,
    pub nll: f64,
}

impl MetricSummary {
    /// Unweighted mean of several summaries.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a MetricSummary>) -> Option<Self> {
        let mut n = 0usize;
        let mut acc = MetricSummary::default();
        for m in items {
            n += 1;
            acc.accuracy += m.accuracy;
            acc.ece += m.ece;
            acc.mce += m.mce;
            acc.ace += m.ace;
            acc.brier += m.brier;
            acc.nll += m.nll;
        }
        if n == 0 {
            return None;
        }
        let k = n as f64;
        Some(MetricSummary {
            accuracy: acc.accuracy / k,
            ece: acc.ece / k,
            mce: acc.mce / k,
            ace: acc.ace / k,
            brier: acc.brier / k,
            nll: acc.nll / k,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub samples: usize,
    pub metrics: MetricSummary,
    pub bins: ReliabilityBins,
}

fn gap_stats(bins: &ReliabilityBins, n: usize) -> (f64, f64, f64) {
    let mut ece = 0.0;
    let mut mce: f64 = 0.0;
    let mut ace_sum = 0.0;
    let mut nonempty = 0usize;
    for b in bins.nonempty() {
        let gap = b.gap();
        ece += b.count as f64 / n as f64 * gap;
        mce = mce.max(gap);
        ace_sum += gap;
        nonempty += 1;
    }
    let ace = if nonempty > 0 {
        ace_sum / nonempty as f64
    } else {
        0.0
    };
    (ece, mce, ace)
}

/// Accuracy, ECE, MCE, ACE, Brier score and NLL of a batch.
pub fn calibration_report<T: Scalar>(
    batch: &ProbBatch<T>,
    config: &MetricConfig,
) -> Result<CalibrationReport> {
    if batch.is_empty() {
        return invalid("calibration report of an empty batch");
    }
    let n = batch.len();
    let bins = bin_predictions(batch, config.bins, config.scheme)?;
    let (ece, mce, mut ace) = gap_stats(&bins, n);
    if config.ace_mode == AceMode::Adaptive {
        let adaptive = bin_predictions(batch, config.bins, BinScheme::EqualMass)?;
        ace = gap_stats(&adaptive, n).2;
    }

    let floor = T::of(PROB_FLOOR);
    let mut brier = T::zero();
    let mut nll = T::zero();
    for (i, &y) in batch.labels().iter().enumerate() {
        let row = batch.probs().row(i);
        for (c, &p) in row.iter().enumerate() {
            let target = if c == y { T::one() } else { T::zero() };
            brier += (p - target) * (p - target);
        }
        nll -= row[y].max(floor).ln();
    }
    let nt = T::of_usize(n);
    Ok(CalibrationReport {
        samples: n,
        metrics: MetricSummary {
            accuracy: batch.accuracy(),
            ece,
            mce,
            ace,
            brier: (brier / nt).to_f64_lossy(),
            nll: (nll / nt).to_f64_lossy(),
        },
        bins,
    })
}

/// `2ab / (a + b)`, defined as 0 when both are 0.
pub fn harmonic_mean(base: f64, new: f64) -> Result<f64> {
    if !(base >= 0.0) || !(new >= 0.0) {
        return invalid(format!(
            "harmonic mean needs non-negative inputs, got {base} and {new}"
        ));
    }
    if base + new == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * base * new / (base + new))
}
