use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibration_report, harmonic_mean, CalibrationReport, MetricConfig, MetricSummary, ProbBatch,
    TemperatureScaler,
};
use crate::error::Result;
use crate::numerics::softmax_rows;
use crate::scalar::Scalar;

use super::client::ClientState;

/// Disjoint seen/held-out class sets of a base-to-new run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub base: Vec<usize>,
    pub new: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEval {
    pub client_id: usize,
    /// Report over the client's whole test view; `None` when it is empty.
    pub report: Option<CalibrationReport>,
    /// Base-class samples scored among base classes.
    pub base: Option<CalibrationReport>,
    /// New-class samples scored among new classes.
    pub new: Option<CalibrationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_client: Vec<ClientEval>,
    /// Unweighted mean over clients with a nonempty test view.
    pub mean: Option<MetricSummary>,
    /// Clients left out of the mean because their test view is empty.
    pub excluded: Vec<usize>,
    pub base_mean: Option<MetricSummary>,
    pub new_mean: Option<MetricSummary>,
    /// Field-wise harmonic mean of the base and new means.
    pub harmonic: Option<MetricSummary>,
}

fn restricted_report<T: Scalar>(
    logits: &crate::numerics::DenseMatrix<T>,
    labels: &[usize],
    classes: &[usize],
    metric: &MetricConfig,
) -> Result<Option<CalibrationReport>> {
    let mut local_of = std::collections::BTreeMap::new();
    for (k, &c) in classes.iter().enumerate() {
        local_of.insert(c, k);
    }
    let rows: Vec<usize> = (0..labels.len())
        .filter(|&i| local_of.contains_key(&labels[i]))
        .collect();
    if rows.is_empty() {
        return Ok(None);
    }
    let sub = logits.select_rows(&rows).select_cols(classes);
    let y = rows.iter().map(|&i| local_of[&labels[i]]).collect();
    let batch = ProbBatch::new(softmax_rows(&sub)?, y)?;
    calibration_report(&batch, metric).map(Some)
}

fn evaluate_client<T: Scalar>(
    client: &ClientState<T>,
    metric: &MetricConfig,
    split: Option<&ClassSplit>,
    tau: f64,
) -> Result<ClientEval> {
    let mut eval = ClientEval {
        client_id: client.id,
        report: None,
        base: None,
        new: None,
    };
    if client.test_len() == 0 {
        return Ok(eval);
    }
    let mut logits = client.model.logits(&client.test_x)?;
    if tau != 1.0 {
        logits = logits.scale(T::one() / T::of(tau));
    }
    let batch = ProbBatch::new(softmax_rows(&logits)?, client.test_y.clone())?;
    eval.report = Some(calibration_report(&batch, metric)?);
    if let Some(s) = split {
        eval.base = restricted_report(&logits, &client.test_y, &s.base, metric)?;
        eval.new = restricted_report(&logits, &client.test_y, &s.new, metric)?;
    }
    Ok(eval)
}

fn harmonic(a: &MetricSummary, b: &MetricSummary) -> Result<MetricSummary> {
    Ok(MetricSummary {
        accuracy: harmonic_mean(a.accuracy, b.accuracy)?,
        ece: harmonic_mean(a.ece, b.ece)?,
        mce: harmonic_mean(a.mce, b.mce)?,
        ace: harmonic_mean(a.ace, b.ace)?,
        brier: harmonic_mean(a.brier, b.brier)?,
        nll: harmonic_mean(a.nll, b.nll)?,
    })
}

/// Per-client reports on local test views and their unweighted mean.
pub fn personalized_evaluate<T: Scalar>(
    clients: &[ClientState<T>],
    metric: &MetricConfig,
    split: Option<&ClassSplit>,
) -> Result<Evaluation> {
    personalized_evaluate_at(clients, metric, split, 1.0)
}

/// As [`personalized_evaluate`] with every client's logits divided by `tau`.
pub fn personalized_evaluate_at<T: Scalar>(
    clients: &[ClientState<T>],
    metric: &MetricConfig,
    split: Option<&ClassSplit>,
    tau: f64,
) -> Result<Evaluation> {
    TemperatureScaler::new(tau)?;
    let per_client = clients
        .par_iter()
        .map(|c| evaluate_client(c, metric, split, tau))
        .collect::<Result<Vec<_>>>()?;
    let excluded = per_client
        .iter()
        .filter(|e| e.report.is_none())
        .map(|e| e.client_id)
        .collect();
    let mean = MetricSummary::mean(
        per_client
            .iter()
            .filter_map(|e| e.report.as_ref().map(|r| &r.metrics)),
    );
    let base_mean = MetricSummary::mean(
        per_client
            .iter()
            .filter_map(|e| e.base.as_ref().map(|r| &r.metrics)),
    );
    let new_mean = MetricSummary::mean(
        per_client
            .iter()
            .filter_map(|e| e.new.as_ref().map(|r| &r.metrics)),
    );
    let harmonic = match (&base_mean, &new_mean) {
        (Some(b), Some(n)) => Some(harmonic(b, n)?),
        _ => None,
    };
    Ok(Evaluation {
        per_client,
        mean,
        excluded,
        base_mean,
        new_mean,
        harmonic,
    })
}
