use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{DualEncoder, HeadKind};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDrift {
    pub name: String,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub layers: Vec<LayerDrift>,
    /// Mean over the adapted layers; 0 when nothing is trainable.
    pub aggregate: f64,
}

fn mean_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs().to_f64_lossy())
        .sum();
    s / a.len() as f64
}

/// Mean absolute deviation of the adapted entries from `reference`.
///
/// LoRA heads compare effective layer weights; BitFit compares biases;
/// the prompt head compares context vectors.
pub fn weight_drift<T: Scalar>(
    model: &DualEncoder<T>,
    reference: &DualEncoder<T>,
) -> Result<DriftReport> {
    if !model.all_params().same_structure(&reference.all_params()) {
        return invalid("weight drift needs structurally matching models");
    }
    let mut layers = Vec::new();
    match model.head_kind() {
        HeadKind::LoraText | HeadKind::LoraVision | HeadKind::LoraBoth => {
            let ids: Vec<_> = model.adapters().map(|a| a.target).collect();
            for id in ids {
                let w = model.effective_layer_weight(id)?;
                let r = reference.effective_layer_weight(id)?;
                layers.push(LayerDrift {
                    name: format!("{}.weight", id.prefix()),
                    mean_abs: mean_abs_diff(w.data(), r.data()),
                });
            }
        }
        HeadKind::Bitfit | HeadKind::Prompt => {
            let mine = model.trainable_params();
            let theirs = reference.trainable_params();
            for (name, t) in mine.iter() {
                let r = theirs.get(name).expect("structures match");
                layers.push(LayerDrift {
                    name: name.to_string(),
                    mean_abs: mean_abs_diff(&t.data, &r.data),
                });
            }
        }
        HeadKind::ZeroShot => {}
    }
    let aggregate = if layers.is_empty() {
        0.0
    } else {
        layers.iter().map(|l| l.mean_abs).sum::<f64>() / layers.len() as f64
    };
    Ok(DriftReport { layers, aggregate })
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
