//! Dense layers, LoRA adapters and their forward/backward kernels.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::config::Modality;
use crate::numerics::{DenseMatrix, RngStream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

/// Position of a layer inside the dual encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerId {
    pub modality: Modality,
    pub index: usize,
}

impl LayerId {
    pub fn new(modality: Modality, index: usize) -> Self {
        Self { modality, index }
    }

    pub fn prefix(&self) -> String {
        format!("{}.{}", self.modality.name(), self.index)
    }
}

impl std::fmt::Display for LayerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.prefix())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct DenseLayer<T> {
    /// in × out
    pub weight: DenseMatrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Ordered dense layers of one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct EncoderStack<T> {
    pub layers: Vec<DenseLayer<T>>,
}

impl<T: Scalar> EncoderStack<T> {
    pub fn new(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Config(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::Config(format!("layer {i} bias length mismatch")));
            }
        }
        Ok(Self { layers })
    }
}

/// Low-rank update `δW = scale · A · B` attached to one frozen weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct LoraAdapter<T> {
    /// in × r
    pub a: DenseMatrix<T>,
    /// r × out
    pub b: DenseMatrix<T>,
    pub scale: T,
    /// Dropout rate on the adapter input during training.
    pub dropout: f64,
    pub target: LayerId,
}

impl<T: Scalar> LoraAdapter<T> {
    pub fn new(
        a: DenseMatrix<T>,
        b: DenseMatrix<T>,
        scale: T,
        dropout: f64,
        target: LayerId,
    ) -> Result<Self> {
        if a.cols() == 0 || a.cols() != b.rows() {
            return invalid(format!(
                "adapter factors do not chain: A is {}x{}, B is {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            ));
        }
        if !(0.0..1.0).contains(&dropout) {
            return invalid(format!("adapter dropout must be in [0, 1), got {dropout}"));
        }
        Ok(Self {
            a,
            b,
            scale,
            dropout,
            target,
        })
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    /// `scale · A · B`
    pub fn delta(&self) -> DenseMatrix<T> {
        self.a.matmul_unchecked(&self.b).scale(self.scale)
    }
}

/// `W + scale · A · B`.
pub fn effective_weight<T: Scalar>(
    weight: &DenseMatrix<T>,
    adapter: &LoraAdapter<T>,
) -> Result<DenseMatrix<T>> {
    if adapter.a.rows() != weight.rows()
        || adapter.b.cols() != weight.cols()
        || adapter.a.cols() != adapter.b.rows()
    {
        return invalid(format!(
            "adapter shapes {}x{} · {}x{} do not match base weight {}x{}",
            adapter.a.rows(),
            adapter.a.cols(),
            adapter.b.rows(),
            adapter.b.cols(),
            weight.rows(),
            weight.cols()
        ));
    }
    weight.add(&adapter.delta())
}

/// Intermediate values of one layer needed by the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerTrace<T> {
    pub pre: DenseMatrix<T>,
    pub lora: Option<LoraTrace<T>>,
}

#[derive(Debug, Clone)]
pub(crate) struct LoraTrace<T> {
    /// Adapter input after dropout (equal to the layer input when inactive).
    pub dropped: DenseMatrix<T>,
    /// Per-entry dropout factor (0 or 1/(1-p)); `None` when dropout was off.
    pub mask: Option<Vec<T>>,
    /// `dropped · A`
    pub hidden: DenseMatrix<T>,
}

pub(crate) fn layer_forward<T: Scalar>(
    layer: &DenseLayer<T>,
    adapter: Option<&LoraAdapter<T>>,
    input: DenseMatrix<T>,
    dropout_rng: Option<&mut RngStream>,
    id: LayerId,
) -> Result<(DenseMatrix<T>, LayerTrace<T>)> {
    let mut pre = input.matmul_unchecked(&layer.weight);
    let cols = pre.cols();
    for row in pre.data_mut().chunks_exact_mut(cols) {
        for (v, &b) in row.iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }

    let lora = match adapter {
        None => None,
        Some(ad) => {
            let (dropped, mask) = match dropout_rng {
                Some(rng) if ad.dropout > 0.0 => {
                    let keep = T::of(1.0 / (1.0 - ad.dropout));
                    let mask: Vec<T> = (0..input.data().len())
                        .map(|_| {
                            if rng.uniform() < ad.dropout {
                                T::zero()
                            } else {
                                keep
                            }
                        })
                        .collect();
                    let data = input
                        .data()
                        .iter()
                        .zip(&mask)
                        .map(|(&x, &m)| x * m)
                        .collect();
                    let dropped = DenseMatrix::new(input.rows(), input.cols(), data)?;
                    (dropped, Some(mask))
                }
                _ => (input.clone(), None),
            };
            let hidden = dropped.matmul_unchecked(&ad.a);
            let update = hidden.matmul_unchecked(&ad.b);
            for (v, &u) in pre.data_mut().iter_mut().zip(update.data()) {
                *v += ad.scale * u;
            }
            Some(LoraTrace {
                dropped,
                mask,
                hidden,
            })
        }
    };

    if !pre.is_finite() {
        return Err(Error::Numeric {
            location: format!("layer {id}"),
            detail: "non-finite activation".into(),
        });
    }

    let out = match layer.activation {
        Activation::Relu => {
            let data = pre.data().iter().map(|&v| v.max(T::zero())).collect();
            DenseMatrix::new(pre.rows(), pre.cols(), data)?
        }
        Activation::None => pre.clone(),
    };
    Ok((out, LayerTrace { pre, lora }))
}

/// Gradients produced by [`layer_backward`].
pub(crate) struct LayerGrads<T> {
    pub input: Option<DenseMatrix<T>>,
    pub bias: Vec<T>,
    pub lora_a: Option<DenseMatrix<T>>,
    pub lora_b: Option<DenseMatrix<T>>,
}

pub(crate) fn layer_backward<T: Scalar>(
    layer: &DenseLayer<T>,
    adapter: Option<&LoraAdapter<T>>,
    trace: &LayerTrace<T>,
    grad_out: &DenseMatrix<T>,
    need_input_grad: bool,
) -> LayerGrads<T> {
    let grad_pre = match layer.activation {
        Activation::Relu => {
            let data = grad_out
                .data()
                .iter()
                .zip(trace.pre.data())
                .map(|(&g, &p)| if p > T::zero() { g } else { T::zero() })
                .collect();
            DenseMatrix::new(grad_out.rows(), grad_out.cols(), data).expect("finite gradient")
        }
        Activation::None => grad_out.clone(),
    };

    let mut bias = vec![T::zero(); grad_pre.cols()];
    for row in grad_pre.row_iter() {
        for (b, &g) in bias.iter_mut().zip(row) {
            *b += g;
        }
    }

    let mut input = need_input_grad.then(|| grad_pre.matmul_t(&layer.weight));
    let (mut lora_a, mut lora_b) = (None, None);
    if let (Some(ad), Some(tr)) = (adapter, &trace.lora) {
        // dB = s · hiddenᵀ · g ; d(hidden) = s · g · Bᵀ ; dA = droppedᵀ · d(hidden)
        let gb = tr.hidden.t_matmul(&grad_pre).scale(ad.scale);
        let g_hidden = grad_pre.matmul_t(&ad.b).scale(ad.scale);
        let ga = tr.dropped.t_matmul(&g_hidden);
        if let Some(gin) = input.as_mut() {
            let through = g_hidden.matmul_t(&ad.a);
            match &tr.mask {
                Some(mask) => {
                    for ((v, &t), &m) in gin.data_mut().iter_mut().zip(through.data()).zip(mask) {
                        *v += t * m;
                    }
                }
                None => {
                    for (v, &t) in gin.data_mut().iter_mut().zip(through.data()) {
                        *v += t;
                    }
                }
            }
        }
        lora_a = Some(ga);
        lora_b = Some(gb);
    }
    LayerGrads {
        input,
        bias,
        lora_a,
        lora_b,
    }
}
