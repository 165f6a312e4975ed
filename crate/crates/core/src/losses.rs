//! Training objectives: cross-entropy plus the optional DCA and MDCA
//! calibration regularizers.
//!
//! Every loss reports its gradient with respect to the predicted
//! probabilities; the softmax Jacobian is applied by the model.
//! At the `|·|` kink the sign is taken as zero.

use serde::{Deserialize, Serialize};

use crate::calibration::ProbBatch;
use crate::error::{invalid, Error, Result};
use crate::numerics::{argmax, DenseMatrix};
use crate::scalar::Scalar;

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxKind {
    #[default]
    None,
    Dca,
    Mdca,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSpec {
    pub aux_kind: AuxKind,
    /// Weight of the auxiliary term.
    pub aux_weight: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            aux_kind: AuxKind::None,
            aux_weight: 1.0,
        }
    }
}

impl LossSpec {
    pub fn ce() -> Self {
        Self::default()
    }

    pub fn with_aux(aux_kind: AuxKind, aux_weight: f64) -> Self {
        Self {
            aux_kind,
            aux_weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.aux_weight >= 0.0) || !self.aux_weight.is_finite() {
            return Err(Error::Config(format!(
                "aux_weight must be a non-negative number, got {}",
                self.aux_weight
            )));
        }
        Ok(())
    }
}

/// Loss value with its gradient with respect to the probability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<T> {
    pub total: T,
    pub ce_part: T,
    pub aux_part: T,
    pub grad_wrt_probs: DenseMatrix<T>,
}

#[inline]
fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn nonempty<T: Scalar>(batch: &ProbBatch<T>) -> Result<()> {
    if batch.is_empty() {
        return invalid("loss of an empty batch");
    }
    Ok(())
}

/// Mean of `-ln p_true` over the batch.
pub fn ce_loss<T: Scalar>(batch: &ProbBatch<T>) -> Result<LossValue<T>> {
    nonempty(batch)?;
    let m = T::of_usize(batch.len());
    let floor = T::of(PROB_FLOOR);
    let mut grad = DenseMatrix::zeros(batch.len(), batch.class_count());
    let mut sum = T::zero();
    for (i, &y) in batch.labels().iter().enumerate() {
        let p = batch.probs().get(i, y).max(floor);
        sum -= p.ln();
        grad.set(i, y, -T::one() / (m * p));
    }
    let value = sum / m;
    Ok(LossValue {
        total: value,
        ce_part: value,
        aux_part: T::zero(),
        grad_wrt_probs: grad,
    })
}

/// `|mean(c) - mean(s)|` with `c_i` the argmax correctness and `s_i` the
/// true-class probability. Correctness carries no gradient.
pub fn dca_loss<T: Scalar>(batch: &ProbBatch<T>) -> Result<LossValue<T>> {
    nonempty(batch)?;
    let correct: Vec<bool> = batch
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &y)| argmax(batch.probs().row(i)) == y)
        .collect();
    let conf: Vec<T> = batch
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &y)| batch.probs().get(i, y))
        .collect();
    let (value, g) = dca_terms(&correct, &conf)?;
    let mut grad = DenseMatrix::zeros(batch.len(), batch.class_count());
    for (i, &y) in batch.labels().iter().enumerate() {
        grad.set(i, y, g);
    }
    Ok(LossValue {
        total: value,
        ce_part: T::zero(),
        aux_part: value,
        grad_wrt_probs: grad,
    })
}

/// `(1/C) Σ_j |mean_i 1[y_i = j] - mean_i p_ij|`.
pub fn mdca_loss<T: Scalar>(batch: &ProbBatch<T>) -> Result<LossValue<T>> {
    nonempty(batch)?;
    let c = batch.class_count();
    if c < 2 {
        return invalid("MDCA needs at least two classes");
    }
    let m = T::of_usize(batch.len());
    let ct = T::of_usize(c);
    let mut label_mean = vec![T::zero(); c];
    let mut prob_mean = vec![T::zero(); c];
    for (i, &y) in batch.labels().iter().enumerate() {
        label_mean[y] += T::one();
        for (s, &p) in prob_mean.iter_mut().zip(batch.probs().row(i)) {
            *s += p;
        }
    }
    let mut value = T::zero();
    let mut col_grad = vec![T::zero(); c];
    for j in 0..c {
        let gap = label_mean[j] / m - prob_mean[j] / m;
        value += gap.abs();
        col_grad[j] = -sign(gap) / (ct * m);
    }
    value /= ct;
    let grad = DenseMatrix::from_fn(batch.len(), c, |_, j| col_grad[j]);
    Ok(LossValue {
        total: value,
        ce_part: T::zero(),
        aux_part: value,
        grad_wrt_probs: grad,
    })
}

/// DCA value and its (shared) derivative with respect to each confidence.
pub fn dca_terms<T: Scalar>(correct: &[bool], conf: &[T]) -> Result<(T, T)> {
    if correct.is_empty() || correct.len() != conf.len() {
        return invalid("DCA needs equally many (non-zero) correctness flags and confidences");
    }
    let m = T::of_usize(correct.len());
    let acc = T::of_usize(correct.iter().filter(|&&c| c).count()) / m;
    let mean_conf = conf.iter().copied().sum::<T>() / m;
    let gap = acc - mean_conf;
    Ok((gap.abs(), -sign(gap) / m))
}

/// The unweighted auxiliary term selected by `spec`, if any.
pub fn aux_loss<T: Scalar>(batch: &ProbBatch<T>, spec: &LossSpec) -> Result<Option<LossValue<T>>> {
    match spec.aux_kind {
        AuxKind::None => Ok(None),
        AuxKind::Dca => dca_loss(batch).map(Some),
        AuxKind::Mdca => mdca_loss(batch).map(Some),
    }
}

/// Cross-entropy plus the weighted auxiliary term.
pub fn total_loss<T: Scalar>(batch: &ProbBatch<T>, spec: &LossSpec) -> Result<LossValue<T>> {
    spec.validate()?;
    let mut ce = ce_loss(batch)?;
    let Some(aux) = aux_loss(batch, spec)? else {
        return Ok(ce);
    };
    let beta = T::of(spec.aux_weight);
    ce.aux_part = aux.aux_part;
    ce.total = ce.ce_part + beta * aux.aux_part;
    for (g, &a) in ce
        .grad_wrt_probs
        .data_mut()
        .iter_mut()
        .zip(aux.grad_wrt_probs.data())
    {
        *g += beta * a;
    }
    Ok(ce)
}
