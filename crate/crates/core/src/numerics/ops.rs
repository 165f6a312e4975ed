//! Vector primitives: stabilized softmax and L2 normalization.

use crate::error::{invalid, Error, Result};
use crate::numerics::dense::DenseMatrix;
use crate::scalar::Scalar;

/// Softmax with max-subtraction.
pub fn stable_softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return invalid("softmax of an empty vector");
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return invalid("softmax input contains a non-finite entry");
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Unchecked in-place variant for hot loops; inputs must be finite and non-empty.
pub(crate) fn softmax_in_place<T: Scalar>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Row-wise softmax of a logit matrix.
pub fn softmax_rows<T: Scalar>(logits: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if logits.cols() == 0 {
        return invalid("softmax over zero classes");
    }
    if !logits.is_finite() {
        return Err(Error::Numeric {
            location: "softmax".into(),
            detail: "non-finite logit".into(),
        });
    }
    let mut out = logits.clone();
    let c = out.cols();
    for row in out.data_mut().chunks_exact_mut(c) {
        softmax_in_place(row);
    }
    Ok(out)
}

pub fn l2_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Scale `v` to unit Euclidean length.
pub fn l2_normalize<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    if v.iter().any(|x| !x.is_finite()) {
        return invalid("normalize input contains a non-finite entry");
    }
    let n = l2_norm(v);
    if !(n > T::zero()) {
        return Err(Error::Degenerate("cannot normalize a zero vector".into()));
    }
    Ok(v.iter().map(|&x| x / n).collect())
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
