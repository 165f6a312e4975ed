use crate::error::{invalid, Result};
use crate::numerics::{argmax, DenseMatrix};
use crate::scalar::Scalar;

/// Predicted class distributions with their true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbBatch<T> {
    probs: DenseMatrix<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> ProbBatch<T> {
    /// Rows must lie on the simplex (within [`Scalar::simplex_tolerance`])
    /// and labels must index a column.
    pub fn new(probs: DenseMatrix<T>, labels: Vec<usize>) -> Result<Self> {
        if probs.rows() != labels.len() {
            return invalid(format!(
                "{} probability rows but {} labels",
                probs.rows(),
                labels.len()
            ));
        }
        let c = probs.cols();
        if c == 0 && !labels.is_empty() {
            return invalid("probability rows have zero classes");
        }
        let tol = T::simplex_tolerance();
        for (i, row) in probs.row_iter().enumerate() {
            if row.iter().any(|&p| !(p >= -tol && p <= T::one() + tol)) {
                return invalid(format!("row {i} has an entry outside [0, 1]"));
            }
            let s: T = row.iter().copied().sum();
            if (s - T::one()).abs() > tol {
                return invalid(format!("row {i} sums to {s}, not 1"));
            }
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= c) {
            return invalid(format!(
                "label {y} of sample {i} is out of range for {c} classes"
            ));
        }
        Ok(Self { probs, labels })
    }

    pub fn probs(&self) -> &DenseMatrix<T> {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.probs.cols()
    }

    /// Max probability of each row.
    pub fn confidences(&self) -> Vec<T> {
        self.probs
            .row_iter()
            .map(|r| r.iter().copied().fold(T::neg_infinity(), T::max))
            .collect()
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.probs.row_iter().map(argmax).collect()
    }

    pub fn correct(&self) -> Vec<bool> {
        self.predictions()
            .iter()
            .zip(&self.labels)
            .map(|(p, y)| p == y)
            .collect()
    }

    pub fn accuracy(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.correct().iter().filter(|&&c| c).count() as f64 / self.len() as f64
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            probs: self.probs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Raw logits with true labels; input to temperature fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBatch<T> {
    logits: DenseMatrix<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> LogitBatch<T> {
    pub fn new(logits: DenseMatrix<T>, labels: Vec<usize>) -> Result<Self> {
        if logits.rows() != labels.len() {
            return invalid(format!(
                "{} logit rows but {} labels",
                logits.rows(),
                labels.len()
            ));
        }
        if !logits.is_finite() {
            return invalid("logits contain a non-finite entry");
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= logits.cols()) {
            return invalid(format!(
                "label {y} out of range for {} classes",
                logits.cols()
            ));
        }
        Ok(Self { logits, labels })
    }

    pub fn logits(&self) -> &DenseMatrix<T> {
        &self.logits
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
