use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::DenseMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Embeddings with class labels, domain ids and train/test tags.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    pub embeddings: DenseMatrix<T>,
    pub labels: Vec<usize>,
    pub domains: Vec<usize>,
    pub splits: Vec<Split>,
    pub class_count: usize,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(
        embeddings: DenseMatrix<T>,
        labels: Vec<usize>,
        domains: Vec<usize>,
        splits: Vec<Split>,
        class_count: usize,
    ) -> Result<Self> {
        let n = embeddings.rows();
        if labels.len() != n || domains.len() != n || splits.len() != n {
            return invalid(format!(
                "dataset columns disagree: {n} embeddings, {} labels, {} domains, {} split tags",
                labels.len(),
                domains.len(),
                splits.len()
            ));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= class_count) {
            return invalid(format!("label {y} out of range for {class_count} classes"));
        }
        Ok(Self {
            embeddings,
            labels,
            domains,
            splits,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn domain_count(&self) -> usize {
        self.domains.iter().map(|&d| d + 1).max().unwrap_or(0)
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices(Split::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices(Split::Test)
    }

    /// Indices of `split` grouped by class, optionally restricted to one domain.
    pub fn by_class(&self, split: Split, domain: Option<usize>) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count];
        for i in 0..self.len() {
            if self.splits[i] == split && domain.is_none_or(|d| self.domains[i] == d) {
                out[self.labels[i]].push(i);
            }
        }
        out
    }

    pub fn embeddings_of(&self, idx: &[usize]) -> DenseMatrix<T> {
        self.embeddings.select_rows(idx)
    }

    pub fn labels_of(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }
}
