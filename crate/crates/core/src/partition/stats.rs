use serde::{Deserialize, Serialize};

use super::plan::PartitionPlan;

/// Label-skew diagnostics of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityStats {
    /// Per-client normalized class histogram (all zeros for an empty client).
    pub proportions: Vec<Vec<f64>>,
    /// Shannon entropy (nats) of each client's class distribution.
    pub entropy: Vec<f64>,
    /// `overlap[i][j]` = number of classes present at both clients.
    pub overlap: Vec<Vec<usize>>,
}

impl HeterogeneityStats {
    pub fn mean_entropy(&self) -> f64 {
        if self.entropy.is_empty() {
            return 0.0;
        }
        self.entropy.iter().sum::<f64>() / self.entropy.len() as f64
    }

    /// Total-variation distance of each client's distribution from uniform.
    pub fn tv_from_uniform(&self) -> Vec<f64> {
        self.proportions
            .iter()
            .map(|p| tv_from_uniform(p))
            .collect()
    }
}

pub fn tv_from_uniform(p: &[f64]) -> f64 {
    let u = 1.0 / p.len() as f64;
    0.5 * p.iter().map(|&x| (x - u).abs()).sum::<f64>()
}

pub fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

pub fn heterogeneity_stats(plan: &PartitionPlan) -> HeterogeneityStats {
    let proportions: Vec<Vec<f64>> = plan
        .histograms
        .iter()
        .map(|h| {
            let n: usize = h.iter().sum();
            if n == 0 {
                vec![0.0; h.len()]
            } else {
                h.iter().map(|&k| k as f64 / n as f64).collect()
            }
        })
        .collect();
    let entropy = proportions.iter().map(|p| shannon_entropy(p)).collect();
    let n = plan.histograms.len();
    let mut overlap = vec![vec![0usize; n]; n];
    for i in 0..n {
        for j in i..n {
            let shared = plan.histograms[i]
                .iter()
                .zip(&plan.histograms[j])
                .filter(|(&a, &b)| a > 0 && b > 0)
                .count();
            overlap[i][j] = shared;
            overlap[j][i] = shared;
        }
    }
    HeterogeneityStats {
        proportions,
        entropy,
        overlap,
    }
}
