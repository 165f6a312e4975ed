//! Gaussian, Gamma, Dirichlet and multinomial draws.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::numerics::rng::RngStream;

pub fn standard_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

/// Natural log of a Gamma(shape, 1) draw (Marsaglia-Tsang).
///
/// Shapes below one use the boost `G(a) = G(a + 1) · U^(1/a)`, carried out
/// in log space so that tiny shapes do not underflow to an all-zero draw.
pub fn log_gamma_sample(shape: f64, rng: &mut RngStream) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let boost = {
            // U in (0, 1]
            let u = 1.0 - rng.uniform();
            u.ln() / shape
        };
        return log_gamma_sample(shape + 1.0, rng) + boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = 1.0 - rng.uniform();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

pub fn gamma_sample(shape: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return invalid(format!(
            "gamma shape must be positive and finite, got {shape}"
        ));
    }
    Ok(log_gamma_sample(shape, rng).exp())
}

/// Draw from the symmetric Dirichlet(alpha · 1_dim) by normalizing Gamma draws.
pub fn dirichlet_sample(alpha: f64, dim: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return invalid(format!(
            "dirichlet concentration must be positive, got {alpha}"
        ));
    }
    if dim == 0 {
        return invalid("dirichlet dimension must be at least 1");
    }
    let logs: Vec<f64> = (0..dim).map(|_| log_gamma_sample(alpha, rng)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// Categorical draw proportional to `weights` (non-negative, positive total).
pub fn categorical(weights: &[f64], total: f64, rng: &mut RngStream) -> usize {
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Split `n` items into counts ~ Multinomial(n, probs) with `n` categorical draws.
pub fn multinomial_split(n: usize, probs: &[f64], rng: &mut RngStream) -> Result<Vec<usize>> {
    if probs.is_empty() {
        return invalid("multinomial over zero categories");
    }
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return invalid(format!(
            "multinomial probability must be non-negative, got {p}"
        ));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return invalid(format!(
            "multinomial probabilities sum to {total}, expected 1"
        ));
    }
    let mut counts = vec![0usize; probs.len()];
    for _ in 0..n {
        counts[categorical(probs, total, rng)] += 1;
    }
    Ok(counts)
}
