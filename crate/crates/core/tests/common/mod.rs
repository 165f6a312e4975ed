#![allow(dead_code)]

use fedcal_core::model::{DualEncoder, HeadKind, ModelConfig};
use fedcal_core::numerics::{l2_normalize, standard_normal, DenseMatrix, RngStream};

pub fn gaussian_matrix(
    rows: usize,
    cols: usize,
    std: f64,
    rng: &mut RngStream,
) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(rows, cols, |_, _| std * standard_normal(rng))
}

pub fn unit_rows(rows: usize, cols: usize, rng: &mut RngStream) -> DenseMatrix<f64> {
    let mut m = gaussian_matrix(rows, cols, 1.0, rng);
    for i in 0..rows {
        let v = l2_normalize(m.row(i)).unwrap();
        m.row_mut(i).copy_from_slice(&v);
    }
    m
}

pub fn small_config(head: HeadKind, d: usize, c: usize) -> ModelConfig {
    ModelConfig {
        embed_dim: d,
        class_count: c,
        head_kind: head,
        ..ModelConfig::default()
    }
}

/// Zero-shot model whose trainable entries are then overwritten with
/// Gaussian noise, so every LoRA factor is nonzero.
pub fn random_model(config: ModelConfig, trainable_std: f64, seed: u64) -> DualEncoder<f64> {
    let mut rng = RngStream::new(seed, 0);
    let protos = unit_rows(config.class_count, config.embed_dim, &mut rng);
    let mut model = DualEncoder::zero_shot_init(config, protos, &mut rng).unwrap();
    let n = model.trainable_len();
    let w: Vec<f64> = (0..n)
        .map(|_| trainable_std * standard_normal(&mut rng))
        .collect();
    model.load_trainable(&w).unwrap();
    model
}
