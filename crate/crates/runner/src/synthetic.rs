//! Desk-scale stand-in for precomputed image/text embeddings: a Gaussian
//! mixture around unit-norm class prototypes, with optional per-domain
//! rotations and shifts.

use fedcal_core::numerics::{l2_normalize, standard_normal, DenseMatrix, RngStream};
use fedcal_core::partition::{LabeledDataset, Split};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

/// Noise level that puts zero-shot accuracy of the default model on the
/// default benchmark in the 60-70% band.
pub const DEFAULT_NOISE: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    /// Samples of each class in each domain.
    pub samples_per_class: usize,
    /// Per-coordinate standard deviation of the sample noise.
    pub noise: f64,
    pub domains: usize,
    /// Seeds of the domain transforms; derived from the run seed when absent.
    pub domain_seeds: Option<Vec<u64>>,
    /// Size of the skew perturbation behind each domain rotation.
    pub rotation: f64,
    /// Norm of each domain's mean shift.
    pub shift: f64,
    pub train_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 20,
            dim: 64,
            samples_per_class: 100,
            noise: DEFAULT_NOISE,
            domains: 1,
            domain_seeds: None,
            rotation: 0.5,
            shift: 0.5,
            train_fraction: 0.8,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(RunError::Config(m));
        if self.classes < 2 {
            return fail(format!(
                "synthetic.classes must be at least 2, got {}",
                self.classes
            ));
        }
        if self.dim == 0 {
            return fail("synthetic.dim must be at least 1".into());
        }
        if self.samples_per_class < 2 {
            return fail(format!(
                "synthetic.samples_per_class must be at least 2 for a train/test split, got {}",
                self.samples_per_class
            ));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return fail(format!(
                "synthetic.noise must be positive, got {}",
                self.noise
            ));
        }
        if self.domains == 0 {
            return fail("synthetic.domains must be at least 1".into());
        }
        if let Some(s) = &self.domain_seeds {
            if s.len() != self.domains {
                return fail(format!(
                    "synthetic.domain_seeds has {} entries for {} domains",
                    s.len(),
                    self.domains
                ));
            }
        }
        for (key, v) in [("rotation", self.rotation), ("shift", self.shift)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("synthetic.{key} must be non-negative, got {v}"));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail(format!(
                "synthetic.train_fraction must be in (0, 1), got {}",
                self.train_fraction
            ));
        }
        Ok(())
    }
}

/// Generated samples plus the image-space and text-space class prototypes.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: LabeledDataset<f64>,
    /// Text prototypes handed to the model.
    pub prototypes: DenseMatrix<f64>,
    /// Cluster centres the samples are drawn around.
    pub image_prototypes: DenseMatrix<f64>,
}

fn unit_gaussian(d: usize, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        if let Ok(u) = l2_normalize(&v) {
            return u;
        }
    }
}

/// Orthogonal matrix near the identity: the Q factor of `I + εG/√d`,
/// column signs fixed so that `diag(R) > 0`.
fn near_identity_rotation(d: usize, strength: f64, rng: &mut RngStream) -> DMatrix<f64> {
    let scale = strength / (d as f64).sqrt();
    let m = DMatrix::from_fn(d, d, |i, j| {
        let g = scale * standard_normal(rng);
        if i == j {
            1.0 + g
        } else {
            g
        }
    });
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

struct DomainTransform {
    rotation: DMatrix<f64>,
    shift: Vec<f64>,
}

/// Samples `l2_normalize(R_k (p_y + ε) + μ_k)`, `ε ~ N(0, σ²I)`. Domain 0 is
/// the prototypes' own domain (identity transform); later domains get a
/// seeded rotation and shift. The first `round(f·n)` samples of every
/// (domain, class) group are train, the rest test.
pub fn generate_synthetic(spec: &SyntheticSpec, rng: &mut RngStream) -> Result<SyntheticData> {
    spec.validate()?;
    let (c, d) = (spec.classes, spec.dim);

    let mut proto_rng = rng.child(&[1]);
    let image: Vec<Vec<f64>> = (0..c).map(|_| unit_gaussian(d, &mut proto_rng)).collect();
    let mut text_rng = rng.child(&[2]);
    let text_sd = 0.1 * spec.noise;
    let text: Vec<Vec<f64>> = image
        .iter()
        .map(|p| {
            let v: Vec<f64> = p
                .iter()
                .map(|&x| x + text_sd * standard_normal(&mut text_rng))
                .collect();
            l2_normalize(&v).map_err(RunError::from)
        })
        .collect::<Result<_>>()?;

    let transforms: Vec<Option<DomainTransform>> = (0..spec.domains)
        .map(|k| {
            if k == 0 {
                return None;
            }
            let mut drng = match &spec.domain_seeds {
                Some(seeds) => RngStream::new(seeds[k], 0),
                None => rng.child(&[3, k as u64]),
            };
            let rotation = near_identity_rotation(d, spec.rotation, &mut drng);
            let dir = unit_gaussian(d, &mut drng);
            let shift = dir.iter().map(|&x| spec.shift * x).collect();
            Some(DomainTransform { rotation, shift })
        })
        .collect();

    let n = spec.samples_per_class;
    let n_train = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let total = spec.domains * c * n;
    let mut data = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    let mut domains = Vec::with_capacity(total);
    let mut splits = Vec::with_capacity(total);
    let mut sample_rng = rng.child(&[4]);
    for (k, transform) in transforms.iter().enumerate() {
        for (class, p) in image.iter().enumerate() {
            for s in 0..n {
                let mut x: Vec<f64> = p
                    .iter()
                    .map(|&v| v + spec.noise * standard_normal(&mut sample_rng))
                    .collect();
                if let Some(t) = transform {
                    let rotated = &t.rotation * nalgebra::DVector::from_column_slice(&x);
                    x = rotated.iter().zip(&t.shift).map(|(a, b)| a + b).collect();
                }
                data.extend(l2_normalize(&x)?);
                labels.push(class);
                domains.push(k);
                splits.push(if s < n_train {
                    Split::Train
                } else {
                    Split::Test
                });
            }
        }
    }
    let embeddings = DenseMatrix::new(total, d, data)?;
    let dataset = LabeledDataset::new(embeddings, labels, domains, splits, c)?;
    let flat = |rows: &[Vec<f64>]| rows.iter().flatten().copied().collect::<Vec<_>>();
    Ok(SyntheticData {
        dataset,
        prototypes: DenseMatrix::new(c, d, flat(&text))?,
        image_prototypes: DenseMatrix::new(c, d, flat(&image))?,
    })
}
