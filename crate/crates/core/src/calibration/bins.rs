use serde::{Deserialize, Serialize};

use crate::calibration::ProbBatch;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinScheme {
    /// G intervals of width 1/G; bin g covers ((g-1)/G, g/G], confidence 0 goes to the first.
    #[default]
    EqualWidth,
    /// G groups of (nearly) equal size after sorting by confidence.
    EqualMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean correctness of the members; 0 for an empty bin.
    pub accuracy: f64,
    /// Mean confidence of the members; 0 for an empty bin.
    pub confidence: f64,
}

impl BinStat {
    pub fn gap(&self) -> f64 {
        (self.accuracy - self.confidence).abs()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub scheme: BinScheme,
    pub bins: Vec<BinStat>,
}

impl ReliabilityBins {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn nonempty(&self) -> impl Iterator<Item = &BinStat> {
        self.bins.iter().filter(|b| b.count > 0)
    }

    /// Pool several bin sets over the same edges by count-weighted averaging.
    pub fn pool<'a>(sets: impl IntoIterator<Item = &'a ReliabilityBins>) -> Result<Self> {
        let mut iter = sets.into_iter();
        let first = match iter.next() {
            Some(f) => f,
            None => return invalid("cannot pool zero bin sets"),
        };
        let mut sums: Vec<(usize, f64, f64)> = first
            .bins
            .iter()
            .map(|b| {
                (
                    b.count,
                    b.accuracy * b.count as f64,
                    b.confidence * b.count as f64,
                )
            })
            .collect();
        for set in iter {
            if set.bins.len() != sums.len() || set.scheme != first.scheme {
                return invalid("pooled bin sets must share the scheme and bin count");
            }
            for (s, b) in sums.iter_mut().zip(&set.bins) {
                s.0 += b.count;
                s.1 += b.accuracy * b.count as f64;
                s.2 += b.confidence * b.count as f64;
            }
        }
        let bins = first
            .bins
            .iter()
            .zip(sums)
            .map(|(b, (n, a, c))| BinStat {
                lower: b.lower,
                upper: b.upper,
                count: n,
                accuracy: if n > 0 { a / n as f64 } else { 0.0 },
                confidence: if n > 0 { c / n as f64 } else { 0.0 },
            })
            .collect();
        Ok(Self {
            scheme: first.scheme,
            bins,
        })
    }
}

/// Equal-width bin index of a confidence in [0, 1].
pub fn equal_width_index<T: Scalar>(conf: T, bins: usize) -> usize {
    let g = T::of_usize(bins);
    let edge = |k: usize| T::of_usize(k) / g;
    let mut idx = (conf * g).ceil().to_usize().unwrap_or(0).saturating_sub(1);
    idx = idx.min(bins - 1);
    // Correct for rounding in conf * G against the edges k / G.
    while idx > 0 && conf <= edge(idx) {
        idx -= 1;
    }
    while idx + 1 < bins && conf > edge(idx + 1) {
        idx += 1;
    }
    idx
}

/// Group predictions by confidence and record per-bin accuracy and confidence.
pub fn bin_predictions<T: Scalar>(
    batch: &ProbBatch<T>,
    bins: usize,
    scheme: BinScheme,
) -> Result<ReliabilityBins> {
    if bins == 0 {
        return invalid("bin count must be at least 1");
    }
    let conf = batch.confidences();
    let correct = batch.correct();
    let n = batch.len();

    let (members, edges): (Vec<Vec<usize>>, Vec<(f64, f64)>) = match scheme {
        BinScheme::EqualWidth => {
            let mut members = vec![Vec::new(); bins];
            for (i, &c) in conf.iter().enumerate() {
                members[equal_width_index(c, bins)].push(i);
            }
            let g = bins as f64;
            let edges = (0..bins)
                .map(|k| (k as f64 / g, (k + 1) as f64 / g))
                .collect();
            (members, edges)
        }
        BinScheme::EqualMass => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                conf[a]
                    .partial_cmp(&conf[b])
                    .expect("finite")
                    .then(a.cmp(&b))
            });
            let (base, extra) = (n / bins, n % bins);
            let mut members = Vec::with_capacity(bins);
            let mut start = 0;
            for k in 0..bins {
                let size = base + usize::from(k < extra);
                members.push(order[start..start + size].to_vec());
                start += size;
            }
            let lo_hi: Vec<Option<(f64, f64)>> = members
                .iter()
                .map(|m| {
                    let first = m.first()?;
                    let last = m.last()?;
                    Some((conf[*first].to_f64_lossy(), conf[*last].to_f64_lossy()))
                })
                .collect();
            let mut edges = Vec::with_capacity(bins);
            let mut lower = 0.0;
            for k in 0..bins {
                let upper = if k + 1 == bins {
                    1.0
                } else {
                    match (lo_hi[k], lo_hi[k + 1]) {
                        (Some((_, hi)), Some((lo, _))) => 0.5 * (hi + lo),
                        (Some((_, hi)), None) => hi,
                        _ => lower,
                    }
                };
                edges.push((lower, upper));
                lower = upper;
            }
            (members, edges)
        }
    };

    let bins = members
        .iter()
        .zip(edges)
        .map(|(m, (lower, upper))| {
            let count = m.len();
            let (accuracy, confidence) = if count == 0 {
                (0.0, 0.0)
            } else {
                let k = T::of_usize(count);
                let acc = T::of_usize(m.iter().filter(|&&i| correct[i]).count()) / k;
                let cf = m.iter().map(|&i| conf[i]).sum::<T>() / k;
                (acc.to_f64_lossy(), cf.to_f64_lossy())
            };
            BinStat {
                lower,
                upper,
                count,
                accuracy,
                confidence,
            }
        })
        .collect();
    Ok(ReliabilityBins { scheme, bins })
}
