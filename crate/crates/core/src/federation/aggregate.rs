use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::error::{invalid, Error, Result};
use crate::numerics::RngStream;
use crate::scalar::Scalar;

use super::config::{AggregatorConfig, AggregatorKind};

/// A participant's contribution to one round.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate<T> {
    pub client_id: usize,
    pub vector: Vec<T>,
    pub samples: usize,
    pub steps: usize,
}

/// Server-side state carried across rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState<T> {
    pub global: Vec<T>,
    pub num_clients: usize,
    /// Running mean of client duals (FedDyn only).
    pub h_bar: Option<Vec<T>>,
}

impl<T: Scalar> ServerState<T> {
    pub fn new(global: Vec<T>, num_clients: usize, agg: &AggregatorConfig) -> Self {
        let h_bar = (agg.kind == AggregatorKind::Feddyn).then(|| vec![T::zero(); global.len()]);
        Self {
            global,
            num_clients,
            h_bar,
        }
    }
}

/// Uniform sample without replacement of `max(1, round(rate·N))` clients,
/// returned in ascending order.
pub fn sample_participants(n: usize, rate: f64, rng: &mut RngStream) -> Result<Vec<usize>> {
    if n == 0 {
        return invalid("cannot sample participants from zero clients");
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return invalid(format!("participation rate must be in (0, 1], got {rate}"));
    }
    let k = ((rate * n as f64).round() as usize).clamp(1, n);
    let mut ids: Vec<usize> = (0..n).collect();
    // partial Fisher-Yates
    for i in 0..k {
        let j = i + rng.below(n - i);
        ids.swap(i, j);
    }
    let mut chosen = ids[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Dataset-size weights `|D_n| / Σ|D|` over the participants.
pub fn fedavg_weights(samples: &[usize]) -> Result<Vec<f64>> {
    let total: usize = samples.iter().sum();
    if total == 0 {
        return invalid("aggregation weights need at least one sample");
    }
    Ok(samples.iter().map(|&s| s as f64 / total as f64).collect())
}

/// `Σ c_n v_n`, accumulated from the first term so that a single unit
/// coefficient reproduces its vector exactly.
fn combine<T: Scalar>(coeffs: &[f64], vectors: &[&[T]]) -> Vec<T> {
    let mut out: Vec<T> = vectors[0].iter().map(|&x| T::of(coeffs[0]) * x).collect();
    for (&c, v) in coeffs.iter().zip(vectors).skip(1) {
        let c = T::of(c);
        for (o, &x) in out.iter_mut().zip(v.iter()) {
            *o += c * x;
        }
    }
    out
}

/// New global vector from the participants' updates. Updates the FedDyn
/// server dual when that strategy is active.
pub fn aggregate<T: Scalar>(
    updates: &[LocalUpdate<T>],
    global: &[T],
    agg: &AggregatorConfig,
    server: &mut ServerState<T>,
) -> Result<Vec<T>> {
    if updates.is_empty() {
        return invalid("aggregation needs at least one update");
    }
    for u in updates {
        if u.vector.len() != global.len() {
            return Err(Error::Transport(format!(
                "client {} sent {} parameters, global vector has {}",
                u.client_id,
                u.vector.len(),
                global.len()
            )));
        }
    }
    let vectors: Vec<&[T]> = updates.iter().map(|u| u.vector.as_slice()).collect();
    let samples: Vec<usize> = updates.iter().map(|u| u.samples).collect();
    match agg.kind {
        AggregatorKind::Fedavg | AggregatorKind::Fedprox => {
            Ok(combine(&fedavg_weights(&samples)?, &vectors))
        }
        AggregatorKind::Fednova => fednova(updates, global, &vectors, &samples),
        AggregatorKind::Feddyn => feddyn(&vectors, global, agg.alpha_dyn, server),
    }
}

/// Normalized averaging, evaluated as `Σ c_n θ_n + r·θ_{t-1}` with
/// `c_n = p_n·τ_eff/a_n` and `r = 1 − Σ c_n` computed in exact rational
/// arithmetic. When every client takes the same number of steps,
/// `τ_eff/a_n = 1` and `r = 0` exactly, so the result is the FedAvg one.
/// A client with zero steps has no update direction and contributes nothing.
fn fednova<T: Scalar>(
    updates: &[LocalUpdate<T>],
    global: &[T],
    vectors: &[&[T]],
    samples: &[usize],
) -> Result<Vec<T>> {
    let total: u128 = samples.iter().map(|&s| s as u128).sum();
    if total == 0 {
        return invalid("aggregation weights need at least one sample");
    }
    let p = fedavg_weights(samples)?;
    let tau_num: u128 = updates
        .iter()
        .map(|u| u.samples as u128 * u.steps as u128)
        .sum();
    if tau_num == 0 {
        return Ok(global.to_vec());
    }
    let big = |x: u128| BigInt::from(x);
    let mut coeffs = Vec::with_capacity(updates.len());
    let mut residual = BigRational::from_integer(BigInt::from(1));
    for (u, &pn) in updates.iter().zip(&p) {
        if u.steps == 0 {
            coeffs.push(0.0);
            continue;
        }
        let den = u.steps as u128 * total;
        // equal integers convert to equal floats, so equal steps give 1.0
        coeffs.push(pn * (tau_num as f64 / den as f64));
        residual -= BigRational::new(big(u.samples as u128) * big(tau_num), big(total) * big(den));
    }
    let mut out = combine(&coeffs, vectors);
    if !residual.is_zero() {
        let r = T::of(residual.to_f64().unwrap_or(0.0));
        for (o, &g) in out.iter_mut().zip(global) {
            *o += r * g;
        }
    }
    Ok(out)
}

/// Dynamic regularization: `θ_t = mean(θ_n) − h̄/α`, then
/// `h̄ ← h̄ − α·(mean(θ_n) − θ_{t-1})·|P|/N`.
fn feddyn<T: Scalar>(
    vectors: &[&[T]],
    global: &[T],
    alpha: f64,
    server: &mut ServerState<T>,
) -> Result<Vec<T>> {
    let m = vectors.len();
    let coeffs = vec![1.0 / m as f64; m];
    let mean = if m == 1 {
        vectors[0].to_vec()
    } else {
        combine(&coeffs, vectors)
    };
    let h = server
        .h_bar
        .get_or_insert_with(|| vec![T::zero(); global.len()]);
    if h.len() != global.len() {
        return Err(Error::Transport(format!(
            "server dual has {} entries, global vector has {}",
            h.len(),
            global.len()
        )));
    }
    let inv_alpha = T::of(1.0 / alpha);
    let out: Vec<T> = mean
        .iter()
        .zip(h.iter())
        .map(|(&x, &hv)| x - inv_alpha * hv)
        .collect();
    let frac = T::of(alpha * m as f64 / server.num_clients.max(1) as f64);
    for ((hv, &x), &g) in h.iter_mut().zip(&mean).zip(global) {
        *hv -= frac * (x - g);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn upd(id: usize, v: Vec<f64>, samples: usize, steps: usize) -> LocalUpdate<f64> {
        LocalUpdate {
            client_id: id,
            vector: v,
            samples,
            steps,
        }
    }

    #[test]
    fn weighted_mean_example() {
        let agg = AggregatorConfig::default();
        let mut s = ServerState::new(vec![0.0], 2, &agg);
        let out = aggregate(
            &[upd(0, vec![0.0], 1, 1), upd(1, vec![4.0], 3, 1)],
            &[0.0],
            &agg,
            &mut s,
        )
        .unwrap();
        assert_eq!(out, vec![3.0]);
    }

    #[test]
    fn participant_counts() {
        let mut rng = RngStream::new(3, 0);
        assert_eq!(sample_participants(100, 0.1, &mut rng).unwrap().len(), 10);
        assert_eq!(sample_participants(5, 0.1, &mut rng).unwrap().len(), 1);
        assert_eq!(
            sample_participants(7, 1.0, &mut rng).unwrap(),
            (0..7).collect::<Vec<_>>()
        );
        assert!(sample_participants(0, 0.5, &mut rng).is_err());
        let s = sample_participants(50, 0.3, &mut rng).unwrap();
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_client_identity_all_strategies() {
        let v = vec![0.1, -3.7, 1e-9, 42.0];
        let g = vec![1.0, 2.0, 3.0, 4.0];
        for kind in [
            AggregatorKind::Fedavg,
            AggregatorKind::Fedprox,
            AggregatorKind::Feddyn,
            AggregatorKind::Fednova,
        ] {
            let agg = AggregatorConfig::of(kind);
            let mut s = ServerState::new(g.clone(), 1, &agg);
            let out = aggregate(&[upd(0, v.clone(), 17, 5)], &g, &agg, &mut s).unwrap();
            assert_eq!(out, v, "{kind:?}");
        }
    }

    #[test]
    fn fednova_unequal_steps_matches_textbook_form() {
        let g = vec![1.0, -2.0];
        let ups = [
            upd(0, vec![0.5, -1.0], 10, 2),
            upd(1, vec![2.0, 0.0], 30, 6),
        ];
        let agg = AggregatorConfig::of(AggregatorKind::Fednova);
        let mut s = ServerState::new(g.clone(), 2, &agg);
        let out = aggregate(&ups, &g, &agg, &mut s).unwrap();
        let p = [0.25, 0.75];
        let a = [2.0, 6.0];
        let tau = p[0] * a[0] + p[1] * a[1];
        for j in 0..2 {
            let dir: f64 = (0..2)
                .map(|n| p[n] * (g[j] - ups[n].vector[j]) / a[n])
                .sum();
            let want = g[j] - tau * dir;
            assert!((out[j] - want).abs() < 1e-14, "{} vs {want}", out[j]);
        }
    }

    #[test]
    fn feddyn_lagged_dual() {
        let g = vec![0.0];
        let agg = AggregatorConfig::of(AggregatorKind::Feddyn);
        let mut s = ServerState::new(g.clone(), 2, &agg);
        let out = aggregate(
            &[upd(0, vec![1.0], 1, 1), upd(1, vec![3.0], 1, 1)],
            &g,
            &agg,
            &mut s,
        )
        .unwrap();
        assert_eq!(out, vec![2.0]);
        // h̄ = −0.01·(2 − 0)·(2/2)
        assert!((s.h_bar.as_ref().unwrap()[0] + 0.02).abs() < 1e-15);
        let out2 = aggregate(&[upd(0, vec![2.0], 1, 1)], &out, &agg, &mut s).unwrap();
        assert!((out2[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_transport_error() {
        let agg = AggregatorConfig::default();
        let mut s = ServerState::new(vec![0.0; 2], 1, &agg);
        let err = aggregate(&[upd(0, vec![1.0], 1, 1)], &[0.0, 0.0], &agg, &mut s).unwrap_err();
        assert!(matches!(err, Error::Transport(_)));
    }
}
