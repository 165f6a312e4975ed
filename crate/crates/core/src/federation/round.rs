use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::MetricConfig;
use crate::error::{invalid, Result};
use crate::losses::LossSpec;
use crate::model::DualEncoder;
use crate::numerics::RngStream;
use crate::scalar::Scalar;

use super::aggregate::{aggregate, sample_participants, LocalUpdate, ServerState};
use super::client::{local_train, ClientState};
use super::config::{AggregatorConfig, FederationConfig};
use super::drift::{mean_std, weight_drift};
use super::evaluate::{personalized_evaluate, ClassSplit, Evaluation};

/// Stream tags for participant sampling and local training.
pub const TAG_SAMPLE: u64 = 0x5341_4d50;
pub const TAG_LOCAL: u64 = 0x4c4f_434c;

/// Whether participants train on the rayon pool or one after another.
/// Both produce identical records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// Everything a round needs besides mutable state.
#[derive(Debug, Clone)]
pub struct RoundContext<'a, T> {
    pub seed: u64,
    pub fed: &'a FederationConfig,
    pub agg: &'a AggregatorConfig,
    pub loss: &'a LossSpec,
    pub metric: &'a MetricConfig,
    pub split: Option<&'a ClassSplit>,
    /// Zero-shot model that drift is measured against.
    pub reference: &'a DualEncoder<T>,
    pub execution: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord<T> {
    pub round: usize,
    pub participants: Vec<usize>,
    pub local_steps: Vec<usize>,
    pub global: Vec<T>,
    pub evaluation: Evaluation,
    /// Drift of the participants' local models before aggregation.
    pub drift_mean: f64,
    pub drift_std: f64,
    /// Drift of the aggregated model.
    pub global_drift: f64,
}

/// Sample, train locally, aggregate, broadcast, evaluate every client.
///
/// A failing participant aborts the round before aggregation; server
/// state and client duals are only committed once all participants succeed.
pub fn run_round<T: Scalar>(
    server: &mut ServerState<T>,
    clients: &mut [ClientState<T>],
    ctx: &RoundContext<'_, T>,
    round: usize,
) -> Result<RoundRecord<T>> {
    if round >= ctx.fed.rounds {
        return invalid(format!(
            "round {round} is past the configured {} rounds",
            ctx.fed.rounds
        ));
    }
    if clients.len() != server.num_clients {
        return invalid(format!(
            "server expects {} clients, got {}",
            server.num_clients,
            clients.len()
        ));
    }
    let mut sampler = RngStream::derive(ctx.seed, &[TAG_SAMPLE, round as u64]);
    let participants = sample_participants(clients.len(), ctx.fed.participation, &mut sampler)?;

    let global = server.global.clone();
    let train_one = |c: &mut ClientState<T>| -> Result<(LocalUpdate<T>, Option<Vec<T>>, f64)> {
        let mut rng = RngStream::derive(ctx.seed, &[TAG_LOCAL, round as u64, c.id as u64]);
        let (update, dual) = local_train(c, &global, ctx.fed, ctx.agg, ctx.loss, round, &mut rng)?;
        let drift = weight_drift(&c.model, ctx.reference)?.aggregate;
        Ok((update, dual, drift))
    };
    let mut chosen: Vec<&mut ClientState<T>> = clients
        .iter_mut()
        .filter(|c| participants.binary_search(&c.id).is_ok())
        .collect();
    let results: Vec<_> = match ctx.execution {
        Execution::Serial => chosen
            .iter_mut()
            .map(|c| train_one(c))
            .collect::<Result<_>>()?,
        Execution::Parallel => chosen
            .par_iter_mut()
            .map(|c| train_one(c))
            .collect::<Result<_>>()?,
    };

    let mut updates = Vec::with_capacity(results.len());
    let mut drifts = Vec::with_capacity(results.len());
    let mut duals = Vec::with_capacity(results.len());
    for (u, d, dr) in results {
        duals.push((u.client_id, d));
        drifts.push(dr);
        updates.push(u);
    }
    let new_global = aggregate(&updates, &global, ctx.agg, server)?;
    for (id, dual) in duals {
        if let Some(d) = dual {
            clients[id].dual = Some(d);
        }
    }
    server.global = new_global.clone();
    for c in clients.iter_mut() {
        c.model.load_trainable(&new_global)?;
    }
    let evaluation = personalized_evaluate(clients, ctx.metric, ctx.split)?;
    let (drift_mean, drift_std) = mean_std(&drifts);
    let global_drift = weight_drift(&clients[0].model, ctx.reference)?.aggregate;
    Ok(RoundRecord {
        round,
        participants,
        local_steps: updates.iter().map(|u| u.steps).collect(),
        global: new_global,
        evaluation,
        drift_mean,
        drift_std,
        global_drift,
    })
}
