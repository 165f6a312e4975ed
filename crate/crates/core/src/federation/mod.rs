//! Communication-round engine: participant sampling, local SGD, the
//! FedAvg / FedProx / FedDyn / FedNova aggregators, personalized
//! evaluation and weight-drift tracking.

mod aggregate;
mod client;
mod config;
mod drift;
mod evaluate;
mod round;

pub use aggregate::{aggregate, fedavg_weights, sample_participants, LocalUpdate, ServerState};
pub use client::{build_clients, local_train, ClientState};
pub use config::{AggregatorConfig, AggregatorKind, FederationConfig, WarmupMode};
pub use drift::{mean_std, weight_drift, DriftReport, LayerDrift};
pub use evaluate::{
    personalized_evaluate, personalized_evaluate_at, ClassSplit, ClientEval, Evaluation,
};
pub use round::{run_round, Execution, RoundContext, RoundRecord, TAG_LOCAL, TAG_SAMPLE};
