//! Client datasets for label-skewed, pathological, base-to-new and
//! per-domain federated settings.

mod dataset;
mod ops;
mod plan;
mod stats;

pub use dataset::{LabeledDataset, Split};
pub use ops::{
    base_to_new_split, build_partition, dirichlet_partition, domain_partition, sort_and_partition,
};
pub use plan::{PartitionKind, PartitionPlan, PartitionSpec};
pub use stats::{heterogeneity_stats, shannon_entropy, tv_from_uniform, HeterogeneityStats};
