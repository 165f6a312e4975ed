use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    #[default]
    Dirichlet,
    SortPartition,
    BaseToNew,
    Domain,
}

/// Partitioning parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSpec {
    pub kind: PartitionKind,
    /// Dirichlet concentration.
    pub alpha: f64,
    pub num_clients: usize,
    pub classes_per_client: usize,
    pub clients_per_domain: usize,
    /// Shuffle class order before picking base classes.
    pub shuffle_classes: bool,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            kind: PartitionKind::Dirichlet,
            alpha: 0.5,
            num_clients: 100,
            classes_per_client: 2,
            clients_per_domain: 2,
            shuffle_classes: false,
        }
    }
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        let needs_alpha = matches!(self.kind, PartitionKind::Dirichlet | PartitionKind::Domain);
        if needs_alpha && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "partition.alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.kind != PartitionKind::Domain && self.num_clients == 0 {
            return Err(Error::Config(
                "partition.num_clients must be at least 1".into(),
            ));
        }
        if self.kind == PartitionKind::Domain && self.clients_per_domain == 0 {
            return Err(Error::Config(
                "partition.clients_per_domain must be at least 1".into(),
            ));
        }
        if self.kind == PartitionKind::SortPartition && self.classes_per_client == 0 {
            return Err(Error::Config(
                "partition.classes_per_client must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Assignment of samples to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub kind: PartitionKind,
    pub num_clients: usize,
    pub class_count: usize,
    /// Owning client of each train sample; `None` for test samples.
    pub assignment: Vec<Option<usize>>,
    /// Train samples per client and class.
    pub histograms: Vec<Vec<usize>>,
    /// Test samples evaluated by each client.
    pub test_views: Vec<Vec<usize>>,
    /// Domain served by each client (domain partitioning only).
    pub client_domains: Option<Vec<usize>>,
    /// Class order used to pick base classes (base-to-new only).
    pub class_order: Option<Vec<usize>>,
    pub base_classes: Option<Vec<usize>>,
    pub new_classes: Option<Vec<usize>>,
    pub notes: Vec<String>,
}

impl PartitionPlan {
    pub(crate) fn empty(
        kind: PartitionKind,
        num_clients: usize,
        n: usize,
        class_count: usize,
    ) -> Self {
        Self {
            kind,
            num_clients,
            class_count,
            assignment: vec![None; n],
            histograms: vec![vec![0; class_count]; num_clients],
            test_views: vec![Vec::new(); num_clients],
            client_domains: None,
            class_order: None,
            base_classes: None,
            new_classes: None,
            notes: Vec::new(),
        }
    }

    pub(crate) fn assign(&mut self, sample: usize, client: usize, label: usize) {
        debug_assert!(
            self.assignment[sample].is_none(),
            "sample {sample} assigned twice"
        );
        self.assignment[sample] = Some(client);
        self.histograms[client][label] += 1;
    }

    /// Train sample indices of each client, in ascending index order.
    pub fn client_train(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clients];
        for (i, a) in self.assignment.iter().enumerate() {
            if let Some(c) = a {
                out[*c].push(i);
            }
        }
        out
    }

    pub fn client_sizes(&self) -> Vec<usize> {
        self.histograms.iter().map(|h| h.iter().sum()).collect()
    }

    pub fn assigned_count(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_some()).count()
    }

    /// Histograms agree with the assignment.
    pub fn is_consistent(&self, labels: &[usize]) -> bool {
        let mut h = vec![vec![0usize; self.class_count]; self.num_clients];
        for (i, a) in self.assignment.iter().enumerate() {
            if let Some(c) = a {
                h[*c][labels[i]] += 1;
            }
        }
        h == self.histograms
    }
}
