//! JSON experiment configuration. Every section is optional and falls back
//! to the defaults of the simulator; unknown keys are rejected.

use std::path::Path;

use fedcal_core::calibration::{MetricConfig, TAU_MAX, TAU_MIN};
use fedcal_core::federation::{AggregatorConfig, AggregatorKind, FederationConfig};
use fedcal_core::losses::{AuxKind, LossSpec};
use fedcal_core::model::{HeadKind, ModelConfig};
use fedcal_core::numerics::RngStream;
use fedcal_core::partition::{PartitionKind, PartitionSpec};
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingSource;
use crate::error::{Result, RunError};
use crate::synthetic::SyntheticSpec;

const SWEEP_TAG: u64 = 0x5357_4550;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    InDistribution,
    DomainGeneralization,
    BaseToNew,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Self::InDistribution => "in_distribution",
            Self::DomainGeneralization => "domain_generalization",
            Self::BaseToNew => "base_to_new",
        }
    }

    fn of_partition(kind: PartitionKind) -> Self {
        match kind {
            PartitionKind::Dirichlet | PartitionKind::SortPartition => Self::InDistribution,
            PartitionKind::Domain => Self::DomainGeneralization,
            PartitionKind::BaseToNew => Self::BaseToNew,
        }
    }
}

/// Post-hoc temperature scaling of the final evaluation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostHoc {
    /// Fixed temperature.
    pub temperature: Option<f64>,
    /// Fit the temperature on the pooled client training data.
    pub fit_temperature: bool,
}

/// Lists of values to cross; each grid point is a full run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub alpha: Option<Vec<f64>>,
    pub rounds: Option<Vec<usize>>,
    pub rank: Option<Vec<usize>>,
    pub tau: Option<Vec<f64>>,
    pub head_kind: Option<Vec<HeadKind>>,
    pub participation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Row label in reports; derived from the head and losses when absent.
    pub label: Option<String>,
    /// Derived from the partition kind when absent.
    pub setting: Option<Setting>,
    pub model: ModelConfig,
    pub federation: FederationConfig,
    pub aggregator: AggregatorConfig,
    pub loss: LossSpec,
    pub partition: PartitionSpec,
    pub metrics: MetricConfig,
    pub post_hoc: PostHoc,
    pub synthetic: Option<SyntheticSpec>,
    pub embeddings: Option<EmbeddingSource>,
    pub sweep: Option<SweepAxes>,
}

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Embeddings(EmbeddingSource),
}

impl ExperimentConfig {
    pub fn data_source(&self) -> Result<DataSource> {
        match (&self.synthetic, &self.embeddings) {
            (Some(_), Some(_)) => Err(RunError::Config(
                "exactly one data source allowed: both `synthetic` and `embeddings` are set".into(),
            )),
            (Some(s), None) => Ok(DataSource::Synthetic(s.clone())),
            (None, Some(e)) => Ok(DataSource::Embeddings(e.clone())),
            (None, None) => Ok(DataSource::Synthetic(SyntheticSpec::default())),
        }
    }

    pub fn resolved_setting(&self) -> Setting {
        self.setting
            .unwrap_or(Setting::of_partition(self.partition.kind))
    }

    /// Report label: head kind, then the auxiliary loss and a non-default
    /// aggregator, e.g. `prompt+dca`, `lora_both@fednova`.
    pub fn method_label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let mut s = self.model.head_kind.name().to_string();
        match self.loss.aux_kind {
            AuxKind::None => {}
            AuxKind::Dca => s.push_str("+dca"),
            AuxKind::Mdca => s.push_str("+mdca"),
        }
        let agg = match self.aggregator.kind {
            AggregatorKind::Fedavg => None,
            AggregatorKind::Fedprox => Some("fedprox"),
            AggregatorKind::Feddyn => Some("feddyn"),
            AggregatorKind::Fednova => Some("fednova"),
        };
        if let Some(a) = agg {
            s.push('@');
            s.push_str(a);
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let source = self.data_source()?;
        if let DataSource::Synthetic(spec) = &source {
            spec.validate()?;
            if spec.classes != self.model.class_count || spec.dim != self.model.embed_dim {
                return Err(RunError::Config(format!(
                    "synthetic data is {} classes x {} dims but model.class_count = {}, model.embed_dim = {}",
                    spec.classes, spec.dim, self.model.class_count, self.model.embed_dim
                )));
            }
        }
        self.model.validate()?;
        self.federation.validate()?;
        self.aggregator.validate()?;
        self.loss.validate()?;
        self.partition.validate()?;
        if self.metrics.bins == 0 {
            return Err(RunError::Config("metrics.bins must be at least 1".into()));
        }
        if let Some(s) = self.setting {
            let implied = Setting::of_partition(self.partition.kind);
            if s != implied {
                return Err(RunError::Config(format!(
                    "setting {} conflicts with partition.kind, which implies {}",
                    s.name(),
                    implied.name()
                )));
            }
        }
        if let Some(t) = self.post_hoc.temperature {
            check_tau("post_hoc.temperature", t)?;
            if self.post_hoc.fit_temperature {
                return Err(RunError::Config(
                    "post_hoc.temperature and post_hoc.fit_temperature are mutually exclusive"
                        .into(),
                ));
            }
        }
        if self.sweep.is_some() {
            // every grid point must be a valid run on its own
            self.expand()?;
        }
        Ok(())
    }

    /// Grid points of the sweep (a single point without one), each with
    /// its own derived seed and the sweep removed.
    pub fn expand(&self) -> Result<Vec<SweepPoint>> {
        let Some(sw) = &self.sweep else {
            let mut c = self.clone();
            c.sweep = None;
            return Ok(vec![SweepPoint {
                index: 0,
                tag: String::new(),
                config: c,
            }]);
        };
        sw.validate()?;
        let mut grid: Vec<(Vec<String>, ExperimentConfig)> = vec![(Vec::new(), self.clone())];
        fn cross<V: Clone + std::fmt::Debug>(
            grid: Vec<(Vec<String>, ExperimentConfig)>,
            axis: &Option<Vec<V>>,
            name: &str,
            apply: impl Fn(&mut ExperimentConfig, &V),
            show: impl Fn(&V) -> String,
        ) -> Vec<(Vec<String>, ExperimentConfig)> {
            let Some(values) = axis else { return grid };
            let (apply, show) = (&apply, &show);
            grid.into_iter()
                .flat_map(|(tags, cfg)| {
                    values
                        .iter()
                        .map(move |v| {
                            let mut c = cfg.clone();
                            apply(&mut c, v);
                            let mut t = tags.clone();
                            t.push(format!("{name}={}", show(v)));
                            (t, c)
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        }
        grid = cross(
            grid,
            &sw.alpha,
            "alpha",
            |c, v| c.partition.alpha = *v,
            |v| v.to_string(),
        );
        grid = cross(
            grid,
            &sw.rounds,
            "rounds",
            |c, v| c.federation.rounds = *v,
            |v| v.to_string(),
        );
        grid = cross(
            grid,
            &sw.rank,
            "rank",
            |c, v| c.model.lora_rank = *v,
            |v| v.to_string(),
        );
        grid = cross(
            grid,
            &sw.tau,
            "tau",
            |c, v| {
                c.post_hoc.temperature = Some(*v);
                c.post_hoc.fit_temperature = false;
            },
            |v| v.to_string(),
        );
        grid = cross(
            grid,
            &sw.head_kind,
            "head",
            |c, v| c.model.head_kind = *v,
            |v| v.name().to_string(),
        );
        grid = cross(
            grid,
            &sw.participation,
            "participation",
            |c, v| c.federation.participation = *v,
            |v| v.to_string(),
        );
        grid.into_iter()
            .enumerate()
            .map(|(i, (tags, mut c))| {
                c.sweep = None;
                c.seed = RngStream::path_id(&[SWEEP_TAG, self.seed, i as u64]);
                c.validate()?;
                Ok(SweepPoint {
                    index: i,
                    tag: tags.join(";"),
                    config: c,
                })
            })
            .collect()
    }
}

fn check_tau(key: &str, t: f64) -> Result<()> {
    if !(TAU_MIN..=TAU_MAX).contains(&t) {
        return Err(RunError::Config(format!(
            "{key} must be in [{TAU_MIN}, {TAU_MAX}], got {t}"
        )));
    }
    Ok(())
}

impl SweepAxes {
    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str, len: Option<usize>| match len {
            Some(0) => Err(RunError::Config(format!("sweep.{name} is an empty list"))),
            _ => Ok(()),
        };
        empty("alpha", self.alpha.as_ref().map(Vec::len))?;
        empty("rounds", self.rounds.as_ref().map(Vec::len))?;
        empty("rank", self.rank.as_ref().map(Vec::len))?;
        empty("tau", self.tau.as_ref().map(Vec::len))?;
        empty("head_kind", self.head_kind.as_ref().map(Vec::len))?;
        empty("participation", self.participation.as_ref().map(Vec::len))?;
        for &t in self.tau.iter().flatten() {
            check_tau("sweep.tau", t)?;
        }
        Ok(())
    }
}

/// One run of a (possibly trivial) sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    /// `axis=value` pairs joined by `;`; empty without a sweep.
    pub tag: String,
    pub config: ExperimentConfig,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        RunError::Config(m) => RunError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
