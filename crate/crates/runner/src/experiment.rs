//! End-to-end runs: data → partition → clients → rounds → results.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use fedcal_core::calibration::{fit_temperature, LogitBatch, ReliabilityBins};
use fedcal_core::federation::{
    build_clients, personalized_evaluate, personalized_evaluate_at, run_round, weight_drift,
    ClassSplit, ClientState, Evaluation, Execution, RoundContext, RoundRecord, ServerState,
};
use fedcal_core::model::DualEncoder;
use fedcal_core::numerics::{DenseMatrix, RngStream};
use fedcal_core::partition::{build_partition, LabeledDataset, PartitionPlan};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig, Setting, SweepPoint};
use crate::embeddings::load_embeddings;
use crate::error::{Result, RunError};
use crate::report;
use crate::synthetic::generate_synthetic;

pub const TAG_DATA: u64 = 0x4441_5441;
pub const TAG_MODEL: u64 = 0x4d4f_444c;
pub const TAG_PARTITION: u64 = 0x5041_5254;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub samples: usize,
    pub train: usize,
    pub test: usize,
    pub classes: usize,
    pub dim: usize,
    pub domains: usize,
    pub clients: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSeries {
    /// Drift of the broadcast model; entry 0 is the zero-shot start.
    pub global: Vec<f64>,
    pub cohort_mean: Vec<f64>,
    pub cohort_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostHocResult {
    pub temperature: f64,
    pub fitted: bool,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub evaluation: Evaluation,
    pub post_hoc: Option<PostHocResult>,
    /// Client bins pooled into one client-average reliability table.
    pub pooled_bins: ReliabilityBins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub started_unix_ms: u64,
    pub elapsed_ms: u64,
}

/// Everything a run produces. All fields except `wall_clock` are a pure
/// function of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub config: ExperimentConfig,
    pub method: String,
    pub setting: Setting,
    pub sweep_tag: String,
    pub data: DataSummary,
    pub initial: Evaluation,
    pub rounds: Vec<RoundRecord<f64>>,
    #[serde(rename = "final")]
    pub final_report: FinalReport,
    pub drift: DriftSeries,
    pub wall_clock: Option<WallClock>,
}

impl ResultsFile {
    /// Copy with timing metadata removed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_clock: None,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| RunError::Numeric(format!("results serialization failed: {e}")))
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| RunError::format(path, None, e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub execution: Execution,
}

/// Dataset and text prototypes for a config.
pub fn build_data(config: &ExperimentConfig) -> Result<(LabeledDataset<f64>, DenseMatrix<f64>)> {
    let (data, protos) = match config.data_source()? {
        DataSource::Synthetic(spec) => {
            let s = generate_synthetic(&spec, &mut RngStream::derive(config.seed, &[TAG_DATA]))?;
            (s.dataset, s.prototypes)
        }
        DataSource::Embeddings(src) => load_embeddings(&src)?,
    };
    if data.class_count != config.model.class_count || data.dim() != config.model.embed_dim {
        return Err(RunError::Config(format!(
            "data has {} classes x {} dims but model.class_count = {}, model.embed_dim = {}",
            data.class_count,
            data.dim(),
            config.model.class_count,
            config.model.embed_dim
        )));
    }
    Ok((data, protos))
}

pub fn build_plan(config: &ExperimentConfig, data: &LabeledDataset<f64>) -> Result<PartitionPlan> {
    Ok(build_partition(
        &config.partition,
        data,
        &mut RngStream::derive(config.seed, &[TAG_PARTITION]),
    )?)
}

pub fn zero_shot_model(
    config: &ExperimentConfig,
    prototypes: DenseMatrix<f64>,
) -> Result<DualEncoder<f64>> {
    Ok(DualEncoder::zero_shot_init(
        config.model.clone(),
        prototypes,
        &mut RngStream::derive(config.seed, &[TAG_MODEL]),
    )?)
}

/// Logits of the broadcast model on every client's training data.
fn pooled_train_logits(clients: &[ClientState<f64>]) -> Result<LogitBatch<f64>> {
    let model = &clients[0].model;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut cols = model.class_count();
    for c in clients {
        if c.train_len() == 0 {
            continue;
        }
        let z = model.logits(&c.train_x)?;
        cols = z.cols();
        data.extend_from_slice(z.data());
        labels.extend_from_slice(&c.train_y);
    }
    Ok(LogitBatch::new(
        DenseMatrix::new(labels.len(), cols, data)?,
        labels,
    )?)
}

fn pooled_bins(eval: &Evaluation) -> Result<ReliabilityBins> {
    Ok(ReliabilityBins::pool(
        eval.per_client
            .iter()
            .filter_map(|e| e.report.as_ref().map(|r| &r.bins)),
    )?)
}

/// Run one (non-sweep) configuration in memory.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<ResultsFile> {
    let started = SystemTime::now();
    let clock = Instant::now();
    config.validate()?;
    let (data, protos) = build_data(config)?;
    let reference = zero_shot_model(config, protos)?;
    let plan = build_plan(config, &data)?;
    let split = match (&plan.base_classes, &plan.new_classes) {
        (Some(b), Some(n)) => Some(ClassSplit {
            base: b.clone(),
            new: n.clone(),
        }),
        _ => None,
    };
    let mut clients = build_clients(&plan, &data, &reference, &config.aggregator);
    let mut server = ServerState::new(
        reference.trainable_vector(),
        clients.len(),
        &config.aggregator,
    );

    let initial = personalized_evaluate(&clients, &config.metrics, split.as_ref())?;
    let initial_drift = weight_drift(&clients[0].model, &reference)?.aggregate;
    let ctx = RoundContext {
        seed: config.seed,
        fed: &config.federation,
        agg: &config.aggregator,
        loss: &config.loss,
        metric: &config.metrics,
        split: split.as_ref(),
        reference: &reference,
        execution: opts.execution,
    };
    let mut rounds = Vec::with_capacity(config.federation.rounds);
    for t in 0..config.federation.rounds {
        rounds.push(run_round(&mut server, &mut clients, &ctx, t)?);
    }
    let last = rounds
        .last()
        .map(|r| r.evaluation.clone())
        .unwrap_or_else(|| initial.clone());

    let post_hoc = match (config.post_hoc.temperature, config.post_hoc.fit_temperature) {
        (Some(tau), _) => Some((tau, false)),
        (None, true) => Some((
            fit_temperature(&pooled_train_logits(&clients)?)?.tau(),
            true,
        )),
        (None, false) => None,
    };
    let post_hoc = post_hoc
        .map(|(tau, fitted)| -> Result<PostHocResult> {
            Ok(PostHocResult {
                temperature: tau,
                fitted,
                evaluation: personalized_evaluate_at(
                    &clients,
                    &config.metrics,
                    split.as_ref(),
                    tau,
                )?,
            })
        })
        .transpose()?;

    let mut global = vec![initial_drift];
    global.extend(rounds.iter().map(|r| r.global_drift));
    let drift = DriftSeries {
        global,
        cohort_mean: rounds.iter().map(|r| r.drift_mean).collect(),
        cohort_std: rounds.iter().map(|r| r.drift_std).collect(),
    };
    let pooled = pooled_bins(&last)?;
    let train = data.train_indices().len();
    Ok(ResultsFile {
        config: config.clone(),
        method: config.method_label(),
        setting: config.resolved_setting(),
        sweep_tag: String::new(),
        data: DataSummary {
            samples: data.len(),
            train,
            test: data.len() - train,
            classes: data.class_count,
            dim: data.dim(),
            domains: data.domain_count(),
            clients: plan.num_clients,
        },
        initial,
        rounds,
        final_report: FinalReport {
            evaluation: last,
            post_hoc,
            pooled_bins: pooled,
        },
        drift,
        wall_clock: Some(WallClock {
            started_unix_ms: started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            elapsed_ms: clock.elapsed().as_millis() as u64,
        }),
    })
}

/// Run every grid point of `config` (one without a sweep).
pub fn run_points(config: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ResultsFile>> {
    let points: Vec<SweepPoint> = config.expand()?;
    let run = |p: &SweepPoint| -> Result<ResultsFile> {
        let mut r = run_experiment(&p.config, opts)?;
        r.sweep_tag = p.tag.clone();
        Ok(r)
    };
    match opts.execution {
        Execution::Serial => points.iter().map(run).collect(),
        Execution::Parallel => points.par_iter().map(run).collect(),
    }
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| RunError::io(path, e))
}

/// Files of one results set written into `dir`.
pub fn write_result_files(results: &ResultsFile, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    write(&dir.join("results.json"), results.to_json()?.as_bytes())?;
    write(
        &dir.join("summary.csv"),
        report::render_csv(&report::rows_of(results)).as_bytes(),
    )?;
    for (name, svg, csv) in report::diagrams(results)? {
        write(&dir.join(format!("{name}.svg")), svg.as_bytes())?;
        write(&dir.join(format!("{name}.csv")), csv.as_bytes())?;
    }
    Ok(())
}

/// Run `config` and write its outputs under `out_dir`. Files are staged in
/// a scratch directory and moved into place only when every run succeeds,
/// so an aborted run leaves no partial outputs behind.
pub fn run_to_dir(
    config: &ExperimentConfig,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<Vec<ResultsFile>> {
    fs::create_dir_all(out_dir).map_err(|e| RunError::io(out_dir, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".fedcal-staging-")
        .tempdir_in(out_dir)
        .map_err(|e| RunError::io(out_dir, e))?;
    let results = run_points(config, opts)?;
    let mut produced: Vec<PathBuf> = Vec::new();
    if config.sweep.is_none() {
        write_result_files(&results[0], staging.path())?;
        for name in fs::read_dir(staging.path()).map_err(|e| RunError::io(staging.path(), e))? {
            let name = name
                .map_err(|e| RunError::io(staging.path(), e))?
                .file_name();
            produced.push(PathBuf::from(name));
        }
    } else {
        for (i, r) in results.iter().enumerate() {
            let name = format!("point-{i:03}");
            write_result_files(r, &staging.path().join(&name))?;
            produced.push(PathBuf::from(name));
        }
        write(
            &staging.path().join("comparison.csv"),
            report::render_csv(&report::comparison_rows(&results)).as_bytes(),
        )?;
        produced.push(PathBuf::from("comparison.csv"));
    }
    produced.sort();
    for name in produced {
        let from = staging.path().join(&name);
        let to = out_dir.join(&name);
        if to.is_dir() {
            fs::remove_dir_all(&to).map_err(|e| RunError::io(&to, e))?;
        }
        fs::rename(&from, &to).map_err(|e| RunError::io(&to, e))?;
    }
    Ok(results)
}
