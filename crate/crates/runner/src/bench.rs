//! Directional trend suite on the default synthetic benchmark: head
//! ordering, the effect of DCA on prompt tuning, and stability across
//! Dirichlet concentrations.

use std::fmt::Write;

use fedcal_core::calibration::MetricSummary;
use fedcal_core::losses::{AuxKind, LossSpec};
use fedcal_core::model::HeadKind;
use fedcal_core::numerics::RngStream;
use fedcal_core::partition::PartitionKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Result, RunError};
use crate::experiment::{run_experiment, RunOptions};

const BENCH_TAG: u64 = 0x4245_4e43;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    LoraBoth,
    Prompt,
    PromptDca,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::LoraBoth, Arm::Prompt, Arm::PromptDca];

    pub fn name(self) -> &'static str {
        match self {
            Arm::LoraBoth => "lora_both",
            Arm::Prompt => "prompt",
            Arm::PromptDca => "prompt+dca",
        }
    }

    fn apply(self, c: &mut ExperimentConfig) {
        let (head, loss) = match self {
            Arm::LoraBoth => (HeadKind::LoraBoth, LossSpec::ce()),
            Arm::Prompt => (HeadKind::Prompt, LossSpec::ce()),
            Arm::PromptDca => (HeadKind::Prompt, LossSpec::with_aux(AuxKind::Dca, 1.0)),
        };
        c.model.head_kind = head;
        c.loss = loss;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Template every run starts from; head, loss, α and seed are overridden.
    pub base: ExperimentConfig,
    pub seeds: usize,
    /// Concentration of the head-ordering and DCA comparisons.
    pub alpha: f64,
    /// Concentrations of the stability sweep.
    pub alphas: Vec<f64>,
}

/// "synth-20" with 10 fully participating clients for 30 rounds.
pub fn bench_template() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.partition.kind = PartitionKind::Dirichlet;
    c.partition.num_clients = 10;
    c.partition.alpha = 0.5;
    c.federation.rounds = 30;
    c.federation.participation = 1.0;
    c
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            base: bench_template(),
            seeds: 5,
            alpha: 0.5,
            alphas: vec![0.1, 0.5, 1.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: Arm,
    pub alpha: f64,
    pub seed: u64,
    pub metrics: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub id: String,
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: Vec<ArmResult>,
    pub checks: Vec<TrendCheck>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Seed-averaged metrics of one arm at one α.
    pub fn mean(&self, arm: Arm, alpha: f64) -> Option<MetricSummary> {
        MetricSummary::mean(
            self.runs
                .iter()
                .filter(|r| r.arm == arm && r.alpha == alpha)
                .map(|r| &r.metrics),
        )
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("arm,alpha,seed,acc,ece,mce,ace,brier,nll\n");
        for r in &self.runs {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{},{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}",
                r.arm.name(),
                r.alpha,
                r.seed,
                100.0 * m.accuracy,
                100.0 * m.ece,
                100.0 * m.mce,
                100.0 * m.ace,
                100.0 * m.brier,
                100.0 * m.nll
            );
        }
        out
    }

    pub fn summary_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}: {} ({})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.id,
                    c.description,
                    c.detail
                )
            })
            .collect()
    }
}

fn jobs(cfg: &BenchConfig) -> Vec<(Arm, f64, u64)> {
    let mut out = Vec::new();
    let mut alphas = cfg.alphas.clone();
    if !alphas.contains(&cfg.alpha) {
        alphas.push(cfg.alpha);
    }
    for &alpha in &alphas {
        let arms: &[Arm] = if alpha == cfg.alpha {
            &Arm::ALL
        } else {
            &[Arm::LoraBoth, Arm::Prompt]
        };
        for &arm in arms {
            for s in 0..cfg.seeds as u64 {
                out.push((
                    arm,
                    alpha,
                    RngStream::path_id(&[BENCH_TAG, cfg.base.seed, s]),
                ));
            }
        }
    }
    out
}

fn ece_range(report: &BenchReport, arm: Arm, alphas: &[f64]) -> Option<(f64, f64)> {
    let eces: Vec<f64> = alphas
        .iter()
        .map(|&a| report.mean(arm, a).map(|m| m.ece))
        .collect::<Option<_>>()?;
    let lo = eces.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eces.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((lo, hi))
}

fn checks(report: &BenchReport, cfg: &BenchConfig) -> Result<Vec<TrendCheck>> {
    let missing = || RunError::Numeric("bench arm produced no evaluable clients".into());
    let lora = report.mean(Arm::LoraBoth, cfg.alpha).ok_or_else(missing)?;
    let prompt = report.mean(Arm::Prompt, cfg.alpha).ok_or_else(missing)?;
    let dca = report.mean(Arm::PromptDca, cfg.alpha).ok_or_else(missing)?;
    let (l_lo, l_hi) = ece_range(report, Arm::LoraBoth, &cfg.alphas).ok_or_else(missing)?;
    let (p_lo, p_hi) = ece_range(report, Arm::Prompt, &cfg.alphas).ok_or_else(missing)?;
    Ok(vec![
        TrendCheck {
            id: "9a".into(),
            description: "lora_both has lower ECE and higher accuracy than prompt".into(),
            passed: lora.ece < prompt.ece && lora.accuracy > prompt.accuracy,
            detail: format!(
                "ECE {:.2} vs {:.2}, acc {:.2} vs {:.2}",
                100.0 * lora.ece,
                100.0 * prompt.ece,
                100.0 * lora.accuracy,
                100.0 * prompt.accuracy
            ),
        },
        TrendCheck {
            id: "9b".into(),
            description: "DCA reduces the ECE of prompt tuning".into(),
            passed: dca.ece < prompt.ece,
            detail: format!("ECE {:.2} vs {:.2}", 100.0 * dca.ece, 100.0 * prompt.ece),
        },
        TrendCheck {
            id: "9c".into(),
            description: "lora_both ECE varies less across alpha than prompt".into(),
            passed: l_hi - l_lo < p_hi - p_lo,
            detail: format!(
                "ECE range {:.2} vs {:.2}",
                100.0 * (l_hi - l_lo),
                100.0 * (p_hi - p_lo)
            ),
        },
    ])
}

/// Run every (arm, α, seed) cell and evaluate the trend checks.
pub fn run_bench(cfg: &BenchConfig, opts: &RunOptions) -> Result<BenchReport> {
    if cfg.seeds == 0 || cfg.alphas.is_empty() {
        return Err(RunError::Config(
            "bench needs at least one seed and one alpha".into(),
        ));
    }
    let runs = jobs(cfg)
        .into_par_iter()
        .map(|(arm, alpha, seed)| -> Result<ArmResult> {
            let mut c = cfg.base.clone();
            arm.apply(&mut c);
            c.partition.alpha = alpha;
            c.seed = seed;
            c.sweep = None;
            let r = run_experiment(&c, opts)?;
            let metrics = r.final_report.evaluation.mean.ok_or_else(|| {
                RunError::Numeric(format!(
                    "{} at alpha {alpha}: no client has test data",
                    arm.name()
                ))
            })?;
            Ok(ArmResult {
                arm,
                alpha,
                seed,
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = BenchReport {
        runs,
        checks: vec![],
    };
    report.checks = checks(&report, cfg)?;
    Ok(report)
}
