//! Tables and figures derived from results files.

use std::fmt::Write;

use fedcal_core::calibration::{reliability_export, MetricSummary, ReliabilityBins};
use fedcal_core::federation::Evaluation;

use crate::error::Result;
use crate::experiment::ResultsFile;

pub const CSV_HEADER: &str = "method,setting,acc,ece,mce,ace,brier,nll";

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub method: String,
    pub setting: String,
    pub metrics: MetricSummary,
}

fn eval_rows(method: &str, setting: &str, eval: &Evaluation, out: &mut Vec<CsvRow>) {
    let mut push = |s: String, m: &Option<MetricSummary>| {
        if let Some(m) = m {
            out.push(CsvRow {
                method: method.to_string(),
                setting: s,
                metrics: *m,
            });
        }
    };
    if eval.harmonic.is_some() {
        push(format!("{setting}:base"), &eval.base_mean);
        push(format!("{setting}:new"), &eval.new_mean);
        push(format!("{setting}:hm"), &eval.harmonic);
    } else {
        push(setting.to_string(), &eval.mean);
    }
}

/// Final-round rows of one run; a `+ts` row set follows when post-hoc
/// temperature scaling was applied.
pub fn rows_of(results: &ResultsFile) -> Vec<CsvRow> {
    let setting = results.setting.name();
    let mut rows = Vec::new();
    eval_rows(
        &results.method,
        setting,
        &results.final_report.evaluation,
        &mut rows,
    );
    if let Some(ph) = &results.final_report.post_hoc {
        eval_rows(
            &format!("{}+ts", results.method),
            setting,
            &ph.evaluation,
            &mut rows,
        );
    }
    rows
}

/// Rows of several runs, methods tagged with their sweep coordinates.
pub fn comparison_rows(results: &[ResultsFile]) -> Vec<CsvRow> {
    results
        .iter()
        .flat_map(|r| {
            let mut rows = rows_of(r);
            if !r.sweep_tag.is_empty() {
                for row in &mut rows {
                    row.method = format!("{}[{}]", row.method, r.sweep_tag);
                }
            }
            rows
        })
        .collect()
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// CSV with every metric in percent, two decimals. No rows gives the
/// header alone.
pub fn render_csv(rows: &[CsvRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            quote(&r.method),
            quote(&r.setting),
            pct(m.accuracy),
            pct(m.ece),
            pct(m.mce),
            pct(m.ace),
            pct(m.brier),
            pct(m.nll)
        );
    }
    out
}

fn pooled<'a>(
    reports: impl Iterator<Item = Option<&'a fedcal_core::calibration::CalibrationReport>>,
) -> Result<Option<ReliabilityBins>> {
    let sets: Vec<&ReliabilityBins> = reports.flatten().map(|r| &r.bins).collect();
    if sets.is_empty() {
        return Ok(None);
    }
    Ok(Some(ReliabilityBins::pool(sets)?))
}

/// `(file stem, svg, csv)` for every reliability diagram of a run.
pub fn diagrams(results: &ResultsFile) -> Result<Vec<(String, String, String)>> {
    let title = format!("{} / {}", results.method, results.setting.name());
    let mut sets: Vec<(String, String, ReliabilityBins)> = vec![(
        "reliability".into(),
        title.clone(),
        results.final_report.pooled_bins.clone(),
    )];
    let eval = &results.final_report.evaluation;
    if eval.harmonic.is_some() {
        if let Some(b) = pooled(eval.per_client.iter().map(|c| c.base.as_ref()))? {
            sets.push(("reliability_base".into(), format!("{title} (base)"), b));
        }
        if let Some(b) = pooled(eval.per_client.iter().map(|c| c.new.as_ref()))? {
            sets.push(("reliability_new".into(), format!("{title} (new)"), b));
        }
    }
    if let Some(ph) = &results.final_report.post_hoc {
        if let Some(b) = pooled(ph.evaluation.per_client.iter().map(|c| c.report.as_ref()))? {
            sets.push((
                "reliability_ts".into(),
                format!("{title} (tau = {:.3})", ph.temperature),
                b,
            ));
        }
    }
    sets.into_iter()
        .map(|(name, title, bins)| {
            let d = reliability_export(&bins, &title)?;
            let csv = d.csv();
            Ok((name, d.svg, csv))
        })
        .collect()
}
