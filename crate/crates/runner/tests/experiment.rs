use std::fs;
use std::path::Path;

use fedcal_core::calibration::MetricSummary;
use fedcal_core::federation::Execution;
use fedcal_runner::report::{render_csv, rows_of, CsvRow, CSV_HEADER};
use fedcal_runner::{parse_config, run_experiment, run_to_dir, ResultsFile, RunOptions};

const SMALL: &str = r#"{
    "seed": 4,
    "model": {"embed_dim": 8, "class_count": 4},
    "synthetic": {"classes": 4, "dim": 8, "samples_per_class": 20},
    "partition": {"num_clients": 4},
    "federation": {"rounds": 2, "participation": 1.0, "lr": 0.01}
}"#;

fn serial() -> RunOptions {
    RunOptions {
        execution: Execution::Serial,
    }
}

fn summary(v: f64) -> MetricSummary {
    MetricSummary {
        accuracy: v,
        ece: 0.05,
        mce: 0.1,
        ace: 0.0,
        brier: 1.0,
        nll: 0.123456,
    }
}

#[test]
fn csv_is_percent_with_two_decimals() {
    assert_eq!(render_csv(&[]), format!("{CSV_HEADER}\n"));
    let rows = [CsvRow {
        method: "lora_both".into(),
        setting: "a,b".into(),
        metrics: summary(0.9704),
    }];
    assert_eq!(
        render_csv(&rows),
        format!("{CSV_HEADER}\nlora_both,\"a,b\",97.04,5.00,10.00,0.00,100.00,12.35\n")
    );
}

#[test]
fn run_is_deterministic_and_round_trips() {
    let config = parse_config(SMALL).unwrap();
    let a = run_experiment(&config, &serial()).unwrap();
    let b = run_experiment(&config, &serial()).unwrap();
    assert_eq!(
        a.without_timing().to_json().unwrap(),
        b.without_timing().to_json().unwrap()
    );
    assert_eq!(a.rounds.len(), 2);
    assert_eq!(a.drift.global.len(), 3);
    assert_eq!(rows_of(&a).len(), 1);

    let text = a.to_json().unwrap();
    let back = ResultsFile::from_json(&text, Path::new("results.json")).unwrap();
    assert_eq!(back.to_json().unwrap(), text);
    assert_eq!(render_csv(&rows_of(&back)), render_csv(&rows_of(&a)));

    let parallel = run_experiment(&config, &RunOptions::default()).unwrap();
    assert_eq!(parallel.without_timing(), a.without_timing());
}

#[test]
fn post_hoc_and_base_to_new_rows() {
    let mut config = parse_config(SMALL).unwrap();
    config.post_hoc.temperature = Some(2.0);
    let r = run_experiment(&config, &serial()).unwrap();
    let rows = rows_of(&r);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].method, "lora_both+ts");
    assert_eq!(rows[0].metrics.accuracy, rows[1].metrics.accuracy);

    let b2n = parse_config(&SMALL.replace(
        r#""num_clients": 4"#,
        r#""num_clients": 2, "kind": "base_to_new""#,
    ))
    .unwrap();
    let r = run_experiment(&b2n, &serial()).unwrap();
    let settings: Vec<String> = rows_of(&r).into_iter().map(|row| row.setting).collect();
    assert_eq!(
        settings,
        ["base_to_new:base", "base_to_new:new", "base_to_new:hm"]
    );
}

#[test]
fn single_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(SMALL).unwrap();
    run_to_dir(&config, dir.path(), &serial()).unwrap();
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "reliability.csv",
            "reliability.svg",
            "results.json",
            "summary.csv"
        ]
    );
    let svg = fs::read_to_string(dir.path().join("reliability.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn sweep_writes_point_dirs_and_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace(
        r#""seed": 4,"#,
        r#""seed": 4, "sweep": {"alpha": [0.1, 10.0]},"#,
    );
    let config = parse_config(&text).unwrap();
    let results = run_to_dir(&config, dir.path(), &serial()).unwrap();
    assert_eq!(results.len(), 2);
    for p in ["point-000", "point-001"] {
        assert!(dir.path().join(p).join("results.json").is_file());
    }
    let comparison = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let lines: Vec<&str> = comparison.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("lora_both[alpha=0.1]"), "{}", lines[1]);
    assert!(lines[2].starts_with("lora_both[alpha=10]"), "{}", lines[2]);
}

#[test]
fn aborted_run_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(
        r#"{"embeddings": {"samples": "/nonexistent/s.csv", "prototypes": "/nonexistent/p.csv"}}"#,
    )
    .unwrap();
    assert!(run_to_dir(&config, dir.path(), &serial()).is_err());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}
