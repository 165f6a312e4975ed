use fedcal_core::model::HeadKind;
use fedcal_core::partition::PartitionKind;
use fedcal_runner::config::{parse_config, Setting};
use fedcal_runner::error::exit;
use fedcal_runner::RunError;

fn config_error(text: &str) -> String {
    match parse_config(text) {
        Err(e @ RunError::Config(_)) => e.to_string(),
        Err(e @ RunError::Core(_)) => {
            assert_eq!(e.exit_code(), exit::CONFIG);
            e.to_string()
        }
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn empty_object_gives_documented_defaults() {
    let c = parse_config("{}").unwrap();
    assert_eq!(c.model.lora_rank, 2);
    assert_eq!(c.model.lora_dropout, 0.25);
    assert_eq!(c.federation.lr, 1e-3);
    assert_eq!(c.federation.rounds, 50);
    assert_eq!(c.federation.batch_size, 32);
    assert_eq!(c.partition.alpha, 0.5);
    assert_eq!(c.metrics.bins, 15);
    assert_eq!(c.model.logit_scale, 100.0);
    assert_eq!(c.resolved_setting(), Setting::InDistribution);
    assert_eq!(c.method_label(), "lora_both");
}

#[test]
fn errors_name_key_and_constraint() {
    assert!(config_error(r#"{"model": {"lora_rank": 0}}"#).contains("lora_rank"));
    let unknown = config_error(r#"{"model": {"rnak": 2}}"#);
    assert!(unknown.contains("rnak"), "{unknown}");
    assert!(config_error(r#"{"federation": {"participation": 1.5}}"#).contains("participation"));
    assert!(config_error(r#"{"post_hoc": {"temperature": 50}}"#).contains("post_hoc.temperature"));
}

#[test]
fn exactly_one_data_source() {
    let both = r#"{"synthetic": {}, "embeddings": {"samples": "a.csv", "prototypes": "b.csv"}}"#;
    assert!(config_error(both).contains("exactly one data source"));
    let only =
        parse_config(r#"{"embeddings": {"samples": "a.csv", "prototypes": "b.csv"}}"#).unwrap();
    assert!(only.synthetic.is_none());
}

#[test]
fn synthetic_shape_must_match_model() {
    let e = config_error(r#"{"synthetic": {"classes": 10}}"#);
    assert!(e.contains("model.class_count"), "{e}");
    let ok = parse_config(r#"{"synthetic": {"classes": 10}, "model": {"class_count": 10}}"#);
    assert!(ok.is_ok());
    assert!(config_error(r#"{"synthetic": {"noise": 0}}"#).contains("noise"));
}

#[test]
fn setting_follows_partition_kind() {
    let c = parse_config(r#"{"partition": {"kind": "base_to_new"}}"#).unwrap();
    assert_eq!(c.partition.kind, PartitionKind::BaseToNew);
    assert_eq!(c.resolved_setting(), Setting::BaseToNew);
    let e = config_error(r#"{"setting": "domain_generalization"}"#);
    assert!(e.contains("conflicts"), "{e}");
}

#[test]
fn sweep_expands_to_cross_product_with_distinct_seeds() {
    let c = parse_config(
        r#"{"seed": 9, "sweep": {"alpha": [0.1, 1.0], "head_kind": ["prompt", "lora_both"], "rounds": [3]}}"#,
    )
    .unwrap();
    let points = c.expand().unwrap();
    assert_eq!(points.len(), 4);
    let tags: Vec<&str> = points.iter().map(|p| p.tag.as_str()).collect();
    assert_eq!(
        tags,
        [
            "alpha=0.1;rounds=3;head=prompt",
            "alpha=0.1;rounds=3;head=lora_both",
            "alpha=1;rounds=3;head=prompt",
            "alpha=1;rounds=3;head=lora_both",
        ]
    );
    assert_eq!(points[1].config.model.head_kind, HeadKind::LoraBoth);
    assert_eq!(points[2].config.partition.alpha, 1.0);
    let mut seeds: Vec<u64> = points.iter().map(|p| p.config.seed).collect();
    seeds.dedup();
    assert_eq!(seeds.len(), 4);
    assert!(points
        .iter()
        .all(|p| p.config.sweep.is_none() && p.config.federation.rounds == 3));
    assert_eq!(c.expand().unwrap()[3].config.seed, points[3].config.seed);
}

#[test]
fn sweep_values_are_validated() {
    assert!(config_error(r#"{"sweep": {"rank": [2, 0]}}"#).contains("rank"));
    assert!(config_error(r#"{"sweep": {"alpha": []}}"#).contains("alpha"));
}
