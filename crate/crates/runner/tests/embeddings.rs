use std::fs;
use std::path::Path;

use fedcal_core::partition::Split;
use fedcal_runner::embeddings::{
    load_embeddings, read_prototypes, read_samples, write_prototypes_binary, write_samples_binary,
    EmbeddingSource,
};
use fedcal_runner::error::exit;
use fedcal_runner::RunError;

fn csv_samples(d: usize, rows: &[(usize, usize, f32)]) -> String {
    let mut s = String::from("label,domain");
    for j in 0..d {
        s.push_str(&format!(",f{j}"));
    }
    s.push('\n');
    for &(y, dom, v) in rows {
        s.push_str(&format!("{y},{dom}"));
        for j in 0..d {
            s.push_str(&format!(",{}", v + j as f32));
        }
        s.push('\n');
    }
    s
}

fn csv_protos(d: usize, c: usize) -> String {
    let mut s = (0..d)
        .map(|j| format!("f{j}"))
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    for k in 0..c {
        s.push_str(
            &(0..d)
                .map(|j| if j == k { "1" } else { "0" })
                .collect::<Vec<_>>()
                .join(","),
        );
        s.push('\n');
    }
    s
}

fn source(dir: &Path, samples: &str, protos: &str) -> EmbeddingSource {
    EmbeddingSource {
        samples: dir.join(samples),
        prototypes: dir.join(protos),
        train_fraction: 0.5,
    }
}

fn format_offset(e: RunError) -> Option<u64> {
    assert_eq!(e.exit_code(), exit::FORMAT, "{e}");
    match e {
        RunError::Format { offset, .. } => offset,
        other => panic!("not a format error: {other}"),
    }
}

#[test]
fn csv_counts_and_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("s.csv"),
        csv_samples(64, &[(0, 0, 1.0), (1, 0, 2.0)]),
    )
    .unwrap();
    let t = read_samples(&dir.path().join("s.csv")).unwrap();
    assert_eq!((t.labels.len(), t.dim), (2, 64));

    fs::write(dir.path().join("p.csv"), csv_protos(64, 2)).unwrap();
    let (data, protos) = load_embeddings(&source(dir.path(), "s.csv", "p.csv")).unwrap();
    assert_eq!((data.len(), data.dim(), data.class_count), (2, 64, 2));
    assert_eq!(protos.shape(), (2, 64));
    let norm: f64 = data.embeddings.row(1).iter().map(|v| v * v).sum();
    assert!((norm - 1.0).abs() < 1e-12);
}

#[test]
fn binary_round_trip_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(usize, usize, f32)> = (0..12).map(|i| (i % 3, i % 2, 0.5 + i as f32)).collect();
    fs::write(dir.path().join("s.csv"), csv_samples(4, &rows)).unwrap();
    fs::write(dir.path().join("p.csv"), csv_protos(4, 3)).unwrap();
    let t = read_samples(&dir.path().join("s.csv")).unwrap();
    write_samples_binary(
        &dir.path().join("s.femb"),
        4,
        &t.labels,
        &t.domains,
        &t.rows,
    )
    .unwrap();
    let (c, d, p) = read_prototypes(&dir.path().join("p.csv")).unwrap();
    assert_eq!((c, d), (3, 4));
    write_prototypes_binary(&dir.path().join("p.fpro"), 4, &p).unwrap();

    let a = load_embeddings(&source(dir.path(), "s.csv", "p.csv")).unwrap();
    let b = load_embeddings(&source(dir.path(), "s.femb", "p.fpro")).unwrap();
    assert_eq!(a, b);
    // each (domain, class) group of two splits one train, one test, in file order
    let d = &a.0;
    assert_eq!(d.splits[0], Split::Train);
    let twin = (1..12)
        .find(|&i| d.labels[i] == d.labels[0] && d.domains[i] == d.domains[0])
        .unwrap();
    assert_eq!(d.splits[twin], Split::Test);
}

#[test]
fn binary_errors_carry_byte_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.femb");
    write_samples_binary(&path, 2, &[0, 1], &[0, 0], &[1.0, 0.0, 0.0, 1.0]).unwrap();
    let good = fs::read(&path).unwrap();

    let mut bad = good.clone();
    bad[..4].copy_from_slice(b"FEMX");
    fs::write(&path, &bad).unwrap();
    assert_eq!(format_offset(read_samples(&path).unwrap_err()), Some(0));

    let mut bad = good.clone();
    bad[4] = 2;
    fs::write(&path, &bad).unwrap();
    assert_eq!(format_offset(read_samples(&path).unwrap_err()), Some(4));

    fs::write(&path, &good[..good.len() - 3]).unwrap();
    let offset = format_offset(read_samples(&path).unwrap_err()).unwrap();
    assert!(
        offset >= 20 && offset < good.len() as u64,
        "offset {offset}"
    );

    let mut long = good.clone();
    long.push(0);
    fs::write(&path, &long).unwrap();
    assert_eq!(
        format_offset(read_samples(&path).unwrap_err()),
        Some(good.len() as u64)
    );

    let ppath = dir.path().join("p.fpro");
    fs::write(&ppath, b"FEMB\x02\x00\x00\x00").unwrap();
    assert_eq!(format_offset(read_prototypes(&ppath).unwrap_err()), Some(0));
}

#[test]
fn disagreements_between_files_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("s.csv"),
        csv_samples(4, &[(0, 0, 1.0), (2, 0, 1.0)]),
    )
    .unwrap();
    fs::write(dir.path().join("p2.csv"), csv_protos(4, 2)).unwrap();
    let e = load_embeddings(&source(dir.path(), "s.csv", "p2.csv"))
        .unwrap_err()
        .to_string();
    assert!(e.contains('2') && e.contains('3'), "{e}");

    fs::write(dir.path().join("p5.csv"), csv_protos(5, 3)).unwrap();
    let e = load_embeddings(&source(dir.path(), "s.csv", "p5.csv")).unwrap_err();
    assert!(e.to_string().contains("dimension"), "{e}");
    assert_eq!(e.exit_code(), exit::FORMAT);

    fs::write(dir.path().join("h.csv"), "label,dom,f0\n0,0,1\n").unwrap();
    assert_eq!(
        format_offset(read_samples(&dir.path().join("h.csv")).unwrap_err()),
        Some(0)
    );

    let missing = load_embeddings(&source(dir.path(), "nope.csv", "p2.csv")).unwrap_err();
    assert_eq!(missing.exit_code(), exit::IO);
}
