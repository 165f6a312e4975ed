//! Ingestion of precomputed embeddings.
//!
//! Samples: CSV with header `label,domain,f0,...,f{d-1}`, or the binary
//! layout `"FEMB" | u32 version=1 | u32 d | u64 n | n × (u32 label, u32 domain, d × f32)`.
//! Prototypes: CSV with header `f0,...,f{d-1}` (row i = class i), or
//! `"FPRO" | u32 d | u32 C | C × d × f32`. All integers and floats are
//! little-endian. Rows are re-normalized to unit length on load.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fedcal_core::numerics::{l2_normalize, DenseMatrix};
use fedcal_core::partition::{LabeledDataset, Split};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

pub const SAMPLE_MAGIC: &[u8; 4] = b"FEMB";
pub const PROTO_MAGIC: &[u8; 4] = b"FPRO";
pub const SAMPLE_VERSION: u32 = 1;

/// Paths of an embedding data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSource {
    pub samples: PathBuf,
    pub prototypes: PathBuf,
    /// Fraction of each (domain, class) group used for training.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.8
}

/// Raw sample records before splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub dim: usize,
    pub labels: Vec<usize>,
    pub domains: Vec<usize>,
    pub rows: Vec<f32>,
}

fn is_binary(path: &Path, bytes: &[u8]) -> bool {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    matches!(ext.as_str(), "femb" | "fpro" | "bin") || std::str::from_utf8(bytes).is_err()
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(RunError::format(
                self.path,
                Some(self.pos as u64),
                format!(
                    "truncated file: {what} needs {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn f32s(&mut self, n: usize, out: &mut Vec<f32>, what: &str) -> Result<()> {
        let raw = self.take(4 * n, what)?;
        out.extend(
            raw.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))),
        );
        Ok(())
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != want {
            return Err(RunError::format(
                self.path,
                Some(0),
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(want)
                ),
            ));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(RunError::format(
                self.path,
                Some(self.pos as u64),
                format!(
                    "{} trailing bytes after the last record",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        Ok(())
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| RunError::io(path, e))
}

fn parse_samples_binary(path: &Path, bytes: &[u8]) -> Result<SampleTable> {
    let mut cur = Cursor {
        path,
        bytes,
        pos: 0,
    };
    cur.magic(SAMPLE_MAGIC)?;
    let version_at = cur.pos as u64;
    let version = cur.u32("version")?;
    if version != SAMPLE_VERSION {
        return Err(RunError::format(
            path,
            Some(version_at),
            format!("unsupported version {version}, expected {SAMPLE_VERSION}"),
        ));
    }
    let d = cur.u32("dimension")? as usize;
    let n = cur.u64("record count")? as usize;
    if d == 0 {
        return Err(RunError::format(path, Some(8), "dimension is zero"));
    }
    let record = 8 + 4 * d;
    let remaining = bytes.len() - cur.pos;
    if remaining / record < n {
        return Err(RunError::format(
            path,
            Some(cur.pos as u64 + (remaining / record * record) as u64),
            format!("truncated file: header declares {n} records of {record} bytes, {remaining} bytes remain"),
        ));
    }
    let mut table = SampleTable {
        dim: d,
        labels: Vec::with_capacity(n),
        domains: Vec::with_capacity(n),
        rows: Vec::with_capacity(n * d),
    };
    for i in 0..n {
        table
            .labels
            .push(cur.u32(&format!("record {i} label"))? as usize);
        table
            .domains
            .push(cur.u32(&format!("record {i} domain"))? as usize);
        cur.f32s(d, &mut table.rows, &format!("record {i} features"))?;
    }
    cur.finish()?;
    Ok(table)
}

fn csv_error(path: &Path, e: csv::Error) -> RunError {
    let offset = e.position().map(|p| p.byte());
    RunError::format(path, offset, e.to_string())
}

fn parse_samples_csv(path: &Path, bytes: &[u8]) -> Result<SampleTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 3 || cols[0] != "label" || cols[1] != "domain" {
        return Err(RunError::format(
            path,
            Some(0),
            "header must be label,domain,f0,f1,...",
        ));
    }
    for (j, name) in cols[2..].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(RunError::format(
                path,
                Some(0),
                format!("header column {} is {name:?}, expected \"f{j}\"", j + 2),
            ));
        }
    }
    let d = cols.len() - 2;
    let mut table = SampleTable {
        dim: d,
        labels: Vec::new(),
        domains: Vec::new(),
        rows: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let at = rec.position().map(|p| p.byte());
        let bad = |what: String| RunError::format(path, at, what);
        if rec.len() != d + 2 {
            return Err(bad(format!(
                "row has {} fields, expected {}",
                rec.len(),
                d + 2
            )));
        }
        let int = |k: usize| {
            rec[k]
                .trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("field {:?} is not a non-negative integer", &rec[k])))
        };
        table.labels.push(int(0)?);
        table.domains.push(int(1)?);
        for k in 2..d + 2 {
            let v = rec[k]
                .trim()
                .parse::<f32>()
                .map_err(|_| bad(format!("field {:?} is not a number", &rec[k])))?;
            table.rows.push(v);
        }
    }
    Ok(table)
}

/// Read a sample file in either format.
pub fn read_samples(path: &Path) -> Result<SampleTable> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(SAMPLE_MAGIC) || is_binary(path, &bytes) {
        parse_samples_binary(path, &bytes)
    } else {
        parse_samples_csv(path, &bytes)
    }
}

/// Read a prototype file in either format; returns `(C, d, rows)`.
pub fn read_prototypes(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(PROTO_MAGIC) || is_binary(path, &bytes) {
        let mut cur = Cursor {
            path,
            bytes: &bytes,
            pos: 0,
        };
        cur.magic(PROTO_MAGIC)?;
        let d = cur.u32("dimension")? as usize;
        let c = cur.u32("class count")? as usize;
        let mut rows = Vec::with_capacity(c * d);
        for k in 0..c {
            cur.f32s(d, &mut rows, &format!("prototype {k}"))?;
        }
        cur.finish()?;
        return Ok((c, d, rows));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let d = header.len();
    for (j, name) in header.iter().enumerate() {
        if name != format!("f{j}") {
            return Err(RunError::format(
                path,
                Some(0),
                format!("header column {j} is {name:?}, expected \"f{j}\""),
            ));
        }
    }
    let mut rows = Vec::new();
    let mut c = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let at = rec.position().map(|p| p.byte());
        if rec.len() != d {
            return Err(RunError::format(
                path,
                at,
                format!("row has {} fields, expected {d}", rec.len()),
            ));
        }
        for f in rec.iter() {
            rows.push(
                f.trim().parse::<f32>().map_err(|_| {
                    RunError::format(path, at, format!("field {f:?} is not a number"))
                })?,
            );
        }
        c += 1;
    }
    Ok((c, d, rows))
}

fn normalized_rows(path: &Path, what: &str, d: usize, rows: &[f32]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len());
    for (i, r) in rows.chunks_exact(d).enumerate() {
        let v: Vec<f64> = r.iter().map(|&x| x as f64).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(RunError::format(
                path,
                None,
                format!("{what} {i} has a non-finite entry"),
            ));
        }
        let u = l2_normalize(&v)
            .map_err(|_| RunError::format(path, None, format!("{what} {i} is the zero vector")))?;
        out.extend(u);
    }
    Ok(out)
}

/// Load samples and prototypes, check their agreement, and split each
/// (domain, class) group: the first `round(f·n)` samples (in file order)
/// train, the rest test.
pub fn load_embeddings(
    source: &EmbeddingSource,
) -> Result<(LabeledDataset<f64>, DenseMatrix<f64>)> {
    let f = source.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(RunError::Config(format!(
            "embeddings.train_fraction must be in (0, 1), got {f}"
        )));
    }
    let table = read_samples(&source.samples)?;
    let (c, pd, prows) = read_prototypes(&source.prototypes)?;
    if pd != table.dim {
        return Err(RunError::format(
            &source.prototypes,
            None,
            format!(
                "prototype dimension {pd} does not match sample dimension {}",
                table.dim
            ),
        ));
    }
    let inferred = table.labels.iter().map(|&y| y + 1).max().unwrap_or(0);
    if c != inferred {
        return Err(RunError::format(
            &source.prototypes,
            None,
            format!("{c} prototypes but the sample labels imply {inferred} classes"),
        ));
    }
    let n = table.labels.len();
    if n == 0 {
        return Err(RunError::format(&source.samples, None, "no sample records"));
    }
    let embeddings = DenseMatrix::new(
        n,
        table.dim,
        normalized_rows(&source.samples, "sample", table.dim, &table.rows)?,
    )?;
    let prototypes = DenseMatrix::new(
        c,
        pd,
        normalized_rows(&source.prototypes, "prototype", pd, &prows)?,
    )?;

    let mut groups: std::collections::BTreeMap<(usize, usize), Vec<usize>> = Default::default();
    for i in 0..n {
        groups
            .entry((table.domains[i], table.labels[i]))
            .or_default()
            .push(i);
    }
    let mut splits = vec![Split::Test; n];
    for members in groups.values() {
        let k = members.len();
        let n_train = if k == 1 {
            1
        } else {
            ((f * k as f64).round() as usize).clamp(1, k - 1)
        };
        for &i in &members[..n_train] {
            splits[i] = Split::Train;
        }
    }
    let dataset = LabeledDataset::new(embeddings, table.labels, table.domains, splits, c)?;
    Ok((dataset, prototypes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| RunError::io(path, e))?;
    f.write_all(bytes).map_err(|e| RunError::io(path, e))
}

/// Write samples in the binary layout.
pub fn write_samples_binary(
    path: &Path,
    dim: usize,
    labels: &[usize],
    domains: &[usize],
    rows: &[f32],
) -> Result<()> {
    let mut out = Vec::with_capacity(20 + labels.len() * (8 + 4 * dim));
    out.extend_from_slice(SAMPLE_MAGIC);
    out.extend_from_slice(&SAMPLE_VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    for (i, (&y, &dm)) in labels.iter().zip(domains).enumerate() {
        out.extend_from_slice(&(y as u32).to_le_bytes());
        out.extend_from_slice(&(dm as u32).to_le_bytes());
        for &v in &rows[i * dim..(i + 1) * dim] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_file(path, &out)
}

/// Write prototypes in the binary layout.
pub fn write_prototypes_binary(path: &Path, dim: usize, rows: &[f32]) -> Result<()> {
    let c = rows.len() / dim.max(1);
    let mut out = Vec::with_capacity(12 + rows.len() * 4);
    out.extend_from_slice(PROTO_MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    for &v in rows {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &out)
}
