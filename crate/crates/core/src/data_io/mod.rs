//! LIBSVM-format datasets held in memory as sparse rows with ±1 labels.
//!
//! File indices are 1-based; everything in memory is 0-based.

pub mod synthetic;

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One sparse feature vector `a_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseRow {
    /// Builds a row, checking that `indices` is strictly increasing and that
    /// both slices have the same length.
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::invalid(format!(
                "row has {} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("row indices must be strictly increasing"));
        }
        Ok(SparseRow { indices, values })
    }

    /// Dense vector converted to a sparse row, dropping exact zeros.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        SparseRow { indices, values }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Largest stored index plus one, or 0 for an empty row.
    pub fn required_dim(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    #[inline]
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * dense[i as usize])
            .sum()
    }

    #[inline]
    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `out += scale * self`
    #[inline]
    pub fn axpy(&self, scale: f64, out: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] += scale * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.axpy(1.0, &mut out);
        out
    }
}

/// Feature rows plus ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<SparseRow>,
    labels: Vec<f64>,
    dim: usize,
    name: String,
}

impl Dataset {
    pub fn new(rows: Vec<SparseRow>, labels: Vec<f64>, dim: usize, name: impl Into<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("dataset must contain at least one example"));
        }
        if rows.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid(format!("label {bad} is not in {{-1, +1}}")));
        }
        let needed = rows.iter().map(SparseRow::required_dim).max().unwrap_or(0);
        if dim < needed {
            return Err(Error::invalid(format!(
                "dimension {dim} is smaller than the largest feature index requires ({needed})"
            )));
        }
        Ok(Dataset {
            rows,
            labels,
            dim,
            name: name.into(),
        })
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row(&self, j: usize) -> &SparseRow {
        &self.rows[j]
    }

    pub fn label(&self, j: usize) -> f64 {
        self.labels[j]
    }

    /// Number of examples `m`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Copy of the dataset with every label negated.
    pub fn with_flipped_labels(&self) -> Dataset {
        Dataset {
            rows: self.rows.clone(),
            labels: self.labels.iter().map(|y| -y).collect(),
            dim: self.dim,
            name: format!("{}~flipped", self.name),
        }
    }

    /// Hex SHA-256 over the canonical text form and the dimension.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.dim.to_le_bytes());
        hasher.update(serialize_libsvm(self).as_bytes());
        hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Knobs for [`parse_libsvm`].
#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Force the feature dimension instead of inferring it from the largest index.
    pub dim: Option<usize>,
    /// When set, labels equal to this value become +1 and every other label
    /// becomes -1. Needed for files that encode classes as e.g. `1`/`2`.
    pub positive_label: Option<f64>,
    pub name: Option<String>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_label(token: &str, line: usize, positive: Option<f64>) -> Result<f64> {
    let raw: f64 = token
        .parse()
        .map_err(|_| parse_err(line, format!("label `{token}` is not numeric")))?;
    if !raw.is_finite() {
        return Err(parse_err(line, format!("label `{token}` is not finite")));
    }
    if let Some(pos) = positive {
        return Ok(if raw == pos { 1.0 } else { -1.0 });
    }
    if raw == 1.0 {
        Ok(1.0)
    } else if raw == 0.0 || raw == -1.0 {
        Ok(-1.0)
    } else {
        Err(parse_err(line, format!("label `{token}` is outside {{-1, 0, +1}}")))
    }
}

fn parse_feature(token: &str, line: usize) -> Result<(u32, f64)> {
    let (idx, val) = token
        .split_once(':')
        .ok_or_else(|| parse_err(line, format!("feature `{token}` is not of the form idx:val")))?;
    let idx: u64 = idx
        .parse()
        .map_err(|_| parse_err(line, format!("feature index `{idx}` is not a positive integer")))?;
    if idx == 0 || idx > u32::MAX as u64 {
        return Err(parse_err(
            line,
            format!("feature index {idx} out of range (indices are 1-based)"),
        ));
    }
    let val: f64 = val
        .parse()
        .map_err(|_| parse_err(line, format!("feature value `{val}` is not numeric")))?;
    if !val.is_finite() {
        return Err(parse_err(line, format!("feature value `{val}` is not finite")));
    }
    Ok(((idx - 1) as u32, val))
}

/// Parses LIBSVM text: one example per line, `label idx:val idx:val ...`.
///
/// Blank lines and `#` comments are skipped. Labels `0`/`-1` map to -1 and
/// `1` maps to +1 unless [`ParseOptions::positive_label`] is given.
pub fn parse_libsvm(text: &str, opts: &ParseOptions) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_dim = 0usize;

    for (lineno, raw_line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = parse_label(tokens.next().unwrap_or_default(), line_no, opts.positive_label)?;

        let mut indices = Vec::new();
        let mut values = Vec::new();
        for token in tokens {
            let (idx, val) = parse_feature(token, line_no)?;
            if let Some(&prev) = indices.last() {
                if idx == prev {
                    return Err(parse_err(line_no, format!("duplicate feature index {}", idx + 1)));
                }
                if idx < prev {
                    return Err(parse_err(
                        line_no,
                        format!("feature index {} follows {} (indices must increase)", idx + 1, prev + 1),
                    ));
                }
            }
            indices.push(idx);
            values.push(val);
        }
        let row = SparseRow { indices, values };
        max_dim = max_dim.max(row.required_dim());
        rows.push(row);
        labels.push(label);
    }

    if rows.is_empty() {
        return Err(parse_err(0, "input contains no examples"));
    }
    let dim = match opts.dim {
        Some(d) if d < max_dim => {
            return Err(Error::invalid(format!(
                "dimension override {d} is smaller than the largest index in the file ({max_dim})"
            )))
        }
        Some(d) => d,
        None => max_dim,
    };
    let name = opts.name.clone().unwrap_or_else(|| "libsvm".to_owned());
    Dataset::new(rows, labels, dim, name)
}

/// Reads a LIBSVM file, gunzipping it first when the name ends in `.gz`.
pub fn load_libsvm(path: impl AsRef<Path>, opts: &ParseOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    let gz = path.extension().is_some_and(|ext| ext == "gz");
    let read = if gz {
        flate2::read::GzDecoder::new(file).read_to_string(&mut text)
    } else {
        std::io::BufReader::new(file).read_to_string(&mut text)
    };
    read.map_err(|e| Error::io(path, e))?;

    let mut opts = opts.clone();
    if opts.name.is_none() {
        let stem = path
            .file_name()
            .and_then(|s| s.to_str())
            .map(|s| s.trim_end_matches(".gz").to_owned());
        opts.name = stem;
    }
    parse_libsvm(&text, &opts)
}

/// Canonical LIBSVM text: `+1`/`-1` labels, 1-based indices, shortest
/// round-trip decimal values, one trailing newline per row.
pub fn serialize_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for (row, &y) in ds.rows.iter().zip(&ds.labels) {
        out.push_str(if y > 0.0 { "+1" } else { "-1" });
        for (&i, &v) in row.indices.iter().zip(&row.values) {
            let _ = write!(out, " {}:{}", i + 1, v);
        }
        out.push('\n');
    }
    out
}

/// `count` rows drawn without replacement, kept in their original order.
/// The dimension of the source dataset is preserved.
pub fn subsample(ds: &Dataset, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 || count > ds.len() {
        return Err(Error::invalid(format!(
            "subsample size {count} must lie in [1, {}]",
            ds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, ds.len(), count).into_vec();
    picked.sort_unstable();
    Ok(Dataset {
        rows: picked.iter().map(|&j| ds.rows[j].clone()).collect(),
        labels: picked.iter().map(|&j| ds.labels[j]).collect(),
        dim: ds.dim,
        name: format!("{}[{count}@{seed}]", ds.name),
    })
}
