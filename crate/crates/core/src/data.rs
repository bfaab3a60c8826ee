//! Datasets: synthetic ordinal Gaussian classes, label remapping, splitting,
//! and the plain-text logits/labels interchange formats.
//!
//! Logits file: header `l0,l1,...,l{K-1}`, then one comma-separated row of
//! decimal floats per sample. Labels file: header `label`, then one integer
//! per line. Both are UTF-8 with `\n` line endings; floats are written in
//! shortest round-trip form so a write/read cycle is value-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{LabelVector, LogitBatch, Matrix};
use crate::rng::RngSeed;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: LabelVector,
}

impl Dataset {
    pub fn new(features: Matrix, labels: LabelVector) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &LabelVector {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.labels.k()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: self.labels.select(indices),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k()];
        for y in self.labels.iter() {
            counts[y] += 1;
        }
        counts
    }

    /// Keep the leading rows, hand back the trailing `fraction` as a second set.
    pub fn split_tail(&self, fraction: f64) -> Result<(Dataset, Dataset)> {
        let n = self.len();
        let tail = check_fraction(fraction, n)?;
        let head: Vec<usize> = (0..n - tail).collect();
        let rest: Vec<usize> = (n - tail..n).collect();
        Ok((self.subset(&head), self.subset(&rest)))
    }
}

/// `round(fraction·n)`, which must leave both parts non-empty.
fn check_fraction(fraction: f64, n: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let part = (fraction * n as f64).round() as usize;
    if part == 0 || part >= n {
        return Err(Error::Parameter(format!(
            "fraction {fraction} of {n} samples leaves an empty part"
        )));
    }
    Ok(part)
}

/// Seeded shuffle, then the first `round(fraction·N)` rows go to the first part.
pub fn split(data: &Dataset, fraction: f64, seed: RngSeed) -> Result<(Dataset, Dataset)> {
    let first = check_fraction(fraction, data.len())?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed.rng());
    Ok((data.subset(&order[..first]), data.subset(&order[first..])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub k: usize,
    pub d: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Distance between adjacent class means along the ordinal axis.
    pub separation: f64,
    pub seed: RngSeed,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            k: 4,
            d: 8,
            n_train: 613,
            n_test: 315,
            separation: 1.5,
            seed: RngSeed(42),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Parameter(format!("need at least 2 classes, got {}", self.k)));
        }
        if self.d < 1 {
            return Err(Error::Parameter("feature dimension must be at least 1".into()));
        }
        if self.n_train < self.k || self.n_test < self.k {
            return Err(Error::Parameter(format!(
                "each split needs at least k = {} samples (got {} / {})",
                self.k, self.n_train, self.n_test
            )));
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return Err(Error::Parameter(format!(
                "separation must be > 0, got {}",
                self.separation
            )));
        }
        Ok(())
    }
}

/// Ordinal Gaussian classes: class `c` is `N(c·separation·e₀, I_d)`.
///
/// Means lie on one axis, so adjacent classes overlap more than distant
/// ones. Labels cycle `0, 1, ..., K-1` before shuffling, which keeps every
/// split balanced to within one sample.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(Dataset, Dataset)> {
    config.validate()?;
    let train = gaussian_split(config, config.n_train, config.seed.derive(1));
    let test = gaussian_split(config, config.n_test, config.seed.derive(2));
    Ok((train, test))
}

fn gaussian_split(config: &SyntheticConfig, n: usize, seed: RngSeed) -> Dataset {
    let mut rng = seed.rng();
    let mut labels: Vec<usize> = (0..n).map(|i| i % config.k).collect();
    labels.shuffle(&mut rng);
    let mut features = Matrix::zeros(n, config.d);
    for (i, &y) in labels.iter().enumerate() {
        let row = features.row_mut(i);
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        row[0] += y as f64 * config.separation;
    }
    Dataset {
        features,
        labels: LabelVector::new(labels, config.k).expect("labels are generated in range"),
    }
}

/// Ordered class names; a name's position is its integer label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::Parameter("a label map needs at least 2 classes".into()));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::Parameter(format!("duplicate class name {a:?}")));
            }
        }
        Ok(Self { names })
    }

    /// Classes ordered by increasing tumour coverage.
    pub fn tumor_gradation() -> Self {
        Self::new(["normal", "squamous", "adenocarcinoma", "large-cell"]).expect("static names are unique")
    }

    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name_of(&self, label: usize) -> Option<&str> {
        self.names.get(label).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

pub fn remap_labels<S: AsRef<str>>(raw_labels: &[S], map: &LabelMap) -> Result<LabelVector> {
    let mut unknown: Vec<&str> = Vec::new();
    let mut labels = Vec::with_capacity(raw_labels.len());
    for name in raw_labels {
        match map.index_of(name.as_ref()) {
            Some(i) => labels.push(i),
            None => {
                if !unknown.contains(&name.as_ref()) {
                    unknown.push(name.as_ref());
                }
            }
        }
    }
    if !unknown.is_empty() {
        return Err(Error::Input(format!(
            "unknown class name(s): {}",
            unknown.iter().map(|n| format!("{n:?}")).collect::<Vec<_>>().join(", ")
        )));
    }
    LabelVector::new(labels, map.k())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-empty lines with their 1-based line numbers; a trailing `\r` is dropped.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_logits(path: &Path, text: &str) -> Result<Matrix> {
    let parse_err = |line, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let shape_err = |line, message: String| Error::Shape {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = numbered_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| shape_err(1, "file is empty".into()))?;
    let k = header.split(',').count();
    for (j, col) in header.split(',').enumerate() {
        if col.trim() != format!("l{j}") {
            return Err(parse_err(
                hline,
                format!("expected header column l{j}, found {:?}", col.trim()),
            ));
        }
    }
    if k < 2 {
        return Err(shape_err(hline, format!("need at least 2 logit columns, found {k}")));
    }

    let mut data = Vec::new();
    let mut rows = 0;
    for (line, content) in lines {
        let fields: Vec<&str> = content.split(',').collect();
        if fields.len() != k {
            return Err(shape_err(line, format!("expected {k} values, found {}", fields.len())));
        }
        for field in fields {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("cannot parse {:?} as a number", field.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value {:?}", field.trim())));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(shape_err(hline, "no data rows".into()));
    }
    Matrix::from_vec(rows, k, data)
}

/// Raw integer labels with their line numbers.
fn parse_labels(path: &Path, text: &str) -> Result<Vec<(usize, i64)>> {
    let mut lines = numbered_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| Error::Shape {
        path: path.to_path_buf(),
        line: 1,
        message: "file is empty".into(),
    })?;
    if header.trim() != "label" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: hline,
            message: format!("expected header \"label\", found {:?}", header.trim()),
        });
    }
    lines
        .map(|(line, content)| {
            content
                .trim()
                .parse::<i64>()
                .map(|v| (line, v))
                .map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("cannot parse {:?} as an integer label", content.trim()),
                })
        })
        .collect()
}

/// Load a logits file and its labels file, validating shapes and ranges.
pub fn load_logits_labels(logits_path: &Path, labels_path: &Path) -> Result<(LogitBatch, LabelVector)> {
    let values = parse_logits(logits_path, &read_text(logits_path)?)?;
    let raw = parse_labels(labels_path, &read_text(labels_path)?)?;
    let k = values.cols();
    if raw.len() != values.rows() {
        let line = raw.last().map_or(1, |&(l, _)| l);
        return Err(Error::Shape {
            path: labels_path.to_path_buf(),
            line,
            message: format!("{} labels for {} logit rows", raw.len(), values.rows()),
        });
    }
    let mut labels = Vec::with_capacity(raw.len());
    for (line, y) in raw {
        if y < 0 || y as u64 >= k as u64 {
            return Err(Error::LabelRange {
                path: labels_path.to_path_buf(),
                line,
                label: y,
                k,
            });
        }
        labels.push(y as usize);
    }
    Ok((LogitBatch::new(values)?, LabelVector::new(labels, k)?))
}

pub fn format_logits(logits: &LogitBatch) -> String {
    let k = logits.k();
    let mut out = (0..k).map(|j| format!("l{j}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for i in 0..logits.n() {
        for (j, v) in logits.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // Display for f64 is the shortest string that parses back to the same value.
            write!(out, "{v}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}

pub fn format_labels(labels: &LabelVector) -> String {
    let mut out = String::from("label\n");
    for y in labels.iter() {
        writeln!(out, "{y}").expect("writing to a String cannot fail");
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_logits(path: &Path, logits: &LogitBatch) -> Result<()> {
    write_text(path, &format_logits(logits))
}

pub fn write_labels(path: &Path, labels: &LabelVector) -> Result<()> {
    write_text(path, &format_labels(labels))
}
