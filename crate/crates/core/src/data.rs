//! Binary tabular datasets: synthetic generation, CSV loading, the global
//! train/test/validation split and even partitioning across data owners.
//!
//! CSV schema: UTF-8, comma separated, one header row. Feature columns may
//! have any name; the final column must be named `label`. Every cell is `0`
//! or `1` and none may be missing.

use std::io::Write;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};
use crate::model::sigmoid;
use crate::rng::{Purpose, StreamId};

/// Row-major binary feature matrix with binary labels.
///
/// `row_ids` records each row's index in the dataset it was originally
/// generated or loaded as, so shards can be traced back to their source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    features: Vec<u8>,
    labels: Vec<u8>,
    row_ids: Vec<usize>,
    n_features: usize,
}

impl Dataset {
    pub fn new(features: Vec<u8>, labels: Vec<u8>, n_features: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::input("a dataset needs at least one row"));
        }
        if n_features == 0 {
            return Err(Error::input("a dataset needs at least one feature"));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::input(format!(
                "{} feature cells do not form {} rows of {n_features}",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().chain(&labels).any(|&v| v > 1) {
            return Err(Error::input("features and labels must be 0 or 1"));
        }
        let row_ids = (0..labels.len()).collect();
        Ok(Self {
            features,
            labels,
            row_ids,
            n_features,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        let mut row_ids = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            row_ids.push(self.row_ids[i]);
        }
        Dataset {
            features,
            labels,
            row_ids,
            n_features: self.n_features,
        }
    }

    /// Writes the dataset using the CSV schema, with features named `f0..`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(out);
        let mut header: Vec<String> = (0..self.n_features).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::with_capacity(2 * self.n_features + 2);
        for (row, y) in self.rows().zip(&self.labels) {
            line.clear();
            for &x in row {
                line.push(if x == 1 { '1' } else { '0' });
                line.push(',');
            }
            line.push(if *y == 1 { '1' } else { '0' });
            writeln!(w, "{line}")?;
        }
        w.flush()
    }
}

/// Parameters of the planted sparse logistic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub prevalence: f64,
    pub feature_density: f64,
    pub signal_features: usize,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.n_features == 0 {
            return Err(Error::config("sample and feature counts must be positive"));
        }
        for (name, v) in [
            ("prevalence", self.prevalence),
            ("feature density", self.feature_density),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.signal_features == 0 || self.signal_features > self.n_features {
            return Err(Error::config(format!(
                "signal features must be in 1..={}, got {}",
                self.n_features, self.signal_features
            )));
        }
        Ok(())
    }
}

/// Independent Bernoulli features; labels from a sparse logistic model with
/// `±1` coefficients on randomly chosen coordinates. The intercept is found
/// by bisection so the mean label probability over the drawn rows equals the
/// target prevalence.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = StreamId::root(seed, Purpose::Generate).rng();
    let (n, d) = (spec.n_samples, spec.n_features);

    let features: Vec<u8> = (0..n * d)
        .map(|_| u8::from(rng.gen_bool(spec.feature_density)))
        .collect();
    let signal = index::sample(&mut rng, d, spec.signal_features).into_vec();
    let coefs: Vec<f64> = signal
        .iter()
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();

    let scores: Vec<f64> = features
        .chunks_exact(d)
        .map(|row| {
            signal
                .iter()
                .zip(&coefs)
                .filter(|(&j, _)| row[j] == 1)
                .map(|(_, c)| c)
                .sum()
        })
        .collect();

    let mean_prob = |b: f64| scores.iter().map(|s| sigmoid(s + b)).sum::<f64>() / n as f64;
    let bound = spec.signal_features as f64 + 40.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_prob(mid) < spec.prevalence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let intercept = 0.5 * (lo + hi);

    let labels = scores
        .iter()
        .map(|s| u8::from(rng.gen::<f64>() < sigmoid(s + intercept)))
        .collect();
    Dataset::new(features, labels, d)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| ParseError::Open {
        path: path.to_owned(),
        source,
    })?;
    read_csv(file)
}

/// Parses the CSV schema from any reader. Row numbers in errors count the
/// header as row 1.
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(ParseError::MissingHeader.into()),
        Some(r) => r.map_err(|e| malformed(1, e))?,
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_owned()).collect();
    match names.last().map(String::as_str) {
        Some("label") if names.len() >= 2 => {}
        other => {
            return Err(ParseError::BadHeader {
                found: other.unwrap_or_default().to_owned(),
            }
            .into())
        }
    }
    let n_features = names.len() - 1;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (k, record) in records.enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| malformed(row, e))?;
        if record.len() != names.len() {
            return Err(ParseError::ColumnCount {
                row,
                expected: names.len(),
                found: record.len(),
            }
            .into());
        }
        for (col, cell) in record.iter().enumerate() {
            let value = match cell.trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(ParseError::NonBinary {
                        row,
                        column: col + 1,
                        name: names[col].clone(),
                        value: other.to_owned(),
                    }
                    .into())
                }
            };
            if col < n_features {
                features.push(value);
            } else {
                labels.push(value);
            }
        }
    }
    if labels.is_empty() {
        return Err(ParseError::NoRows.into());
    }
    Dataset::new(features, labels, n_features)
}

fn malformed(row: usize, e: csv::Error) -> Error {
    ParseError::MalformedRow {
        row,
        message: e.to_string(),
    }
    .into()
}

/// Train/test/validation fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub test: f64,
    pub valid: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            test: 0.2,
            valid: 0.1,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.test, self.valid];
        if parts.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::config("split fractions must each lie in (0, 1)"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("split fractions must sum to 1"));
        }
        Ok(())
    }
}

/// The three stage datasets produced by [`split_global`].
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub valid: Dataset,
}

/// Shuffles rows, then takes `floor(train * N)` rows for training,
/// `floor(test * N)` for testing and the remainder for validation.
pub fn split_global(dataset: &Dataset, spec: &SplitSpec, seed: u64) -> Result<Split> {
    spec.validate()?;
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut StreamId::root(seed, Purpose::Split).rng());
    let n_train = floor_share(n, spec.train);
    let n_test = floor_share(n, spec.test);
    Ok(Split {
        train: dataset.select(&order[..n_train]),
        test: dataset.select(&order[n_train..n_train + n_test]),
        valid: dataset.select(&order[n_train + n_test..]),
    })
}

// Nudged so that exact products like 0.7 * 30760 are not lost to rounding.
fn floor_share(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction) + 1e-9).floor() as usize
}

/// Shuffles and deals rows into `n` silos. The first `N mod n` silos get
/// `ceil(N/n)` rows and the rest `floor(N/n)`.
pub fn partition_even(dataset: &Dataset, n: usize, seed: u64) -> Result<Vec<Dataset>> {
    if n == 0 {
        return Err(Error::input("cannot partition into zero silos"));
    }
    let total = dataset.len();
    if total < n {
        return Err(Error::input(format!(
            "cannot share {total} rows among {n} owners"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut StreamId::root(seed, Purpose::Partition).rng());
    let (base, extra) = (total / n, total % n);
    let mut start = 0;
    Ok((0..n)
        .map(|k| {
            let size = base + usize::from(k < extra);
            let silo = dataset.select(&order[start..start + size]);
            start += size;
            silo
        })
        .collect())
}

/// Training, test and validation shards of `n` data owners.
#[derive(Debug, Clone)]
pub struct SiloSet {
    pub train: Vec<Dataset>,
    pub test: Vec<Dataset>,
    pub valid: Vec<Dataset>,
}

impl SiloSet {
    /// Global split followed by an even partition of each stage.
    /// Each stage is dealt with its own derived seed.
    pub fn build(dataset: &Dataset, spec: &SplitSpec, owners: usize, seed: u64) -> Result<Self> {
        let split = split_global(dataset, spec, seed)?;
        Self::from_split(&split, owners, seed)
    }

    pub fn from_split(split: &Split, owners: usize, seed: u64) -> Result<Self> {
        let stage_seed = |k: u64| StreamId::new(seed, 0, Purpose::Partition, k).seed();
        Ok(Self {
            train: partition_even(&split.train, owners, stage_seed(0))?,
            test: partition_even(&split.test, owners, stage_seed(1))?,
            valid: partition_even(&split.valid, owners, stage_seed(2))?,
        })
    }

    pub fn owners(&self) -> usize {
        self.train.len()
    }

    pub fn n_features(&self) -> usize {
        self.train[0].n_features()
    }
}

/// Concatenates shards back into one dataset (used for the pooled baseline).
pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
    let first = parts
        .first()
        .ok_or_else(|| Error::input("nothing to concatenate"))?;
    let mut out = Dataset {
        features: Vec::new(),
        labels: Vec::new(),
        row_ids: Vec::new(),
        n_features: first.n_features,
    };
    for p in parts {
        if p.n_features != first.n_features {
            return Err(Error::input("shards have different feature counts"));
        }
        out.features.extend_from_slice(&p.features);
        out.labels.extend_from_slice(&p.labels);
        out.row_ids.extend_from_slice(&p.row_ids);
    }
    Ok(out)
}
