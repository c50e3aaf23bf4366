//! Data processing: labelled CSV ingestion, z-score anomaly purging, min-max
//! normalisation and stratified train/test splitting.
//!
//! A dataset file is UTF-8 CSV with a mandatory header. The first column is
//! `id`, the last is `label` (`ST` or `NORMAL`, any case) and every column in
//! between is a numeric feature.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default z-score cutoff for [`clean`].
pub const DEFAULT_ZSCORE_CUTOFF: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("header: {0}")]
    Header(String),
    #[error("row {row}, column {column}: `{value}` is not a number")]
    ParseCell {
        row: u64,
        column: usize,
        value: String,
    },
    #[error("row {row}, column {column}: value is not finite")]
    NonFinite { row: u64, column: usize },
    #[error("row {row}: unknown label `{value}` (expected ST or NORMAL)")]
    UnknownLabel { row: u64, value: String },
    #[error("row {row}: duplicate id `{id}`")]
    DuplicateId { row: u64, id: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: u64,
        expected: usize,
        found: usize,
    },
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("cannot draw {requested} {label} test samples, only {available} available")]
    InfeasibleSplit {
        label: Label,
        requested: usize,
        available: usize,
    },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Company status. `St` (special treatment) marks financial distress and is
/// the positive class throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "NORMAL")]
    Normal,
    #[serde(rename = "ST")]
    St,
}

impl Label {
    /// Regression target: 1.0 for ST, 0.0 for NORMAL.
    pub fn target(self) -> f64 {
        match self {
            Label::St => 1.0,
            Label::Normal => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::St => "ST",
            Label::Normal => "NORMAL",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ST" => Ok(Label::St),
            "NORMAL" => Ok(Label::Normal),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: Label,
}

/// Labelled feature records with unique ids and a common feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, samples: Vec<Sample>) -> Result<Self> {
        let dim = feature_names.len();
        let mut seen = HashSet::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(DataError::DimensionMismatch {
                    expected: dim,
                    found: s.features.len(),
                });
            }
            if let Some(j) = s.features.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite {
                    row: i as u64 + 2,
                    column: j + 2,
                });
            }
            if !seen.insert(s.id.as_str()) {
                return Err(DataError::DuplicateId {
                    row: i as u64 + 2,
                    id: s.id.clone(),
                });
            }
        }
        Ok(Self {
            feature_names,
            samples,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.label.target()).collect()
    }

    fn with_samples(&self, samples: Vec<Sample>) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            samples,
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| DataError::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        check_unique_headers(&headers)?;
        if headers.first().map(String::as_str) != Some("id") {
            return Err(DataError::Header("first column must be `id`".into()));
        }
        if headers.len() < 2 || headers.last().map(String::as_str) != Some("label") {
            return Err(DataError::Header("last column must be `label`".into()));
        }
        let feature_names = headers[1..headers.len() - 1].to_vec();
        if feature_names.is_empty() {
            return Err(DataError::Header("no feature columns".into()));
        }

        let mut samples = Vec::new();
        let mut seen = HashSet::new();
        for record in rdr.records() {
            let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
            let row = record.position().map_or(0, |p| p.line());
            let (id, features) = parse_row(&record, row, headers.len(), feature_names.len())?;
            let raw_label = record.get(headers.len() - 1).unwrap_or("");
            let label = raw_label.parse().map_err(|_| DataError::UnknownLabel {
                row,
                value: raw_label.to_string(),
            })?;
            if !seen.insert(id.clone()) {
                return Err(DataError::DuplicateId { row, id });
            }
            samples.push(Sample {
                id,
                features,
                label,
            });
        }
        Ok(Self {
            feature_names,
            samples,
        })
    }

    /// Writes the dataset in the format [`Dataset::read_csv`] accepts. Values
    /// use the shortest representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| DataError::Csv(e.to_string());
        let mut header = vec!["id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("label".into());
        wtr.write_record(&header).map_err(err)?;
        for s in &self.samples {
            let mut rec = vec![s.id.clone()];
            rec.extend(s.features.iter().map(f64::to_string));
            rec.push(s.label.to_string());
            wtr.write_record(&rec).map_err(err)?;
        }
        wtr.flush().map_err(|e| DataError::Csv(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(open(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(create(path.as_ref())?)
    }
}

/// Unlabelled records awaiting assessment. The header is `id` followed by the
/// feature columns; a trailing `label` column, if present, is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub feature_names: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl Observations {
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| DataError::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        check_unique_headers(&headers)?;
        if headers.first().map(String::as_str) != Some("id") {
            return Err(DataError::Header("first column must be `id`".into()));
        }
        let has_label = headers.last().map(String::as_str) == Some("label");
        let end = if has_label {
            headers.len() - 1
        } else {
            headers.len()
        };
        let feature_names = headers[1..end].to_vec();
        if feature_names.is_empty() {
            return Err(DataError::Header("no feature columns".into()));
        }
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for record in rdr.records() {
            let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
            let row = record.position().map_or(0, |p| p.line());
            let (id, features) = parse_row(&record, row, headers.len(), feature_names.len())?;
            if !seen.insert(id.clone()) {
                return Err(DataError::DuplicateId { row, id });
            }
            rows.push((id, features));
        }
        Ok(Self {
            feature_names,
            rows,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(open(path.as_ref())?)
    }
}

impl From<&Dataset> for Observations {
    fn from(data: &Dataset) -> Self {
        Self {
            feature_names: data.feature_names.clone(),
            rows: data
                .samples
                .iter()
                .map(|s| (s.id.clone(), s.features.clone()))
                .collect(),
        }
    }
}

fn check_unique_headers(headers: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for h in headers {
        if h.is_empty() {
            return Err(DataError::Header("empty column name".into()));
        }
        if !seen.insert(h.as_str()) {
            return Err(DataError::Header(format!("duplicate column `{h}`")));
        }
    }
    Ok(())
}

fn parse_row(
    record: &csv::StringRecord,
    row: u64,
    width: usize,
    dim: usize,
) -> Result<(String, Vec<f64>)> {
    if record.len() != width {
        return Err(DataError::RaggedRow {
            row,
            expected: width,
            found: record.len(),
        });
    }
    let id = record.get(0).unwrap_or("").trim().to_string();
    let features = (0..dim)
        .map(|j| {
            let cell = record.get(j + 1).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| DataError::ParseCell {
                row,
                column: j + 2,
                value: cell.to_string(),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(DataError::NonFinite { row, column: j + 2 })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((id, features))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanPolicy {
    pub zscore_cutoff: f64,
}

impl Default for CleanPolicy {
    fn default() -> Self {
        Self {
            zscore_cutoff: DEFAULT_ZSCORE_CUTOFF,
        }
    }
}

/// A sample flagged as anomalous, with the features that crossed the cutoff.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flagged {
    pub id: String,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CleanReport {
    pub removed: Vec<Flagged>,
    /// Anomalous samples kept because removing them would empty their class.
    pub retained: Vec<Flagged>,
    /// Zero-variance features, for which no z-score exists.
    pub constant_features: Vec<String>,
}

/// Removes samples having any feature more than `zscore_cutoff` population
/// standard deviations from that feature's mean.
///
/// Removal is repeated on the surviving samples until nothing more is
/// flagged, so cleaning an already-clean dataset removes nothing. Outliers
/// whose removal would leave their class empty are kept and reported in
/// [`CleanReport::retained`].
pub fn clean(data: &Dataset, policy: &CleanPolicy) -> Result<(Dataset, CleanReport)> {
    if !(policy.zscore_cutoff.is_finite() && policy.zscore_cutoff > 0.0) {
        return Err(DataError::InvalidPolicy(format!(
            "zscore_cutoff {} must be positive",
            policy.zscore_cutoff
        )));
    }
    if data.len() < 3 {
        return Err(DataError::TooFewSamples {
            needed: 3,
            found: data.len(),
        });
    }
    let dim = data.dim();
    let mut keep: Vec<&Sample> = data.samples.iter().collect();
    let mut report = CleanReport::default();
    let mut constant = BTreeSet::new();

    loop {
        let n = keep.len() as f64;
        let stats: Vec<Option<(f64, f64)>> = (0..dim)
            .map(|j| {
                let mean = keep.iter().map(|s| s.features[j]).sum::<f64>() / n;
                let var = keep
                    .iter()
                    .map(|s| (s.features[j] - mean).powi(2))
                    .sum::<f64>()
                    / n;
                (var > 0.0).then(|| (mean, var.sqrt()))
            })
            .collect();
        for (j, st) in stats.iter().enumerate() {
            if st.is_none() {
                constant.insert(j);
            }
        }

        let offending = |s: &Sample| -> Vec<String> {
            stats
                .iter()
                .enumerate()
                .filter_map(|(j, st)| {
                    let (mean, sd) = (*st)?;
                    ((s.features[j] - mean).abs() / sd > policy.zscore_cutoff)
                        .then(|| data.feature_names[j].clone())
                })
                .collect()
        };
        let flagged: Vec<(usize, Vec<String>)> = keep
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let f = offending(s);
                (!f.is_empty()).then_some((i, f))
            })
            .collect();

        let mut drop = vec![false; keep.len()];
        let mut retained = Vec::new();
        for label in [Label::Normal, Label::St] {
            let class_size = keep.iter().filter(|s| s.label == label).count();
            let class_flagged: Vec<&(usize, Vec<String>)> = flagged
                .iter()
                .filter(|(i, _)| keep[*i].label == label)
                .collect();
            if class_flagged.is_empty() {
                continue;
            }
            if class_flagged.len() == class_size {
                retained.extend(class_flagged.into_iter().cloned());
            } else {
                for (i, _) in class_flagged {
                    drop[*i] = true;
                }
            }
        }
        report.retained = retained
            .into_iter()
            .map(|(i, features)| Flagged {
                id: keep[i].id.clone(),
                features,
            })
            .collect();

        if !drop.iter().any(|d| *d) {
            break;
        }
        for (i, features) in flagged {
            if drop[i] {
                report.removed.push(Flagged {
                    id: keep[i].id.clone(),
                    features,
                });
            }
        }
        let mut idx = 0;
        keep.retain(|_| {
            let k = !drop[idx];
            idx += 1;
            k
        });
    }

    report.constant_features = constant
        .into_iter()
        .map(|j| data.feature_names[j].clone())
        .collect();
    let cleaned = data.with_samples(keep.into_iter().cloned().collect());
    Ok((cleaned, report))
}

/// Per-feature bounds for the linear map `(x - min) / (max - min)` onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Features whose training values were all equal; they normalise to 0.
    pub constant: Vec<bool>,
}

impl NormalizationSpec {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Normalises one feature vector, clipping to `[0, 1]`.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(DataError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .enumerate()
            .map(|(j, v)| {
                if self.constant[j] {
                    0.0
                } else {
                    ((v - self.min[j]) / (self.max[j] - self.min[j])).clamp(0.0, 1.0)
                }
            })
            .collect())
    }
}

/// Records per-feature min/max of the training data.
pub fn fit_normalizer(train: &Dataset) -> Result<NormalizationSpec> {
    if train.is_empty() {
        return Err(DataError::TooFewSamples {
            needed: 1,
            found: 0,
        });
    }
    let dim = train.dim();
    let mut min = vec![f64::INFINITY; dim];
    let mut max = vec![f64::NEG_INFINITY; dim];
    for s in &train.samples {
        for (j, v) in s.features.iter().enumerate() {
            min[j] = min[j].min(*v);
            max[j] = max[j].max(*v);
        }
    }
    let constant = min.iter().zip(&max).map(|(a, b)| a == b).collect();
    Ok(NormalizationSpec { min, max, constant })
}

pub fn apply_normalizer(spec: &NormalizationSpec, data: &Dataset) -> Result<Dataset> {
    if data.dim() != spec.dim() {
        return Err(DataError::DimensionMismatch {
            expected: spec.dim(),
            found: data.dim(),
        });
    }
    let samples = data
        .samples
        .iter()
        .map(|s| {
            Ok(Sample {
                id: s.id.clone(),
                features: spec.transform(&s.features)?,
                label: s.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(data.with_samples(samples))
}

/// Requested number of test samples per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    #[serde(rename = "NORMAL")]
    pub normal: usize,
    #[serde(rename = "ST")]
    pub st: usize,
}

impl ClassCounts {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Normal => self.normal,
            Label::St => self.st,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    /// Exactly this many test samples from each class.
    ByCount { test_counts: ClassCounts },
    /// `round(test_fraction * class_size)` test samples from each class.
    ByFraction { test_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(flatten)]
    pub mode: SplitMode,
    pub seed: u64,
}

impl SplitSpec {
    pub fn by_count(normal: usize, st: usize, seed: u64) -> Self {
        Self {
            mode: SplitMode::ByCount {
                test_counts: ClassCounts { normal, st },
            },
            seed,
        }
    }

    pub fn by_fraction(test_fraction: f64, seed: u64) -> Self {
        Self {
            mode: SplitMode::ByFraction { test_fraction },
            seed,
        }
    }
}

/// Draws the test set class by class, uniformly at random with the split's
/// seed. Both halves keep the input order.
pub fn stratified_split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if let SplitMode::ByFraction { test_fraction } = spec.mode {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(DataError::InvalidSplit(format!(
                "test_fraction {test_fraction} must lie in (0, 1)"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut in_test = vec![false; data.len()];
    for label in [Label::Normal, Label::St] {
        let mut idx: Vec<usize> = (0..data.len())
            .filter(|&i| data.samples[i].label == label)
            .collect();
        let requested = match spec.mode {
            SplitMode::ByCount { test_counts } => test_counts.get(label),
            SplitMode::ByFraction { test_fraction } => {
                (test_fraction * idx.len() as f64).round() as usize
            }
        };
        if requested > idx.len() {
            return Err(DataError::InfeasibleSplit {
                label,
                requested,
                available: idx.len(),
            });
        }
        idx.shuffle(&mut rng);
        for &i in &idx[..requested] {
            in_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = data
        .samples
        .iter()
        .cloned()
        .zip(in_test)
        .partition(|(_, t)| *t);
    Ok((
        data.with_samples(train.into_iter().map(|(s, _)| s).collect()),
        data.with_samples(test.into_iter().map(|(s, _)| s).collect()),
    ))
}
