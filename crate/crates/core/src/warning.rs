//! Risk grading, evaluation metrics and warning reports.
//!
//! Fitted models are wrapped behind [`RiskModel`] so the network and the
//! logistic baseline can be scored, combined and evaluated uniformly.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpnet::{NetError, Network};
use crate::dataprep::{Dataset, Label};
use crate::logit::{predict_proba, LogitError, LogitModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WarningError {
    #[error("dimension mismatch: model expects {expected} features, sample has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no models supplied")]
    NoModels,
    #[error("invalid grade thresholds: need 0 < watch ({watch}) < alert ({alert}) < 1")]
    InvalidThresholds { watch: f64, alert: f64 },
    #[error("invalid model weights: {0}")]
    InvalidWeights(String),
    #[error("invalid threshold {0}: must lie in (0, 1)")]
    InvalidThreshold(f64),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("model produced probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("model error: {0}")]
    Model(String),
    #[error("output error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, WarningError>;

impl From<NetError> for WarningError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::DimensionMismatch { expected, found } => {
                WarningError::DimensionMismatch { expected, found }
            }
            other => WarningError::Model(other.to_string()),
        }
    }
}

impl From<LogitError> for WarningError {
    fn from(e: LogitError) -> Self {
        match e {
            LogitError::DimensionMismatch { expected, found } => {
                WarningError::DimensionMismatch { expected, found }
            }
            other => WarningError::Model(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bpnet,
    Logit,
}

/// Anything that maps a normalized feature vector to a default probability.
pub trait RiskModel {
    fn kind(&self) -> ModelKind;
    fn dim(&self) -> usize;
    fn probability(&self, x: &[f64]) -> Result<f64>;
}

impl RiskModel for Network {
    fn kind(&self) -> ModelKind {
        ModelKind::Bpnet
    }

    fn dim(&self) -> usize {
        self.n()
    }

    fn probability(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict(x)?)
    }
}

impl RiskModel for LogitModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Logit
    }

    fn dim(&self) -> usize {
        LogitModel::dim(self)
    }

    fn probability(&self, x: &[f64]) -> Result<f64> {
        Ok(predict_proba(self, x)?)
    }
}

/// Risk band, ordered `Normal < Watch < Alert`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RiskGrade {
    Normal,
    Watch,
    Alert,
}

impl RiskGrade {
    pub fn as_str(self) -> &'static str {
        match self {
            RiskGrade::Normal => "NORMAL",
            RiskGrade::Watch => "WATCH",
            RiskGrade::Alert => "ALERT",
        }
    }
}

impl fmt::Display for RiskGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradeConfig {
    pub watch: f64,
    pub alert: f64,
}

impl Default for GradeConfig {
    fn default() -> Self {
        Self {
            watch: 0.3,
            alert: 0.5,
        }
    }
}

impl GradeConfig {
    pub fn new(watch: f64, alert: f64) -> Result<Self> {
        let g = Self { watch, alert };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.watch && self.watch < self.alert && self.alert < 1.0 {
            Ok(())
        } else {
            Err(WarningError::InvalidThresholds {
                watch: self.watch,
                alert: self.alert,
            })
        }
    }

    pub fn grade(&self, p: f64) -> RiskGrade {
        if p >= self.alert {
            RiskGrade::Alert
        } else if p >= self.watch {
            RiskGrade::Watch
        } else {
            RiskGrade::Normal
        }
    }

    fn rationale(&self, p: f64) -> String {
        match self.grade(p) {
            RiskGrade::Alert => format!("consensus {p:.4} >= alert {}", self.alert),
            RiskGrade::Watch => format!(
                "consensus {p:.4} >= watch {} and < alert {}",
                self.watch, self.alert
            ),
            RiskGrade::Normal => format!("consensus {p:.4} < watch {}", self.watch),
        }
    }
}

/// The models to consult and their consensus weights (equal by default).
#[derive(Debug, Clone, Copy)]
pub struct Models<'a> {
    pub bpnet: Option<&'a Network>,
    pub logit: Option<&'a LogitModel>,
    pub bpnet_weight: f64,
    pub logit_weight: f64,
}

impl<'a> Models<'a> {
    pub fn new(bpnet: Option<&'a Network>, logit: Option<&'a LogitModel>) -> Self {
        Self {
            bpnet,
            logit,
            bpnet_weight: 1.0,
            logit_weight: 1.0,
        }
    }

    pub fn with_weights(mut self, bpnet_weight: f64, logit_weight: f64) -> Self {
        self.bpnet_weight = bpnet_weight;
        self.logit_weight = logit_weight;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.bpnet.is_none() && self.logit.is_none() {
            return Err(WarningError::NoModels);
        }
        let mut total = 0.0;
        for (present, w) in [
            (self.bpnet.is_some(), self.bpnet_weight),
            (self.logit.is_some(), self.logit_weight),
        ] {
            if present {
                if !(w.is_finite() && w >= 0.0) {
                    return Err(WarningError::InvalidWeights(format!(
                        "weight {w} must be non-negative"
                    )));
                }
                total += w;
            }
        }
        if total <= 0.0 {
            return Err(WarningError::InvalidWeights(
                "weights of supplied models sum to zero".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningReport {
    pub id: String,
    pub p_bpnet: Option<f64>,
    pub p_logit: Option<f64>,
    pub consensus: f64,
    pub grade: RiskGrade,
    pub rationale: String,
}

fn checked_probability(model: &dyn RiskModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(WarningError::DimensionMismatch {
            expected: model.dim(),
            found: x.len(),
        });
    }
    let p = model.probability(x)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(WarningError::BadProbability(p));
    }
    Ok(p)
}

/// Scores one normalized sample with every supplied model and grades the
/// weighted mean of their probabilities.
pub fn assess(id: &str, x: &[f64], models: &Models, grades: &GradeConfig) -> Result<WarningReport> {
    models.validate()?;
    grades.validate()?;
    let p_bpnet = models
        .bpnet
        .map(|m| checked_probability(m, x))
        .transpose()?;
    let p_logit = models
        .logit
        .map(|m| checked_probability(m, x))
        .transpose()?;

    let parts: Vec<(f64, f64)> = [
        p_bpnet.map(|p| (p, models.bpnet_weight)),
        p_logit.map(|p| (p, models.logit_weight)),
    ]
    .into_iter()
    .flatten()
    .collect();
    let consensus = if let [(p, _)] = parts[..] {
        p
    } else {
        let total: f64 = parts.iter().map(|(_, w)| w).sum();
        (parts.iter().map(|(p, w)| p * w).sum::<f64>() / total).clamp(0.0, 1.0)
    };

    let mut rationale = Vec::new();
    if let Some(p) = p_bpnet {
        rationale.push(format!("bpnet {p:.4}"));
    }
    if let Some(p) = p_logit {
        rationale.push(format!("logit {p:.4}"));
    }
    rationale.push(grades.rationale(consensus));

    Ok(WarningReport {
        id: id.to_string(),
        p_bpnet,
        p_logit,
        consensus,
        grade: grades.grade(consensus),
        rationale: rationale.join("; "),
    })
}

/// One report per sample, sorted by consensus descending with ties broken
/// by id ascending.
pub fn warn_batch<'s, I>(
    samples: I,
    models: &Models,
    grades: &GradeConfig,
) -> Result<Vec<WarningReport>>
where
    I: IntoIterator<Item = (&'s str, &'s [f64])>,
{
    let mut reports = samples
        .into_iter()
        .map(|(id, x)| assess(id, x, models, grades))
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| {
        b.consensus
            .partial_cmp(&a.consensus)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(reports)
}

/// [`warn_batch`] over a labelled dataset; labels are ignored.
pub fn warn_dataset(
    data: &Dataset,
    models: &Models,
    grades: &GradeConfig,
) -> Result<Vec<WarningReport>> {
    warn_batch(
        data.samples()
            .iter()
            .map(|s| (s.id.as_str(), s.features.as_slice())),
        models,
        grades,
    )
}

fn fmt_prob(p: Option<f64>) -> String {
    p.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV with columns `id,p_bpnet,p_logit,consensus,grade`. A model that was
/// not supplied leaves its column empty.
pub fn write_reports_csv<W: Write>(reports: &[WarningReport], writer: W) -> Result<()> {
    let io = |e: csv::Error| WarningError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "p_bpnet", "p_logit", "consensus", "grade"])
        .map_err(io)?;
    for r in reports {
        w.write_record([
            r.id.clone(),
            fmt_prob(r.p_bpnet),
            fmt_prob(r.p_logit),
            r.consensus.to_string(),
            r.grade.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| WarningError::Io(e.to_string()))
}

pub fn reports_to_json(reports: &[WarningReport]) -> String {
    serde_json::to_string_pretty(reports).expect("report serialisation is infallible")
}

/// Confusion counts with ST as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    /// FP / (FP + TN); 0 when the test set has no NORMAL samples.
    pub type_i_error: f64,
    /// FN / (FN + TP); 0 when the test set has no ST samples.
    pub type_ii_error: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalMetrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        Self {
            tp,
            fp,
            tn,
            fn_,
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            type_i_error: ratio(fp, fp + tn),
            type_ii_error: ratio(fn_, fn_ + tp),
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn correct(&self) -> usize {
        self.tp + self.tn
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialisation is infallible")
    }
}

/// Classifies each test sample as ST when its probability is at least
/// `threshold` and tallies the confusion matrix.
pub fn evaluate(test: &Dataset, model: &dyn RiskModel, threshold: f64) -> Result<EvalMetrics> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(WarningError::InvalidThreshold(threshold));
    }
    if test.is_empty() {
        return Err(WarningError::EmptyTestSet);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for s in test.samples() {
        let predicted_st = checked_probability(model, &s.features)? >= threshold;
        match (predicted_st, s.label) {
            (true, Label::St) => tp += 1,
            (true, Label::Normal) => fp += 1,
            (false, Label::Normal) => tn += 1,
            (false, Label::St) => fn_ += 1,
        }
    }
    Ok(EvalMetrics::from_counts(tp, fp, tn, fn_))
}
