//! Logistic-regression default probabilities.
//!
//! The linear predictor `eta = c0 + sum(c_i * x_i)` is mapped through the
//! logistic function to the probability that a firm is distressed (label ST,
//! encoded as 1). Coefficients are fitted by full-batch gradient ascent on the
//! Bernoulli log-likelihood, optionally with an L2 penalty on the slopes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataprep::{Dataset, Label};

/// Default classification threshold on the predicted probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Absolute correlation above which a feature pair is flagged.
pub const COLLINEARITY_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogitError {
    #[error("feature dimension mismatch: model has {expected}, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("threshold {0} must lie strictly between 0 and 1")]
    InvalidThreshold(f64),
    #[error("non-finite coefficient")]
    NonFiniteCoefficient,
    #[error("training data needs at least 2 samples of each class (ST: {st}, NORMAL: {normal})")]
    InsufficientClasses { st: usize, normal: usize },
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("log-likelihood became non-finite at iteration {0}")]
    Diverged(usize),
    #[error("collinearity report needs {0}")]
    TooSmall(&'static str),
}

pub type Result<T> = std::result::Result<T, LogitError>;

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Default,
    NonDefault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitModel {
    pub c0: f64,
    pub coeffs: Vec<f64>,
    pub threshold: f64,
}

impl LogitModel {
    pub fn new(c0: f64, coeffs: Vec<f64>, threshold: f64) -> Result<Self> {
        let model = Self {
            c0,
            coeffs,
            threshold,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(LogitError::InvalidThreshold(self.threshold));
        }
        if !self.c0.is_finite() || self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(LogitError::NonFiniteCoefficient);
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(LogitError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

pub fn linear_predictor(model: &LogitModel, x: &[f64]) -> Result<f64> {
    model.check_dim(x)?;
    Ok(model.c0 + model.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>())
}

pub fn predict_proba(model: &LogitModel, x: &[f64]) -> Result<f64> {
    linear_predictor(model, x).map(sigmoid)
}

/// `Default` when the predicted probability reaches the threshold; a
/// probability exactly at the threshold counts as a default.
pub fn classify(model: &LogitModel, x: &[f64]) -> Result<Decision> {
    let p = predict_proba(model, x)?;
    Ok(if p >= model.threshold {
        Decision::Default
    } else {
        Decision::NonDefault
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once the max-norm of the mean gradient drops below this.
    pub tol: f64,
    /// L2 penalty on the slope coefficients (the intercept is not penalised).
    pub l2: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            max_iters: 10_000,
            tol: 1e-6,
            l2: 0.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(LogitError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(LogitError::InvalidConfig("tol must be positive".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(LogitError::InvalidConfig("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

/// Outcome of [`fit_logit`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogitFit {
    pub model: LogitModel,
    /// Penalised log-likelihood at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Penalised Bernoulli log-likelihood of `params = [c0, c_1..c_m]`:
/// `sum(y * eta - ln(1 + e^eta)) - l2 / 2 * sum(c_i^2)`.
pub fn log_likelihood(params: &[f64], data: &Dataset, l2: f64) -> f64 {
    let ll: f64 = data
        .samples()
        .iter()
        .map(|s| {
            let eta = params[0]
                + params[1..]
                    .iter()
                    .zip(&s.features)
                    .map(|(c, v)| c * v)
                    .sum::<f64>();
            s.label.target() * eta - softplus(eta)
        })
        .sum();
    ll - 0.5 * l2 * params[1..].iter().map(|c| c * c).sum::<f64>()
}

/// Analytic gradient of [`log_likelihood`] with respect to `params`.
pub fn log_likelihood_gradient(params: &[f64], data: &Dataset, l2: f64) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    for s in data.samples() {
        let eta = params[0]
            + params[1..]
                .iter()
                .zip(&s.features)
                .map(|(c, v)| c * v)
                .sum::<f64>();
        let r = s.label.target() - sigmoid(eta);
        grad[0] += r;
        for (g, v) in grad[1..].iter_mut().zip(&s.features) {
            *g += r * v;
        }
    }
    for (g, c) in grad[1..].iter_mut().zip(&params[1..]) {
        *g -= l2 * c;
    }
    grad
}

/// Maximum-likelihood fit by full-batch gradient ascent.
///
/// Each step moves along the mean gradient scaled by the learning rate. A
/// step that would lower the objective is rejected and the rate halved, so
/// the recorded trace never decreases.
pub fn fit_logit(data: &Dataset, config: &FitConfig) -> Result<LogitFit> {
    config.validate()?;
    let st = data.count(Label::St);
    let normal = data.count(Label::Normal);
    if st < 2 || normal < 2 {
        return Err(LogitError::InsufficientClasses { st, normal });
    }
    let n = data.len() as f64;
    let mut params = vec![0.0; data.dim() + 1];
    let mut ll = log_likelihood(&params, data, config.l2);
    let mut trace = vec![ll];
    let mut rate = config.learning_rate;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        let grad = log_likelihood_gradient(&params, data, config.l2);
        let norm = grad.iter().fold(0.0_f64, |m, g| m.max((g / n).abs()));
        if norm < config.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        while rate > 1e-12 {
            let trial: Vec<f64> = params
                .iter()
                .zip(&grad)
                .map(|(p, g)| p + rate * g / n)
                .collect();
            let trial_ll = log_likelihood(&trial, data, config.l2);
            if !trial_ll.is_finite() {
                return Err(LogitError::Diverged(iterations));
            }
            if trial_ll >= ll {
                params = trial;
                ll = trial_ll;
                trace.push(ll);
                accepted = true;
                break;
            }
            rate *= 0.5;
        }
        if !accepted {
            // No ascent possible at any usable rate: numerically at the optimum.
            converged = true;
            break;
        }
    }

    Ok(LogitFit {
        model: LogitModel {
            c0: params[0],
            coeffs: params[1..].to_vec(),
            threshold: DEFAULT_THRESHOLD,
        },
        trace,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollinearPair {
    pub first: String,
    pub second: String,
    pub correlation: f64,
}

/// Pairwise Pearson correlations between features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollinearityReport {
    pub feature_names: Vec<String>,
    /// `None` where a zero-variance feature makes the correlation undefined.
    pub matrix: Vec<Vec<Option<f64>>>,
    pub flagged: Vec<CollinearPair>,
    pub constant_features: Vec<String>,
}

pub fn multicollinearity_report(data: &Dataset) -> Result<CollinearityReport> {
    if data.len() < 3 {
        return Err(LogitError::TooSmall("at least 3 samples"));
    }
    if data.dim() < 2 {
        return Err(LogitError::TooSmall("at least 2 features"));
    }
    let m = data.dim();
    let n = data.len() as f64;
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let col: Vec<f64> = data.samples().iter().map(|s| s.features[j]).collect();
            let mean = col.iter().sum::<f64>() / n;
            col.into_iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();

    let mut matrix = vec![vec![None; m]; m];
    let mut flagged = Vec::new();
    for i in 0..m {
        if norms[i] == 0.0 {
            continue;
        }
        matrix[i][i] = Some(1.0);
        for j in i + 1..m {
            if norms[j] == 0.0 {
                continue;
            }
            let dot: f64 = columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum();
            let rho = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            matrix[i][j] = Some(rho);
            matrix[j][i] = Some(rho);
            if rho.abs() > COLLINEARITY_THRESHOLD {
                flagged.push(CollinearPair {
                    first: data.feature_names()[i].clone(),
                    second: data.feature_names()[j].clone(),
                    correlation: rho,
                });
            }
        }
    }
    let constant_features = (0..m)
        .filter(|&j| norms[j] == 0.0)
        .map(|j| data.feature_names()[j].clone())
        .collect();
    Ok(CollinearityReport {
        feature_names: data.feature_names().to_vec(),
        matrix,
        flagged,
        constant_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataprep::Sample;

    fn model(c0: f64, c: &[f64]) -> LogitModel {
        LogitModel::new(c0, c.to_vec(), DEFAULT_THRESHOLD).unwrap()
    }

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(40.0) > 1.0 - 1e-12);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        // 1 / (1 + e^-1) rounded to 17 significant digits.
        assert!((sigmoid(1.0) - 0.731_058_578_630_004_9).abs() < 1e-16);
    }

    #[test]
    fn linear_predictor_cases() {
        assert_eq!(
            linear_predictor(&model(0.3, &[0.0, 0.0]), &[7.0, -2.0]).unwrap(),
            0.3
        );
        assert_eq!(
            linear_predictor(&model(0.0, &[1.0, 2.0]), &[3.0, 4.0]).unwrap(),
            11.0
        );
        assert_eq!(
            linear_predictor(&model(0.0, &[1.0]), &[1.0, 2.0]).unwrap_err(),
            LogitError::DimensionMismatch {
                expected: 1,
                found: 2
            }
        );
    }

    #[test]
    fn classify_boundaries() {
        // eta = ln(9) gives p = 0.9.
        let m = model(9f64.ln(), &[0.0]);
        assert_eq!(classify(&m, &[1.0]).unwrap(), Decision::Default);
        let at = model(0.0, &[0.0]);
        assert_eq!(predict_proba(&at, &[1.0]).unwrap(), 0.5);
        assert_eq!(classify(&at, &[1.0]).unwrap(), Decision::Default);
        assert_eq!(
            classify(&model(-1e-9, &[0.0]), &[1.0]).unwrap(),
            Decision::NonDefault
        );
    }

    #[test]
    fn threshold_must_be_interior() {
        assert!(LogitModel::new(0.0, vec![], 0.0).is_err());
        assert!(LogitModel::new(0.0, vec![], 1.0).is_err());
        assert!(LogitModel::new(f64::NAN, vec![], 0.5).is_err());
    }

    fn dataset(rows: &[(f64, Label)]) -> Dataset {
        Dataset::new(
            vec!["x".into()],
            rows.iter()
                .enumerate()
                .map(|(i, (x, l))| Sample {
                    id: i.to_string(),
                    features: vec![*x],
                    label: *l,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_class_rejected() {
        let d = dataset(&[(1.0, Label::St), (2.0, Label::St), (3.0, Label::St)]);
        assert_eq!(
            fit_logit(&d, &FitConfig::default()).unwrap_err(),
            LogitError::InsufficientClasses { st: 3, normal: 0 }
        );
    }

    #[test]
    fn invalid_config_rejected() {
        let d = dataset(&[
            (1.0, Label::St),
            (2.0, Label::St),
            (3.0, Label::Normal),
            (4.0, Label::Normal),
        ]);
        let cfg = FitConfig {
            l2: -1.0,
            ..FitConfig::default()
        };
        assert!(matches!(
            fit_logit(&d, &cfg),
            Err(LogitError::InvalidConfig(_))
        ));
    }

    #[test]
    fn penalty_shrinks_separable_fit() {
        // Perfectly separable data has no finite MLE; the penalty bounds it.
        let d = dataset(&[
            (-2.0, Label::Normal),
            (-1.0, Label::Normal),
            (1.0, Label::St),
            (2.0, Label::St),
        ]);
        let cfg = FitConfig {
            l2: 1.0,
            ..FitConfig::default()
        };
        let fit = fit_logit(&d, &cfg).unwrap();
        assert!(fit.converged);
        assert!(fit.model.coeffs[0] > 0.0 && fit.model.coeffs[0] < 5.0);
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn collinearity_flags_duplicates_and_constants() {
        let samples = (0..10)
            .map(|i| Sample {
                id: i.to_string(),
                features: vec![i as f64, i as f64, 3.0, ((i * 7) % 5) as f64],
                label: Label::Normal,
            })
            .collect();
        let names = ["a", "a_copy", "flat", "other"].map(String::from).to_vec();
        let d = Dataset::new(names, samples).unwrap();
        let r = multicollinearity_report(&d).unwrap();
        assert_eq!(r.flagged.len(), 1);
        assert_eq!(r.flagged[0].first, "a");
        assert_eq!(r.flagged[0].second, "a_copy");
        assert!((r.flagged[0].correlation - 1.0).abs() < 1e-12);
        assert_eq!(r.constant_features, vec!["flat".to_string()]);
        assert_eq!(r.matrix[2][0], None);
        for i in [0, 1, 3] {
            assert_eq!(r.matrix[i][i], Some(1.0));
        }
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(r.matrix[i][j], r.matrix[j][i]);
            }
        }
    }
}
