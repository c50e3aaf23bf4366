//! ARMA(p, q) and ARCH(p) baselines.
//!
//! ARMA models follow
//!
//! ```text
//! x_t = c + phi_1 x_{t-1} + ... + phi_p x_{t-p} + e_t + theta_1 e_{t-1} + ... + theta_q e_{t-q}
//! ```
//!
//! with Gaussian innovations, and are estimated by conditional least squares
//! (pre-sample innovations fixed at zero). ARCH models describe the
//! conditional variance of a residual series,
//!
//! ```text
//! y_t = b X_t + e_t,   e_t | past ~ N(0, s2_t),   s2_t = a_0 + a_1 e_{t-1}^2 + ... + a_p e_{t-p}^2
//! ```
//!
//! and are estimated by least squares on the squared residuals followed by
//! clipping onto the positivity constraints.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Iteration cap for the CSS optimizer.
pub const CSS_MAX_ITERS: usize = 10_000;
/// Convergence tolerance on the change of the mean CSS objective.
pub const CSS_TOL: f64 = 1e-8;
/// Floor applied to the fitted ARCH intercept.
pub const ARCH_A0_FLOOR: f64 = 1e-8;
/// Maximum reweighting passes after the initial ARCH least-squares fit.
pub const ARCH_WLS_ROUNDS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeSeriesError {
    #[error("non-finite observation at index {0}")]
    NonFinite(usize),
    #[error("series has {len} observations, at least {needed} required")]
    TooShort { len: usize, needed: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("AR polynomial has a root on or inside the unit circle")]
    NonStationary,
    #[error("ARCH lag coefficients sum to {0}; the unconditional variance requires a sum below 1")]
    InfiniteVariance(f64),
    #[error("CSS optimizer did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("residual series is identically zero")]
    DegenerateResiduals,
    #[error("regression design matrix is singular")]
    Singular,
    #[error("series csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, TimeSeriesError>;

/// Ordered real-valued observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    origin: Option<i64>,
}

impl TimeSeries {
    /// Builds a series, rejecting NaN and infinite values.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(TimeSeriesError::NonFinite(i));
        }
        Ok(Self {
            values,
            origin: None,
        })
    }

    pub fn with_origin(mut self, origin: i64) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn origin(&self) -> Option<i64> {
        self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reads a single-column CSV with header `value`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| TimeSeriesError::Csv(e.to_string()))?
            .clone();
        if headers.len() != 1 || headers.get(0).map(str::trim) != Some("value") {
            return Err(TimeSeriesError::Csv(
                "expected a single header column named `value`".into(),
            ));
        }
        let mut values = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| TimeSeriesError::Csv(e.to_string()))?;
            let cell = record.get(0).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| {
                TimeSeriesError::Csv(format!("row {}: `{cell}` is not a number", i + 2))
            })?;
            values.push(v);
        }
        Self::new(values)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| TimeSeriesError::Csv(e.to_string());
        wtr.write_record(["value"]).map_err(err)?;
        for v in &self.values {
            wtr.write_record([v.to_string()]).map_err(err)?;
        }
        wtr.flush().map_err(|e| TimeSeriesError::Csv(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path.as_ref())
            .map_err(|e| TimeSeriesError::Csv(format!("{}: {e}", path.as_ref().display())))?;
        Self::read_csv(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path.as_ref())
            .map_err(|e| TimeSeriesError::Csv(format!("{}: {e}", path.as_ref().display())))?;
        self.write_csv(file)
    }
}

/// ARMA(p, q) coefficients. `phi.len()` is the AR order and `theta.len()`
/// the MA order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaModel {
    pub c: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
}

impl ArmaModel {
    pub fn new(c: f64, phi: Vec<f64>, theta: Vec<f64>, sigma2: f64) -> Result<Self> {
        let model = Self {
            c,
            phi,
            theta,
            sigma2,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn p(&self) -> usize {
        self.phi.len()
    }

    pub fn q(&self) -> usize {
        self.theta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs_finite =
            self.c.is_finite() && self.phi.iter().chain(&self.theta).all(|v| v.is_finite());
        if !coeffs_finite {
            return Err(TimeSeriesError::InvalidModel(
                "non-finite coefficient".into(),
            ));
        }
        // A fitted noise-free series legitimately has zero innovation variance.
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(TimeSeriesError::InvalidModel(format!(
                "innovation variance {} must be finite and non-negative",
                self.sigma2
            )));
        }
        Ok(())
    }

    /// True when every root of `1 - phi_1 z - ... - phi_p z^p` lies strictly
    /// outside the unit circle.
    pub fn is_stationary(&self) -> bool {
        ar_is_stationary(&self.phi)
    }

    /// Unconditional mean `c / (1 - sum(phi))`.
    pub fn mean(&self) -> f64 {
        self.c / (1.0 - self.phi.iter().sum::<f64>())
    }
}

/// Root-location test for the AR polynomial `1 - phi_1 z - ... - phi_p z^p`.
///
/// Uses the Schur-Cohn step-down recursion: the polynomial has all roots
/// outside the unit circle exactly when every reflection coefficient it
/// produces has modulus below one.
pub fn ar_is_stationary(phi: &[f64]) -> bool {
    let mut a = phi.to_vec();
    while let Some(&r) = a.last() {
        if r.is_nan() || r.abs() >= 1.0 {
            return false;
        }
        let k = a.len();
        let denom = 1.0 - r * r;
        a = (0..k - 1)
            .map(|j| (a[j] + r * a[k - 2 - j]) / denom)
            .collect();
    }
    true
}

/// ARCH(p) coefficients for `s2_t = a0 + sum(a_i e_{t-i}^2)`, with mean
/// equation `y_t = b X_t + e_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchModel {
    pub b: f64,
    pub a0: f64,
    pub a: Vec<f64>,
}

impl ArchModel {
    pub fn new(b: f64, a0: f64, a: Vec<f64>) -> Result<Self> {
        let model = Self { b, a0, a };
        model.validate()?;
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.b.is_finite() {
            return Err(TimeSeriesError::InvalidModel("non-finite b".into()));
        }
        if !(self.a0.is_finite() && self.a0 > 0.0) {
            return Err(TimeSeriesError::InvalidModel(format!(
                "a0 = {} must be positive",
                self.a0
            )));
        }
        if let Some(bad) = self.a.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(TimeSeriesError::InvalidModel(format!(
                "lag coefficient {bad} must be non-negative"
            )));
        }
        Ok(())
    }

    /// `a0 / (1 - sum(a))`, or `None` when the lag coefficients sum to 1 or more.
    pub fn unconditional_variance(&self) -> Option<f64> {
        let persistence: f64 = self.a.iter().sum();
        (persistence < 1.0).then(|| self.a0 / (1.0 - persistence))
    }
}

/// d-th order differencing. `difference(s, 0)` returns `s` unchanged.
pub fn difference(series: &TimeSeries, d: usize) -> Result<TimeSeries> {
    if series.len() <= d {
        return Err(TimeSeriesError::TooShort {
            len: series.len(),
            needed: d + 1,
        });
    }
    let mut values = series.values.clone();
    for _ in 0..d {
        values = values.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(TimeSeries {
        values,
        origin: series.origin.map(|o| o + d as i64),
    })
}

/// Simulates `n` observations after discarding `burn_in` draws. Lagged values
/// start at the unconditional mean, lagged innovations at zero.
pub fn arma_simulate(model: &ArmaModel, n: usize, burn_in: usize, seed: u64) -> Result<TimeSeries> {
    model.validate()?;
    if !model.is_stationary() {
        return Err(TimeSeriesError::NonStationary);
    }
    if n == 0 {
        return Err(TimeSeriesError::InvalidModel("n must be at least 1".into()));
    }
    let (p, q) = (model.p(), model.q());
    let sd = model.sigma2.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let total = burn_in + n;
    let mut x = vec![model.mean(); p];
    x.reserve(total);
    let mut e = vec![0.0; q];
    e.reserve(total);
    for _ in 0..total {
        let z: f64 = StandardNormal.sample(&mut rng);
        let eps = sd * z;
        let ar: f64 = (0..p).map(|i| model.phi[i] * x[x.len() - 1 - i]).sum();
        let ma: f64 = (0..q).map(|j| model.theta[j] * e[e.len() - 1 - j]).sum();
        x.push(model.c + ar + eps + ma);
        e.push(eps);
    }
    TimeSeries::new(x.split_off(p + burn_in))
}

/// Conditional innovations `e_t` for `t = p..n`, with pre-sample innovations
/// set to zero.
fn css_innovations(x: &[f64], c: f64, phi: &[f64], theta: &[f64]) -> Vec<f64> {
    let p = phi.len();
    let q = theta.len();
    let mut e: Vec<f64> = Vec::with_capacity(x.len() - p);
    for t in p..x.len() {
        let k = t - p;
        let ar: f64 = (0..p).map(|i| phi[i] * x[t - 1 - i]).sum();
        let ma: f64 = (0..q.min(k)).map(|j| theta[j] * e[k - 1 - j]).sum();
        e.push(x[t] - c - ar - ma);
    }
    e
}

/// CSS innovations of `series` under `model`, aligned to observations
/// `p..n`. These are the residuals [`arma_forecast`] expects.
pub fn arma_residuals(model: &ArmaModel, series: &TimeSeries) -> Result<TimeSeries> {
    model.validate()?;
    if series.len() <= model.p() {
        return Err(TimeSeriesError::TooShort {
            len: series.len(),
            needed: model.p() + 1,
        });
    }
    TimeSeries::new(css_innovations(
        &series.values,
        model.c,
        &model.phi,
        &model.theta,
    ))
}

/// Innovations together with their Jacobian with respect to
/// `[c, phi_1..phi_p, theta_1..theta_q]`.
fn css_innovations_with_jacobian(
    x: &[f64],
    beta: &[f64],
    p: usize,
    q: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let c = beta[0];
    let phi = &beta[1..1 + p];
    let theta = &beta[1 + p..];
    let k = beta.len();
    let n = x.len() - p;
    let mut e = Vec::with_capacity(n);
    let mut jac: Vec<Vec<f64>> = Vec::with_capacity(n);
    for t in p..x.len() {
        let s = t - p;
        let lags = q.min(s);
        let ar: f64 = (0..p).map(|i| phi[i] * x[t - 1 - i]).sum();
        let ma: f64 = (0..lags).map(|j| theta[j] * e[s - 1 - j]).sum();
        e.push(x[t] - c - ar - ma);

        let mut row = vec![0.0; k];
        row[0] = -1.0;
        for i in 0..p {
            row[1 + i] = -x[t - 1 - i];
        }
        for j in 0..lags {
            row[1 + p + j] = -e[s - 1 - j];
        }
        for j in 0..lags {
            let prev = &jac[s - 1 - j];
            for (d, pv) in row.iter_mut().zip(prev) {
                *d -= theta[j] * pv;
            }
        }
        jac.push(row);
    }
    (e, jac)
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64
}

/// Conditional-least-squares ARMA(p, q) fit.
///
/// Minimises the mean squared one-step innovation with damped Gauss-Newton
/// steps (exact in one step when `q == 0`). The fitted AR polynomial must be
/// stationary; `sigma2` is the mean squared residual.
#[allow(clippy::needless_range_loop)]
pub fn arma_fit(series: &TimeSeries, p: usize, q: usize) -> Result<ArmaModel> {
    let needed = 10 * (p + q + 1);
    if series.len() < needed {
        return Err(TimeSeriesError::TooShort {
            len: series.len(),
            needed,
        });
    }
    let x = &series.values;
    let k = 1 + p + q;
    let mut beta = vec![0.0; k];
    beta[0] = x.iter().sum::<f64>() / x.len() as f64;

    let (mut e, mut jac) = css_innovations_with_jacobian(x, &beta, p, q);
    let mut objective = mean_square(&e);
    let mut damping = 1e-6;
    let mut converged = false;

    for _ in 0..CSS_MAX_ITERS {
        if objective == 0.0 {
            converged = true;
            break;
        }
        let mut jtj = vec![vec![0.0; k]; k];
        let mut grad = vec![0.0; k];
        for (row, &res) in jac.iter().zip(&e) {
            for a in 0..k {
                grad[a] += row[a] * res;
                for b in a..k {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }

        // Levenberg damping: raise until a step lowers the objective.
        let mut accepted = None;
        while damping < 1e16 {
            let mut lhs = jtj.clone();
            for (a, row) in lhs.iter_mut().enumerate() {
                row[a] += damping * jtj[a][a].max(1e-12);
            }
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            if let Some(step) = linalg::solve(lhs, rhs) {
                let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
                let (te, tj) = css_innovations_with_jacobian(x, &trial, p, q);
                let tobj = mean_square(&te);
                if tobj.is_finite() && tobj <= objective {
                    accepted = Some((trial, te, tj, tobj));
                    break;
                }
            }
            damping *= 10.0;
        }

        let Some((trial, te, tj, tobj)) = accepted else {
            // No descent direction left at any damping: stationary point.
            converged = true;
            break;
        };
        let change = objective - tobj;
        beta = trial;
        e = te;
        jac = tj;
        objective = tobj;
        damping = (damping / 10.0).max(1e-12);
        if change <= CSS_TOL * objective {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(TimeSeriesError::NoConvergence(CSS_MAX_ITERS));
    }

    let model = ArmaModel {
        c: beta[0],
        phi: beta[1..1 + p].to_vec(),
        theta: beta[1 + p..].to_vec(),
        sigma2: objective,
    };
    if !model.is_stationary() {
        return Err(TimeSeriesError::NonStationary);
    }
    Ok(model)
}

/// Iterated conditional-expectation forecasts `h` steps past the end of
/// `history`. Future innovations are set to zero; the last `q` entries of
/// `residuals` are the most recent known innovations.
pub fn arma_forecast(
    model: &ArmaModel,
    history: &TimeSeries,
    residuals: &TimeSeries,
    h: usize,
) -> Result<Vec<f64>> {
    model.validate()?;
    let (p, q) = (model.p(), model.q());
    if history.len() < p {
        return Err(TimeSeriesError::TooShort {
            len: history.len(),
            needed: p,
        });
    }
    if residuals.len() < q {
        return Err(TimeSeriesError::TooShort {
            len: residuals.len(),
            needed: q,
        });
    }
    if h == 0 {
        return Err(TimeSeriesError::InvalidModel(
            "horizon must be at least 1".into(),
        ));
    }
    let mut x = history.values[history.len() - p..].to_vec();
    let mut e = residuals.values[residuals.len() - q..].to_vec();
    let mut out = Vec::with_capacity(h);
    for _ in 0..h {
        let ar: f64 = (0..p).map(|i| model.phi[i] * x[x.len() - 1 - i]).sum();
        let ma: f64 = (0..q).map(|j| model.theta[j] * e[e.len() - 1 - j]).sum();
        let next = model.c + ar + ma;
        out.push(next);
        x.push(next);
        e.push(0.0);
    }
    Ok(out)
}

/// Conditional variance `a0 + sum(a_i e_{t-i}^2)`, where `e_{t-1}` is the
/// last element of `residual_history`.
pub fn arch_variance(model: &ArchModel, residual_history: &TimeSeries) -> Result<f64> {
    model.validate()?;
    let p = model.order();
    let hist = residual_history.values();
    if hist.len() < p {
        return Err(TimeSeriesError::TooShort {
            len: hist.len(),
            needed: p,
        });
    }
    Ok(lagged_variance(model, hist))
}

fn lagged_variance(model: &ArchModel, hist: &[f64]) -> f64 {
    let n = hist.len();
    model.a0
        + model
            .a
            .iter()
            .enumerate()
            .map(|(i, ai)| ai * hist[n - 1 - i] * hist[n - 1 - i])
            .sum::<f64>()
}

/// Simulates `n` ARCH residuals `e_t = z_t * s_t` with `z_t ~ N(0, 1)`.
/// Lagged squared residuals start at the unconditional variance.
pub fn arch_simulate(model: &ArchModel, n: usize, seed: u64) -> Result<TimeSeries> {
    model.validate()?;
    let persistence: f64 = model.a.iter().sum();
    let Some(uncond) = model.unconditional_variance() else {
        return Err(TimeSeriesError::InfiniteVariance(persistence));
    };
    if n == 0 {
        return Err(TimeSeriesError::InvalidModel("n must be at least 1".into()));
    }
    let p = model.order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = vec![uncond.sqrt(); p];
    e.reserve(n);
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let var = lagged_variance(model, &e);
        e.push(z * var.sqrt());
    }
    TimeSeries::new(e.split_off(p))
}

/// ARCH(p) fit by least squares of `e_t^2` on `(1, e_{t-1}^2, ..., e_{t-p}^2)`.
///
/// The ordinary least-squares solution is refined by feasible weighted least
/// squares, reweighting each equation by the inverse of its fitted
/// conditional variance squared until the coefficients settle. After each
/// pass negative lag coefficients are clipped to zero and the intercept is
/// floored at [`ARCH_A0_FLOOR`]. The mean equation is not estimated (`b = 0`).
pub fn arch_fit(residuals: &TimeSeries, p: usize) -> Result<ArchModel> {
    if p == 0 {
        return Err(TimeSeriesError::InvalidModel(
            "ARCH order must be at least 1".into(),
        ));
    }
    let e = residuals.values();
    let needed = 10 * (p + 1);
    if e.len() < needed {
        return Err(TimeSeriesError::TooShort {
            len: e.len(),
            needed,
        });
    }
    if e.iter().all(|v| *v == 0.0) {
        return Err(TimeSeriesError::DegenerateResiduals);
    }
    let sq: Vec<f64> = e.iter().map(|v| v * v).collect();
    let rows: Vec<Vec<f64>> = (p..sq.len())
        .map(|t| {
            std::iter::once(1.0)
                .chain((1..=p).map(|i| sq[t - i]))
                .collect()
        })
        .collect();
    let targets = &sq[p..];
    let clip = |coef: Vec<f64>| -> Vec<f64> {
        coef.iter()
            .enumerate()
            .map(|(i, v)| {
                if i == 0 {
                    v.max(ARCH_A0_FLOOR)
                } else {
                    v.max(0.0)
                }
            })
            .collect()
    };

    let mut coef = clip(linalg::least_squares(&rows, targets).ok_or(TimeSeriesError::Singular)?);
    for _ in 0..ARCH_WLS_ROUNDS {
        let (wrows, wy): (Vec<Vec<f64>>, Vec<f64>) = rows
            .iter()
            .zip(targets)
            .map(|(row, y)| {
                let fitted: f64 = row.iter().zip(&coef).map(|(r, c)| r * c).sum();
                (row.iter().map(|r| r / fitted).collect(), y / fitted)
            })
            .unzip();
        let Some(next) = linalg::least_squares(&wrows, &wy) else {
            break;
        };
        let next = clip(next);
        let shift = next
            .iter()
            .zip(&coef)
            .map(|(a, b)| ((a - b) / b.abs().max(ARCH_A0_FLOOR)).abs())
            .fold(0.0, f64::max);
        coef = next;
        if shift < 1e-10 {
            break;
        }
    }
    Ok(ArchModel {
        b: 0.0,
        a0: coef[0],
        a: coef[1..].to_vec(),
    })
}

/// ARCH(p) fit with a single exogenous regressor in the mean equation
/// `y_t = b X_t + e_t`. `b` is the no-intercept least-squares slope; the
/// variance equation is then fitted to `y - b X` as in [`arch_fit`].
pub fn arch_fit_with_regressor(y: &TimeSeries, x: &TimeSeries, p: usize) -> Result<ArchModel> {
    if y.len() != x.len() {
        return Err(TimeSeriesError::InvalidModel(format!(
            "regressor length {} differs from response length {}",
            x.len(),
            y.len()
        )));
    }
    let sxx: f64 = x.values().iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return Err(TimeSeriesError::Singular);
    }
    let sxy: f64 = x.values().iter().zip(y.values()).map(|(a, b)| a * b).sum();
    let b = sxy / sxx;
    let resid = TimeSeries::new(
        y.values()
            .iter()
            .zip(x.values())
            .map(|(yv, xv)| yv - b * xv)
            .collect(),
    )?;
    let mut model = arch_fit(&resid, p)?;
    model.b = b;
    Ok(model)
}
