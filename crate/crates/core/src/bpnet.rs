//! Three-layer backpropagation network.
//!
//! One input layer of `n` units, one hidden layer of `r` units and a single
//! output unit:
//!
//! ```text
//! h = f_hidden(W1 x + b1)        W1: r x n, b1: r
//! y = f_output(W2 h + b2)        W2: 1 x r, b2: scalar
//! ```
//!
//! The hidden width is constrained to `1 < r < n` unless the caller opts out
//! through [`Topology::with_any_width`]. Training minimises the mean squared
//! error by plain gradient descent, either full-batch or one sample at a
//! time in a seeded shuffled order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataprep::Dataset;

/// Fixed negative-side slope of [`ActivationKind::LeakyRelu`].
pub const LEAKY_RELU_SLOPE: f64 = 0.01;
/// Version tag written into serialised networks.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("hidden width r = {r} must satisfy 1 < r < n = {n}")]
    InvalidWidth { n: usize, r: usize },
    #[error("invalid activation: {0}")]
    InvalidActivation(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: mse = {mse}")]
    Diverged { epoch: usize, mse: f64 },
    #[error("no training samples")]
    EmptyData,
    #[error("target {value} at sample {index} lies outside the output activation's range")]
    TargetOutOfRange { index: usize, value: f64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("network schema: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, NetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActivationKind {
    Sigmoid,
    Linear,
    Relu,
    LeakyRelu,
    Prelu,
}

/// Activation function with its slope parameter. `alpha` is the
/// negative-side slope for the leaky and parametric ReLUs and is ignored by
/// the other kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub kind: ActivationKind,
    pub alpha: f64,
}

impl Activation {
    pub const fn sigmoid() -> Self {
        Self {
            kind: ActivationKind::Sigmoid,
            alpha: 0.0,
        }
    }

    pub const fn linear() -> Self {
        Self {
            kind: ActivationKind::Linear,
            alpha: 0.0,
        }
    }

    pub const fn relu() -> Self {
        Self {
            kind: ActivationKind::Relu,
            alpha: 0.0,
        }
    }

    pub const fn leaky_relu() -> Self {
        Self {
            kind: ActivationKind::LeakyRelu,
            alpha: LEAKY_RELU_SLOPE,
        }
    }

    /// Parametric ReLU with a fixed, caller-chosen negative slope.
    pub fn prelu(alpha: f64) -> Result<Self> {
        let a = Self {
            kind: ActivationKind::Prelu,
            alpha,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ActivationKind::LeakyRelu | ActivationKind::Prelu
                if !(self.alpha.is_finite() && self.alpha > 0.0) =>
            {
                Err(NetError::InvalidActivation(format!(
                    "{:?} slope {} must be positive",
                    self.kind, self.alpha
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Sigmoid => crate::logit::sigmoid(x),
            ActivationKind::Linear => x,
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::LeakyRelu | ActivationKind::Prelu => {
                if x > 0.0 {
                    x
                } else {
                    self.alpha * x
                }
            }
        }
    }

    /// Derivative at `x`. At the ReLU kink `x == 0` the left-hand value is
    /// used: 0 for ReLU, `alpha` for the leaky and parametric variants.
    pub fn derivative(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Sigmoid => {
                let s = crate::logit::sigmoid(x);
                s * (1.0 - s)
            }
            ActivationKind::Linear => 1.0,
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu | ActivationKind::Prelu => {
                if x > 0.0 {
                    1.0
                } else {
                    self.alpha
                }
            }
        }
    }

    /// True for the piecewise-linear kinds, which are not differentiable at 0.
    pub fn has_kink(&self) -> bool {
        matches!(
            self.kind,
            ActivationKind::Relu | ActivationKind::LeakyRelu | ActivationKind::Prelu
        )
    }
}

pub fn activation_apply(a: &Activation, x: f64) -> f64 {
    a.apply(x)
}

pub fn activation_derivative(a: &Activation, x: f64) -> f64 {
    a.derivative(x)
}

/// Default hidden width `ceil((n + 1) / 2)`, clamped into `2..=n-1`.
pub fn default_hidden_width(n: usize) -> Result<usize> {
    if n < 3 {
        return Err(NetError::InvalidWidth {
            n,
            r: n.div_ceil(2),
        });
    }
    Ok((n + 1).div_ceil(2).clamp(2, n - 1))
}

/// Layer sizes of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    pub n: usize,
    pub r: usize,
    pub allow_any_width: bool,
}

impl Topology {
    /// Input width `n` and hidden width `r`, with `1 < r < n` enforced.
    pub fn new(n: usize, r: usize) -> Self {
        Self {
            n,
            r,
            allow_any_width: false,
        }
    }

    /// Uses [`default_hidden_width`].
    pub fn with_default_width(n: usize) -> Result<Self> {
        Ok(Self::new(n, default_hidden_width(n)?))
    }

    /// Lifts the `1 < r < n` constraint; only `n >= 1` and `r >= 1` remain.
    pub fn with_any_width(n: usize, r: usize) -> Self {
        Self {
            n,
            r,
            allow_any_width: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = if self.allow_any_width {
            self.n >= 1 && self.r >= 1
        } else {
            1 < self.r && self.r < self.n
        };
        if ok {
            Ok(())
        } else {
            Err(NetError::InvalidWidth {
                n: self.n,
                r: self.r,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    n: usize,
    r: usize,
    hidden_activation: Activation,
    output_activation: Activation,
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

/// Cached intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output_pre: f64,
    pub output: f64,
}

/// Gradients with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    fn zeros(n: usize, r: usize) -> Self {
        Self {
            w1: vec![vec![0.0; n]; r],
            b1: vec![0.0; r],
            w2: vec![0.0; r],
            b2: 0.0,
        }
    }

    /// Flattened in parameter order: `W1` row-major, `b1`, `W2`, `b2`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w1.iter().flatten().copied().collect();
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }

    fn add_scaled(&mut self, other: &Gradients, k: f64) {
        for (row, orow) in self.w1.iter_mut().zip(&other.w1) {
            for (g, o) in row.iter_mut().zip(orow) {
                *g += k * o;
            }
        }
        for (g, o) in self.b1.iter_mut().zip(&other.b1) {
            *g += k * o;
        }
        for (g, o) in self.w2.iter_mut().zip(&other.w2) {
            *g += k * o;
        }
        self.b2 += k * other.b2;
    }
}

/// Weights drawn uniformly from `[-init_scale, init_scale]`, biases zero.
pub fn init_network(
    topology: Topology,
    hidden: Activation,
    output: Activation,
    init_scale: f64,
    seed: u64,
) -> Result<Network> {
    topology.validate()?;
    hidden.validate()?;
    output.validate()?;
    if !(init_scale.is_finite() && init_scale >= 0.0) {
        return Err(NetError::InvalidConfig(format!(
            "init_scale {init_scale} must be finite and non-negative"
        )));
    }
    let Topology { n, r, .. } = topology;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        if init_scale > 0.0 {
            rng.random_range(-init_scale..=init_scale)
        } else {
            0.0
        }
    };
    let w1 = (0..r).map(|_| (0..n).map(|_| draw()).collect()).collect();
    let w2 = (0..r).map(|_| draw()).collect();
    Ok(Network {
        n,
        r,
        hidden_activation: hidden,
        output_activation: output,
        w1,
        b1: vec![0.0; r],
        w2,
        b2: 0.0,
    })
}

impl Network {
    /// Builds a network from explicit parameters. `w1` is `r x n`.
    pub fn from_parts(
        topology: Topology,
        hidden: Activation,
        output: Activation,
        w1: Vec<Vec<f64>>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    ) -> Result<Self> {
        topology.validate()?;
        let net = Self {
            n: topology.n,
            r: topology.r,
            hidden_activation: hidden,
            output_activation: output,
            w1,
            b1,
            w2,
            b2,
        };
        net.check_shapes()?;
        Ok(net)
    }

    fn check_shapes(&self) -> Result<()> {
        self.hidden_activation.validate()?;
        self.output_activation.validate()?;
        let shape_err = |field: &str, expected: usize, found: usize| {
            NetError::Schema(format!(
                "{field}: expected length {expected}, found {found}"
            ))
        };
        if self.w1.len() != self.r {
            return Err(shape_err("W1", self.r, self.w1.len()));
        }
        if let Some(row) = self.w1.iter().find(|row| row.len() != self.n) {
            return Err(shape_err("W1 row", self.n, row.len()));
        }
        if self.b1.len() != self.r {
            return Err(shape_err("b1", self.r, self.b1.len()));
        }
        if self.w2.len() != self.r {
            return Err(shape_err("W2", self.r, self.w2.len()));
        }
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn w1(&self) -> &[Vec<f64>] {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    pub fn b2(&self) -> f64 {
        self.b2
    }

    pub fn num_params(&self) -> usize {
        self.r * self.n + 2 * self.r + 1
    }

    /// All parameters in the order of [`Gradients::flatten`].
    pub fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w1.iter().flatten().copied().collect();
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }

    fn param_mut(&mut self, i: usize) -> &mut f64 {
        let (n, r) = (self.n, self.r);
        if i < r * n {
            &mut self.w1[i / n][i % n]
        } else if i < r * n + r {
            &mut self.b1[i - r * n]
        } else if i < r * n + 2 * r {
            &mut self.w2[i - r * n - r]
        } else {
            assert_eq!(i, r * n + 2 * r, "parameter index out of range");
            &mut self.b2
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(NetError::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let hidden_pre: Vec<f64> = self
            .w1
            .iter()
            .zip(&self.b1)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        let hidden: Vec<f64> = hidden_pre
            .iter()
            .map(|z| self.hidden_activation.apply(*z))
            .collect();
        let output_pre = self.b2 + self.w2.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
        let output = self.output_activation.apply(output_pre);
        Ok(ForwardTrace {
            hidden_pre,
            hidden,
            output_pre,
            output,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.output)
    }

    /// Exact gradients of `(y - y_target)^2` for one sample.
    pub fn backprop(&self, x: &[f64], y_target: f64) -> Result<Gradients> {
        let trace = self.forward(x)?;
        let mut g = Gradients::zeros(self.n, self.r);
        let delta_out =
            2.0 * (trace.output - y_target) * self.output_activation.derivative(trace.output_pre);
        g.b2 = delta_out;
        for j in 0..self.r {
            g.w2[j] = delta_out * trace.hidden[j];
            let delta_hidden =
                delta_out * self.w2[j] * self.hidden_activation.derivative(trace.hidden_pre[j]);
            g.b1[j] = delta_hidden;
            for (gw, xv) in g.w1[j].iter_mut().zip(x) {
                *gw = delta_hidden * xv;
            }
        }
        if g.flatten().iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("gradients".into()));
        }
        Ok(g)
    }

    fn apply_step(&mut self, g: &Gradients, rate: f64) {
        for (row, grow) in self.w1.iter_mut().zip(&g.w1) {
            for (w, gw) in row.iter_mut().zip(grow) {
                *w -= rate * gw;
            }
        }
        for (b, gb) in self.b1.iter_mut().zip(&g.b1) {
            *b -= rate * gb;
        }
        for (w, gw) in self.w2.iter_mut().zip(&g.w2) {
            *w -= rate * gw;
        }
        self.b2 -= rate * g.b2;
    }

    /// Serialises to the versioned JSON schema with fixed field order.
    pub fn to_json(&self) -> String {
        let file = NetworkFile {
            n: self.n,
            r: self.r,
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
            w1: self.w1.clone(),
            b1: self.b1.clone(),
            w2: vec![self.w2.clone()],
            b2: self.b2,
            format_version: FORMAT_VERSION,
        };
        serde_json::to_string_pretty(&file).expect("network serialisation is infallible")
    }

    /// Parses and validates a serialised network. `allow_any_width` must be
    /// set to reload networks built with [`Topology::with_any_width`].
    pub fn from_json(json: &str, allow_any_width: bool) -> Result<Self> {
        let file: NetworkFile =
            serde_json::from_str(json).map_err(|e| NetError::Schema(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(NetError::Schema(format!(
                "format_version: unsupported version {}",
                file.format_version
            )));
        }
        let [w2]: [Vec<f64>; 1] = file.w2.try_into().map_err(|rows: Vec<Vec<f64>>| {
            NetError::Schema(format!("W2: expected 1 row, found {}", rows.len()))
        })?;
        let topology = Topology {
            n: file.n,
            r: file.r,
            allow_any_width,
        };
        Self::from_parts(
            topology,
            file.hidden_activation,
            file.output_activation,
            file.w1,
            file.b1,
            w2,
            file.b2,
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    n: usize,
    r: usize,
    hidden_activation: Activation,
    output_activation: Activation,
    #[serde(rename = "W1")]
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    #[serde(rename = "W2")]
    w2: Vec<Vec<f64>>,
    b2: f64,
    format_version: u32,
}

/// Mean squared difference between equal-length, non-empty sequences.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(NetError::DimensionMismatch {
            expected: targets.len(),
            found: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(NetError::EmptyData);
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predictions.len() as f64)
}

/// Worst disagreement between backprop and central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Flattened index of the worst parameter, if any were compared.
    pub worst_index: Option<usize>,
    /// Parameters skipped because a perturbation crossed an activation kink.
    pub skipped: usize,
}

fn kink_sides(net: &Network, trace: &ForwardTrace) -> Vec<bool> {
    let mut sides = Vec::new();
    if net.hidden_activation.has_kink() {
        sides.extend(trace.hidden_pre.iter().map(|z| *z > 0.0));
    }
    if net.output_activation.has_kink() {
        sides.push(trace.output_pre > 0.0);
    }
    sides
}

/// Compares backprop gradients of `(y - y_target)^2` against central
/// differences with step `epsilon`, using the relative error
/// `|a - b| / max(|a|, |b|, 1e-12)`.
///
/// A parameter is skipped when its two perturbations put any ReLU-family
/// unit on different sides of its kink, since the loss is not
/// differentiable there.
pub fn grad_check(net: &Network, x: &[f64], y_target: f64, epsilon: f64) -> Result<GradCheck> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(NetError::InvalidConfig(format!(
            "epsilon {epsilon} must be positive"
        )));
    }
    let analytic = net.backprop(x, y_target)?.flatten();
    let mut probe = net.clone();
    let mut result = GradCheck {
        max_relative_error: 0.0,
        worst_index: None,
        skipped: 0,
    };
    for (i, a) in analytic.iter().enumerate() {
        let original = *probe.param_mut(i);
        let up = original + epsilon;
        let down = original - epsilon;

        *probe.param_mut(i) = up;
        let tp = probe.forward(x)?;
        *probe.param_mut(i) = down;
        let tm = probe.forward(x)?;
        *probe.param_mut(i) = original;

        if kink_sides(&probe, &tp) != kink_sides(&probe, &tm) {
            result.skipped += 1;
            continue;
        }
        let lp = (tp.output - y_target).powi(2);
        let lm = (tm.output - y_target).powi(2);
        let numeric = (lp - lm) / (up - down);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        if result.worst_index.is_none() || rel > result.max_relative_error {
            result.max_relative_error = rel;
            result.worst_index = Some(i);
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BatchMode {
    FullBatch,
    PerSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub target_mse: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub batch_mode: BatchMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_epochs: 2000,
            target_mse: 0.01,
            seed: 0,
            init_scale: 0.5,
            batch_mode: BatchMode::PerSample,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // A zero rate is accepted: it leaves the network untouched.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(NetError::InvalidConfig(
                "learning_rate must be non-negative".into(),
            ));
        }
        if self.max_epochs == 0 {
            return Err(NetError::InvalidConfig(
                "max_epochs must be positive".into(),
            ));
        }
        if !(self.target_mse.is_finite() && self.target_mse > 0.0) {
            return Err(NetError::InvalidConfig(
                "target_mse must be positive".into(),
            ));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(NetError::InvalidConfig(
                "init_scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrainStatus {
    TargetReached,
    MaxEpochs,
}

/// Training curve. Epoch 0 is the untrained network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub status: TrainStatus,
}

impl TrainHistory {
    pub fn final_mse(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.mse)
    }

    /// Number of training epochs run (excluding the epoch-0 baseline).
    pub fn epochs(&self) -> usize {
        self.records.last().map_or(0, |r| r.epoch)
    }

    /// First epoch whose MSE is below `threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.mse < threshold)
            .map(|r| r.epoch)
    }

    /// Two-column `epoch,mse` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mse\n");
        for r in &self.records {
            out.push_str(&format!("{},{}\n", r.epoch, r.mse));
        }
        out
    }
}

fn dataset_mse(net: &Network, inputs: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
    let preds = inputs
        .iter()
        .map(|x| net.predict(x))
        .collect::<Result<Vec<f64>>>()?;
    mse(&preds, targets)
}

/// Trains on a labelled dataset with targets 1.0 for ST and 0.0 for NORMAL.
pub fn train(
    net: &Network,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    let inputs: Vec<Vec<f64>> = data.samples().iter().map(|s| s.features.clone()).collect();
    train_on(net, &inputs, &data.targets(), config)
}

/// Gradient descent on the mean squared error of `inputs -> targets`.
///
/// `FullBatch` takes one step per epoch along the averaged gradient;
/// `PerSample` steps once per sample in an order reshuffled every epoch from
/// the config seed. Stops as soon as an epoch ends below `target_mse`.
pub fn train_on(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &[f64],
    config: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(NetError::EmptyData);
    }
    if inputs.len() != targets.len() {
        return Err(NetError::DimensionMismatch {
            expected: inputs.len(),
            found: targets.len(),
        });
    }
    for x in inputs {
        net.check_input(x)?;
    }
    let in_range = |t: f64| match net.output_activation.kind {
        ActivationKind::Sigmoid => (0.0..=1.0).contains(&t),
        ActivationKind::Relu => t >= 0.0,
        _ => t.is_finite(),
    };
    if let Some((index, &value)) = targets.iter().enumerate().find(|(_, t)| !in_range(**t)) {
        return Err(NetError::TargetOutOfRange { index, value });
    }

    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let initial = dataset_mse(&net, inputs, targets)?;
    let mut records = vec![EpochRecord {
        epoch: 0,
        mse: initial,
    }];
    if initial < config.target_mse {
        return Ok((
            net,
            TrainHistory {
                records,
                status: TrainStatus::TargetReached,
            },
        ));
    }

    let mut status = TrainStatus::MaxEpochs;
    for epoch in 1..=config.max_epochs {
        match config.batch_mode {
            BatchMode::FullBatch => {
                let mut total = Gradients::zeros(net.n, net.r);
                let k = 1.0 / inputs.len() as f64;
                for (x, t) in inputs.iter().zip(targets) {
                    total.add_scaled(&net.backprop(x, *t)?, k);
                }
                net.apply_step(&total, config.learning_rate);
            }
            BatchMode::PerSample => {
                order.shuffle(&mut rng);
                for &i in &order {
                    let g = net.backprop(&inputs[i], targets[i])?;
                    net.apply_step(&g, config.learning_rate);
                }
            }
        }
        let loss = match dataset_mse(&net, inputs, targets) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => return Err(NetError::Diverged { epoch, mse: v }),
            Err(NetError::NonFinite(_)) => {
                return Err(NetError::Diverged {
                    epoch,
                    mse: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        records.push(EpochRecord { epoch, mse: loss });
        if loss < config.target_mse {
            status = TrainStatus::TargetReached;
            break;
        }
    }
    Ok((net, TrainHistory { records, status }))
}

/// Sliding windows over a series: each input holds `width` consecutive
/// values and its target is the value that follows.
pub fn sliding_windows(values: &[f64], width: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    if width == 0 || values.len() <= width {
        return (Vec::new(), Vec::new());
    }
    values
        .windows(width + 1)
        .map(|w| (w[..width].to_vec(), w[width]))
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL_KINDS: [Activation; 5] = [
        Activation::sigmoid(),
        Activation::linear(),
        Activation::relu(),
        Activation::leaky_relu(),
        Activation {
            kind: ActivationKind::Prelu,
            alpha: 0.2,
        },
    ];

    #[test]
    fn activation_reference_values() {
        assert_eq!(Activation::linear().derivative(123.0), 1.0);
        assert_eq!(Activation::sigmoid().derivative(0.0), 0.25);
        assert_eq!(Activation::sigmoid().apply(0.0), 0.5);
        assert_eq!(Activation::relu().apply(-3.0), 0.0);
        assert_eq!(Activation::leaky_relu().apply(-2.0), -0.02);
        assert_eq!(Activation::prelu(0.3).unwrap().apply(-1.0), -0.3);
    }

    #[test]
    fn kink_convention_uses_left_value() {
        assert_eq!(Activation::relu().derivative(0.0), 0.0);
        assert_eq!(Activation::leaky_relu().derivative(0.0), LEAKY_RELU_SLOPE);
        assert_eq!(Activation::prelu(0.25).unwrap().derivative(0.0), 0.25);
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-6;
        for a in ALL_KINDS {
            for _ in 0..100 {
                let x: f64 = rng.random_range(-6.0..6.0);
                if a.has_kink() && x.abs() < 1e-6 {
                    continue;
                }
                let fd = (a.apply(x + h) - a.apply(x - h)) / (2.0 * h);
                let d = a.derivative(x);
                let rel = (fd - d).abs() / d.abs().max(fd.abs()).max(1e-12);
                assert!(rel < 1e-6, "{a:?} at {x}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn prelu_slope_must_be_positive() {
        assert!(Activation::prelu(0.0).is_err());
        assert!(Activation::prelu(-0.1).is_err());
        let bad = Activation {
            kind: ActivationKind::LeakyRelu,
            alpha: 0.0,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn default_width_midpoint() {
        assert_eq!(default_hidden_width(3).unwrap(), 2);
        assert_eq!(default_hidden_width(5).unwrap(), 3);
        assert_eq!(default_hidden_width(6).unwrap(), 4);
        assert_eq!(default_hidden_width(10).unwrap(), 6);
        assert!(default_hidden_width(2).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let t = Topology::new(5, 3);
        let a = init_network(t, Activation::sigmoid(), Activation::sigmoid(), 0.5, 42).unwrap();
        let b = init_network(t, Activation::sigmoid(), Activation::sigmoid(), 0.5, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.params().iter().all(|w| w.abs() <= 0.5));
        assert!(a.b1().iter().all(|b| *b == 0.0) && a.b2() == 0.0);
    }

    #[test]
    fn width_constraint_enforced() {
        let err = init_network(
            Topology::new(5, 5),
            Activation::sigmoid(),
            Activation::sigmoid(),
            0.5,
            1,
        );
        assert_eq!(err.unwrap_err(), NetError::InvalidWidth { n: 5, r: 5 });
        assert!(init_network(
            Topology::new(5, 1),
            Activation::sigmoid(),
            Activation::sigmoid(),
            0.5,
            1
        )
        .is_err());
        assert!(init_network(
            Topology::with_any_width(5, 5),
            Activation::sigmoid(),
            Activation::sigmoid(),
            0.5,
            1
        )
        .is_ok());
    }

    #[test]
    fn zero_init_gives_constant_output() {
        let net = init_network(
            Topology::new(4, 2),
            Activation::sigmoid(),
            Activation::sigmoid(),
            0.0,
            3,
        )
        .unwrap();
        assert!(net.params().iter().all(|w| *w == 0.0));
        for x in [[0.0; 4], [1.0, -2.0, 3.0, 0.5]] {
            assert_eq!(net.predict(&x).unwrap(), 0.5);
        }
        let lin = init_network(
            Topology::new(4, 2),
            Activation::linear(),
            Activation::linear(),
            0.0,
            3,
        )
        .unwrap();
        assert_eq!(lin.predict(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_forward_pass() {
        let net = Network::from_parts(
            Topology::with_any_width(2, 2),
            Activation::sigmoid(),
            Activation::linear(),
            vec![vec![0.5, -1.0], vec![2.0, 0.25]],
            vec![0.1, -0.3],
            vec![1.5, -0.5],
            0.2,
        )
        .unwrap();
        let x = [1.0, 2.0];
        // z1 = 0.5 - 2 + 0.1 = -1.4, z2 = 2 + 0.5 - 0.3 = 2.2
        let h1 = 1.0 / (1.0 + 1.4f64.exp());
        let h2 = 1.0 / (1.0 + (-2.2f64).exp());
        let y = 1.5 * h1 - 0.5 * h2 + 0.2;
        let t = net.forward(&x).unwrap();
        assert!((t.hidden_pre[0] + 1.4).abs() < 1e-15);
        assert!((t.hidden_pre[1] - 2.2).abs() < 1e-15);
        assert!((t.output - y).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let net = init_network(
            Topology::new(4, 2),
            Activation::relu(),
            Activation::linear(),
            0.5,
            0,
        )
        .unwrap();
        assert_eq!(
            net.predict(&[1.0]).unwrap_err(),
            NetError::DimensionMismatch {
                expected: 4,
                found: 1
            }
        );
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(mse(&[], &[]).is_err());
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradients_vanish_at_target() {
        let net = init_network(
            Topology::new(4, 3),
            Activation::sigmoid(),
            Activation::sigmoid(),
            0.5,
            8,
        )
        .unwrap();
        let x = [0.2, 0.4, 0.6, 0.8];
        let y = net.predict(&x).unwrap();
        let g = net.backprop(&x, y).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grad_check_exact_on_dyadic_linear_net() {
        // Every value is a short binary fraction, so the perturbed losses are
        // computed exactly and the central difference is exact.
        let net = Network::from_parts(
            Topology::with_any_width(1, 1),
            Activation::linear(),
            Activation::linear(),
            vec![vec![0.5]],
            vec![0.25],
            vec![0.75],
            -0.125,
        )
        .unwrap();
        let eps = 2f64.powi(-10);
        let check = grad_check(&net, &[2.0], 1.0, eps).unwrap();
        assert!(check.max_relative_error < 1e-9, "{check:?}");

        let y = net.predict(&[2.0]).unwrap();
        let at_target = grad_check(&net, &[2.0], y, eps).unwrap();
        assert_eq!(at_target.max_relative_error, 0.0);
    }

    #[test]
    fn json_schema_field_order() {
        let net = init_network(
            Topology::new(3, 2),
            Activation::prelu(0.1).unwrap(),
            Activation::sigmoid(),
            0.5,
            1,
        )
        .unwrap();
        let json = net.to_json();
        let keys = [
            "\"n\"",
            "\"r\"",
            "\"hidden_activation\"",
            "\"output_activation\"",
            "\"W1\"",
            "\"b1\"",
            "\"W2\"",
            "\"b2\"",
            "\"format_version\"",
        ];
        let positions: Vec<usize> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{json}");
        assert!(json.contains("\"kind\": \"PRELU\""));
        assert_eq!(Network::from_json(&json, false).unwrap(), net);
    }

    #[test]
    fn corrupt_json_names_field() {
        let net = init_network(
            Topology::new(3, 2),
            Activation::sigmoid(),
            Activation::sigmoid(),
            0.5,
            1,
        )
        .unwrap();
        let missing = net.to_json().replace("\"W1\"", "\"W9\"");
        let err = Network::from_json(&missing, false).unwrap_err().to_string();
        assert!(err.contains("W1") || err.contains("W9"), "{err}");

        let mut v: serde_json::Value = serde_json::from_str(&net.to_json()).unwrap();
        v["b1"] = serde_json::json!([0.0]);
        let err = Network::from_json(&v.to_string(), false)
            .unwrap_err()
            .to_string();
        assert!(err.contains("b1"), "{err}");

        v["b1"] = serde_json::json!([0.0, 0.0]);
        v["format_version"] = serde_json::json!(2);
        let err = Network::from_json(&v.to_string(), false)
            .unwrap_err()
            .to_string();
        assert!(err.contains("format_version"), "{err}");
    }

    #[test]
    fn zero_learning_rate_leaves_network_unchanged() {
        let net = init_network(
            Topology::new(3, 2),
            Activation::sigmoid(),
            Activation::sigmoid(),
            0.5,
            5,
        )
        .unwrap();
        let inputs = vec![vec![0.1, 0.2, 0.3], vec![0.9, 0.1, 0.5]];
        let targets = vec![0.0, 1.0];
        for batch_mode in [BatchMode::FullBatch, BatchMode::PerSample] {
            let cfg = TrainConfig {
                learning_rate: 0.0,
                max_epochs: 10,
                batch_mode,
                ..TrainConfig::default()
            };
            let (trained, hist) = train_on(&net, &inputs, &targets, &cfg).unwrap();
            assert_eq!(trained, net);
            assert_eq!(hist.records.len(), 11);
            assert!(hist.records.iter().all(|r| r.mse == hist.records[0].mse));
            assert_eq!(hist.status, TrainStatus::MaxEpochs);
        }
    }

    #[test]
    fn sigmoid_output_rejects_out_of_range_targets() {
        let net = init_network(
            Topology::new(3, 2),
            Activation::sigmoid(),
            Activation::sigmoid(),
            0.5,
            5,
        )
        .unwrap();
        let err = train_on(&net, &[vec![0.0; 3]], &[2.0], &TrainConfig::default()).unwrap_err();
        assert_eq!(
            err,
            NetError::TargetOutOfRange {
                index: 0,
                value: 2.0
            }
        );
    }

    #[test]
    fn divergence_is_reported() {
        let net = init_network(
            Topology::new(3, 2),
            Activation::linear(),
            Activation::linear(),
            0.5,
            5,
        )
        .unwrap();
        let inputs = vec![vec![100.0, -50.0, 80.0], vec![-90.0, 70.0, 30.0]];
        let cfg = TrainConfig {
            learning_rate: 10.0,
            max_epochs: 500,
            batch_mode: BatchMode::FullBatch,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_on(&net, &inputs, &[1.0, -1.0], &cfg),
            Err(NetError::Diverged { .. })
        ));
    }

    #[test]
    fn windows_pair_inputs_with_next_value() {
        let (x, y) = sliding_windows(&[1.0, 2.0, 3.0, 4.0, 5.0], 3);
        assert_eq!(x, vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]);
        assert_eq!(y, vec![4.0, 5.0]);
        assert!(sliding_windows(&[1.0, 2.0], 2).0.is_empty());
    }
}
