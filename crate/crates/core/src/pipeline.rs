//! End-to-end warning pipeline driven by a JSON config.
//!
//! `train` runs load, clean, split, normalize and fits both models;
//! `evaluate` rebuilds the same test partition from the config seed and
//! scores the stored models; `assess` grades new, unlabelled samples.
//! Every output is a pure function of the config and seed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bpnet::{self, Activation, BatchMode, Network, Topology, TrainConfig, TrainStatus};
use crate::dataprep::{
    self, ClassCounts, CleanPolicy, Dataset, Label, NormalizationSpec, Observations, Sample,
    SplitMode, SplitSpec,
};
use crate::logit::{self, FitConfig, LogitModel};
use crate::timeseries::{self, ArchModel, ArmaModel};
use crate::warning::{self, EvalMetrics, GradeConfig, Models, WarningReport};

pub const CONFIG_VERSION: u32 = 1;

/// Pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Simulate,
    Load,
    Clean,
    Split,
    Normalize,
    Train,
    Evaluate,
    Assess,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Simulate => "simulate",
            Stage::Load => "load",
            Stage::Clean => "clean",
            Stage::Split => "split",
            Stage::Normalize => "normalize",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Assess => "assess",
            Stage::Write => "write",
        })
    }
}

/// Displays as a single line `ERROR <stage>: <message>`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            message: message.to_string().replace('\n', " "),
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ERROR {}: {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

pub type Result<T> = std::result::Result<T, PipelineError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T>;
}

impl<T, E: fmt::Display> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> Result<T> {
        self.map_err(|e| PipelineError::new(stage, e))
    }
}

/// Network shape and training settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpnetSettings {
    /// Hidden width; `None` picks `ceil((n + 1) / 2)`.
    pub hidden_width: Option<usize>,
    pub allow_any_width: bool,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub target_mse: f64,
    pub init_scale: f64,
    pub batch_mode: BatchMode,
}

impl Default for BpnetSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden_width: None,
            allow_any_width: false,
            hidden_activation: Activation::sigmoid(),
            output_activation: Activation::sigmoid(),
            learning_rate: t.learning_rate,
            max_epochs: t.max_epochs,
            target_mse: t.target_mse,
            init_scale: t.init_scale,
            batch_mode: t.batch_mode,
        }
    }
}

impl BpnetSettings {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            target_mse: self.target_mse,
            seed,
            init_scale: self.init_scale,
            batch_mode: self.batch_mode,
        }
    }

    pub fn topology(&self, n: usize) -> bpnet::Result<Topology> {
        match (self.hidden_width, self.allow_any_width) {
            (Some(r), true) => Ok(Topology::with_any_width(n, r)),
            (Some(r), false) => Ok(Topology::new(n, r)),
            (None, _) => Topology::with_default_width(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusWeights {
    pub bpnet: f64,
    pub logit: f64,
}

impl Default for ConsensusWeights {
    fn default() -> Self {
        Self {
            bpnet: 1.0,
            logit: 1.0,
        }
    }
}

/// One feature of the synthetic credit generator. ST samples sit
/// `separation` standard deviations from the NORMAL mean in `direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureProfile {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub direction: f64,
}

impl FeatureProfile {
    fn new(name: &str, mean: f64, sd: f64, direction: f64) -> Self {
        Self {
            name: name.into(),
            mean,
            sd,
            direction,
        }
    }
}

/// Two Gaussian clusters of financial ratios, truncated at
/// `truncation` standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreditParams {
    pub n: usize,
    /// ST share of the sample; the default reproduces a 121:14 split at n = 135.
    pub st_fraction: f64,
    pub separation: f64,
    pub truncation: f64,
    pub features: Vec<FeatureProfile>,
}

impl Default for CreditParams {
    fn default() -> Self {
        Self {
            n: 135,
            st_fraction: 14.0 / 135.0,
            separation: 2.5,
            truncation: 2.0,
            features: vec![
                FeatureProfile::new("current_ratio", 1.8, 0.4, -1.0),
                FeatureProfile::new("debt_ratio", 0.45, 0.12, 1.0),
                FeatureProfile::new("roa", 0.06, 0.03, -1.0),
                FeatureProfile::new("roe", 0.10, 0.05, -1.0),
                FeatureProfile::new("asset_turnover", 0.8, 0.25, -1.0),
                FeatureProfile::new("cash_flow_per_share", 0.5, 0.3, -1.0),
            ],
        }
    }
}

impl CreditParams {
    pub fn st_count(&self) -> usize {
        (self.n as f64 * self.st_fraction).round() as usize
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.features.is_empty() {
            return Err("at least one feature is required".into());
        }
        if !(self.st_fraction > 0.0 && self.st_fraction < 1.0) {
            return Err(format!(
                "st_fraction {} must lie in (0, 1)",
                self.st_fraction
            ));
        }
        let st = self.st_count();
        if st == 0 || st >= self.n {
            return Err(format!("n = {} leaves no samples in one class", self.n));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err("separation must be non-negative".into());
        }
        if !(self.truncation.is_finite() && self.truncation > 0.0) {
            return Err("truncation must be positive".into());
        }
        for f in &self.features {
            if !(f.mean.is_finite() && f.sd.is_finite() && f.sd > 0.0 && f.direction.is_finite()) {
                return Err(format!(
                    "feature `{}` needs finite mean and positive sd",
                    f.name
                ));
            }
        }
        Ok(())
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= bound {
            return z;
        }
    }
}

/// Labelled synthetic credit data with ids `C0001..`, rows in random order.
pub fn simulate_credit(params: &CreditParams, seed: u64) -> std::result::Result<Dataset, String> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_st = params.st_count();
    let mut labels: Vec<Label> = (0..params.n)
        .map(|i| if i < n_st { Label::St } else { Label::Normal })
        .collect();
    labels.shuffle(&mut rng);
    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let shift = if label == Label::St {
                params.separation
            } else {
                0.0
            };
            let features = params
                .features
                .iter()
                .map(|f| {
                    let z = truncated_normal(&mut rng, params.truncation);
                    f.mean + f.sd * (z + shift * f.direction.signum())
                })
                .collect();
            Sample {
                id: format!("C{:04}", i + 1),
                features,
                label,
            }
        })
        .collect();
    let names = params.features.iter().map(|f| f.name.clone()).collect();
    Dataset::new(names, samples).map_err(|e| e.to_string())
}

fn default_clean() -> Option<CleanPolicy> {
    Some(CleanPolicy::default())
}

fn default_split() -> SplitMode {
    SplitMode::ByCount {
        test_counts: ClassCounts { normal: 18, st: 5 },
    }
}

fn default_eval_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub format_version: u32,
    /// Labelled CSV for `train` and `evaluate`.
    pub input: PathBuf,
    /// Where models, curves, summaries and reports are written.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// `null` disables outlier removal.
    #[serde(default = "default_clean")]
    pub clean: Option<CleanPolicy>,
    #[serde(default = "default_split")]
    pub split: SplitMode,
    #[serde(default)]
    pub bpnet: BpnetSettings,
    #[serde(default)]
    pub logit: FitConfig,
    #[serde(default)]
    pub grades: GradeConfig,
    #[serde(default)]
    pub weights: ConsensusWeights,
    #[serde(default = "default_eval_threshold")]
    pub eval_threshold: f64,
    /// Generator settings for `simulate credit`.
    #[serde(default)]
    pub credit: CreditParams,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, output_dir: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            format_version: CONFIG_VERSION,
            input: input.into(),
            output_dir: output_dir.into(),
            seed,
            clean: default_clean(),
            split: default_split(),
            bpnet: BpnetSettings::default(),
            logit: FitConfig::default(),
            grades: GradeConfig::default(),
            weights: ConsensusWeights::default(),
            eval_threshold: default_eval_threshold(),
            credit: CreditParams::default(),
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(json).at(Stage::Config)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.input.is_relative() {
            cfg.input = base.join(&cfg.input);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialisation is infallible")
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(PipelineError::new(Stage::Config, m));
        if self.format_version != CONFIG_VERSION {
            return err(format!(
                "format_version: unsupported version {}",
                self.format_version
            ));
        }
        if let Some(c) = &self.clean {
            if !(c.zscore_cutoff.is_finite() && c.zscore_cutoff > 0.0) {
                return err("clean.zscore_cutoff must be positive".into());
            }
        }
        self.bpnet
            .train_config(self.seed)
            .validate()
            .at(Stage::Config)?;
        self.bpnet.hidden_activation.validate().at(Stage::Config)?;
        self.bpnet.output_activation.validate().at(Stage::Config)?;
        self.logit.validate().at(Stage::Config)?;
        self.grades.validate().at(Stage::Config)?;
        for (name, w) in [("bpnet", self.weights.bpnet), ("logit", self.weights.logit)] {
            if !(w.is_finite() && w >= 0.0) {
                return err(format!("weights.{name} must be non-negative"));
            }
        }
        if self.weights.bpnet + self.weights.logit <= 0.0 {
            return err("weights must not both be zero".into());
        }
        if !(self.eval_threshold > 0.0 && self.eval_threshold < 1.0) {
            return err("eval_threshold must lie in (0, 1)".into());
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            mode: self.split,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCounts {
    #[serde(rename = "NORMAL")]
    pub normal: usize,
    #[serde(rename = "ST")]
    pub st: usize,
    pub total: usize,
}

impl PartitionCounts {
    pub fn of(data: &Dataset) -> Self {
        Self {
            normal: data.count(Label::Normal),
            st: data.count(Label::St),
            total: data.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: PartitionCounts,
    pub test: PartitionCounts,
}

/// Fitted preprocessing state written next to the models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub format_version: u32,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub normalizer: NormalizationSpec,
    pub allow_any_width: bool,
    pub removed_outliers: Vec<String>,
    pub split: SplitCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitSummary {
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub final_mse: f64,
    pub epochs: usize,
    pub status: TrainStatus,
    pub hidden_width: usize,
    pub removed_outliers: usize,
    pub split: SplitCounts,
    pub logit: LogitSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub threshold: f64,
    pub test_size: usize,
    pub bpnet: EvalMetrics,
    pub logit: EvalMetrics,
}

/// The cleaned and split data, before normalization.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub removed: Vec<String>,
}

/// Load, clean and split exactly as `train` and `evaluate` do.
pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let data = Dataset::load(&cfg.input).at(Stage::Load)?;
    info!("loaded {} samples with {} features", data.len(), data.dim());
    let (data, removed) = match &cfg.clean {
        Some(policy) => {
            let (cleaned, report) = dataprep::clean(&data, policy).at(Stage::Clean)?;
            info!("clean: removed {} samples", report.removed.len());
            (cleaned, report.removed.into_iter().map(|f| f.id).collect())
        }
        None => (data, Vec::new()),
    };
    let (train, test) = dataprep::stratified_split(&data, &cfg.split_spec()).at(Stage::Split)?;
    info!("split: {} train, {} test", train.len(), test.len());
    Ok(Prepared {
        train,
        test,
        removed,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)
        .map_err(|e| PipelineError::new(Stage::Write, format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| PipelineError::new(Stage::Write, format!("{}: {e}", dir.display())))
}

fn read(path: &Path, stage: Stage) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| PipelineError::new(stage, format!("{}: {e}", path.display())))
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisation is infallible");
    s.push('\n');
    s
}

/// What `simulate` should generate.
#[derive(Debug, Clone, PartialEq)]
pub enum SimulateKind {
    Arma {
        model: ArmaModel,
        n: usize,
        burn_in: usize,
    },
    Arch {
        model: ArchModel,
        n: usize,
    },
    Credit(CreditParams),
}

impl SimulateKind {
    pub fn name(&self) -> &'static str {
        match self {
            SimulateKind::Arma { .. } => "arma",
            SimulateKind::Arch { .. } => "arch",
            SimulateKind::Credit(_) => "credit",
        }
    }
}

/// Writes a simulated series (`value` column) or labelled credit CSV.
pub fn cmd_simulate(kind: &SimulateKind, seed: u64, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    match kind {
        SimulateKind::Arma { model, n, burn_in } => {
            let s = timeseries::arma_simulate(model, *n, *burn_in, seed).at(Stage::Simulate)?;
            s.save(out).at(Stage::Write)?;
        }
        SimulateKind::Arch { model, n } => {
            let s = timeseries::arch_simulate(model, *n, seed).at(Stage::Simulate)?;
            s.save(out).at(Stage::Write)?;
        }
        SimulateKind::Credit(params) => {
            let data = simulate_credit(params, seed).at(Stage::Simulate)?;
            info!(
                "credit: {} NORMAL, {} ST",
                data.count(Label::Normal),
                data.count(Label::St)
            );
            data.save(out).at(Stage::Write)?;
        }
    }
    info!("simulate {}: wrote {}", kind.name(), out.display());
    Ok(())
}

/// Fits both models and writes `bpnet.json`, `logit.json`,
/// `pipeline.json`, `history.csv` and `summary.json` to the output dir.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let normalizer = dataprep::fit_normalizer(&prepared.train).at(Stage::Normalize)?;
    let train = dataprep::apply_normalizer(&normalizer, &prepared.train).at(Stage::Normalize)?;

    let topology = cfg.bpnet.topology(train.dim()).at(Stage::Train)?;
    let tc = cfg.bpnet.train_config(cfg.seed);
    let net = bpnet::init_network(
        topology,
        cfg.bpnet.hidden_activation,
        cfg.bpnet.output_activation,
        tc.init_scale,
        cfg.seed,
    )
    .at(Stage::Train)?;
    let (net, history) = bpnet::train(&net, &train, &tc).at(Stage::Train)?;
    info!(
        "bpnet: {} epochs, final mse {} ({:?})",
        history.epochs(),
        history.final_mse(),
        history.status
    );

    let fit = logit::fit_logit(&train, &cfg.logit).at(Stage::Train)?;
    debug!(
        "logit: {} iterations, converged {}",
        fit.iterations, fit.converged
    );

    let split = SplitCounts {
        train: PartitionCounts::of(&prepared.train),
        test: PartitionCounts::of(&prepared.test),
    };
    let state = PipelineState {
        format_version: CONFIG_VERSION,
        seed: cfg.seed,
        feature_names: train.feature_names().to_vec(),
        normalizer,
        allow_any_width: cfg.bpnet.allow_any_width,
        removed_outliers: prepared.removed.clone(),
        split,
    };
    let summary = TrainSummary {
        seed: cfg.seed,
        final_mse: history.final_mse(),
        epochs: history.epochs(),
        status: history.status,
        hidden_width: net.r(),
        removed_outliers: prepared.removed.len(),
        split,
        logit: LogitSummary {
            iterations: fit.iterations,
            converged: fit.converged,
            log_likelihood: *fit.trace.last().expect("trace holds the starting value"),
        },
    };

    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    write(&dir.join("bpnet.json"), &(net.to_json() + "\n"))?;
    write(&dir.join("logit.json"), &to_pretty(&fit.model))?;
    write(&dir.join("pipeline.json"), &to_pretty(&state))?;
    write(&dir.join("history.csv"), &history.to_csv())?;
    write(&dir.join("summary.json"), &to_pretty(&summary))?;
    Ok(summary)
}

/// Stored models and preprocessing state.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub state: PipelineState,
    pub bpnet: Network,
    pub logit: LogitModel,
}

impl TrainedModels {
    pub fn load(dir: &Path, stage: Stage) -> Result<Self> {
        let schema = |file: &str, e: &dyn fmt::Display| {
            PipelineError::new(stage, format!("{}: {e}", dir.join(file).display()))
        };
        let state: PipelineState = serde_json::from_str(&read(&dir.join("pipeline.json"), stage)?)
            .map_err(|e| schema("pipeline.json", &e))?;
        let bpnet = Network::from_json(
            &read(&dir.join("bpnet.json"), stage)?,
            state.allow_any_width,
        )
        .map_err(|e| schema("bpnet.json", &e))?;
        let logit: LogitModel = serde_json::from_str(&read(&dir.join("logit.json"), stage)?)
            .map_err(|e| schema("logit.json", &e))?;
        logit.validate().map_err(|e| schema("logit.json", &e))?;
        let dim = state.normalizer.dim();
        if bpnet.n() != dim || logit.dim() != dim {
            return Err(PipelineError::new(
                stage,
                format!(
                    "models expect {} and {} features but the normalizer has {dim}",
                    bpnet.n(),
                    logit.dim()
                ),
            ));
        }
        Ok(Self {
            state,
            bpnet,
            logit,
        })
    }

    pub fn models(&self, weights: ConsensusWeights) -> Models<'_> {
        Models::new(Some(&self.bpnet), Some(&self.logit)).with_weights(weights.bpnet, weights.logit)
    }
}

/// Scores the stored models on the reproduced test partition and writes
/// `metrics.json`. `models_dir` defaults to the config's output dir.
pub fn cmd_evaluate(cfg: &PipelineConfig, models_dir: Option<&Path>) -> Result<EvaluationReport> {
    cfg.validate()?;
    let trained = TrainedModels::load(models_dir.unwrap_or(&cfg.output_dir), Stage::Evaluate)?;
    let prepared = prepare(cfg)?;
    let test = dataprep::apply_normalizer(&trained.state.normalizer, &prepared.test)
        .at(Stage::Normalize)?;
    let report = EvaluationReport {
        threshold: cfg.eval_threshold,
        test_size: test.len(),
        bpnet: warning::evaluate(&test, &trained.bpnet, cfg.eval_threshold).at(Stage::Evaluate)?,
        logit: warning::evaluate(&test, &trained.logit, cfg.eval_threshold).at(Stage::Evaluate)?,
    };
    ensure_dir(&cfg.output_dir)?;
    write(&cfg.output_dir.join("metrics.json"), &to_pretty(&report))?;
    Ok(report)
}

/// Grades every row of an unlabelled CSV and writes `warnings.csv` and
/// `warnings.json`, most at-risk first.
pub fn cmd_assess(
    cfg: &PipelineConfig,
    input: &Path,
    models_dir: Option<&Path>,
) -> Result<Vec<WarningReport>> {
    cfg.validate()?;
    let trained = TrainedModels::load(models_dir.unwrap_or(&cfg.output_dir), Stage::Assess)?;
    let obs = Observations::load(input).at(Stage::Load)?;
    if obs.feature_names.len() != trained.state.normalizer.dim() {
        return Err(PipelineError::new(
            Stage::Normalize,
            format!(
                "input has {} features, the stored normalizer expects {}",
                obs.feature_names.len(),
                trained.state.normalizer.dim()
            ),
        ));
    }
    let rows = obs
        .rows
        .iter()
        .map(|(id, x)| Ok((id.as_str(), trained.state.normalizer.transform(x)?)))
        .collect::<std::result::Result<Vec<_>, dataprep::DataError>>()
        .at(Stage::Normalize)?;
    let reports = warning::warn_batch(
        rows.iter().map(|(id, x)| (*id, x.as_slice())),
        &trained.models(cfg.weights),
        &cfg.grades,
    )
    .at(Stage::Assess)?;

    ensure_dir(&cfg.output_dir)?;
    let mut csv_buf = Vec::new();
    warning::write_reports_csv(&reports, &mut csv_buf).at(Stage::Write)?;
    write(
        &cfg.output_dir.join("warnings.csv"),
        &String::from_utf8(csv_buf).expect("csv output is utf-8"),
    )?;
    write(
        &cfg.output_dir.join("warnings.json"),
        &(warning::reports_to_json(&reports) + "\n"),
    )?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_credit_set_has_121_to_14_classes() {
        let d = simulate_credit(&CreditParams::default(), 3).unwrap();
        assert_eq!(d.len(), 135);
        assert_eq!(d.count(Label::Normal), 121);
        assert_eq!(d.count(Label::St), 14);
        assert_eq!(d.dim(), 6);
    }

    #[test]
    fn credit_simulation_is_deterministic() {
        let p = CreditParams::default();
        assert_eq!(
            simulate_credit(&p, 9).unwrap(),
            simulate_credit(&p, 9).unwrap()
        );
        assert_ne!(
            simulate_credit(&p, 9).unwrap(),
            simulate_credit(&p, 10).unwrap()
        );
    }

    #[test]
    fn credit_features_stay_inside_truncation() {
        let p = CreditParams::default();
        let d = simulate_credit(&p, 1).unwrap();
        for s in d.samples() {
            let shift = if s.label == Label::St {
                p.separation
            } else {
                0.0
            };
            for (v, f) in s.features.iter().zip(&p.features) {
                let z = (v - f.mean) / f.sd - shift * f.direction;
                assert!(z.abs() <= p.truncation + 1e-9, "{} {}: {z}", s.id, f.name);
            }
        }
    }

    #[test]
    fn invalid_credit_params_rejected() {
        let p = CreditParams {
            n: 3,
            ..CreditParams::default()
        };
        assert!(simulate_credit(&p, 0).is_err());
        let mut p = CreditParams::default();
        p.features.clear();
        assert!(simulate_credit(&p, 0).is_err());
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg =
            PipelineConfig::from_json(r#"{"format_version":1,"input":"a.csv","output_dir":"out"}"#)
                .unwrap();
        assert_eq!(cfg, PipelineConfig::new("a.csv", "out", 0));
        let round = PipelineConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn config_errors_are_tagged() {
        let err = PipelineConfig::from_json(r#"{"format_version":2,"input":"a","output_dir":"o"}"#)
            .unwrap_err();
        assert_eq!(err.stage, Stage::Config);
        assert!(err.to_string().starts_with("ERROR config: format_version"));

        let err = PipelineConfig::from_json(
            r#"{"format_version":1,"input":"a","output_dir":"o","bogus":1}"#,
        )
        .unwrap_err();
        assert!(err.message.contains("bogus"), "{err}");

        let err = PipelineConfig::from_json(
            r#"{"format_version":1,"input":"a","output_dir":"o","grades":{"watch":0.6}}"#,
        )
        .unwrap_err();
        assert!(err.message.contains("watch"), "{err}");
    }

    #[test]
    fn null_clean_disables_cleaning() {
        let cfg = PipelineConfig::from_json(
            r#"{"format_version":1,"input":"a","output_dir":"o","clean":null}"#,
        )
        .unwrap();
        assert!(cfg.clean.is_none());
    }

    #[test]
    fn error_display_is_single_line() {
        let e = PipelineError::new(Stage::Load, "bad\nthing");
        assert_eq!(e.to_string(), "ERROR load: bad thing");
    }
}
