//! Credit-risk early warning toolkit.
//!
//! The crate is organised the way a warning system is run:
//!
//! - [`dataprep`]: CSV ingestion, anomaly purging, min-max normalisation and
//!   stratified splitting (the data processing stage).
//! - [`bpnet`]: a three-layer backpropagation network with selectable
//!   activations, MSE training and finite-difference gradient checking.
//! - [`logit`]: logistic-regression default probabilities fitted by maximum
//!   likelihood, plus a multicollinearity diagnostic.
//! - [`timeseries`]: ARMA(p, q) and ARCH(p) simulation, estimation and
//!   forecasting baselines.
//! - [`warning`]: risk grading, evaluation metrics and warning reports (the
//!   analysis and decision stages).
//! - [`pipeline`]: config-driven `simulate` / `train` / `evaluate` / `assess`
//!   commands, shared by the `riskwarn` binary and the examples.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod bpnet;
pub mod dataprep;
mod linalg;
pub mod logit;
pub mod pipeline;
pub mod timeseries;
pub mod warning;

pub use bpnet::{Activation, ActivationKind, BatchMode, Network, TrainConfig, TrainHistory};
pub use dataprep::{Dataset, Label, NormalizationSpec, Sample, SplitSpec};
pub use logit::{FitConfig, LogitModel};
pub use timeseries::{ArchModel, ArmaModel, TimeSeries};
pub use warning::{EvalMetrics, GradeConfig, Models, RiskGrade, RiskModel, WarningReport};
