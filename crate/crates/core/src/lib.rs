//! Order flow imbalance forecasting with a VAR model, a feedforward
//! network, and their residual hybrid.
//!
//! - [`data`]: counts series I/O, trade bucketing, synthetic generator
//! - [`ofi`]: the imbalance measure and BUY/SELL/HOLD signal rule
//! - [`var`]: VAR(p) estimation, lag selection, forecasting
//! - [`nn`]: multilayer perceptron, training, gradient checking
//! - [`hybrid`]: VAR-only, FNN-only and hybrid pipelines
//! - [`eval`]: error and signal metrics, comparison tables
//! - [`sweep`]: hyperparameter grid / Latin hypercube sweeps

pub mod data;
pub mod error;
pub mod eval;
pub mod hybrid;
pub mod nn;
pub mod ofi;
pub mod seed;
pub mod sweep;
pub mod var;

pub use data::{OrderCounts, Side, SyntheticSpec, TradeEvent};
pub use error::{OfiError, Result};
pub use eval::EvalReport;
pub use hybrid::{ModelBundle, ModelKind, PipelineConfig, PredictionRecord};
pub use nn::{Activation, FnnModel, FnnTopology, Optimizer, TrainConfig, TrainingTrace};
pub use ofi::{OfiParams, OfiSeries, Signal};
pub use sweep::{SweepConfig, SweepResult, SweepSpace};
pub use var::{Criterion, FitDiagnostics, VarModel};
