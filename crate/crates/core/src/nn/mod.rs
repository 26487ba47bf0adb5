//! Multilayer perceptron trained by mini-batch gradient descent.

pub mod gradcheck;
pub mod network;
pub mod scaler;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OfiError, Result};

pub use gradcheck::{compare_gradients, gradient_check, GradCheckReport};
pub use network::{loss, Activation, Dense, FnnTopology, Gradients, Network};
pub use scaler::Scaler;
pub use train::{train, Optimizer, TrainConfig, TrainingTrace};

/// A network together with the standardization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnModel {
    pub network: Network,
    pub input_scaler: Scaler,
    pub target_scaler: Scaler,
}

impl FnnModel {
    /// Wraps a network with identity scalers, so inputs and outputs are used
    /// as-is.
    pub fn raw(network: Network) -> Self {
        let (d, o) = (network.topology.input_dim, network.topology.output_dim);
        Self {
            network,
            input_scaler: Scaler::identity(d),
            target_scaler: Scaler::identity(o),
        }
    }

    pub fn topology(&self) -> &FnnTopology {
        &self.network.topology
    }

    /// Scale input, run the network, map the output back to target units.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_scaler.dim() {
            return Err(OfiError::DimensionMismatch {
                expected: self.input_scaler.dim(),
                got: x.len(),
            });
        }
        let y = self.network.forward(&self.input_scaler.transform(x))?;
        Ok(self.target_scaler.inverse(&y))
    }

    /// Makes [`predict`](Self::predict) return exactly zero for every
    /// input: zeroes the output layer and the target offset.
    pub fn silence_output(&mut self) {
        if let Some(last) = self.network.layers.last_mut() {
            last.weights.iter_mut().for_each(|w| *w = 0.0);
            last.biases.iter_mut().for_each(|b| *b = 0.0);
        }
        self.target_scaler.mean.iter_mut().for_each(|m| *m = 0.0);
    }

    pub fn validate(&self) -> Result<()> {
        self.network.check_shapes()?;
        self.input_scaler.validate()?;
        self.target_scaler.validate()?;
        let topo = self.topology();
        if self.input_scaler.dim() != topo.input_dim || self.target_scaler.dim() != topo.output_dim {
            return Err(OfiError::ModelFormat(format!(
                "scaler dimensions do not match topology {}",
                topo.label()
            )));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let file = FnnModelFile {
            format: FNN_FORMAT.to_string(),
            version: FNN_FORMAT_VERSION,
            topology: self.network.topology.clone(),
            input_scaler: self.input_scaler.clone(),
            target_scaler: self.target_scaler.clone(),
            layers: self
                .network
                .layers
                .iter()
                .map(|l| LayerFile {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: l.weights.clone(),
                    biases: l.biases.clone(),
                })
                .collect(),
        };
        toml::to_string(&file).map_err(|e| OfiError::ModelFormat(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: FnnModelFile =
            toml::from_str(text).map_err(|e| OfiError::ModelFormat(e.to_string()))?;
        if file.format != FNN_FORMAT {
            return Err(OfiError::ModelFormat(format!("unexpected format `{}`", file.format)));
        }
        if file.version != FNN_FORMAT_VERSION {
            return Err(OfiError::ModelFormat(format!("unsupported version {}", file.version)));
        }
        let model = FnnModel {
            network: Network {
                topology: file.topology,
                layers: file
                    .layers
                    .into_iter()
                    .map(|l| Dense {
                        inputs: l.inputs,
                        outputs: l.outputs,
                        weights: l.weights,
                        biases: l.biases,
                    })
                    .collect(),
            },
            input_scaler: file.input_scaler,
            target_scaler: file.target_scaler,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()?).map_err(|e| OfiError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| OfiError::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

const FNN_FORMAT: &str = "ofi-fnn-model";
const FNN_FORMAT_VERSION: u32 = 1;

/// On-disk layout; `weights` is row-major `outputs × inputs`.
#[derive(Serialize, Deserialize)]
struct FnnModelFile {
    format: String,
    version: u32,
    topology: FnnTopology,
    input_scaler: Scaler,
    target_scaler: Scaler,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}
