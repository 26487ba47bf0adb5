use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{FnnTopology, Gradients, Network, Workspace};
use super::scaler::Scaler;
use super::FnnModel;
use crate::error::{OfiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

impl Optimizer {
    pub const ALL: [Optimizer; 2] = [Optimizer::Adam, Optimizer::Sgd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
        }
    }

    /// Conventional out-of-the-box step size for each optimizer.
    pub fn default_learning_rate(&self) -> f64 {
        match self {
            Optimizer::Adam => 0.001,
            Optimizer::Sgd => 0.01,
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Optimizer {
    type Err = OfiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adam" => Ok(Optimizer::Adam),
            "sgd" => Ok(Optimizer::Sgd),
            other => Err(OfiError::invalid("optimizer", format!("`{other}`"))),
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub early_stopping: bool,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            optimizer: Optimizer::Adam,
            learning_rate: 0.001,
            early_stopping: true,
            patience: 5,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(OfiError::invalid("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(OfiError::invalid("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(OfiError::invalid("learning_rate", "must be positive"));
        }
        if self.early_stopping {
            if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
                return Err(OfiError::invalid("validation_fraction", "must lie in (0, 1)"));
            }
            if self.patience == 0 {
                return Err(OfiError::invalid("patience", "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Per-epoch losses, in the network's standardized target space.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub train_loss: Vec<f64>,
    /// `None` when early stopping (and with it the validation slice) is off.
    pub val_loss: Vec<Option<f64>>,
    /// Number of epochs actually run.
    pub stopped_epoch: usize,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainingTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_loss")?;
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            match v {
                Some(v) => writeln!(w, "{},{t},{v}", i + 1)?,
                None => writeln!(w, "{},{t},", i + 1)?,
            }
        }
        w.flush()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| OfiError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| OfiError::io(path, e))
    }
}

enum OptimizerState {
    Sgd,
    Adam {
        m: Vec<f64>,
        v: Vec<f64>,
        step: i32,
    },
}

impl OptimizerState {
    fn new(kind: Optimizer, n: usize) -> Self {
        match kind {
            Optimizer::Sgd => OptimizerState::Sgd,
            Optimizer::Adam => OptimizerState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
            },
        }
    }

    fn apply(&mut self, net: &mut Network, grads: &Gradients, lr: f64) {
        match self {
            OptimizerState::Sgd => {
                for (layer, g) in net.layers.iter_mut().zip(grads) {
                    for (w, d) in layer.weights.iter_mut().zip(&g.weights) {
                        *w -= lr * d;
                    }
                    for (b, d) in layer.biases.iter_mut().zip(&g.biases) {
                        *b -= lr * d;
                    }
                }
            }
            OptimizerState::Adam { m, v, step } => {
                *step += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(*step);
                let bc2 = 1.0 - ADAM_BETA2.powi(*step);
                let mut k = 0;
                for (layer, g) in net.layers.iter_mut().zip(grads) {
                    let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
                    let grad = g.weights.iter().chain(g.biases.iter());
                    for (p, &d) in params.zip(grad) {
                        m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * d;
                        v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * d * d;
                        let m_hat = m[k] / bc1;
                        let v_hat = v[k] / bc2;
                        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
                        k += 1;
                    }
                }
            }
        }
    }
}

fn mean_loss(net: &Network, inputs: &[Vec<f64>], targets: &[Vec<f64>], ws: &mut Workspace) -> f64 {
    let mut sse = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        net.forward_into(x, ws);
        sse += ws
            .output()
            .iter()
            .zip(t)
            .map(|(y, t)| (y - t) * (y - t))
            .sum::<f64>();
    }
    sse / (inputs.len() * targets[0].len()) as f64
}

fn warn_if_degenerate(inputs: &[Vec<f64>], targets: &[Vec<f64>]) {
    let same_inputs = inputs.windows(2).all(|w| w[0] == w[1]);
    let same_targets = targets.windows(2).all(|w| w[0] == w[1]);
    if inputs.len() > 1 && same_inputs && !same_targets {
        log::warn!(
            "all {} training inputs are identical but targets differ; the network can only learn their mean",
            inputs.len()
        );
    }
}

/// Trains a network by mini-batch gradient descent on MSE.
///
/// Inputs and targets are standardized internally with scalers fitted on
/// the training slice; the returned model undoes the scaling in
/// [`FnnModel::predict`]. With early stopping on, the chronologically last
/// `validation_fraction` of the samples is held out, the best-validation
/// parameters are restored at the end, and training stops after
/// `patience` epochs without improvement.
pub fn train(
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    topology: &FnnTopology,
    config: &TrainConfig,
) -> Result<(FnnModel, TrainingTrace)> {
    config.validate()?;
    topology.validate()?;
    if inputs.is_empty() {
        return Err(OfiError::EmptyInput);
    }
    if inputs.len() != targets.len() {
        return Err(OfiError::LengthMismatch {
            left: inputs.len(),
            right: targets.len(),
        });
    }
    for (x, t) in inputs.iter().zip(targets) {
        if x.len() != topology.input_dim {
            return Err(OfiError::DimensionMismatch {
                expected: topology.input_dim,
                got: x.len(),
            });
        }
        if t.len() != topology.output_dim {
            return Err(OfiError::DimensionMismatch {
                expected: topology.output_dim,
                got: t.len(),
            });
        }
    }

    let n = inputs.len();
    let n_val = if config.early_stopping {
        if n < 2 {
            return Err(OfiError::SeriesTooShort { needed: 2, got: n });
        }
        ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let n_train = n - n_val;
    warn_if_degenerate(&inputs[..n_train], &targets[..n_train]);

    let input_scaler = Scaler::fit(&inputs[..n_train])?;
    let target_scaler = Scaler::fit(&targets[..n_train])?;
    let xs: Vec<Vec<f64>> = inputs.iter().map(|x| input_scaler.transform(x)).collect();
    let ys: Vec<Vec<f64>> = targets.iter().map(|t| target_scaler.transform(t)).collect();
    let (train_x, val_x) = xs.split_at(n_train);
    let (train_y, val_y) = ys.split_at(n_train);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Network::init(topology.clone(), &mut rng)?;
    let mut opt = OptimizerState::new(config.optimizer, net.num_params());
    let mut ws = Workspace::new(topology);
    let mut grads = net.zero_gradients();
    let mut order: Vec<usize> = (0..n_train).collect();

    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut val_loss = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            for g in grads.iter_mut() {
                g.weights.iter_mut().for_each(|v| *v = 0.0);
                g.biases.iter_mut().for_each(|v| *v = 0.0);
            }
            let scale = 1.0 / (batch.len() * topology.output_dim) as f64;
            for &i in batch {
                net.accumulate(&train_x[i], &train_y[i], scale, &mut ws, &mut grads);
            }
            opt.apply(&mut net, &grads, config.learning_rate);
        }

        train_loss.push(mean_loss(&net, train_x, train_y, &mut ws));
        if config.early_stopping {
            let v = mean_loss(&net, val_x, val_y, &mut ws);
            val_loss.push(Some(v));
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, net.params()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    break;
                }
            }
        } else {
            val_loss.push(None);
        }
    }

    let stopped_epoch = train_loss.len();
    let best_epoch = match best {
        Some((_, epoch, params)) => {
            net.set_params(&params)?;
            epoch
        }
        None => stopped_epoch,
    };

    let model = FnnModel {
        network: net,
        input_scaler,
        target_scaler,
    };
    Ok((
        model,
        TrainingTrace {
            train_loss,
            val_loss,
            stopped_epoch,
            best_epoch,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::Activation;

    fn linear_data(n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64 * 4.0 - 2.0]).collect();
        let ys = xs.iter().map(|x| vec![2.0 * x[0] + 1.0]).collect();
        (xs, ys)
    }

    #[test]
    fn learns_a_line() {
        let (xs, ys) = linear_data(200);
        let topo = FnnTopology::new(1, vec![4], 1, Activation::Relu).unwrap();
        let config = TrainConfig {
            early_stopping: false,
            learning_rate: 0.01,
            seed: 3,
            ..Default::default()
        };
        let (model, trace) = train(&xs, &ys, &topo, &config).unwrap();
        assert_eq!(trace.stopped_epoch, 50);
        let last = *trace.train_loss.last().unwrap();
        assert!(last < 1e-3, "final scaled training MSE {last}");
        let y = model.predict(&[0.5]).unwrap()[0];
        assert!((y - 2.0).abs() < 0.1, "{y}");
    }

    #[test]
    fn rejects_invalid_config() {
        let (xs, ys) = linear_data(10);
        let topo = FnnTopology::new(1, vec![4], 1, Activation::Relu).unwrap();
        for bad in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { validation_fraction: 1.0, ..Default::default() },
        ] {
            assert!(train(&xs, &ys, &topo, &bad).is_err());
        }
        let one = TrainConfig::default();
        assert!(train(&xs[..1], &ys[..1], &topo, &one).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (xs, ys) = linear_data(64);
        let topo = FnnTopology::new(1, vec![8, 4], 1, Activation::Tanh).unwrap();
        let config = TrainConfig { epochs: 5, seed: 9, ..Default::default() };
        let (a, ta) = train(&xs, &ys, &topo, &config).unwrap();
        let (b, tb) = train(&xs, &ys, &topo, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = train(&xs, &ys, &topo, &TrainConfig { seed: 10, ..config }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn early_stopping_keeps_best_epoch() {
        // Noisy targets so validation loss eventually stops improving.
        let xs: Vec<Vec<f64>> = (0..120).map(|i| vec![(i as f64 * 0.37).sin()]).collect();
        let ys: Vec<Vec<f64>> = (0..120).map(|i| vec![((i * 7919) % 13) as f64]).collect();
        let topo = FnnTopology::new(1, vec![16], 1, Activation::Relu).unwrap();
        let config = TrainConfig {
            epochs: 50,
            learning_rate: 0.01,
            patience: 3,
            seed: 1,
            ..Default::default()
        };
        let (model, trace) = train(&xs, &ys, &topo, &config).unwrap();
        let vals: Vec<f64> = trace.val_loss.iter().map(|v| v.unwrap()).collect();
        let best = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(vals[trace.best_epoch - 1], best);
        assert!(trace.stopped_epoch <= 50);
        if trace.stopped_epoch < 50 {
            assert_eq!(trace.stopped_epoch - trace.best_epoch, 3);
        }
        // Restored parameters reproduce the best validation loss.
        let n_val = 24;
        let scaled_mse: f64 = xs[96..]
            .iter()
            .zip(&ys[96..])
            .map(|(x, y)| {
                let p = model.predict(x).unwrap()[0];
                let d = (p - y[0]) / model.target_scaler.scale[0];
                d * d
            })
            .sum::<f64>()
            / n_val as f64;
        assert!((scaled_mse - best).abs() < 1e-9 * (1.0 + best));
    }

    #[test]
    fn full_batch_sgd_descends_on_linear_model() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![0.3 * x[0] - x[1] + 0.5 + ((x[0] * 1.7).sin())]).collect();
        let topo = FnnTopology::new(2, vec![], 1, Activation::Relu).unwrap();
        let config = TrainConfig {
            epochs: 40,
            batch_size: 40,
            optimizer: Optimizer::Sgd,
            learning_rate: 1e-3,
            early_stopping: false,
            seed: 5,
            ..Default::default()
        };
        let (_, trace) = train(&xs, &ys, &topo, &config).unwrap();
        for w in trace.train_loss.windows(2) {
            assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn trace_csv_layout() {
        let trace = TrainingTrace {
            train_loss: vec![0.5, 0.25],
            val_loss: vec![Some(0.75), None],
            stopped_epoch: 2,
            best_epoch: 1,
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_loss,val_loss\n1,0.5,0.75\n2,0.25,\n"
        );
    }

    #[test]
    fn optimizer_names() {
        assert_eq!("Adam".parse::<Optimizer>().unwrap(), Optimizer::Adam);
        assert_eq!("sgd".parse::<Optimizer>().unwrap(), Optimizer::Sgd);
        assert!("rmsprop".parse::<Optimizer>().is_err());
    }
}
