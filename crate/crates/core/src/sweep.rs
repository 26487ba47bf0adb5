//! Hyperparameter sweeps over lag, hidden architecture, activation and
//! optimizer, with one holdout evaluation per (configuration, dataset) cell.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OfiError, Result};
use crate::hybrid::{evaluate_holdout, ModelKind, PipelineConfig};
use crate::nn::{Activation, Optimizer};
use crate::seed;
use crate::var::Obs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpace {
    pub lags: Vec<usize>,
    /// Hidden widths only; the head is added by the pipeline.
    pub architectures: Vec<Vec<usize>>,
    pub activations: Vec<Activation>,
    pub optimizers: Vec<Optimizer>,
}

impl Default for SweepSpace {
    fn default() -> Self {
        Self {
            lags: vec![1, 2, 5, 10],
            architectures: vec![
                vec![128, 64],
                vec![32, 16],
                vec![32, 32],
                vec![128, 64, 32],
                vec![64, 32, 16],
            ],
            activations: Activation::ALL.to_vec(),
            optimizers: Optimizer::ALL.to_vec(),
        }
    }
}

impl SweepSpace {
    pub fn validate(&self) -> Result<()> {
        if self.lags.is_empty() || self.architectures.is_empty() || self.activations.is_empty() || self.optimizers.is_empty() {
            return Err(OfiError::invalid("sweep space", "every axis needs at least one value"));
        }
        if self.lags.contains(&0) {
            return Err(OfiError::invalid("lags", "must be at least 1"));
        }
        if self.architectures.iter().any(|a| a.is_empty() || a.contains(&0)) {
            return Err(OfiError::invalid("architectures", "widths must be positive"));
        }
        Ok(())
    }

    pub fn cardinality(&self) -> usize {
        self.lags.len() * self.architectures.len() * self.activations.len() * self.optimizers.len()
    }

    fn axis_sizes(&self) -> [usize; 4] {
        [
            self.lags.len(),
            self.architectures.len(),
            self.activations.len(),
            self.optimizers.len(),
        ]
    }

    fn config_at(&self, idx: [usize; 4]) -> SweepConfig {
        SweepConfig {
            lag: self.lags[idx[0]],
            hidden: self.architectures[idx[1]].clone(),
            activation: self.activations[idx[2]],
            optimizer: self.optimizers[idx[3]],
        }
    }

    /// Axis positions of grid entry `i` (lag slowest, optimizer fastest).
    fn unravel(&self, mut i: usize) -> [usize; 4] {
        let sizes = self.axis_sizes();
        let mut out = [0; 4];
        for axis in (0..4).rev() {
            out[axis] = i % sizes[axis];
            i /= sizes[axis];
        }
        out
    }
}

/// One point of the space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SweepConfig {
    pub lag: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: Optimizer,
}

impl SweepConfig {
    /// `"32-16-2"`: hidden widths plus the head width of `kind`.
    pub fn architecture_label(&self, kind: ModelKind) -> String {
        let head = if kind == ModelKind::Hybrid { 2 } else { 1 };
        let mut parts: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        parts.push(head.to_string());
        parts.join("-")
    }

    /// Pipeline for this point: `q = p`, the optimizer's default learning
    /// rate unless `learning_rate` overrides it.
    pub fn pipeline(&self, base: &PipelineConfig, learning_rate: Option<f64>, seed: u64) -> PipelineConfig {
        let mut config = base.clone();
        config.var_lag = self.lag;
        config.fnn_input_lags = self.lag;
        config.hidden = self.hidden.clone();
        config.activation = self.activation;
        config.train.optimizer = self.optimizer;
        config.train.learning_rate = learning_rate.unwrap_or_else(|| self.optimizer.default_learning_rate());
        config.train.seed = seed;
        config
    }
}

/// Parses `"32,16"` or `"32-16"` into hidden widths.
pub fn parse_architecture(s: &str) -> Result<Vec<usize>> {
    let widths = s
        .split([',', '-'])
        .map(|w| w.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| OfiError::invalid("architecture", format!("`{s}`: {e}")))?;
    if widths.is_empty() || widths.contains(&0) {
        return Err(OfiError::invalid("architecture", format!("`{s}`: widths must be positive")));
    }
    Ok(widths)
}

/// Full grid in lexicographic order of (lag, architecture, activation,
/// optimizer), following the order of values within each axis.
pub fn enumerate_grid(space: &SweepSpace) -> Vec<SweepConfig> {
    (0..space.cardinality()).map(|i| space.config_at(space.unravel(i))).collect()
}

/// `k` distinct grid points whose per-axis value counts are as balanced as
/// `k` allows (no value used more than `ceil(k / axis_len)` times when that
/// is achievable). Deterministic in `seed`.
pub fn lhs_sample(space: &SweepSpace, k: usize, seed: u64) -> Result<Vec<SweepConfig>> {
    space.validate()?;
    let total = space.cardinality();
    if k == 0 || k > total {
        return Err(OfiError::invalid("sample count", format!("{k} not in 1..={total}")));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let sizes = space.axis_sizes();
    let caps: Vec<usize> = sizes.iter().map(|&m| k.div_ceil(m)).collect();
    let mut counts: Vec<Vec<usize>> = sizes.iter().map(|&m| vec![0; m]).collect();
    let mut taken = vec![false; total];
    let mut chosen = Vec::with_capacity(k);

    for &i in &order {
        if chosen.len() == k {
            break;
        }
        let idx = space.unravel(i);
        if (0..4).all(|a| counts[a][idx[a]] < caps[a]) {
            (0..4).for_each(|a| counts[a][idx[a]] += 1);
            taken[i] = true;
            chosen.push(i);
        }
    }
    // caps can block the last few picks; fill in permutation order
    for &i in &order {
        if chosen.len() == k {
            break;
        }
        if !taken[i] {
            taken[i] = true;
            chosen.push(i);
        }
    }
    Ok(chosen.into_iter().map(|i| space.config_at(space.unravel(i))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub kind: ModelKind,
    /// Source of every setting not varied by the sweep.
    pub base: PipelineConfig,
    /// `None` uses each optimizer's default learning rate.
    pub learning_rate: Option<f64>,
    pub train_fraction: f64,
    pub master_seed: u64,
    pub parallel: bool,
    /// Wall-clock timing makes the CSV non-reproducible, so it is opt-in.
    pub record_timing: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            kind: ModelKind::Hybrid,
            base: PipelineConfig::default(),
            learning_rate: None,
            train_fraction: 0.8,
            master_seed: 0,
            parallel: true,
            record_timing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
    pub accuracy: f64,
    pub precision: f64,
}

/// One (configuration, dataset) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config_index: usize,
    pub config: SweepConfig,
    pub architecture: String,
    pub dataset: String,
    /// `None` when the cell failed; see `status`.
    pub metrics: Option<CellMetrics>,
    pub runtime_s: Option<f64>,
    pub status: String,
    pub seed: u64,
}

pub struct Dataset<'a> {
    pub name: &'a str,
    pub obs: &'a [Obs],
}

fn run_cell(
    config_index: usize,
    config: &SweepConfig,
    dataset_index: usize,
    dataset: &Dataset<'_>,
    options: &SweepOptions,
) -> SweepResult {
    let seed = seed::derive(options.master_seed, &[config_index as u64, dataset_index as u64]);
    let pipeline = config.pipeline(&options.base, options.learning_rate, seed);
    let started = Instant::now();
    let outcome = evaluate_holdout(options.kind, dataset.obs, &pipeline, options.train_fraction, dataset.name);
    let elapsed = started.elapsed().as_secs_f64();
    let (metrics, status) = match outcome {
        Ok(o) => (
            Some(CellMetrics {
                mse: o.report.mse,
                mae: o.report.mae,
                r2: o.report.r2,
                accuracy: o.report.accuracy,
                precision: o.report.precision,
            }),
            "ok".to_string(),
        ),
        Err(e) => {
            log::warn!("cell {config_index}/{} failed: {e}", dataset.name);
            (None, format!("error: {e}"))
        }
    };
    SweepResult {
        config_index,
        config: config.clone(),
        architecture: config.architecture_label(options.kind),
        dataset: dataset.name.to_string(),
        metrics,
        runtime_s: options.record_timing.then_some(elapsed),
        status,
        seed,
    }
}

/// Evaluates every (configuration, dataset) pair. Rows come back in
/// configuration-major order whatever the scheduling; each cell's seed
/// depends only on the master seed and its indices.
pub fn run_sweep(configs: &[SweepConfig], datasets: &[Dataset<'_>], options: &SweepOptions) -> Result<Vec<SweepResult>> {
    if configs.is_empty() || datasets.is_empty() {
        return Err(OfiError::EmptyInput);
    }
    options.base.validate()?;
    let cells: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..datasets.len()).map(move |d| (c, d)))
        .collect();
    let run = |&(c, d): &(usize, usize)| run_cell(c, &configs[c], d, &datasets[d], options);
    Ok(if options.parallel {
        cells.par_iter().map(run).collect()
    } else {
        cells.iter().map(run).collect()
    })
}

pub const RESULTS_HEADER: &str =
    "lag,architecture,activation,optimizer,dataset,mse,mae,r2,accuracy,precision,runtime_s,status,seed";

#[derive(Serialize, Deserialize)]
struct ResultRow {
    lag: usize,
    architecture: String,
    activation: Activation,
    optimizer: Optimizer,
    dataset: String,
    mse: Option<f64>,
    mae: Option<f64>,
    r2: Option<f64>,
    accuracy: Option<f64>,
    precision: Option<f64>,
    runtime_s: Option<f64>,
    status: String,
    seed: u64,
}

pub fn write_results_csv<W: Write>(w: W, results: &[SweepResult]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for r in results {
        let m = r.metrics;
        writer.serialize(ResultRow {
            lag: r.config.lag,
            architecture: r.architecture.clone(),
            activation: r.config.activation,
            optimizer: r.config.optimizer,
            dataset: r.dataset.clone(),
            mse: m.map(|m| m.mse),
            mae: m.map(|m| m.mae),
            r2: m.map(|m| m.r2),
            accuracy: m.map(|m| m.accuracy),
            precision: m.map(|m| m.precision),
            runtime_s: r.runtime_s,
            status: r.status.clone(),
            seed: r.seed,
        })?;
    }
    writer.flush().map_err(|e| OfiError::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mse,
    Mae,
    R2,
    Accuracy,
    Precision,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Mse, Metric::Mae, Metric::R2, Metric::Accuracy, Metric::Precision];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Mae => "mae",
            Metric::R2 => "r2",
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
        }
    }

    pub fn lower_is_better(&self) -> bool {
        matches!(self, Metric::Mse | Metric::Mae)
    }

    pub fn of(&self, m: &CellMetrics) -> f64 {
        match self {
            Metric::Mse => m.mse,
            Metric::Mae => m.mae,
            Metric::R2 => m.r2,
            Metric::Accuracy => m.accuracy,
            Metric::Precision => m.precision,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestConfig {
    pub metric: Metric,
    pub config: SweepConfig,
    /// Mean over datasets.
    pub value: f64,
}

/// Per-configuration means over datasets, for configurations whose cells
/// all succeeded, in enumeration order.
fn config_means(results: &[SweepResult]) -> Vec<(usize, &SweepConfig, [f64; 5])> {
    let mut groups: BTreeMap<usize, (&SweepConfig, Vec<CellMetrics>, bool)> = BTreeMap::new();
    for r in results {
        let entry = groups.entry(r.config_index).or_insert((&r.config, Vec::new(), true));
        match r.metrics {
            Some(m) => entry.1.push(m),
            None => entry.2 = false,
        }
    }
    groups
        .into_iter()
        .filter(|(_, (_, cells, ok))| *ok && !cells.is_empty())
        .map(|(i, (config, cells, _))| {
            let n = cells.len() as f64;
            let means = Metric::ALL.map(|m| cells.iter().map(|c| m.of(c)).sum::<f64>() / n);
            (i, config, means)
        })
        .collect()
}

/// Best configuration for every metric (ties go to the earlier one).
pub fn best_per_metric(results: &[SweepResult]) -> Vec<BestConfig> {
    let means = config_means(results);
    Metric::ALL
        .iter()
        .enumerate()
        .filter_map(|(k, metric)| {
            let better = |a: f64, b: f64| if metric.lower_is_better() { a < b } else { a > b };
            let mut best: Option<(&SweepConfig, f64)> = None;
            for (_, config, values) in &means {
                if best.is_none_or(|(_, v)| better(values[k], v)) {
                    best = Some((config, values[k]));
                }
            }
            best.map(|(config, value)| BestConfig {
                metric: *metric,
                config: config.clone(),
                value,
            })
        })
        .collect()
}

pub fn render_best(best: &[BestConfig], kind: ModelKind) -> String {
    let mut out = String::new();
    for b in best {
        out.push_str(&format!(
            "best {:<9} = {:>9.5}  lag {}  {}  {}  {}\n",
            b.metric.as_str(),
            b.value,
            b.config.lag,
            b.config.architecture_label(kind),
            b.config.activation,
            b.config.optimizer.as_str(),
        ));
    }
    out
}

/// Long-format `metric,lag,architecture,value` table: each value is the
/// mean over activations, optimizers and datasets of successful cells.
pub fn write_heatmap_csv<W: Write>(mut w: W, results: &[SweepResult]) -> std::io::Result<()> {
    writeln!(w, "metric,lag,architecture,value")?;
    // keep first-appearance order of architectures
    let mut arch_order: Vec<&str> = Vec::new();
    let mut sums: BTreeMap<(usize, usize), ([f64; 5], usize)> = BTreeMap::new();
    for r in results {
        let Some(m) = r.metrics else { continue };
        let a = match arch_order.iter().position(|x| *x == r.architecture) {
            Some(a) => a,
            None => {
                arch_order.push(&r.architecture);
                arch_order.len() - 1
            }
        };
        let e = sums.entry((r.config.lag, a)).or_insert(([0.0; 5], 0));
        for (k, metric) in Metric::ALL.iter().enumerate() {
            e.0[k] += metric.of(&m);
        }
        e.1 += 1;
    }
    for (k, metric) in Metric::ALL.iter().enumerate() {
        for ((lag, a), (s, n)) in &sums {
            writeln!(w, "{},{},{},{}", metric.as_str(), lag, arch_order[*a], s[k] / *n as f64)?;
        }
    }
    w.flush()
}
