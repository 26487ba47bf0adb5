//! The three forecasting pipelines: VAR-only, FNN-only and the residual
//! hybrid, from (buy, sell) observations to OFI forecasts and signals.
//!
//! All functions take observations as `[buy, sell]` pairs; convert a counts
//! series with [`var::observations`].

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{OfiError, Result};
use crate::eval::{Averaging, EvalReport};
use crate::nn::{train, Activation, FnnModel, FnnTopology, TrainConfig, TrainingTrace};
use crate::ofi::{ofi_unchecked, signal, OfiParams, Signal};
use crate::var::{fit_var, Obs, VarModel, DEFAULT_LAG};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Var,
    Fnn,
    Hybrid,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Var, ModelKind::Fnn, ModelKind::Hybrid];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Var => "var",
            ModelKind::Fnn => "fnn",
            ModelKind::Hybrid => "hybrid",
        }
    }

    /// Row label used in comparison tables.
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Var => "VAR Only",
            ModelKind::Fnn => "FNN Only",
            ModelKind::Hybrid => "Hybrid VAR-FNN",
        }
    }

    fn has_var(&self) -> bool {
        matches!(self, ModelKind::Var | ModelKind::Hybrid)
    }

    fn has_fnn(&self) -> bool {
        matches!(self, ModelKind::Fnn | ModelKind::Hybrid)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = OfiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "var" | "var-only" | "var_only" => Ok(ModelKind::Var),
            "fnn" | "fnn-only" | "fnn_only" => Ok(ModelKind::Fnn),
            "hybrid" => Ok(ModelKind::Hybrid),
            other => Err(OfiError::invalid("model kind", format!("`{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub var_lag: usize,
    /// Number of lagged pairs fed to the network.
    pub fnn_input_lags: usize,
    /// Hidden widths; the 1- or 2-neuron head is added per pipeline.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
    pub ofi: OfiParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            var_lag: DEFAULT_LAG,
            fnn_input_lags: DEFAULT_LAG,
            hidden: vec![32, 16],
            activation: Activation::Relu,
            train: TrainConfig::default(),
            ofi: OfiParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.var_lag == 0 {
            return Err(OfiError::invalid("var_lag", "must be at least 1"));
        }
        if self.fnn_input_lags == 0 {
            return Err(OfiError::invalid("fnn_input_lags", "must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(OfiError::invalid("hidden", "layer widths must be positive"));
        }
        self.train.validate()?;
        self.ofi.validate()
    }

    /// Network shape used by `kind` (only meaningful for kinds with an FNN).
    pub fn topology(&self, kind: ModelKind) -> Result<FnnTopology> {
        let output = if kind == ModelKind::Hybrid { 2 } else { 1 };
        FnnTopology::new(2 * self.fnn_input_lags, self.hidden.clone(), output, self.activation)
    }

    /// First observation index that can be predicted.
    pub fn warmup(&self, kind: ModelKind) -> usize {
        let model = match kind {
            ModelKind::Var => self.var_lag,
            ModelKind::Fnn => self.fnn_input_lags,
            ModelKind::Hybrid => self.var_lag + self.fnn_input_lags,
        };
        model.max(self.ofi.window - 1)
    }
}

/// A fitted pipeline. VAR-only carries only the VAR part, FNN-only only the
/// network, the hybrid both.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kind: ModelKind,
    pub var_part: Option<VarModel>,
    pub fnn_part: Option<FnnModel>,
    pub config: PipelineConfig,
}

fn inconsistent(field: &'static str, detail: impl Into<String>) -> OfiError {
    OfiError::InconsistentManifest {
        field: field.to_string(),
        detail: detail.into(),
    }
}

impl ModelBundle {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let kind = self.kind;
        if kind.has_var() != self.var_part.is_some() {
            return Err(inconsistent(
                "kind",
                format!("`{kind}` {} a VAR part", if kind.has_var() { "requires" } else { "must not have" }),
            ));
        }
        if kind.has_fnn() != self.fnn_part.is_some() {
            return Err(inconsistent(
                "kind",
                format!("`{kind}` {} a network part", if kind.has_fnn() { "requires" } else { "must not have" }),
            ));
        }
        if let Some(var) = &self.var_part {
            var.validate()?;
            if var.p != self.config.var_lag {
                return Err(inconsistent(
                    "var_lag",
                    format!("config says {} but the VAR model has lag {}", self.config.var_lag, var.p),
                ));
            }
        }
        if let Some(fnn) = &self.fnn_part {
            fnn.validate()?;
            let topo = fnn.topology();
            let expected = self.config.topology(kind)?;
            if topo.input_dim != expected.input_dim {
                return Err(inconsistent(
                    "fnn_input_lags",
                    format!(
                        "config says {} lags (input {}) but the network takes {} inputs",
                        self.config.fnn_input_lags, expected.input_dim, topo.input_dim
                    ),
                ));
            }
            if topo.hidden != expected.hidden {
                return Err(inconsistent(
                    "hidden",
                    format!("config says {:?} but the network has {:?}", expected.hidden, topo.hidden),
                ));
            }
            if topo.activation != expected.activation {
                return Err(inconsistent(
                    "activation",
                    format!("config says {} but the network uses {}", expected.activation, topo.activation),
                ));
            }
            if topo.output_dim != expected.output_dim {
                return Err(inconsistent(
                    "kind",
                    format!("`{kind}` needs {} outputs, network has {}", expected.output_dim, topo.output_dim),
                ));
            }
        }
        Ok(())
    }

    pub fn warmup(&self) -> usize {
        self.config.warmup(self.kind)
    }

    /// Replaces the hybrid's residual head with one that always outputs
    /// zero. No effect on other kinds.
    pub fn silence_residuals(&mut self) {
        if self.kind == ModelKind::Hybrid {
            if let Some(fnn) = &mut self.fnn_part {
                fnn.silence_output();
            }
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| OfiError::io(dir, e))?;
        let manifest = Manifest {
            format: BUNDLE_FORMAT.to_string(),
            version: BUNDLE_FORMAT_VERSION,
            kind: self.kind,
            var_file: self.var_part.as_ref().map(|_| VAR_FILE.to_string()),
            fnn_file: self.fnn_part.as_ref().map(|_| FNN_FILE.to_string()),
            config: self.config.clone(),
        };
        let text = toml::to_string(&manifest).map_err(|e| OfiError::ModelFormat(e.to_string()))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| OfiError::io(&path, e))?;
        if let Some(var) = &self.var_part {
            var.save(dir.join(VAR_FILE))?;
        }
        if let Some(fnn) = &self.fnn_part {
            fnn.save(dir.join(FNN_FILE))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| OfiError::io(&path, e))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| OfiError::ModelFormat(format!("{}: {e}", path.display())))?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(inconsistent("format", format!("unexpected `{}`", manifest.format)));
        }
        if manifest.version != BUNDLE_FORMAT_VERSION {
            return Err(inconsistent("version", format!("unsupported {}", manifest.version)));
        }
        let var_part = manifest.var_file.map(|f| VarModel::load(dir.join(f))).transpose()?;
        let fnn_part = manifest.fnn_file.map(|f| FnnModel::load(dir.join(f))).transpose()?;
        let bundle = ModelBundle {
            kind: manifest.kind,
            var_part,
            fnn_part,
            config: manifest.config,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const VAR_FILE: &str = "var.toml";
pub const FNN_FILE: &str = "fnn.toml";
const BUNDLE_FORMAT: &str = "ofi-model-bundle";
const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    var_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fnn_file: Option<String>,
    config: PipelineConfig,
}

fn check_obs(obs: &[Obs]) -> Result<()> {
    if obs.is_empty() {
        return Err(OfiError::EmptySeries);
    }
    if let Some(row) = obs.iter().position(|o| !o.iter().all(|v| v.is_finite() && *v >= 0.0)) {
        return Err(OfiError::invalid(
            "observations",
            format!("row {row} has a negative or non-finite count: {:?}", obs[row]),
        ));
    }
    Ok(())
}

fn require(needed: usize, got: usize) -> Result<()> {
    if got < needed {
        return Err(OfiError::SeriesTooShort { needed, got });
    }
    Ok(())
}

/// OFI over rows `t + 1 − h ..= t`, with `last` standing in for row `t`.
fn window_ofi(obs: &[Obs], t: usize, h: usize, last: Obs) -> f64 {
    let (mut b, mut s) = (last[0], last[1]);
    for row in &obs[t + 1 - h..t] {
        b += row[0];
        s += row[1];
    }
    ofi_unchecked(b, s)
}

fn floor_zero(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// `[x_{t-1}, x_{t-2}, …, x_{t-q}]` flattened pairwise.
fn lagged_features(rows: &[Obs], t: usize, q: usize) -> Vec<f64> {
    (1..=q).flat_map(|lag| rows[t - lag]).collect()
}

/// Residual series aligned with `obs`: entry `t` is `obs[t] − one_step(t)`
/// for `t ≥ p`, zero before.
fn aligned_residuals(var: &VarModel, obs: &[Obs]) -> Result<Vec<Obs>> {
    let mut out = vec![[0.0; 2]; var.p.min(obs.len())];
    out.extend(var.residuals(obs)?);
    Ok(out)
}

pub fn fit_var_only(obs: &[Obs], config: &PipelineConfig) -> Result<ModelBundle> {
    config.validate()?;
    check_obs(obs)?;
    let (var, _) = fit_var(obs, config.var_lag)?;
    Ok(ModelBundle {
        kind: ModelKind::Var,
        var_part: Some(var),
        fnn_part: None,
        config: config.clone(),
    })
}

/// Network on the last `q` raw pairs, predicting next-interval OFI.
pub fn fit_fnn_only(obs: &[Obs], config: &PipelineConfig) -> Result<(ModelBundle, TrainingTrace)> {
    config.validate()?;
    check_obs(obs)?;
    let warmup = config.warmup(ModelKind::Fnn);
    require(warmup + 2, obs.len())?;
    let h = config.ofi.window;
    let q = config.fnn_input_lags;
    let (inputs, targets): (Vec<_>, Vec<_>) = (warmup..obs.len())
        .map(|t| (lagged_features(obs, t, q), vec![window_ofi(obs, t, h, obs[t])]))
        .unzip();
    let (fnn, trace) = train(&inputs, &targets, &config.topology(ModelKind::Fnn)?, &config.train)?;
    let bundle = ModelBundle {
        kind: ModelKind::Fnn,
        var_part: None,
        fnn_part: Some(fnn),
        config: config.clone(),
    };
    Ok((bundle, trace))
}

/// VAR first, then a network mapping the last `q` in-sample residual pairs
/// to the next residual pair.
pub fn fit_hybrid(obs: &[Obs], config: &PipelineConfig) -> Result<(ModelBundle, TrainingTrace)> {
    config.validate()?;
    check_obs(obs)?;
    let warmup = config.warmup(ModelKind::Hybrid);
    require(warmup + 2, obs.len())?;
    let (var, _) = fit_var(obs, config.var_lag)?;
    let resid = aligned_residuals(&var, obs)?;
    let q = config.fnn_input_lags;
    let start = config.var_lag + q;
    let (inputs, targets): (Vec<_>, Vec<_>) = (start..obs.len())
        .map(|t| (lagged_features(&resid, t, q), resid[t].to_vec()))
        .unzip();
    let (fnn, trace) = train(&inputs, &targets, &config.topology(ModelKind::Hybrid)?, &config.train)?;
    let bundle = ModelBundle {
        kind: ModelKind::Hybrid,
        var_part: Some(var),
        fnn_part: Some(fnn),
        config: config.clone(),
    };
    Ok((bundle, trace))
}

/// Dispatches on `kind`; the trace is `None` for VAR-only.
pub fn fit(kind: ModelKind, obs: &[Obs], config: &PipelineConfig) -> Result<(ModelBundle, Option<TrainingTrace>)> {
    match kind {
        ModelKind::Var => fit_var_only(obs, config).map(|b| (b, None)),
        ModelKind::Fnn => fit_fnn_only(obs, config).map(|(b, t)| (b, Some(t))),
        ModelKind::Hybrid => fit_hybrid(obs, config).map(|(b, t)| (b, Some(t))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub index: usize,
    pub actual_ofi: f64,
    /// Always within [−1, 1].
    pub predicted_ofi: f64,
    pub actual_signal: Signal,
    pub predicted_signal: Signal,
}

/// Pieces of a single order forecast. `residual` is present only for the
/// hybrid; `orders` is `var + residual` before flooring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderForecast {
    pub index: usize,
    pub var: Obs,
    pub residual: Option<Obs>,
    pub orders: Obs,
}

/// Unfloored order forecasts for `start..n` (VAR-bearing bundles only).
pub fn order_forecasts(bundle: &ModelBundle, obs: &[Obs], start: usize) -> Result<Vec<OrderForecast>> {
    let var = bundle
        .var_part
        .as_ref()
        .ok_or_else(|| OfiError::invalid("bundle", "FNN-only bundles do not forecast orders"))?;
    check_obs(obs)?;
    let start = start.max(bundle.warmup());
    require(start + 1, obs.len())?;
    let q = bundle.config.fnn_input_lags;
    let resid = match bundle.fnn_part {
        Some(_) => aligned_residuals(var, obs)?,
        None => Vec::new(),
    };
    (start..obs.len())
        .map(|t| {
            let v = var.one_step(&obs[..t])?;
            let residual = match &bundle.fnn_part {
                Some(fnn) => {
                    let r = fnn.predict(&lagged_features(&resid, t, q))?;
                    Some([r[0], r[1]])
                }
                None => None,
            };
            let orders = match residual {
                Some(r) => [v[0] + r[0], v[1] + r[1]],
                None => v,
            };
            Ok(OrderForecast {
                index: t,
                var: v,
                residual,
                orders,
            })
        })
        .collect()
}

/// One-step rolling predictions for indices `start..n`, each made from the
/// true history before it. `start` is raised to the bundle's warmup.
pub fn predict_from(bundle: &ModelBundle, obs: &[Obs], start: usize) -> Result<Vec<PredictionRecord>> {
    bundle.validate()?;
    check_obs(obs)?;
    let warmup = bundle.warmup();
    require(warmup + 1, obs.len())?;
    let start = start.max(warmup);
    if start >= obs.len() {
        return Err(OfiError::SeriesTooShort {
            needed: start + 1,
            got: obs.len(),
        });
    }
    let OfiParams { window: h, threshold } = bundle.config.ofi;

    let predicted: Vec<f64> = match bundle.kind {
        ModelKind::Var | ModelKind::Hybrid => order_forecasts(bundle, obs, start)?
            .iter()
            .map(|f| {
                let row = [floor_zero(f.orders[0]), floor_zero(f.orders[1])];
                window_ofi(obs, f.index, h, row)
            })
            .collect(),
        ModelKind::Fnn => {
            let fnn = bundle.fnn_part.as_ref().expect("validated");
            let q = bundle.config.fnn_input_lags;
            (start..obs.len())
                .map(|t| Ok(fnn.predict(&lagged_features(obs, t, q))?[0].clamp(-1.0, 1.0)))
                .collect::<Result<_>>()?
        }
    };

    Ok((start..obs.len())
        .zip(predicted)
        .map(|(t, p)| {
            let actual = window_ofi(obs, t, h, obs[t]);
            PredictionRecord {
                index: t,
                actual_ofi: actual,
                predicted_ofi: p,
                actual_signal: signal(actual, threshold),
                predicted_signal: signal(p, threshold),
            }
        })
        .collect())
}

/// [`predict_from`] starting at the bundle's warmup.
pub fn predict(bundle: &ModelBundle, obs: &[Obs]) -> Result<Vec<PredictionRecord>> {
    predict_from(bundle, obs, 0)
}

pub const PREDICTIONS_HEADER: &str = "index,actual_ofi,predicted_ofi,actual_signal,predicted_signal";

pub fn write_predictions<W: Write>(mut w: W, records: &[PredictionRecord]) -> std::io::Result<()> {
    writeln!(w, "{PREDICTIONS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.index, r.actual_ofi, r.predicted_ofi, r.actual_signal, r.predicted_signal
        )?;
    }
    w.flush()
}

pub fn save_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| OfiError::io(path, e))?;
    write_predictions(std::io::BufWriter::new(file), records).map_err(|e| OfiError::io(path, e))
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != PREDICTIONS_HEADER {
        return Err(OfiError::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{PREDICTIONS_HEADER}`"),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let record: PredictionRecord = row.map_err(|e| OfiError::MalformedRow {
            path: path.to_path_buf(),
            line: i as u64 + 2,
            message: e.to_string(),
        })?;
        if !(record.predicted_ofi.abs() <= 1.0 && record.actual_ofi.abs() <= 1.0) {
            return Err(OfiError::MalformedRow {
                path: path.to_path_buf(),
                line: i as u64 + 2,
                message: "OFI outside [-1, 1]".into(),
            });
        }
        out.push(record);
    }
    if out.is_empty() {
        return Err(OfiError::EmptyInput);
    }
    Ok(out)
}

/// Metrics over a set of prediction records.
pub fn evaluate_records(
    dataset: &str,
    model: &str,
    records: &[PredictionRecord],
    averaging: Averaging,
) -> Result<EvalReport> {
    let actual: Vec<f64> = records.iter().map(|r| r.actual_ofi).collect();
    let predicted: Vec<f64> = records.iter().map(|r| r.predicted_ofi).collect();
    let actual_s: Vec<Signal> = records.iter().map(|r| r.actual_signal).collect();
    let predicted_s: Vec<Signal> = records.iter().map(|r| r.predicted_signal).collect();
    EvalReport::compute(dataset, model, &actual, &predicted, &actual_s, &predicted_s, averaging)
}

#[derive(Debug, Clone)]
pub struct HoldoutOutcome {
    pub bundle: ModelBundle,
    pub trace: Option<TrainingTrace>,
    pub records: Vec<PredictionRecord>,
    pub report: EvalReport,
}

/// Fits on the first `train_fraction` of `obs` and evaluates one-step
/// predictions on the rest, using the training rows as history.
pub fn evaluate_holdout(
    kind: ModelKind,
    obs: &[Obs],
    config: &PipelineConfig,
    train_fraction: f64,
    dataset: &str,
) -> Result<HoldoutOutcome> {
    let split = crate::data::split_index(obs.len(), train_fraction)?;
    let (bundle, trace) = fit(kind, &obs[..split], config)?;
    let records = predict_from(&bundle, obs, split)?;
    let report = evaluate_records(dataset, kind.label(), &records, Averaging::Macro)?;
    Ok(HoldoutOutcome {
        bundle,
        trace,
        records,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::var::observations;

    fn fast_config() -> PipelineConfig {
        PipelineConfig {
            train: TrainConfig {
                epochs: 30,
                seed: 11,
                ..TrainConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    /// b_t = s_{t-1}, s_t = b_{t-1} + s_{t-1}: an exact integer VAR(1).
    fn fibonacci_pairs(n: usize) -> Vec<Obs> {
        let mut out = vec![[1.0, 1.0]];
        while out.len() < n {
            let [b, s] = *out.last().unwrap();
            out.push([s, b + s]);
        }
        out
    }

    fn synthetic(seed: u64, length: usize) -> Vec<Obs> {
        let spec = SyntheticSpec {
            length,
            seed,
            ..SyntheticSpec::default()
        };
        observations(&generate_synthetic(&spec).unwrap())
    }

    #[test]
    fn noiseless_var_predicts_exactly() {
        let obs = fibonacci_pairs(30);
        let config = PipelineConfig {
            var_lag: 1,
            ..PipelineConfig::default()
        };
        let bundle = fit_var_only(&obs, &config).unwrap();
        let records = predict(&bundle, &obs).unwrap();
        assert_eq!(records.len(), obs.len() - 1);
        for r in &records {
            assert!((r.actual_ofi - r.predicted_ofi).abs() < 1e-6, "{r:?}");
            assert_eq!(r.actual_signal, r.predicted_signal);
        }
    }

    #[test]
    fn var_only_on_white_noise_has_no_skill() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let obs: Vec<Obs> = (0..1500)
            .map(|_| [rng.random_range(0..60) as f64, rng.random_range(0..60) as f64])
            .collect();
        let out = evaluate_holdout(ModelKind::Var, &obs, &PipelineConfig::default(), 0.8, "noise").unwrap();
        assert!(out.report.r2 <= 0.05, "{}", out.report.r2);
    }

    #[test]
    fn one_prediction_per_forecastable_index() {
        let obs = synthetic(42, 3000);
        let bundle = fit_var_only(&obs, &PipelineConfig::default()).unwrap();
        let records = predict(&bundle, &obs).unwrap();
        assert_eq!(records.len(), 3000 - 2);
        assert_eq!(records[0].index, 2);
        assert!(records.iter().all(|r| r.predicted_ofi.abs() <= 1.0));
    }

    #[test]
    fn warmups() {
        let c = PipelineConfig {
            var_lag: 3,
            fnn_input_lags: 2,
            ..PipelineConfig::default()
        };
        assert_eq!(c.warmup(ModelKind::Var), 3);
        assert_eq!(c.warmup(ModelKind::Fnn), 2);
        assert_eq!(c.warmup(ModelKind::Hybrid), 5);
        let wide = PipelineConfig {
            ofi: OfiParams::new(8, 0.1).unwrap(),
            ..c
        };
        assert_eq!(wide.warmup(ModelKind::Var), 7);
    }

    #[test]
    fn combination_arithmetic() {
        // VAR (40, 60) plus residual (10, −10) balances to OFI 0
        let orders = [40.0 + 10.0, 60.0 - 10.0];
        let v = ofi_unchecked(floor_zero(orders[0]), floor_zero(orders[1]));
        assert_eq!(v, 0.0);
        assert_eq!(signal(v, 0.1), Signal::Hold);
    }

    #[test]
    fn fnn_only_learns_alternation() {
        let obs: Vec<Obs> = (0..400)
            .map(|i| if i % 2 == 0 { [75.0, 25.0] } else { [25.0, 75.0] })
            .collect();
        let out = evaluate_holdout(ModelKind::Fnn, &obs, &fast_config(), 0.8, "alt").unwrap();
        let hits = out
            .records
            .iter()
            .filter(|r| r.predicted_ofi.signum() == r.actual_ofi.signum())
            .count();
        assert_eq!(hits, out.records.len());
    }

    #[test]
    fn fnn_only_constant_series() {
        let obs = vec![[30.0, 10.0]; 200];
        let (bundle, _) = fit_fnn_only(&obs, &fast_config()).unwrap();
        for r in predict(&bundle, &obs).unwrap() {
            assert!((r.predicted_ofi - 0.5).abs() < 0.05, "{r:?}");
        }
    }

    #[test]
    fn fits_are_deterministic() {
        let obs = synthetic(3, 400);
        let config = fast_config();
        for kind in [ModelKind::Fnn, ModelKind::Hybrid] {
            let (a, _) = fit(kind, &obs, &config).unwrap();
            let (b, _) = fit(kind, &obs, &config).unwrap();
            assert_eq!(predict(&a, &obs).unwrap(), predict(&b, &obs).unwrap());
        }
    }

    #[test]
    fn hybrid_decomposes_exactly() {
        let obs = synthetic(8, 500);
        let (bundle, _) = fit_hybrid(&obs, &fast_config()).unwrap();
        let var = bundle.var_part.as_ref().unwrap();
        let fnn = bundle.fnn_part.as_ref().unwrap();
        let resid = aligned_residuals(var, &obs).unwrap();
        for f in order_forecasts(&bundle, &obs, 0).unwrap() {
            let t = f.index;
            let v = var.one_step(&obs[..t]).unwrap();
            let r = fnn.predict(&[resid[t - 1][0], resid[t - 1][1], resid[t - 2][0], resid[t - 2][1]]).unwrap();
            assert_eq!(f.orders, [v[0] + r[0], v[1] + r[1]]);
        }
    }

    #[test]
    fn silenced_hybrid_matches_var_only_bitwise() {
        let obs = synthetic(9, 500);
        let config = fast_config();
        let (mut hybrid, _) = fit_hybrid(&obs, &config).unwrap();
        let var_only = fit_var_only(&obs, &config).unwrap();
        hybrid.silence_residuals();
        let start = hybrid.warmup();
        let a = predict_from(&hybrid, &obs, start).unwrap();
        let b = predict_from(&var_only, &obs, start).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.predicted_ofi.to_bits(), y.predicted_ofi.to_bits());
            assert_eq!(x.predicted_signal, y.predicted_signal);
        }
    }

    #[test]
    fn predictions_are_causal() {
        let obs = synthetic(10, 400);
        let config = fast_config();
        for kind in ModelKind::ALL {
            let (bundle, _) = fit(kind, &obs[..300], &config).unwrap();
            let base = predict_from(&bundle, &obs, 300).unwrap();
            let t = 350;
            let mut perturbed = obs.clone();
            for row in &mut perturbed[t + 1..] {
                *row = [row[1] * 3.0 + 7.0, 0.0];
            }
            let after = predict_from(&bundle, &perturbed, 300).unwrap();
            for (x, y) in base.iter().zip(&after).filter(|(x, _)| x.index <= t) {
                assert_eq!(x, y, "{kind}");
            }
        }
    }

    #[test]
    fn bundle_round_trip_preserves_predictions() {
        let obs = synthetic(12, 400);
        let dir = tempfile::tempdir().unwrap();
        for kind in ModelKind::ALL {
            let (bundle, _) = fit(kind, &obs, &fast_config()).unwrap();
            let path = dir.path().join(kind.as_str());
            bundle.save(&path).unwrap();
            let loaded = ModelBundle::load(&path).unwrap();
            assert_eq!(loaded, bundle);
            assert_eq!(predict(&loaded, &obs).unwrap(), predict(&bundle, &obs).unwrap());
        }
    }

    #[test]
    fn tampered_manifest_names_field() {
        let obs = synthetic(13, 300);
        let dir = tempfile::tempdir().unwrap();
        let (bundle, _) = fit_hybrid(&obs, &fast_config()).unwrap();
        bundle.save(dir.path()).unwrap();
        let manifest = dir.path().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&manifest).unwrap();
        for (from, to, field) in [
            ("var_lag = 2", "var_lag = 3", "var_lag"),
            ("hidden = [32, 16]", "hidden = [32, 8]", "hidden"),
            ("activation = \"relu\"", "activation = \"tanh\"", "activation"),
            ("fnn_input_lags = 2", "fnn_input_lags = 1", "fnn_input_lags"),
            ("kind = \"hybrid\"", "kind = \"var\"", "kind"),
        ] {
            assert!(text.contains(from), "{from} not in manifest:\n{text}");
            std::fs::write(&manifest, text.replacen(from, to, 1)).unwrap();
            match ModelBundle::load(dir.path()) {
                Err(OfiError::InconsistentManifest { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: {other:?}"),
            }
        }
    }

    #[test]
    fn predictions_csv_round_trip() {
        let obs = synthetic(14, 300);
        let bundle = fit_var_only(&obs, &PipelineConfig::default()).unwrap();
        let records = predict(&bundle, &obs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        save_predictions(&path, &records).unwrap();
        assert_eq!(load_predictions(&path).unwrap(), records);
        std::fs::write(&path, format!("{PREDICTIONS_HEADER}\n")).unwrap();
        assert!(load_predictions(&path).is_err());
    }

    #[test]
    fn too_short_series_rejected() {
        let obs = synthetic(1, 30);
        let config = PipelineConfig {
            var_lag: 10,
            ..PipelineConfig::default()
        };
        assert!(matches!(
            fit_var_only(&obs[..15], &config),
            Err(OfiError::SeriesTooShort { .. })
        ));
        let bundle = fit_var_only(&obs, &PipelineConfig::default()).unwrap();
        assert!(predict(&bundle, &obs[..2]).is_err());
    }
}
