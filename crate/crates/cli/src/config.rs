//! Run configuration: built-in defaults, overlaid by an optional TOML file,
//! overlaid by command-line flags. The resolved result is written next to
//! every run's outputs and can be fed back through `--config`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ofi_core::hybrid::{ModelKind, PipelineConfig};
use ofi_core::sweep::SweepSpace;
use ofi_core::SyntheticSpec;
use serde::{Deserialize, Serialize};

/// Stream identifiers for seeds derived from the master seed.
pub const SYNTH_STREAM: u64 = 1;
pub const FIT_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub model: ModelKind,
    pub space: SweepSpace,
    /// Sample this many grid points by Latin hypercube instead of running
    /// the full grid.
    pub lhs: Option<usize>,
    /// Overrides the per-optimizer default learning rate when set.
    pub learning_rate: Option<f64>,
    pub train_fraction: f64,
    pub parallel: bool,
    pub record_timing: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            model: ModelKind::Hybrid,
            space: SweepSpace::default(),
            lhs: None,
            learning_rate: None,
            train_fraction: 0.8,
            parallel: true,
            record_timing: false,
        }
    }
}

/// What was run, recorded in the sidecar. Ignored when loading.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub command: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub synth: SyntheticSpec,
    pub pipeline: PipelineConfig,
    pub sweep: SweepSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunRecord>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            synth: SyntheticSpec::default(),
            pipeline: PipelineConfig::default(),
            sweep: SweepSection::default(),
            run: None,
        }
    }
}

/// Recursively overlays `over` onto `base`; tables merge, anything else
/// replaces.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Defaults overlaid with the file at `path`, if any.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file: toml::Value =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let mut value = toml::Value::try_from(Self::default())?;
        merge(&mut value, file);
        let mut config: RunConfig = value
            .try_into()
            .with_context(|| format!("invalid config {}", path.display()))?;
        config.run = None;
        Ok(config)
    }

    pub fn write_sidecar(&self, path: &Path, run: RunRecord) -> Result<()> {
        let mut record = self.clone();
        record.run = Some(run);
        let text = toml::to_string(&record).context("serializing resolved config")?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// `foo/bar.csv` → `foo/bar.resolved.toml`.
pub fn sidecar_path(output: &Path) -> std::path::PathBuf {
    output.with_extension("resolved.toml")
}

pub fn check_seed(seed: u64) -> Result<u64> {
    if seed > i64::MAX as u64 {
        bail!("seed {seed} does not fit a signed 64-bit integer");
    }
    Ok(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults_and_keep_the_rest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "seed = 7\n[pipeline]\nvar_lag = 5\n[pipeline.train]\nepochs = 3\n[sweep.space]\nlags = [2]\n",
        )
        .unwrap();
        let c = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.pipeline.var_lag, 5);
        assert_eq!(c.pipeline.train.epochs, 3);
        assert_eq!(c.pipeline.train.batch_size, 8);
        assert_eq!(c.pipeline.hidden, vec![32, 16]);
        assert_eq!(c.sweep.space.lags, vec![2]);
        assert_eq!(c.sweep.space.architectures.len(), 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[pipeline]\nvar_lags = 5\n").unwrap();
        assert!(RunConfig::load(Some(&path)).is_err());
    }

    #[test]
    fn sidecar_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.toml");
        let mut c = RunConfig::default();
        c.pipeline.hidden = vec![8];
        c.write_sidecar(
            &path,
            RunRecord {
                command: "fit".into(),
                ..RunRecord::default()
            },
        )
        .unwrap();
        assert_eq!(RunConfig::load(Some(&path)).unwrap(), c);
    }
}
