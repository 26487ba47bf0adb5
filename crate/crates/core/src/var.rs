//! Bivariate VAR(p) on (buy, sell) counts, estimated equation-by-equation
//! with OLS.
//!
//! ```text
//! Y_t = c + A_1·Y_{t−1} + … + A_p·Y_{t−p} + ε_t
//! ```
//!
//! Regressors are ordered `const, L1.buy, L1.sell, L2.buy, …, Lp.sell`. The
//! least-squares solve goes through a Householder QR of the design matrix.
//! The residual covariance `Σ` uses the maximum-likelihood normalization
//! (`/ n_obs`); coefficient standard errors use the OLS one
//! (`/ (n_obs − regressors)`).
//!
//! Information criteria, with `K = k·(1 + k·p)` estimated coefficients:
//!
//! ```text
//! AIC  = ln|Σ| + 2K / n
//! BIC  = ln|Σ| + K·ln(n) / n
//! HQIC = ln|Σ| + 2K·ln(ln(n)) / n
//! FPE  = ((n + m) / (n − m))^k · |Σ|          m = 1 + k·p
//! logL = −(n·k / 2)·(1 + ln 2π) − (n / 2)·ln|Σ|
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::OrderCounts;
use crate::error::{OfiError, Result};

/// Number of modeled variables (buy, sell).
pub const K: usize = 2;
pub const VARIABLE_NAMES: [&str; K] = ["buy_orders", "sell_orders"];
pub const DEFAULT_LAG: usize = 2;

/// One observation `(buy, sell)`.
pub type Obs = [f64; K];

pub fn observations(series: &[OrderCounts]) -> Vec<Obs> {
    series.iter().map(OrderCounts::as_pair).collect()
}

/// Fitted VAR(p) parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub p: usize,
    pub intercept: [f64; K],
    /// `coefficients[i][eq][var]` is the effect of lag `i + 1` of `var` on
    /// equation `eq`.
    pub coefficients: Vec<[[f64; K]; K]>,
    pub sigma: [[f64; K]; K],
    pub n_obs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    Aic,
    Bic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientStat {
    pub name: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub aic: f64,
    pub bic: f64,
    pub hqic: f64,
    pub fpe: f64,
    pub log_likelihood: f64,
    pub det_sigma: f64,
    /// One block per equation, in [`VARIABLE_NAMES`] order.
    pub equations: Vec<Vec<CoefficientStat>>,
}

impl FitDiagnostics {
    pub fn criterion(&self, which: Criterion) -> f64 {
        match which {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }
}

pub fn regressor_names(p: usize) -> Vec<String> {
    let mut names = vec!["const".to_string()];
    for lag in 1..=p {
        for var in VARIABLE_NAMES {
            names.push(format!("L{lag}.{var}"));
        }
    }
    names
}

fn require_length(n: usize, p: usize) -> Result<()> {
    if p == 0 {
        return Err(OfiError::invalid("lag order", "must be at least 1"));
    }
    if n <= p {
        return Err(OfiError::SeriesTooShort {
            needed: p + 1,
            got: n,
        });
    }
    Ok(())
}

/// Regressor row for predicting the observation right after `history`.
fn regressor_row(history: &[Obs], p: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(1 + K * p);
    row.push(1.0);
    for lag in 1..=p {
        row.extend_from_slice(&history[history.len() - lag]);
    }
    row
}

/// Design matrix `Z` (`(n−p) × (1+k·p)`) and targets `Y` (`(n−p) × k`).
pub fn build_lag_matrix(obs: &[Obs], p: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    require_length(obs.len(), p)?;
    let rows = obs.len() - p;
    let cols = 1 + K * p;
    let mut z = DMatrix::zeros(rows, cols);
    let mut y = DMatrix::zeros(rows, K);
    for (r, t) in (p..obs.len()).enumerate() {
        for (c, v) in regressor_row(&obs[..t], p).into_iter().enumerate() {
            z[(r, c)] = v;
        }
        for v in 0..K {
            y[(r, v)] = obs[t][v];
        }
    }
    Ok((z, y))
}

/// Fits VAR(p) by OLS.
pub fn fit_var(obs: &[Obs], p: usize) -> Result<(VarModel, FitDiagnostics)> {
    let (z, y) = build_lag_matrix(obs, p)?;
    let n_obs = z.nrows();
    let m = z.ncols();
    if n_obs < m {
        return Err(OfiError::SeriesTooShort {
            needed: p + m,
            got: obs.len(),
        });
    }

    let qr = z.clone().qr();
    let r = qr.r();
    let max_diag = r.diagonal().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let names = regressor_names(p);
    let dependent: Vec<String> = (0..m)
        .filter(|&j| r[(j, j)].abs().partial_cmp(&(1e-10 * max_diag)) != Some(std::cmp::Ordering::Greater))
        .map(|j| names[j].clone())
        .collect();
    if !dependent.is_empty() {
        return Err(OfiError::RankDeficient { columns: dependent });
    }

    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| OfiError::RankDeficient { columns: names.clone() })?;

    let resid = &y - &z * &beta;
    let sse = resid.transpose() * &resid;
    let mut sigma = [[0.0; K]; K];
    for i in 0..K {
        for j in i..K {
            sigma[i][j] = sse[(i, j)] / n_obs as f64;
            sigma[j][i] = sigma[i][j];
        }
    }

    let model = VarModel::from_beta(&beta, p, sigma, n_obs);

    // (ZᵀZ)⁻¹ = R⁻¹·R⁻ᵀ
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| OfiError::RankDeficient { columns: names.clone() })?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let dof = (n_obs - m) as f64;
    let equations = (0..K)
        .map(|eq| {
            let s2 = if dof > 0.0 { sse[(eq, eq)] / dof } else { f64::NAN };
            (0..m)
                .map(|j| {
                    let coefficient = beta[(j, eq)];
                    let std_error = (s2 * xtx_inv[(j, j)]).sqrt();
                    let t_stat = coefficient / std_error;
                    CoefficientStat {
                        name: names[j].clone(),
                        coefficient,
                        std_error,
                        t_stat,
                        p_value: 2.0 * (1.0 - normal.cdf(t_stat.abs())),
                    }
                })
                .collect()
        })
        .collect();

    let diagnostics = information_criteria(&sigma, n_obs, p, equations);
    Ok((model, diagnostics))
}

fn information_criteria(
    sigma: &[[f64; K]; K],
    n_obs: usize,
    p: usize,
    equations: Vec<Vec<CoefficientStat>>,
) -> FitDiagnostics {
    let n = n_obs as f64;
    let k = K as f64;
    let m = (1 + K * p) as f64;
    let free = k * m;
    let det = sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0];
    let ld = det.ln();
    FitDiagnostics {
        aic: ld + 2.0 * free / n,
        bic: ld + free * n.ln() / n,
        hqic: ld + 2.0 * free * n.ln().ln() / n,
        fpe: ((n + m) / (n - m)).powf(k) * det,
        log_likelihood: -(n * k / 2.0) * (1.0 + (2.0 * std::f64::consts::PI).ln()) - n / 2.0 * ld,
        det_sigma: det,
        equations,
    }
}

/// Picks the candidate lag minimizing `criterion`. Every candidate is fitted
/// on the same effective sample (the series trimmed by the largest
/// candidate), and ties go to the smaller lag.
pub fn select_lag(obs: &[Obs], candidates: &[usize], criterion: Criterion) -> Result<usize> {
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let max_lag = *sorted
        .last()
        .ok_or_else(|| OfiError::invalid("candidate lags", "empty set"))?;
    if sorted.len() == 1 {
        require_length(obs.len(), max_lag)?;
        return Ok(max_lag);
    }
    require_length(obs.len(), max_lag)?;

    let mut best: Option<(usize, f64)> = None;
    for &p in &sorted {
        let (_, diag) = fit_var(&obs[max_lag - p..], p)?;
        let score = diag.criterion(criterion);
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((p, score));
        }
    }
    Ok(best.map(|(p, _)| p).expect("nonempty candidates"))
}

impl VarModel {
    fn from_beta(beta: &DMatrix<f64>, p: usize, sigma: [[f64; K]; K], n_obs: usize) -> Self {
        let intercept = [beta[(0, 0)], beta[(0, 1)]];
        let coefficients = (0..p)
            .map(|lag| {
                let mut a = [[0.0; K]; K];
                for (eq, row) in a.iter_mut().enumerate() {
                    for (var, cell) in row.iter_mut().enumerate() {
                        *cell = beta[(1 + lag * K + var, eq)];
                    }
                }
                a
            })
            .collect();
        Self {
            p,
            intercept,
            coefficients,
            sigma,
            n_obs,
        }
    }

    /// Model with the given parameters and zero covariance (useful for
    /// simulation and tests).
    pub fn new(intercept: [f64; K], coefficients: Vec<[[f64; K]; K]>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(OfiError::invalid("lag order", "must be at least 1"));
        }
        Ok(Self {
            p: coefficients.len(),
            intercept,
            coefficients,
            sigma: [[0.0; K]; K],
            n_obs: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.coefficients.len() != self.p {
            return Err(OfiError::ModelFormat(format!(
                "lag order {} but {} coefficient matrices",
                self.p,
                self.coefficients.len()
            )));
        }
        let s = &self.sigma;
        if s[0][1] != s[1][0] {
            return Err(OfiError::ModelFormat("sigma is not symmetric".into()));
        }
        if s[0][0] < 0.0 || s[1][1] < 0.0 || s[0][0] * s[1][1] - s[0][1] * s[1][0] < -1e-9 * (s[0][0] * s[1][1]).abs() {
            return Err(OfiError::ModelFormat("sigma is not positive semidefinite".into()));
        }
        Ok(())
    }

    /// Prediction for the observation following `history` (noise set to 0).
    pub fn one_step(&self, history: &[Obs]) -> Result<Obs> {
        if history.len() < self.p {
            return Err(OfiError::SeriesTooShort {
                needed: self.p,
                got: history.len(),
            });
        }
        let mut out = self.intercept;
        for (lag, a) in self.coefficients.iter().enumerate() {
            let past = &history[history.len() - 1 - lag];
            for (eq, slot) in out.iter_mut().enumerate() {
                *slot += a[eq][0] * past[0] + a[eq][1] * past[1];
            }
        }
        Ok(out)
    }

    /// Recursive multi-step forecast, feeding each prediction back in.
    pub fn forecast(&self, history: &[Obs], steps: usize) -> Result<Vec<Obs>> {
        if steps == 0 {
            return Err(OfiError::invalid("steps", "horizon must be at least 1"));
        }
        if history.len() < self.p {
            return Err(OfiError::SeriesTooShort {
                needed: self.p,
                got: history.len(),
            });
        }
        let mut window: Vec<Obs> = history[history.len() - self.p..].to_vec();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let next = self.one_step(&window)?;
            window.remove(0);
            window.push(next);
            out.push(next);
        }
        Ok(out)
    }

    /// One-step fitted values for `t = p..n`.
    pub fn fitted(&self, obs: &[Obs]) -> Result<Vec<Obs>> {
        require_length(obs.len(), self.p)?;
        (self.p..obs.len()).map(|t| self.one_step(&obs[..t])).collect()
    }

    /// `actual_t − one_step_t` for `t = p..n` (length `n − p`).
    pub fn residuals(&self, obs: &[Obs]) -> Result<Vec<Obs>> {
        let fitted = self.fitted(obs)?;
        Ok(fitted
            .iter()
            .zip(&obs[self.p..])
            .map(|(f, a)| [a[0] - f[0], a[1] - f[1]])
            .collect())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let file = VarModelFile {
            format: VAR_FORMAT.to_string(),
            version: VAR_FORMAT_VERSION,
            variables: VARIABLE_NAMES.iter().map(|s| s.to_string()).collect(),
            p: self.p,
            n_obs: self.n_obs,
            intercept: self.intercept.to_vec(),
            coefficients: self
                .coefficients
                .iter()
                .map(|a| a.iter().map(|row| row.to_vec()).collect())
                .collect(),
            sigma: self.sigma.iter().map(|row| row.to_vec()).collect(),
        };
        toml::to_string(&file).map_err(|e| OfiError::ModelFormat(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: VarModelFile =
            toml::from_str(text).map_err(|e| OfiError::ModelFormat(e.to_string()))?;
        if file.format != VAR_FORMAT {
            return Err(OfiError::ModelFormat(format!("unexpected format `{}`", file.format)));
        }
        if file.version != VAR_FORMAT_VERSION {
            return Err(OfiError::ModelFormat(format!("unsupported version {}", file.version)));
        }
        let pair = |v: &[f64], what: &str| -> Result<[f64; K]> {
            v.try_into()
                .map_err(|_| OfiError::ModelFormat(format!("{what}: expected {K} values")))
        };
        let square = |m: &[Vec<f64>], what: &str| -> Result<[[f64; K]; K]> {
            if m.len() != K {
                return Err(OfiError::ModelFormat(format!("{what}: expected {K} rows")));
            }
            Ok([pair(&m[0], what)?, pair(&m[1], what)?])
        };
        let model = VarModel {
            p: file.p,
            n_obs: file.n_obs,
            intercept: pair(&file.intercept, "intercept")?,
            coefficients: file
                .coefficients
                .iter()
                .map(|a| square(a, "coefficients"))
                .collect::<Result<_>>()?,
            sigma: square(&file.sigma, "sigma")?,
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

const VAR_FORMAT: &str = "ofi-var-model";
const VAR_FORMAT_VERSION: u32 = 1;

/// On-disk layout. `coefficients[i][eq][var]` as in [`VarModel`].
#[derive(Serialize, Deserialize)]
struct VarModelFile {
    format: String,
    version: u32,
    variables: Vec<String>,
    p: usize,
    n_obs: usize,
    intercept: Vec<f64>,
    coefficients: Vec<Vec<Vec<f64>>>,
    sigma: Vec<Vec<f64>>,
}

/// Text report with one coefficient block per equation.
pub fn summary(model: &VarModel, diag: &FitDiagnostics) -> String {
    let mut s = String::new();
    let rule = "=".repeat(81);
    let thin = "-".repeat(81);
    let _ = writeln!(s, "  Summary of Regression Results");
    let _ = writeln!(s, "==================================");
    let _ = writeln!(s, "Model:                         VAR");
    let _ = writeln!(s, "Method:                        OLS");
    let _ = writeln!(s, "--------------------------------------------------------------------");
    let _ = writeln!(s, "No. of Equations: {:>15.5}    BIC: {:>23.4}", K as f64, diag.bic);
    let _ = writeln!(s, "Nobs: {:>27.2}    HQIC: {:>22.4}", model.n_obs as f64, diag.hqic);
    let _ = writeln!(s, "Log likelihood: {:>17.1}    FPE: {:>23.1}", diag.log_likelihood, diag.fpe);
    let _ = writeln!(s, "AIC: {:>28.4}    Det(Omega_mle): {:>12.1}", diag.aic, diag.det_sigma);
    let _ = writeln!(s, "--------------------------------------------------------------------");
    for (eq, block) in diag.equations.iter().enumerate() {
        let _ = writeln!(s, "Results for equation {}", VARIABLE_NAMES[eq]);
        let _ = writeln!(s, "{rule}");
        let _ = writeln!(
            s,
            "{:<16}{:>15}{:>17}{:>17}{:>16}",
            "", "coefficient", "std. error", "t-stat", "prob"
        );
        let _ = writeln!(s, "{thin}");
        for c in block {
            let _ = writeln!(
                s,
                "{:<16}{:>15.6}{:>17.6}{:>17.3}{:>16.3}",
                c.name, c.coefficient, c.std_error, c.t_stat, c.p_value
            );
        }
        let _ = writeln!(s, "{rule}");
    }
    let _ = writeln!(s, "Correlation matrix of residuals");
    let sd = [model.sigma[0][0].sqrt(), model.sigma[1][1].sqrt()];
    let _ = writeln!(s, "{:<16}{:>13}{:>13}", "", VARIABLE_NAMES[0], VARIABLE_NAMES[1]);
    for i in 0..K {
        let corr = |j: usize| model.sigma[i][j] / (sd[i] * sd[j]);
        let _ = writeln!(s, "{:<16}{:>13.6}{:>13.6}", VARIABLE_NAMES[i], corr(0), corr(1));
    }
    s
}
