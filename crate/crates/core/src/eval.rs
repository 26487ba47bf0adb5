//! Forecast error metrics (MSE, MAE, R²), signal accuracy/precision and
//! comparison tables.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{OfiError, Result};
use crate::ofi::Signal;

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(OfiError::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(OfiError::EmptyInput);
    }
    Ok(())
}

pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    Ok(sum / actual.len() as f64)
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum();
    Ok(sum / actual.len() as f64)
}

/// `1 − SS_res / SS_tot`, with `SS_tot` taken about the mean of `actual`.
/// Negative when the predictor is worse than that mean.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    // compared exactly: the mean of a constant series can be off by an ulp
    if actual.iter().all(|&a| a == actual[0]) {
        return Err(OfiError::ZeroVariance);
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    let ss_res: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// How per-class precisions are combined into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Unweighted mean over classes that occur in the predictions.
    #[default]
    Macro,
    /// Pooled true positives over pooled predictions (equals accuracy for
    /// single-label problems).
    Micro,
    /// Per-class precision weighted by the class's true support.
    Weighted,
}

/// `confusion[actual][predicted]`, indexed by [`Signal::index`]
/// (BUY, SELL, HOLD).
pub type Confusion = [[usize; 3]; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMetrics {
    pub accuracy: f64,
    pub precision: f64,
    /// Per-class precision; `None` for classes never predicted.
    pub per_class_precision: [Option<f64>; 3],
    pub confusion: Confusion,
}

pub fn confusion(actual: &[Signal], predicted: &[Signal]) -> Result<Confusion> {
    if actual.len() != predicted.len() {
        return Err(OfiError::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    let mut m = [[0usize; 3]; 3];
    for (a, p) in actual.iter().zip(predicted) {
        m[a.index()][p.index()] += 1;
    }
    Ok(m)
}

pub fn intensity_metrics(
    actual: &[Signal],
    predicted: &[Signal],
    averaging: Averaging,
) -> Result<IntensityMetrics> {
    if actual.is_empty() {
        return Err(OfiError::EmptyInput);
    }
    let m = confusion(actual, predicted)?;
    let total = actual.len();
    let correct: usize = (0..3).map(|i| m[i][i]).sum();

    let per_class: [Option<f64>; 3] = std::array::from_fn(|c| {
        let predicted_as_c: usize = (0..3).map(|a| m[a][c]).sum();
        (predicted_as_c > 0).then(|| m[c][c] as f64 / predicted_as_c as f64)
    });
    let precision = match averaging {
        Averaging::Macro => {
            let present: Vec<f64> = per_class.iter().flatten().copied().collect();
            present.iter().sum::<f64>() / present.len() as f64
        }
        Averaging::Micro => correct as f64 / total as f64,
        Averaging::Weighted => {
            let support = |c: usize| m[c].iter().sum::<usize>() as f64;
            (0..3)
                .map(|c| per_class[c].unwrap_or(0.0) * support(c))
                .sum::<f64>()
                / total as f64
        }
    };
    Ok(IntensityMetrics {
        accuracy: correct as f64 / total as f64,
        precision,
        per_class_precision: per_class,
        confusion: m,
    })
}

/// Metrics of one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub model: String,
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
    pub accuracy: f64,
    pub precision: f64,
    #[serde(skip)]
    pub confusion: Confusion,
}

impl EvalReport {
    /// Computes every metric from aligned OFI values and signals.
    pub fn compute(
        dataset: impl Into<String>,
        model: impl Into<String>,
        actual_ofi: &[f64],
        predicted_ofi: &[f64],
        actual_signals: &[Signal],
        predicted_signals: &[Signal],
        averaging: Averaging,
    ) -> Result<Self> {
        let intensity = intensity_metrics(actual_signals, predicted_signals, averaging)?;
        Ok(Self {
            dataset: dataset.into(),
            model: model.into(),
            mse: mse(actual_ofi, predicted_ofi)?,
            mae: mae(actual_ofi, predicted_ofi)?,
            r2: r_squared(actual_ofi, predicted_ofi)?,
            accuracy: intensity.accuracy,
            precision: intensity.precision,
            confusion: intensity.confusion,
        })
    }
}

pub const REPORT_CSV_HEADER: &str = "dataset,model,mse,mae,r2,accuracy,precision";

/// Groups reports by dataset (first-appearance order), keeping model order
/// within each group.
fn grouped(reports: &[EvalReport]) -> Vec<(&str, Vec<&EvalReport>)> {
    let mut groups: Vec<(&str, Vec<&EvalReport>)> = Vec::new();
    for r in reports {
        match groups.iter_mut().find(|(d, _)| *d == r.dataset) {
            Some((_, rows)) => rows.push(r),
            None => groups.push((&r.dataset, vec![r])),
        }
    }
    groups
}

/// Fixed-width comparison table: three decimals for errors, percentages
/// with two decimals for the signal metrics.
pub fn render_table(reports: &[EvalReport]) -> String {
    let dataset_w = reports.iter().map(|r| r.dataset.len()).max().unwrap_or(0).max(7);
    let model_w = reports.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let header = format!(
        "{:<dw$}  {:<mw$}  {:>8}  {:>8}  {:>8}  {:>20}  {:>21}",
        "Dataset",
        "Model",
        "MSE",
        "MAE",
        "R²",
        "Accuracy (Intensity)",
        "Precision (Intensity)",
        dw = dataset_w,
        mw = model_w
    );
    let rule = "-".repeat(header.chars().count());
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "{rule}");
    for (dataset, rows) in grouped(reports) {
        for (i, r) in rows.iter().enumerate() {
            let label = if i == 0 { dataset } else { "" };
            let _ = writeln!(
                out,
                "{:<dw$}  {:<mw$}  {:>8.3}  {:>8.3}  {:>8.3}  {:>19.2}%  {:>20.2}%",
                label,
                r.model,
                r.mse,
                r.mae,
                r.r2,
                100.0 * r.accuracy,
                100.0 * r.precision,
                dw = dataset_w,
                mw = model_w
            );
        }
        let _ = writeln!(out, "{rule}");
    }
    out
}

/// Report CSV, grouped in the same order as [`render_table`], values at
/// full precision.
pub fn write_report_csv<W: Write>(mut w: W, reports: &[EvalReport]) -> std::io::Result<()> {
    writeln!(w, "{REPORT_CSV_HEADER}")?;
    for (_, rows) in grouped(reports) {
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.dataset, r.model, r.mse, r.mae, r.r2, r.accuracy, r.precision
            )?;
        }
    }
    w.flush()
}

/// Table text and CSV text for a set of reports.
pub fn render_comparison(reports: &[EvalReport]) -> Result<(String, String)> {
    if reports.is_empty() {
        return Err(OfiError::EmptyInput);
    }
    let mut csv = Vec::new();
    write_report_csv(&mut csv, reports).expect("writing to memory");
    Ok((render_table(reports), String::from_utf8(csv).expect("utf-8")))
}

pub fn parse_report_csv(text: &str) -> Result<Vec<EvalReport>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// 3×3 confusion matrix with labeled axes (`actual\predicted`).
pub fn write_confusion_csv<W: Write>(mut w: W, m: &Confusion) -> std::io::Result<()> {
    let names: Vec<&str> = Signal::ALL.iter().map(Signal::as_str).collect();
    writeln!(w, "actual\\predicted,{}", names.join(","))?;
    for (i, row) in m.iter().enumerate() {
        writeln!(w, "{},{},{},{}", names[i], row[0], row[1], row[2])?;
    }
    w.flush()
}
