//! Order flow imbalance and the threshold signal rule.
//!
//! OFI over a window is `(ΔB − ΔS) / (ΔB + ΔS)` where `ΔB`, `ΔS` are the buy
//! and sell trade counts in that window. An empty window (no trades) is
//! defined as OFI 0, which signals HOLD.
//!
//! Note the naming: the threshold is called `threshold` here, and the time
//! index is the row position. Both are written `T` in the usual notation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::OrderCounts;
use crate::error::{OfiError, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.1;
pub const DEFAULT_WINDOW: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfiParams {
    /// Number of trailing intervals summed per OFI value.
    pub window: usize,
    pub threshold: f64,
}

impl Default for OfiParams {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl OfiParams {
    pub fn new(window: usize, threshold: f64) -> Result<Self> {
        let params = Self { window, threshold };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(OfiError::invalid("window", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(OfiError::invalid(
                "threshold",
                format!("{} not in [0, 1)", self.threshold),
            ));
        }
        Ok(())
    }
}

/// Trading intensity label. Ordered `Sell < Hold < Buy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Signal {
    Sell,
    Hold,
    Buy,
}

impl Signal {
    pub const ALL: [Signal; 3] = [Signal::Buy, Signal::Sell, Signal::Hold];

    pub fn as_str(&self) -> &'static str {
        match self {
            Signal::Buy => "BUY",
            Signal::Sell => "SELL",
            Signal::Hold => "HOLD",
        }
    }

    /// Position in [`Signal::ALL`], used to index confusion matrices.
    pub fn index(&self) -> usize {
        match self {
            Signal::Buy => 0,
            Signal::Sell => 1,
            Signal::Hold => 2,
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Signal {
    type Err = OfiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "BUY" => Ok(Signal::Buy),
            "SELL" => Ok(Signal::Sell),
            "HOLD" => Ok(Signal::Hold),
            other => Err(OfiError::invalid("signal", format!("`{other}`"))),
        }
    }
}

/// OFI of a single window. Accepts real-valued counts so model forecasts can
/// be fed in without rounding.
pub fn ofi(buy: f64, sell: f64) -> Result<f64> {
    if !(buy >= 0.0 && sell >= 0.0) {
        return Err(OfiError::invalid(
            "order counts",
            format!("buy={buy}, sell={sell} must be nonnegative"),
        ));
    }
    let total = buy + sell;
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(((buy - sell) / total).clamp(-1.0, 1.0))
}

pub(crate) fn ofi_unchecked(buy: f64, sell: f64) -> f64 {
    let total = buy + sell;
    if total > 0.0 {
        ((buy - sell) / total).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// The threshold rule: BUY above `threshold`, SELL below `-threshold`,
/// HOLD on the closed interval between.
pub fn signal(ofi_value: f64, threshold: f64) -> Signal {
    if ofi_value > threshold {
        Signal::Buy
    } else if ofi_value < -threshold {
        Signal::Sell
    } else {
        Signal::Hold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfiSeries {
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

impl OfiSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn signals(&self, threshold: f64) -> Vec<Signal> {
        self.values.iter().map(|&v| signal(v, threshold)).collect()
    }
}

/// Trailing-window OFI. Element `i` of the output covers input rows
/// `i..i + window` and carries the timestamp of the last of them.
pub fn ofi_series(counts: &[OrderCounts], params: &OfiParams) -> Result<OfiSeries> {
    params.validate()?;
    let h = params.window;
    if counts.len() < h {
        return Err(OfiError::SeriesTooShort {
            needed: h,
            got: counts.len(),
        });
    }
    let mut timestamps = Vec::with_capacity(counts.len() + 1 - h);
    let mut values = Vec::with_capacity(counts.len() + 1 - h);
    for window in counts.windows(h) {
        let (buy, sell) = window
            .iter()
            .fold((0u64, 0u64), |(b, s), c| (b + c.buy, s + c.sell));
        timestamps.push(window[h - 1].timestamp);
        values.push(ofi_unchecked(buy as f64, sell as f64));
    }
    Ok(OfiSeries { timestamps, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn round3(x: f64) -> f64 {
        (x * 1000.0).round() / 1000.0
    }

    #[test]
    fn order_book_sample_values() {
        assert_eq!(round3(ofi(55.0, 30.0).unwrap()), 0.294);
        assert_eq!(round3(ofi(45.0, 40.0).unwrap()), 0.059);
        assert_eq!(round3(ofi(60.0, 125.0).unwrap()), -0.351);
        assert_eq!(ofi(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(ofi(17.0, 17.0).unwrap(), 0.0);
        assert!(ofi(-1.0, 2.0).is_err());
        assert!(ofi(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn windowed_series() {
        let rows = [
            OrderCounts::new(1, 55, 30),
            OrderCounts::new(2, 45, 40),
            OrderCounts::new(3, 60, 125),
        ];
        let s = ofi_series(&rows, &OfiParams::default()).unwrap();
        let got: Vec<f64> = s.values.iter().map(|&v| round3(v)).collect();
        assert_eq!(got, vec![0.294, 0.059, -0.351]);
        assert_eq!(s.timestamps, vec![1, 2, 3]);

        let two = ofi_series(&rows[..2], &OfiParams::new(2, 0.1).unwrap()).unwrap();
        assert_eq!(two.len(), 1);
        // (100 - 70) / 170
        assert!((two.values[0] - 0.176_470_588_235_294_1).abs() < 1e-12);
        assert_eq!(two.timestamps, vec![2]);

        assert!(ofi_series(&rows[..1], &OfiParams::new(2, 0.1).unwrap()).is_err());
    }

    #[test]
    fn constant_balanced_series_is_zero() {
        let rows: Vec<_> = (0..20).map(|t| OrderCounts::new(t, 9, 9)).collect();
        let s = ofi_series(&rows, &OfiParams::new(3, 0.1).unwrap()).unwrap();
        assert_eq!(s.len(), 18);
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn signal_rule() {
        assert_eq!(signal(0.294, 0.1), Signal::Buy);
        assert_eq!(signal(0.059, 0.1), Signal::Hold);
        assert_eq!(signal(-0.1221, 0.1), Signal::Sell);
        assert_eq!(signal(0.1, 0.1), Signal::Hold);
        assert_eq!(signal(-0.1, 0.1), Signal::Hold);
    }

    #[test]
    fn params_validation() {
        assert!(OfiParams::new(0, 0.1).is_err());
        assert!(OfiParams::new(1, 1.0).is_err());
        assert!(OfiParams::new(1, -0.1).is_err());
        assert!(OfiParams::new(1, 0.0).is_ok());
    }

    #[test]
    fn signal_text_round_trip() {
        for s in Signal::ALL {
            assert_eq!(s.as_str().parse::<Signal>().unwrap(), s);
        }
        assert!("buy".parse::<Signal>().is_err());
    }

    proptest! {
        #[test]
        fn antisymmetric(a in 0u32..10_000, b in 0u32..10_000) {
            let (a, b) = (a as f64, b as f64);
            prop_assert_eq!(ofi(a, b).unwrap(), -ofi(b, a).unwrap());
        }

        #[test]
        fn scale_invariant(a in 0u32..10_000, b in 0u32..10_000, c in 1u32..50) {
            prop_assume!(a + b > 0);
            let (af, bf, cf) = (a as f64, b as f64, c as f64);
            let lhs = ofi(cf * af, cf * bf).unwrap();
            prop_assert!((lhs - ofi(af, bf).unwrap()).abs() < 1e-15);
        }

        #[test]
        fn bounded(a in 0u32..10_000, b in 0u32..10_000) {
            let v = ofi(a as f64, b as f64).unwrap();
            prop_assert!(v.abs() <= 1.0);
            let one_sided = (a == 0) != (b == 0);
            prop_assert_eq!(v.abs() == 1.0, one_sided);
        }

        #[test]
        fn signal_monotone(x in -1.0f64..1.0, y in -1.0f64..1.0, t in 0.0f64..0.99) {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(signal(lo, t) <= signal(hi, t));
        }

        #[test]
        fn raising_threshold_only_collapses_to_hold(x in -1.0f64..1.0, t in 0.0f64..0.98, dt in 0.0f64..0.5) {
            let t2 = (t + dt).min(0.999);
            let before = signal(x, t);
            let after = signal(x, t2);
            prop_assert!(after == before || after == Signal::Hold);
        }
    }
}
