//! Order-count series: CSV ingestion, trade-tape bucketing, the seeded
//! synthetic generator and chronological splits.
//!
//! Counts files use the header `timestamp,buy_orders,sell_orders`; trade
//! tapes use `timestamp,side` with `side` one of `BUY` or `SELL`.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{OfiError, Result};

/// Largest lag order any pipeline in this crate is expected to use.
pub const MAX_SUPPORTED_LAG: usize = 10;

pub const COUNTS_HEADER: [&str; 3] = ["timestamp", "buy_orders", "sell_orders"];

/// Buy and sell trade counts for one interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderCounts {
    pub timestamp: i64,
    pub buy: u64,
    pub sell: u64,
}

impl OrderCounts {
    pub fn new(timestamp: i64, buy: u64, sell: u64) -> Self {
        Self {
            timestamp,
            buy,
            sell,
        }
    }

    /// `(buy, sell)` as reals, the form the regression stages consume.
    pub fn as_pair(&self) -> [f64; 2] {
        [self.buy as f64, self.sell as f64]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Buy => "BUY",
            Side::Sell => "SELL",
        })
    }
}

impl FromStr for Side {
    type Err = OfiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "BUY" => Ok(Side::Buy),
            "SELL" => Ok(Side::Sell),
            other => Err(OfiError::invalid("side", format!("`{other}` is not BUY or SELL"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeEvent {
    pub timestamp: f64,
    pub side: Side,
}

/// Checks the series-level invariants: nonempty and unit-stride timestamps.
pub fn validate_series(series: &[OrderCounts]) -> Result<()> {
    if series.is_empty() {
        return Err(OfiError::EmptySeries);
    }
    for pair in series.windows(2) {
        if pair[1].timestamp != pair[0].timestamp + 1 {
            return Err(OfiError::NonMonotoneTimestamps {
                prev: pair[0].timestamp,
                next: pair[1].timestamp,
            });
        }
    }
    Ok(())
}

fn parse_field<T: FromStr>(
    path: &Path,
    line: u64,
    record: &csv::StringRecord,
    column: usize,
) -> Result<T> {
    let raw = record.get(column).ok_or_else(|| OfiError::MalformedRow {
        path: path.to_path_buf(),
        line,
        message: format!("missing column `{}`", COUNTS_HEADER[column]),
    })?;
    raw.trim().parse().map_err(|_| OfiError::MalformedRow {
        path: path.to_path_buf(),
        line,
        message: format!("column `{}`: cannot parse `{raw}`", COUNTS_HEADER[column]),
    })
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| OfiError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

fn check_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != expected {
        return Err(OfiError::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), names.join(",")),
        });
    }
    Ok(())
}

/// Reads a `timestamp,buy_orders,sell_orders` file, validating every row.
pub fn load_counts_csv(path: impl AsRef<Path>) -> Result<Vec<OrderCounts>> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    check_header(path, &mut reader, &COUNTS_HEADER)?;

    let mut out: Vec<OrderCounts> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(OfiError::MalformedRow {
                path: path.to_path_buf(),
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let timestamp: i64 = parse_field(path, line, &record, 0)?;
        let buy: i64 = parse_field(path, line, &record, 1)?;
        let sell: i64 = parse_field(path, line, &record, 2)?;
        for (column, value) in [(1, buy), (2, sell)] {
            if value < 0 {
                return Err(OfiError::MalformedRow {
                    path: path.to_path_buf(),
                    line,
                    message: format!("column `{}`: negative count {value}", COUNTS_HEADER[column]),
                });
            }
        }
        if let Some(prev) = out.last() {
            if timestamp != prev.timestamp + 1 {
                return Err(OfiError::MalformedRow {
                    path: path.to_path_buf(),
                    line,
                    message: format!(
                        "column `timestamp`: {timestamp} does not follow {} with unit stride",
                        prev.timestamp
                    ),
                });
            }
        }
        out.push(OrderCounts::new(timestamp, buy as u64, sell as u64));
    }
    if out.is_empty() {
        return Err(OfiError::EmptySeries);
    }
    Ok(out)
}

pub fn write_counts_csv(path: impl AsRef<Path>, series: &[OrderCounts]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| OfiError::io(path, e))?;
    write_counts(file, series).map_err(|e| OfiError::io(path, e))
}

/// Serializes counts in the canonical dialect (no quoting, `\n` line ends).
pub fn write_counts<W: Write>(mut w: W, series: &[OrderCounts]) -> std::io::Result<()> {
    writeln!(w, "{}", COUNTS_HEADER.join(","))?;
    for row in series {
        writeln!(w, "{},{},{}", row.timestamp, row.buy, row.sell)?;
    }
    w.flush()
}

/// Reads a `timestamp,side` trade tape.
pub fn load_trades_csv(path: impl AsRef<Path>) -> Result<Vec<TradeEvent>> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    check_header(path, &mut reader, &["timestamp", "side"])?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| OfiError::MalformedRow {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != 2 {
            return Err(bad(format!("expected 2 fields, found {}", record.len())));
        }
        let timestamp: f64 = record[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("column `timestamp`: cannot parse `{}`", &record[0])))?;
        if !timestamp.is_finite() {
            return Err(bad("column `timestamp`: not finite".into()));
        }
        let side: Side = record[1]
            .parse()
            .map_err(|_| bad(format!("column `side`: `{}` is not BUY or SELL", &record[1])))?;
        out.push(TradeEvent { timestamp, side });
    }
    if out.is_empty() {
        return Err(OfiError::EmptySeries);
    }
    Ok(out)
}

/// Buckets a sorted trade tape into per-interval counts.
///
/// Buckets are aligned to multiples of `bucket` seconds; the bucket holding
/// timestamp `ts` has index `floor(ts / bucket)`, which becomes the row's
/// timestamp. Every bucket between the first and last event is emitted,
/// empty ones as `(0, 0)`.
pub fn aggregate_trades(events: &[TradeEvent], bucket: f64) -> Result<Vec<OrderCounts>> {
    if !(bucket > 0.0 && bucket.is_finite()) {
        return Err(OfiError::invalid("bucket", format!("{bucket} is not a positive size")));
    }
    if events.is_empty() {
        return Err(OfiError::EmptySeries);
    }
    if let Some(index) = events
        .windows(2)
        .position(|w| w[1].timestamp < w[0].timestamp)
    {
        return Err(OfiError::UnsortedEvents { index: index + 1 });
    }

    let slot = |ts: f64| (ts / bucket).floor() as i64;
    let first = slot(events[0].timestamp);
    let last = slot(events[events.len() - 1].timestamp);
    let mut out: Vec<OrderCounts> = (first..=last).map(|t| OrderCounts::new(t, 0, 0)).collect();
    for event in events {
        let row = &mut out[(slot(event.timestamp) - first) as usize];
        match event.side {
            Side::Buy => row.buy += 1,
            Side::Sell => row.sell += 1,
        }
    }
    Ok(out)
}

/// Parameters of the synthetic order-flow generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub length: usize,
    pub seed: u64,
    /// Mean orders per interval per side.
    pub base_intensity: f64,
    /// Autoregressive coupling of the net flow, in `[0, 1)`.
    pub linear_strength: f64,
    /// Amplitude of the bilinear `tanh` term, `>= 0`.
    pub nonlinear_strength: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            length: 3000,
            seed: 42,
            base_intensity: 30.0,
            linear_strength: 0.5,
            nonlinear_strength: 0.2,
        }
    }
}

impl SyntheticSpec {
    pub fn min_length() -> usize {
        2 * MAX_SUPPORTED_LAG + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < Self::min_length() {
            return Err(OfiError::invalid(
                "length",
                format!("{} is below the minimum of {}", self.length, Self::min_length()),
            ));
        }
        if !(self.base_intensity > 0.0 && self.base_intensity.is_finite()) {
            return Err(OfiError::invalid("base_intensity", "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.linear_strength) {
            return Err(OfiError::invalid("linear_strength", "must lie in [0, 1)"));
        }
        if !(self.nonlinear_strength >= 0.0 && self.nonlinear_strength.is_finite()) {
            return Err(OfiError::invalid("nonlinear_strength", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Bound on the intensity tilt so neither side's rate collapses to zero.
const MAX_TILT: f64 = 0.95;

/// Generates a reproducible counts series.
///
/// Each interval draws buy and sell counts from Poisson distributions with
/// rates `base·(1 + m_t)` and `base·(1 − m_t)`, where
///
/// ```text
/// m_t = clamp(a·ofi_{t−1} + b·tanh(z_{t−1}·z_{t−2}), −0.95, 0.95)
/// z_t = (net_t − 2·base·a·ofi_{t−1}) / sqrt(2·base)
/// ```
///
/// `net_t = buy_t − sell_t`, `a` is `linear_strength` and `b` is
/// `nonlinear_strength`. `z` is the standardized net-flow surprise relative
/// to the linear part, so the bilinear term is a function of the linear
/// model's own recent residuals.
///
/// Randomness comes from `ChaCha8Rng::seed_from_u64(spec.seed)`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<OrderCounts>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = spec.base_intensity;
    let a = spec.linear_strength;
    let b = spec.nonlinear_strength;
    let scale = (2.0 * base).sqrt();

    let mut out = Vec::with_capacity(spec.length);
    let (mut z1, mut z2) = (0.0_f64, 0.0_f64);
    let mut prev_ofi = 0.0_f64;
    for t in 0..spec.length {
        let tilt = (a * prev_ofi + b * (z1 * z2).tanh()).clamp(-MAX_TILT, MAX_TILT);
        let buy = draw_poisson(&mut rng, base * (1.0 + tilt));
        let sell = draw_poisson(&mut rng, base * (1.0 - tilt));

        let net = buy as f64 - sell as f64;
        let z = (net - 2.0 * base * a * prev_ofi) / scale;
        z2 = z1;
        z1 = z;
        prev_ofi = if buy + sell > 0 { net / (buy + sell) as f64 } else { 0.0 };
        out.push(OrderCounts::new(t as i64, buy, sell));
    }
    Ok(out)
}

fn draw_poisson(rng: &mut ChaCha8Rng, rate: f64) -> u64 {
    // rate is bounded below by base·0.05 > 0
    let dist = Poisson::new(rate).expect("positive finite Poisson rate");
    dist.sample(rng) as u64
}

/// Splits at `floor(fraction·n)` without reordering.
pub fn chronological_split<T: Clone>(series: &[T], train_fraction: f64) -> Result<(Vec<T>, Vec<T>)> {
    if series.len() < 2 {
        return Err(OfiError::SeriesTooShort {
            needed: 2,
            got: series.len(),
        });
    }
    let cut = split_index(series.len(), train_fraction)?;
    Ok((series[..cut].to_vec(), series[cut..].to_vec()))
}

/// Index of the first holdout row for a chronological split.
pub fn split_index(len: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(OfiError::invalid("train_fraction", format!("{train_fraction} not in (0, 1)")));
    }
    let cut = (train_fraction * len as f64).floor() as usize;
    if cut == 0 || cut >= len {
        return Err(OfiError::invalid(
            "train_fraction",
            format!("{train_fraction} of {len} rows leaves an empty partition"),
        ));
    }
    Ok(cut)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_order_book_sample() {
        let f = write_tmp("timestamp,buy_orders,sell_orders\n1,55,30\n2,45,40\n3,60,125\n");
        let rows = load_counts_csv(f.path()).unwrap();
        assert_eq!(
            rows,
            vec![
                OrderCounts::new(1, 55, 30),
                OrderCounts::new(2, 45, 40),
                OrderCounts::new(3, 60, 125)
            ]
        );
    }

    #[test]
    fn header_only_is_empty_series() {
        let f = write_tmp("timestamp,buy_orders,sell_orders\n");
        let err = load_counts_csv(f.path()).unwrap_err();
        assert_eq!(err.to_string(), "empty series");
    }

    #[test]
    fn negative_count_names_line_and_column() {
        let f = write_tmp("timestamp,buy_orders,sell_orders\n1,5,3\n2,-3,4\n");
        let msg = load_counts_csv(f.path()).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("buy_orders"), "{msg}");
    }

    #[test]
    fn rejects_gaps_and_garbage() {
        let gap = write_tmp("timestamp,buy_orders,sell_orders\n1,5,3\n3,1,1\n");
        assert!(load_counts_csv(gap.path()).unwrap_err().to_string().contains("line 3"));
        let garbage = write_tmp("timestamp,buy_orders,sell_orders\n1,x,3\n");
        assert!(load_counts_csv(garbage.path()).unwrap_err().to_string().contains("line 2"));
        let header = write_tmp("ts,buy,sell\n1,1,1\n");
        assert!(load_counts_csv(header.path()).is_err());
        assert!(matches!(
            load_counts_csv("/nonexistent/counts.csv"),
            Err(OfiError::Io { .. })
        ));
    }

    #[test]
    fn aggregate_counts_one_bucket() {
        let ev = |t, side| TradeEvent { timestamp: t, side };
        let events = [
            ev(0.1, Side::Buy),
            ev(0.2, Side::Sell),
            ev(0.5, Side::Buy),
            ev(0.9, Side::Buy),
        ];
        assert_eq!(aggregate_trades(&events, 1.0).unwrap(), vec![OrderCounts::new(0, 3, 1)]);
    }

    #[test]
    fn aggregate_fills_gaps() {
        let ev = |t, side| TradeEvent { timestamp: t, side };
        let events = [ev(10.5, Side::Buy), ev(12.1, Side::Sell)];
        let rows = aggregate_trades(&events, 1.0).unwrap();
        assert_eq!(
            rows,
            vec![
                OrderCounts::new(10, 1, 0),
                OrderCounts::new(11, 0, 0),
                OrderCounts::new(12, 0, 1)
            ]
        );
        validate_series(&rows).unwrap();
    }

    #[test]
    fn aggregate_rejects_bad_input() {
        let ev = |t| TradeEvent { timestamp: t, side: Side::Buy };
        assert!(matches!(
            aggregate_trades(&[ev(2.0), ev(1.0)], 1.0),
            Err(OfiError::UnsortedEvents { index: 1 })
        ));
        assert!(aggregate_trades(&[ev(1.0)], 0.0).is_err());
        assert!(aggregate_trades(&[ev(1.0)], -1.0).is_err());
    }

    #[test]
    fn aggregate_conserves_random_events() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut events: Vec<TradeEvent> = (0..1000)
            .map(|_| TradeEvent {
                timestamp: rng.random_range(0.0..500.0),
                side: if rng.random_bool(0.5) { Side::Buy } else { Side::Sell },
            })
            .collect();
        events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let rows = aggregate_trades(&events, 1.0).unwrap();
        let total: u64 = rows.iter().map(|r| r.buy + r.sell).sum();
        assert_eq!(total, 1000);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            length: 3000,
            seed: 42,
            ..Default::default()
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_counts(&mut a, &generate_synthetic(&spec).unwrap()).unwrap();
        write_counts(&mut b, &generate_synthetic(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = generate_synthetic(&SyntheticSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(generate_synthetic(&spec).unwrap(), other);
    }

    #[test]
    fn synthetic_mean_matches_intensity_without_coupling() {
        let spec = SyntheticSpec {
            length: 10_000,
            seed: 1,
            base_intensity: 30.0,
            linear_strength: 0.0,
            nonlinear_strength: 0.0,
        };
        let rows = generate_synthetic(&spec).unwrap();
        let mean = rows.iter().map(|r| r.buy as f64).sum::<f64>() / rows.len() as f64;
        assert!((mean - 30.0).abs() < 0.05 * 30.0, "mean {mean}");
    }

    #[test]
    fn synthetic_validation() {
        for bad in [
            SyntheticSpec { length: 1, ..Default::default() },
            SyntheticSpec { base_intensity: 0.0, ..Default::default() },
            SyntheticSpec { linear_strength: 1.0, ..Default::default() },
            SyntheticSpec { nonlinear_strength: -0.1, ..Default::default() },
        ] {
            assert!(generate_synthetic(&bad).is_err(), "{bad:?}");
        }
        let min = SyntheticSpec { length: SyntheticSpec::min_length(), ..Default::default() };
        assert_eq!(generate_synthetic(&min).unwrap().len(), 21);
    }

    #[test]
    fn split_examples() {
        let rows: Vec<i32> = (0..10).collect();
        let (a, b) = chronological_split(&rows, 0.8).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let (a, b) = chronological_split(&[1, 2], 0.5).unwrap();
        assert_eq!((a, b), (vec![1], vec![2]));
        let rows: Vec<i32> = (0..3000).collect();
        let (a, b) = chronological_split(&rows, 0.8).unwrap();
        assert_eq!((a.len(), b.len()), (2400, 600));
        assert_eq!([a, b].concat(), rows);
    }

    #[test]
    fn split_rejects_empty_partition() {
        assert!(chronological_split(&[1, 2], 0.4).is_err());
        assert!(chronological_split(&[1, 2, 3], 0.2).is_err());
        assert!(chronological_split(&[1], 0.5).is_err());
        assert!(chronological_split(&[1, 2], 1.0).is_err());
    }
}
