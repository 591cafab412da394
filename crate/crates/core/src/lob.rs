//! Limit-order-book event model: mid-price, normalization, CSV ingestion,
//! and a seeded synthetic stream generator.
//!
//! Prices are stored as integers after the ×10,000 scaling and only become
//! floats at the model boundary. Time is deliberately absent: events are
//! sequential trading signals, nothing more.

use crate::error::{Error, Result};
use crate::numerics::{Rng, Vec1};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const LEVELS: usize = 10;
pub const FEATURES: usize = 4 * LEVELS;

/// One trading event: 10 ask/bid price levels with volumes, prices scaled ×10⁴.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LobEvent {
    pub ask_prices: [i64; LEVELS],
    pub ask_volumes: [i64; LEVELS],
    pub bid_prices: [i64; LEVELS],
    pub bid_volumes: [i64; LEVELS],
}

impl LobEvent {
    /// Checks the book invariants: positive spread, ask levels nondecreasing,
    /// bid levels nonincreasing, volumes nonnegative. Returns the violated
    /// rule on failure.
    pub fn check_invariants(&self) -> std::result::Result<(), &'static str> {
        if self.ask_prices[0] <= self.bid_prices[0] {
            return Err("positive spread (best ask must exceed best bid)");
        }
        for level in 1..LEVELS {
            if self.ask_prices[level] < self.ask_prices[level - 1] {
                return Err("ask prices nondecreasing across levels");
            }
            if self.bid_prices[level] > self.bid_prices[level - 1] {
                return Err("bid prices nonincreasing across levels");
            }
        }
        let volumes = self.ask_volumes.iter().chain(self.bid_volumes.iter());
        for &v in volumes {
            if v < 0 {
                return Err("volumes nonnegative");
            }
        }
        Ok(())
    }

    /// Event as a flat feature vector in column order
    /// `[ask prices | ask volumes | bid prices | bid volumes]`.
    pub fn features(&self) -> Vec1 {
        let mut data = Vec::with_capacity(FEATURES);
        data.extend(self.ask_prices.iter().map(|&x| x as f64));
        data.extend(self.ask_volumes.iter().map(|&x| x as f64));
        data.extend(self.bid_prices.iter().map(|&x| x as f64));
        data.extend(self.bid_volumes.iter().map(|&x| x as f64));
        Vec1::from_vec(data)
    }
}

/// Mid-price: the arithmetic mean of the best ask and best bid.
pub fn mid_price(e: &LobEvent) -> f64 {
    (e.ask_prices[0] + e.bid_prices[0]) as f64 / 2.0
}

/// Ordered sequence of trading events.
#[derive(Clone, Debug, PartialEq)]
pub struct LobStream {
    pub events: Vec<LobEvent>,
    pub source: String,
}

impl LobStream {
    pub fn new(events: Vec<LobEvent>, source: impl Into<String>) -> Result<Self> {
        if events.len() < 2 {
            return Err(Error::Config(format!(
                "a stream needs at least 2 events, got {}",
                events.len()
            )));
        }
        Ok(Self {
            events,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn mid_prices(&self) -> Vec<f64> {
        self.events.iter().map(mid_price).collect()
    }
}

/// Normalization mode applied to the 40 input features and the mid-price label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    Raw,
    MinMax,
    Zscore,
}

impl NormMode {
    pub fn name(self) -> &'static str {
        match self {
            NormMode::Raw => "raw",
            NormMode::MinMax => "minmax",
            NormMode::Zscore => "zscore",
        }
    }
}

impl std::str::FromStr for NormMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(NormMode::Raw),
            "minmax" => Ok(NormMode::MinMax),
            "zscore" => Ok(NormMode::Zscore),
            other => Err(Error::Config(format!(
                "unknown normalization mode '{other}' (expected raw, minmax, or zscore)"
            ))),
        }
    }
}

/// Per-feature affine transform `x ↦ (x − shift) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Affine {
    shift: f64,
    scale: f64,
}

impl Affine {
    const IDENTITY: Affine = Affine {
        shift: 0.0,
        scale: 1.0,
    };

    fn apply(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }

    fn invert(&self, y: f64) -> f64 {
        y * self.scale + self.shift
    }
}

/// Feature and label statistics fitted on a window of events, then held fixed.
///
/// MinMax maps each feature to `(x − min)/(max − min)`; Zscore to `(x − μ)/σ`
/// with population σ. The mid-price label gets its own statistics computed
/// over the window's mid-prices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormMode,
    features: Vec<Affine>,
    label: Affine,
}

impl Normalizer {
    /// Fits statistics for `mode` on `window`. Degenerate statistics (a
    /// constant feature under MinMax/Zscore) are configuration errors.
    pub fn fit(mode: NormMode, window: &[LobEvent]) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::Config("normalizer window is empty".into()));
        }
        if mode == NormMode::Raw {
            return Ok(Self {
                mode,
                features: vec![Affine::IDENTITY; FEATURES],
                label: Affine::IDENTITY,
            });
        }

        let columns: Vec<Vec<f64>> = (0..FEATURES)
            .map(|j| window.iter().map(|e| e.features()[j]).collect())
            .collect();
        let mids: Vec<f64> = window.iter().map(mid_price).collect();

        let mut features = Vec::with_capacity(FEATURES);
        for (j, column) in columns.iter().enumerate() {
            features.push(Self::fit_column(mode, column).ok_or_else(|| {
                Error::Config(format!(
                    "degenerate {} statistic for feature index {j}",
                    mode.name()
                ))
            })?);
        }
        let label = Self::fit_column(mode, &mids).ok_or_else(|| {
            Error::Config(format!(
                "degenerate {} statistic for the mid-price label",
                mode.name()
            ))
        })?;

        Ok(Self {
            mode,
            features,
            label,
        })
    }

    fn fit_column(mode: NormMode, column: &[f64]) -> Option<Affine> {
        match mode {
            NormMode::Raw => Some(Affine::IDENTITY),
            NormMode::MinMax => {
                let min = column.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (max > min).then_some(Affine {
                    shift: min,
                    scale: max - min,
                })
            }
            NormMode::Zscore => {
                let n = column.len() as f64;
                let mean = column.iter().sum::<f64>() / n;
                let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                (std > 0.0).then_some(Affine {
                    shift: mean,
                    scale: std,
                })
            }
        }
    }

    /// Normalized 40-feature vector for one event.
    pub fn apply(&self, e: &LobEvent) -> Vec1 {
        let raw = e.features();
        Vec1::from_vec(
            raw.iter()
                .zip(self.features.iter())
                .map(|(&x, a)| a.apply(x))
                .collect(),
        )
    }

    pub fn normalize_label(&self, mid: f64) -> f64 {
        self.label.apply(mid)
    }

    pub fn denormalize_label(&self, y: f64) -> f64 {
        self.label.invert(y)
    }
}

/// Mid-price dynamics for the synthetic generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Integer ±1-tick steps, no drift.
    RandomWalk,
    /// Ornstein-Uhlenbeck-style pull back to the initial level.
    MeanRevert,
    /// Constant drift of +1 tick per event plus Gaussian noise (std 2 ticks).
    Trend,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::RandomWalk => "random_walk",
            Regime::MeanRevert => "mean_revert",
            Regime::Trend => "trend",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_walk" => Ok(Regime::RandomWalk),
            "mean_revert" => Ok(Regime::MeanRevert),
            "trend" => Ok(Regime::Trend),
            other => Err(Error::Config(format!(
                "unknown regime '{other}' (expected random_walk, mean_revert, or trend)"
            ))),
        }
    }
}

/// Drift of the trend regime, ticks per event.
pub const TREND_DRIFT: f64 = 1.0;
/// Noise standard deviation of the trend regime, ticks.
pub const TREND_NOISE_STD: f64 = 2.0;
/// Mean-reversion pull strength toward the initial level.
const MEAN_REVERT_KAPPA: f64 = 0.05;
/// Starting mid-price, a ~$250 stock after ×10⁴ scaling.
const START_MID: i64 = 2_500_000;
/// Half of the fixed best-level spread, ticks.
const HALF_SPREAD: i64 = 1;

/// Generates `n` events whose mid-price follows `regime`. Levels are built
/// outward from the mid with a fixed 2-tick spread, monotone level offsets,
/// and positive random volumes. Deterministic per seed.
pub fn generate_synthetic(n: usize, regime: Regime, seed: u64) -> Result<LobStream> {
    if n < 2 {
        return Err(Error::Config(format!(
            "synthetic stream needs at least 2 events, got {n}"
        )));
    }
    let mut rng = Rng::seeded(seed);
    let mut events = Vec::with_capacity(n);
    let mut mid = START_MID;
    for _ in 0..n {
        events.push(build_event(mid, &mut rng));
        let step = match regime {
            Regime::RandomWalk => {
                if rng.uniform(0.0, 1.0) < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            Regime::MeanRevert => {
                MEAN_REVERT_KAPPA * (START_MID - mid) as f64 + rng.normal(0.0, 1.0)
            }
            Regime::Trend => TREND_DRIFT + rng.normal(0.0, TREND_NOISE_STD),
        };
        mid += step.round() as i64;
    }
    LobStream::new(events, format!("synthetic:{}:{seed}", regime.name()))
}

fn build_event(mid: i64, rng: &mut Rng) -> LobEvent {
    let mut e = LobEvent {
        ask_prices: [0; LEVELS],
        ask_volumes: [0; LEVELS],
        bid_prices: [0; LEVELS],
        bid_volumes: [0; LEVELS],
    };
    let mut ask = mid + HALF_SPREAD;
    let mut bid = mid - HALF_SPREAD;
    for level in 0..LEVELS {
        e.ask_prices[level] = ask;
        e.bid_prices[level] = bid;
        e.ask_volumes[level] = rng.range_i64(1, 500);
        e.bid_volumes[level] = rng.range_i64(1, 500);
        let gap = rng.range_i64(1, 4);
        ask += gap;
        bid -= gap;
    }
    e
}

const HEADER: [&str; FEATURES] = {
    // ask_price_1..10, ask_vol_1..10, bid_price_1..10, bid_vol_1..10
    [
        "ask_price_1",
        "ask_price_2",
        "ask_price_3",
        "ask_price_4",
        "ask_price_5",
        "ask_price_6",
        "ask_price_7",
        "ask_price_8",
        "ask_price_9",
        "ask_price_10",
        "ask_vol_1",
        "ask_vol_2",
        "ask_vol_3",
        "ask_vol_4",
        "ask_vol_5",
        "ask_vol_6",
        "ask_vol_7",
        "ask_vol_8",
        "ask_vol_9",
        "ask_vol_10",
        "bid_price_1",
        "bid_price_2",
        "bid_price_3",
        "bid_price_4",
        "bid_price_5",
        "bid_price_6",
        "bid_price_7",
        "bid_price_8",
        "bid_price_9",
        "bid_price_10",
        "bid_vol_1",
        "bid_vol_2",
        "bid_vol_3",
        "bid_vol_4",
        "bid_vol_5",
        "bid_vol_6",
        "bid_vol_7",
        "bid_vol_8",
        "bid_vol_9",
        "bid_vol_10",
    ]
};

/// Loads a stream from the 40-column CSV format. Every row is validated
/// against the book invariants; failures name the line and rule.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LobStream> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.len() != FEATURES || headers.iter().zip(HEADER.iter()).any(|(a, &b)| a != b) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header mismatch: expected the 40 columns {} .. {}, got {} columns starting with {:?}",
                HEADER[0],
                HEADER[FEATURES - 1],
                headers.len(),
                headers.iter().next().unwrap_or("")
            ),
        });
    }

    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != FEATURES {
            return Err(Error::Parse {
                line,
                message: format!("expected {FEATURES} fields, got {}", record.len()),
            });
        }
        let mut fields = [0i64; FEATURES];
        for (j, raw) in record.iter().enumerate() {
            fields[j] = raw.trim().parse::<i64>().map_err(|e| Error::Parse {
                line,
                message: format!("column {}: {e}", HEADER[j]),
            })?;
        }
        let mut e = LobEvent {
            ask_prices: [0; LEVELS],
            ask_volumes: [0; LEVELS],
            bid_prices: [0; LEVELS],
            bid_volumes: [0; LEVELS],
        };
        e.ask_prices.copy_from_slice(&fields[0..LEVELS]);
        e.ask_volumes.copy_from_slice(&fields[LEVELS..2 * LEVELS]);
        e.bid_prices
            .copy_from_slice(&fields[2 * LEVELS..3 * LEVELS]);
        e.bid_volumes
            .copy_from_slice(&fields[3 * LEVELS..4 * LEVELS]);
        e.check_invariants().map_err(|rule| Error::Validation {
            line,
            rule: rule.to_string(),
        })?;
        events.push(e);
    }
    LobStream::new(events, path.display().to_string())
}

/// Writes a stream in the same 40-column CSV format `load_csv` reads.
pub fn write_csv(stream: &LobStream, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    writer.write_record(HEADER).map_err(csv_error)?;
    for e in &stream.events {
        let mut row: Vec<String> = Vec::with_capacity(FEATURES);
        row.extend(e.ask_prices.iter().map(i64::to_string));
        row.extend(e.ask_volumes.iter().map(i64::to_string));
        row.extend(e.bid_prices.iter().map(i64::to_string));
        row.extend(e.bid_volumes.iter().map(i64::to_string));
        writer.write_record(&row).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::Io(io);
        }
        unreachable!();
    }
    let line = match e.position() {
        Some(p) => p.line(),
        None => 0,
    };
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn flat_event(mid: i64) -> LobEvent {
        let mut rng = Rng::seeded(mid as u64);
        build_event(mid, &mut rng)
    }

    #[test]
    fn mid_price_hand_cases() {
        let mut e = flat_event(100);
        e.ask_prices[0] = 10;
        e.bid_prices[0] = 8;
        assert_eq!(mid_price(&e), 9.0);

        // Degenerate equal best prices; invariant deliberately relaxed here.
        e.ask_prices[0] = 100;
        e.bid_prices[0] = 100;
        assert_eq!(mid_price(&e), 100.0);

        // Realistic ×10⁴ scale.
        e.ask_prices[0] = 234_601;
        e.bid_prices[0] = 234_599;
        assert_eq!(mid_price(&e), 234_600.0);
    }

    #[test]
    fn mid_price_translation_equivariant() {
        let mut rng = Rng::seeded(4);
        for _ in 0..100 {
            let mid = rng.range_i64(1_000, 5_000_000);
            let k = rng.range_i64(-500, 500);
            let base = flat_event(mid);
            let mut shifted = base.clone();
            shifted.ask_prices[0] += k;
            shifted.bid_prices[0] += k;
            assert_eq!(mid_price(&shifted), mid_price(&base) + k as f64);
        }
    }

    #[test]
    fn minmax_midpoint() {
        // Feature 0 (best ask) takes values {0, 5, 10}; the remaining
        // features vary with the event mid.
        let mut events = vec![flat_event(100), flat_event(110), flat_event(120)];
        events[0].ask_prices[0] = 0;
        events[1].ask_prices[0] = 5;
        events[2].ask_prices[0] = 10;
        let n = Normalizer::fit(NormMode::MinMax, &events).unwrap();
        assert_eq!(n.apply(&events[1])[0], 0.5);
    }

    #[test]
    fn zscore_hand_case() {
        // Feature 0 takes values {1, 2, 3}: population std √(2/3).
        let mut events = vec![flat_event(100), flat_event(110), flat_event(120)];
        events[0].ask_prices[0] = 1;
        events[1].ask_prices[0] = 2;
        events[2].ask_prices[0] = 3;
        let n = Normalizer::fit(NormMode::Zscore, &events).unwrap();
        let expected = 1.0 / (2.0_f64 / 3.0).sqrt();
        assert!((n.apply(&events[2])[0] - expected).abs() < 1e-12);
        assert!((expected - 1.224_744_871_391_589).abs() < 1e-12);
    }

    #[test]
    fn raw_mode_is_identity() {
        let events = vec![flat_event(1_000), flat_event(1_010)];
        let n = Normalizer::fit(NormMode::Raw, &events).unwrap();
        for e in &events {
            assert_eq!(n.apply(e), e.features());
            assert_eq!(n.normalize_label(mid_price(e)), mid_price(e));
        }
    }

    #[test]
    fn degenerate_statistic_names_feature() {
        // All events identical: every feature is constant.
        let events = vec![flat_event(100).clone(), flat_event(100)];
        let err = Normalizer::fit(NormMode::MinMax, &events).unwrap_err();
        assert!(err.to_string().contains("feature index 0"), "{err}");
    }

    #[test]
    fn normalized_window_statistics() {
        let stream = generate_synthetic(300, Regime::RandomWalk, 8).unwrap();
        let window = &stream.events;

        let mm = Normalizer::fit(NormMode::MinMax, window).unwrap();
        for e in window {
            for &x in mm.apply(e).iter() {
                assert!((-1e-12..=1.0 + 1e-12).contains(&x));
            }
        }

        let zs = Normalizer::fit(NormMode::Zscore, window).unwrap();
        for j in 0..FEATURES {
            let col: Vec<f64> = window.iter().map(|e| zs.apply(e)[j]).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "feature {j} mean {mean}");
            assert!(
                (var.sqrt() - 1.0).abs() < 1e-9,
                "feature {j} std {}",
                var.sqrt()
            );
        }
    }

    #[test]
    fn label_round_trip() {
        let stream = generate_synthetic(100, Regime::Trend, 21).unwrap();
        let n = Normalizer::fit(NormMode::Zscore, &stream.events).unwrap();
        let mid = mid_price(&stream.events[50]);
        let there_and_back = n.denormalize_label(n.normalize_label(mid));
        assert!((there_and_back - mid).abs() < 1e-9);
    }

    #[test]
    fn synthetic_deterministic_per_seed() {
        for regime in [Regime::RandomWalk, Regime::MeanRevert, Regime::Trend] {
            let a = generate_synthetic(100, regime, 7).unwrap();
            let b = generate_synthetic(100, regime, 7).unwrap();
            assert_eq!(a.events, b.events);
        }
    }

    #[test]
    fn synthetic_respects_invariants() {
        // 10⁴-event fuzz across all regimes.
        for (regime, seed) in [
            (Regime::RandomWalk, 1),
            (Regime::MeanRevert, 2),
            (Regime::Trend, 3),
        ] {
            let stream = generate_synthetic(10_000, regime, seed).unwrap();
            for e in &stream.events {
                e.check_invariants().unwrap();
            }
        }
    }

    #[test]
    fn synthetic_rejects_tiny_n() {
        assert!(matches!(
            generate_synthetic(1, Regime::RandomWalk, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn trend_concentrates_around_drift() {
        // Drift +1 tick/event over 1000 events with noise std 2: the total
        // displacement stays within 3·σ·√n of the drift line.
        let slack = 3.0 * TREND_NOISE_STD * 1000.0_f64.sqrt();
        for seed in 0..5 {
            let stream = generate_synthetic(1001, Regime::Trend, seed).unwrap();
            let mids = stream.mid_prices();
            let displacement = mids[1000] - mids[0];
            assert!(
                (displacement - 1000.0).abs() <= slack,
                "seed {seed}: displacement {displacement}"
            );
        }
    }

    #[test]
    fn csv_round_trip_short() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lob.csv");
        let stream = generate_synthetic(2, Regime::RandomWalk, 5).unwrap();
        write_csv(&stream, &path).unwrap();
        let loaded = load_csv(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.events, stream.events);
    }

    #[test]
    fn csv_rejects_crossed_book_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut stream = generate_synthetic(3, Regime::RandomWalk, 5).unwrap();
        stream.events[1].bid_prices[0] = stream.events[1].ask_prices[0];
        write_csv(&stream, &path).unwrap();
        match load_csv(&path) {
            Err(Error::Validation { line, rule }) => {
                assert_eq!(line, 3); // header is line 1
                assert!(rule.contains("positive spread"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_shuffled_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shuffled.csv");
        let stream = generate_synthetic(2, Regime::RandomWalk, 5).unwrap();
        write_csv(&stream, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let shuffled = text.replacen("ask_price_1,ask_price_2", "ask_price_2,ask_price_1", 1);
        std::fs::write(&path, shuffled).unwrap();
        assert!(matches!(load_csv(&path), Err(Error::Parse { .. })));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_identity(n in 2usize..40, seed in 0u64..500) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("roundtrip.csv");
            let stream = generate_synthetic(n, Regime::MeanRevert, seed).unwrap();
            write_csv(&stream, &path).unwrap();
            let loaded = load_csv(&path).unwrap();
            prop_assert_eq!(loaded.events, stream.events);
        }
    }
}
