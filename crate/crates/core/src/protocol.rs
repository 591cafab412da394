//! The online experimental protocol: progressive training over data-size
//! scenarios, Short/Long epoch regimes, progressive testing in which every
//! scored event is absorbed into training, and MSE accumulation.
//!
//! Error reporting follows the active normalization: raw runs report in
//! scaled-price units, MinMax/Zscore runs in normalized units, so the
//! magnitudes match their setting. A test event's squared error is always
//! recorded strictly before that event enters any training update.

use crate::error::{Error, Result};
use crate::lob::{mid_price, LobEvent, LobStream, NormMode};
use crate::models::{Model, ModelSpec};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Epoch budget of a run: Short caps at 5 epochs, Long at 60 with early
/// stopping on the training loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainRegime {
    Short,
    Long,
}

impl TrainRegime {
    pub fn max_epochs(self) -> usize {
        match self {
            TrainRegime::Short => 5,
            TrainRegime::Long => 60,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrainRegime::Short => "short",
            TrainRegime::Long => "long",
        }
    }
}

impl std::str::FromStr for TrainRegime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(TrainRegime::Short),
            "long" => Ok(TrainRegime::Long),
            other => Err(Error::Config(format!(
                "unknown regime '{other}' (expected short or long)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopConfig {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self {
            patience: 5,
            min_delta: 0.0,
        }
    }
}

/// Stop when the best loss seen so far has not improved by more than
/// `min_delta` for `patience` consecutive epochs.
pub fn early_stop(history: &[f64], patience: usize, min_delta: f64) -> bool {
    assert!(!history.is_empty(), "early_stop: empty loss history");
    let mut best = history[0];
    let mut stale = 0usize;
    for &loss in &history[1..] {
        if best - loss > min_delta {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
        }
    }
    stale >= patience
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub train_sizes: Vec<usize>,
    pub test_len: usize,
    pub regime: TrainRegime,
    pub early_stop: EarlyStopConfig,
    pub normalization: NormMode,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            train_sizes: vec![1_000, 2_000, 5_000, 10_000, 15_000],
            test_len: 1_000,
            regime: TrainRegime::Short,
            early_stop: EarlyStopConfig::default(),
            normalization: NormMode::MinMax,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.test_len < 1 {
            return Err(Error::Config("test_len must be at least 1".into()));
        }
        if self.train_sizes.is_empty() {
            return Err(Error::Config("at least one train size is required".into()));
        }
        if let Some(&bad) = self.train_sizes.iter().find(|&&s| s < 1) {
            return Err(Error::Config(format!(
                "every train size must be at least 1, got {bad}"
            )));
        }
        Ok(())
    }
}

/// One run's record. Wall-clock time is kept in memory for display but is
/// not serialized, so result files are byte-identical across repeat runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub train_size: usize,
    pub regime: String,
    pub normalization: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epochs_run: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stopped_early: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selection_counts: Option<Vec<u64>>,
    pub seed: u64,
    #[serde(skip, default)]
    pub wall_clock_s: f64,
}

/// Anything that can predict the next mid-price and then learn from the
/// revealed label. `Model` implements it; tests use instrumented stand-ins.
pub trait OnlineForecaster {
    fn predict_next(&self, e: &LobEvent) -> Result<f64>;
    fn absorb(&mut self, e: &LobEvent, y_next: f64, epochs: usize) -> Result<f64>;
}

impl OnlineForecaster for Model {
    fn predict_next(&self, e: &LobEvent) -> Result<f64> {
        Model::predict_next(self, e)
    }
    fn absorb(&mut self, e: &LobEvent, y_next: f64, epochs: usize) -> Result<f64> {
        Model::absorb(self, e, y_next, epochs)
    }
}

/// The progressive test loop: for each of `test_len` steps, predict the
/// next mid-price from the latest known event, record the (prediction,
/// realized) pair in raw units, and only then absorb the event. The first
/// prediction is made from event `start − 1`.
pub fn progressive_test<F: OnlineForecaster>(
    model: &mut F,
    events: &[LobEvent],
    start: usize,
    test_len: usize,
) -> Result<Vec<(f64, f64)>> {
    assert!(start >= 1, "progressive_test: start must be >= 1");
    assert!(
        events.len() >= start + test_len,
        "progressive_test: stream too short ({} events for start {start} + test {test_len})",
        events.len()
    );
    let mut pairs = Vec::with_capacity(test_len);
    for k in 0..test_len {
        let current = &events[start - 1 + k];
        let realized = mid_price(&events[start + k]);
        let predicted = model.predict_next(current)?;
        pairs.push((predicted, realized));
        model.absorb(current, realized, 1)?;
    }
    Ok(pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub train_mse: Option<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Fits the normalizer on `events` and trains on them: each epoch is a
/// fresh pass (carry reset) over the pairs (eₜ → mid(eₜ₊₁)), one update
/// per pair. The reported training MSE is the final epoch's mean
/// pre-update squared error. Long runs early-stop on the training loss.
pub fn train_forecaster(
    model: &mut Model,
    events: &[LobEvent],
    regime: TrainRegime,
    early: EarlyStopConfig,
    normalization: NormMode,
) -> Result<TrainSummary> {
    model.fit_normalizer(normalization, events)?;
    let pairs = events.len().saturating_sub(1);
    if pairs == 0 {
        return Ok(TrainSummary {
            train_mse: None,
            epochs_run: 0,
            stopped_early: false,
        });
    }
    let mut history: Vec<f64> = Vec::new();
    let mut stopped_early = false;
    for _epoch in 0..regime.max_epochs() {
        model.reset_carry();
        let mut total = 0.0;
        for t in 0..pairs {
            total += model.absorb(&events[t], mid_price(&events[t + 1]), 1)?;
        }
        history.push(total / pairs as f64);
        if regime == TrainRegime::Long && early_stop(&history, early.patience, early.min_delta) {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainSummary {
        train_mse: history.last().copied(),
        epochs_run: history.len(),
        stopped_early,
    })
}

/// Runs one full scenario: fit the normalizer on the training window,
/// train for the regime's epoch budget, then score `test_len` events
/// progressively. Insufficient data is a configuration error; numeric
/// failures inside the run yield a `failed` report with the cause.
pub fn run_scenario(
    cfg: &ProtocolConfig,
    spec: &ModelSpec,
    stream: &LobStream,
    train_size: usize,
) -> Result<EvalReport> {
    run_scenario_detailed(cfg, spec, stream, train_size).map(|(report, _)| report)
}

/// As [`run_scenario`], additionally returning the per-event squared
/// errors of the test phase in reporting units.
pub fn run_scenario_detailed(
    cfg: &ProtocolConfig,
    spec: &ModelSpec,
    stream: &LobStream,
    train_size: usize,
) -> Result<(EvalReport, Vec<f64>)> {
    cfg.validate()?;
    spec.validate()?;
    if train_size < 1 {
        return Err(Error::Config(format!(
            "train size must be at least 1, got {train_size}"
        )));
    }
    if stream.len() < train_size + cfg.test_len {
        return Err(Error::Config(format!(
            "stream of {} events cannot cover train {train_size} + test {}",
            stream.len(),
            cfg.test_len
        )));
    }

    let started = std::time::Instant::now();
    let mut report = EvalReport {
        model: spec.kind.name().to_string(),
        train_size,
        regime: cfg.regime.name().to_string(),
        normalization: cfg.normalization.name().to_string(),
        status: "ok".to_string(),
        error: None,
        train_mse: None,
        test_mse: None,
        epochs_run: None,
        stopped_early: None,
        selection_counts: None,
        seed: spec.seed,
        wall_clock_s: 0.0,
    };

    let mut errors = Vec::new();
    match execute_scenario(cfg, spec, stream, train_size, &mut report) {
        Ok(errs) => errors = errs,
        Err(e) => {
            report.status = "failed".to_string();
            report.error = Some(e.to_string());
            report.train_mse = None;
            report.test_mse = None;
        }
    }
    report.wall_clock_s = started.elapsed().as_secs_f64();
    Ok((report, errors))
}

fn execute_scenario(
    cfg: &ProtocolConfig,
    spec: &ModelSpec,
    stream: &LobStream,
    train_size: usize,
    report: &mut EvalReport,
) -> Result<Vec<f64>> {
    let mut model = Model::new(spec.clone())?;
    let outcome = train_forecaster(
        &mut model,
        &stream.events[..train_size],
        cfg.regime,
        cfg.early_stop,
        cfg.normalization,
    )?;
    if let Some(mse) = outcome.train_mse {
        if !mse.is_finite() {
            return Err(Error::Numeric(format!(
                "training MSE diverged to {mse} for {}",
                report.model
            )));
        }
    }
    report.train_mse = outcome.train_mse;
    if cfg.regime == TrainRegime::Long {
        report.epochs_run = Some(outcome.epochs_run);
        report.stopped_early = Some(outcome.stopped_early);
    }

    let pairs = progressive_test(&mut model, &stream.events, train_size, cfg.test_len)?;
    let normalizer = model.normalizer();
    let errors: Vec<f64> = pairs
        .iter()
        .map(|&(predicted, realized)| {
            let p = normalizer.normalize_label(predicted);
            let r = normalizer.normalize_label(realized);
            (p - r) * (p - r)
        })
        .collect();
    let test_mse = errors.iter().sum::<f64>() / errors.len() as f64;
    if !test_mse.is_finite() {
        return Err(Error::Numeric(format!(
            "test MSE diverged to {test_mse} for {}",
            report.model
        )));
    }
    report.test_mse = Some(test_mse);
    report.selection_counts = model.selection_counts().map(|c| c.to_vec());
    Ok(errors)
}

/// Stable per-cell seed so matrix cells are independent of scheduling.
fn derive_seed(base: u64, spec_index: usize, size_index: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((spec_index as u64 + 1).wrapping_mul(0xD2B7_4407_B1CE_6E93))
        .wrapping_add((size_index as u64 + 1).wrapping_mul(0xCA5A_8263_9512_1157))
}

/// Runs every (spec × train size) cell on a bounded worker pool and returns
/// the reports in deterministic (spec-major, size-minor) order. Individual
/// run failures are recorded and the matrix continues; configuration
/// problems abort before any compute.
pub fn benchmark_matrix(
    cfg: &ProtocolConfig,
    specs: &[ModelSpec],
    stream: &LobStream,
    jobs: usize,
) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    if specs.is_empty() {
        return Err(Error::Config("no model specs to benchmark".into()));
    }
    for spec in specs {
        spec.validate()?;
    }
    let max_size = *cfg.train_sizes.iter().max().unwrap();
    if stream.len() < max_size + cfg.test_len {
        return Err(Error::Config(format!(
            "stream of {} events cannot cover train {max_size} + test {}",
            stream.len(),
            cfg.test_len
        )));
    }

    let mut cells = Vec::new();
    for (spec_index, spec) in specs.iter().enumerate() {
        for (size_index, &train_size) in cfg.train_sizes.iter().enumerate() {
            let mut spec = spec.clone();
            spec.seed = derive_seed(cfg.seed, spec_index, size_index);
            cells.push((spec, train_size));
        }
    }

    let jobs = jobs.max(1).min(cells.len());
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<EvalReport>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= cells.len() {
                    break;
                }
                let (spec, train_size) = &cells[index];
                let result = run_scenario(cfg, spec, stream, *train_size);
                slots.lock().unwrap()[index] = Some(result);
            });
        }
    });

    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every cell ran"))
        .collect()
}

/// Table-style scientific notation: five fractional digits and a signed
/// two-digit exponent, e.g. `2.05396E+12`.
pub fn format_sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000E+00".to_string();
    }
    let formatted = format!("{x:.5E}");
    // Rust renders `2.05396E12` / `2.05396E-12`; pad to E+12 / E-12.
    match formatted.split_once('E') {
        Some((mantissa, exp)) => {
            let (sign, digits) = match exp.strip_prefix('-') {
                Some(rest) => ('-', rest),
                None => ('+', exp),
            };
            format!("{mantissa}E{sign}{digits:0>2}")
        }
        None => formatted,
    }
}

/// Writes one JSON record per line, in the given report order.
pub fn write_results(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for report in reports {
        let line = serde_json::to_string(report)?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<EvalReport>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(|line| serde_json::from_str(line).map_err(Error::from))
        .collect()
}

/// Human-readable table ranked by test MSE, lowest first; failed runs sink
/// to the bottom with their cause.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut ranked: Vec<&EvalReport> = reports.iter().collect();
    ranked.sort_by(|a, b| match (a.test_mse, b.test_mse) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });

    let mut out = String::new();
    out.push_str(&format!(
        "{:<4} {:<12} {:>10} {:<6} {:<8} {:>13} {:>13}  {}\n",
        "rank", "model", "size", "regime", "norm", "mse-train", "mse-test", "status"
    ));
    for (rank, report) in ranked.iter().enumerate() {
        let train = report.train_mse.map_or("-".to_string(), format_sci);
        let test = report.test_mse.map_or("-".to_string(), format_sci);
        let status = match &report.error {
            Some(cause) => format!("failed: {cause}"),
            None => report.status.clone(),
        };
        out.push_str(&format!(
            "{:<4} {:<12} {:>10} {:<6} {:<8} {:>13} {:>13}  {}\n",
            rank + 1,
            report.model,
            report.train_size,
            report.regime,
            report.normalization,
            train,
            test,
            status
        ));
    }
    out
}
