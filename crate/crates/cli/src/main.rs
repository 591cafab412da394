//! Command-line surface: synthetic data generation, benchmarking, single
//! model training/evaluation, and gradient checking.
//!
//! Exit codes: 0 success, 1 run failure, 2 configuration error.

use clap::{Args, Parser, Subcommand};
use optm_core::learning::check;
use optm_core::lob::{self, LobStream, NormMode, Regime};
use optm_core::models::{self, Model, ModelKind, ModelSpec};
use optm_core::protocol::{
    benchmark_matrix, progressive_test, render_table, train_forecaster, write_results,
    EarlyStopConfig, ProtocolConfig, TrainRegime,
};
use optm_core::Error;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "optm",
    about = "Online limit-order-book mid-price forecasting with an optimum-output LSTM cell",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic LOB stream and write it as CSV.
    Generate(GenerateArgs),
    /// Run the progressive benchmark matrix over models and data sizes.
    Benchmark(Box<BenchmarkArgs>),
    /// Train one model on the leading events of a stream and save a checkpoint.
    Train(Box<TrainArgs>),
    /// Progressively evaluate a saved checkpoint on the tail of a stream.
    Evaluate(EvaluateArgs),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Mid-price dynamics: random_walk, mean_revert, or trend.
    #[arg(long, default_value = "random_walk")]
    regime: String,
    /// Number of trading events (at least 2).
    #[arg(long)]
    events: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Default)]
struct BenchmarkArgs {
    /// JSON config file; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated model kinds (optm, lstm, gru, persistence, naive).
    #[arg(long)]
    models: Option<String>,
    /// Comma-separated training sizes.
    #[arg(long)]
    sizes: Option<String>,
    /// Training regime: short (5 epochs) or long (60 + early stopping).
    #[arg(long)]
    regime: Option<String>,
    /// Normalization: raw, minmax, or zscore.
    #[arg(long)]
    normalization: Option<String>,
    /// Input LOB CSV. Exactly one of --data/--synthetic.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Generate the input stream instead: random_walk, mean_revert, or trend.
    #[arg(long)]
    synthetic: Option<String>,
    /// Synthetic stream length (default: largest size + test length).
    #[arg(long)]
    events: Option<usize>,
    #[arg(long)]
    test_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for matrix cells (default: logical core count).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    units: Option<usize>,
    #[arg(long)]
    look_back: Option<usize>,
    /// Optimizer for the networks: adam or sgd.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    /// Internal gradient-descent learning rate of the optimum-output cell.
    #[arg(long)]
    alpha: Option<f64>,
    /// Internal gradient-descent iterations per event.
    #[arg(long)]
    iters: Option<usize>,
    /// θ policy across events: warm (persist) or zero (reset).
    #[arg(long)]
    theta_init: Option<String>,
    /// Importance averaging: signed or absolute.
    #[arg(long)]
    importance: Option<String>,
    /// Max-norm gradient clip (off when omitted).
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    min_delta: Option<f64>,
    /// Output directory for results.jsonl, table.txt, and config.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-run wall-clock times (timings.txt).
    #[arg(long)]
    emit_timings: bool,
}

/// File form of the benchmark flags; any field may be omitted.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct BenchmarkFile {
    models: Option<String>,
    sizes: Option<String>,
    regime: Option<String>,
    normalization: Option<String>,
    data: Option<PathBuf>,
    synthetic: Option<String>,
    events: Option<usize>,
    test_len: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
    units: Option<usize>,
    look_back: Option<usize>,
    optimizer: Option<String>,
    lr: Option<f64>,
    alpha: Option<f64>,
    iters: Option<usize>,
    theta_init: Option<String>,
    importance: Option<String>,
    clip_norm: Option<f64>,
    patience: Option<usize>,
    min_delta: Option<f64>,
    out: Option<PathBuf>,
}

/// Fully resolved benchmark configuration, echoed to the output directory.
#[derive(Serialize)]
struct ResolvedBenchmark {
    models: Vec<String>,
    sizes: Vec<usize>,
    regime: String,
    normalization: String,
    data: Option<PathBuf>,
    synthetic: Option<String>,
    events: Option<usize>,
    test_len: usize,
    seed: u64,
    jobs: usize,
    units: usize,
    look_back: usize,
    optimizer: String,
    lr: f64,
    alpha: f64,
    iters: usize,
    theta_init: String,
    importance: String,
    clip_norm: Option<f64>,
    patience: usize,
    min_delta: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Model kind: optm, lstm, gru, persistence, or naive.
    #[arg(long)]
    model: String,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long)]
    events: Option<usize>,
    /// Training window length (default: the whole stream).
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long, default_value = "short")]
    regime: String,
    #[arg(long, default_value = "minmax")]
    normalization: String,
    #[arg(long, default_value_t = 4)]
    units: usize,
    #[arg(long, default_value_t = 1)]
    look_back: usize,
    #[arg(long, default_value = "adam")]
    optimizer: String,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// θ policy across events: warm (persist) or zero (reset).
    #[arg(long, default_value = "warm")]
    theta_init: String,
    /// Importance averaging: signed or absolute.
    #[arg(long, default_value = "signed")]
    importance: String,
    /// Max-norm gradient clip (off when omitted).
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 0.0)]
    min_delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long)]
    events: Option<usize>,
    /// Number of progressive test events, scored on the stream's tail.
    #[arg(long, default_value_t = 1000)]
    test_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Inject a deliberate bug of this size into one analytic gradient
    /// tensor; the check must then fail (harness self-test).
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Benchmark(args) => cmd_benchmark(*args),
        Command::Train(args) => cmd_train(*args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn parse_list<T: std::str::FromStr<Err = Error>>(raw: &str) -> Result<Vec<T>, Error> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn parse_sizes(raw: &str) -> Result<Vec<usize>, Error> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.replace('_', "")
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad size '{s}': {e}")))
        })
        .collect()
}

/// Resolves the input stream from exactly one of a CSV path or a synthetic
/// regime. `needed` sizes a synthetic stream when --events is omitted.
fn load_stream(
    data: Option<&Path>,
    synthetic: Option<&str>,
    events: Option<usize>,
    needed: usize,
    seed: u64,
) -> Result<LobStream, Error> {
    match (data, synthetic) {
        (Some(path), None) => {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "data file not found: {}",
                    path.display()
                )));
            }
            lob::load_csv(path)
        }
        (None, Some(regime)) => {
            let regime: Regime = regime.parse()?;
            lob::generate_synthetic(events.unwrap_or(needed), regime, seed)
        }
        (Some(_), Some(_)) => Err(Error::Config(
            "pass exactly one data source: --data or --synthetic".into(),
        )),
        (None, None) => Err(Error::Config(
            "a data source is required: --data <csv> or --synthetic <regime>".into(),
        )),
    }
}

fn mid_summary(stream: &LobStream) -> String {
    let mids = stream.mid_prices();
    let n = mids.len() as f64;
    let mean = mids.iter().sum::<f64>() / n;
    let var = mids.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
    let min = mids.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = mids.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    format!(
        "mid-price min {min:.1}, max {max:.1}, mean {mean:.1}, std {:.2}",
        var.sqrt()
    )
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode, Error> {
    let regime: Regime = args.regime.parse()?;
    let stream = lob::generate_synthetic(args.events, regime, args.seed)?;
    lob::write_csv(&stream, &args.out)?;
    println!(
        "wrote {} events ({}, seed {}) to {}",
        stream.len(),
        regime.name(),
        args.seed,
        args.out.display()
    );
    println!("{}", mid_summary(&stream));
    Ok(ExitCode::SUCCESS)
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<ExitCode, Error> {
    let file: BenchmarkFile = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => BenchmarkFile::default(),
    };

    // Flags override the config file; both fall back to defaults.
    let models_raw = args
        .models
        .or(file.models)
        .unwrap_or_else(|| "optm,lstm,gru,persistence,naive".into());
    let sizes_raw = args
        .sizes
        .or(file.sizes)
        .unwrap_or_else(|| "1000,2000,5000,10000,15000".into());
    let regime: TrainRegime = args
        .regime
        .or(file.regime)
        .unwrap_or_else(|| "short".into())
        .parse()?;
    let normalization: NormMode = args
        .normalization
        .or(file.normalization)
        .unwrap_or_else(|| "minmax".into())
        .parse()?;
    let data = args.data.or(file.data);
    let synthetic = args.synthetic.or(file.synthetic);
    let events = args.events.or(file.events);
    let test_len = args.test_len.or(file.test_len).unwrap_or(1000);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let jobs = args
        .jobs
        .or(file.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let units = args.units.or(file.units).unwrap_or(4);
    let look_back = args.look_back.or(file.look_back).unwrap_or(1);
    let optimizer = args
        .optimizer
        .or(file.optimizer)
        .unwrap_or_else(|| "adam".into());
    let lr = args.lr.or(file.lr).unwrap_or(1e-3);
    let alpha = args.alpha.or(file.alpha).unwrap_or(1e-4);
    let iters = args.iters.or(file.iters).unwrap_or(10);
    let theta_init = args
        .theta_init
        .or(file.theta_init)
        .unwrap_or_else(|| "warm".into());
    let importance = args
        .importance
        .or(file.importance)
        .unwrap_or_else(|| "signed".into());
    let clip_norm = args.clip_norm.or(file.clip_norm);
    let patience = args.patience.or(file.patience).unwrap_or(5);
    let min_delta = args.min_delta.or(file.min_delta).unwrap_or(0.0);
    let out = args.out.or(file.out).unwrap_or_else(|| "results".into());

    let kinds: Vec<ModelKind> = parse_list(&models_raw)?;
    let sizes = parse_sizes(&sizes_raw)?;
    if kinds.is_empty() || sizes.is_empty() {
        return Err(Error::Config("need at least one model and one size".into()));
    }

    let cfg = ProtocolConfig {
        train_sizes: sizes.clone(),
        test_len,
        regime,
        early_stop: EarlyStopConfig {
            patience,
            min_delta,
        },
        normalization,
        seed,
    };
    cfg.validate()?;

    let specs: Vec<ModelSpec> = kinds
        .iter()
        .map(|&kind| {
            let mut spec = ModelSpec::new(kind);
            spec.units = units;
            spec.look_back = if kind == ModelKind::OptmLstm {
                1
            } else {
                look_back
            };
            spec.optimizer = optimizer.parse()?;
            spec.learning_rate = lr;
            spec.clip_norm = clip_norm;
            spec.repo.alpha = alpha;
            spec.repo.iters = iters;
            spec.repo.theta_init = theta_init.parse()?;
            spec.repo.importance_mode = importance.parse()?;
            spec.validate()?;
            Ok(spec)
        })
        .collect::<Result<_, Error>>()?;

    let needed = sizes.iter().max().unwrap() + test_len;
    let stream = load_stream(data.as_deref(), synthetic.as_deref(), events, needed, seed)?;

    let reports = benchmark_matrix(&cfg, &specs, &stream, jobs)?;

    std::fs::create_dir_all(&out)?;
    write_results(&reports, out.join("results.jsonl"))?;
    let table = render_table(&reports);
    std::fs::write(out.join("table.txt"), &table)?;
    let resolved = ResolvedBenchmark {
        models: kinds.iter().map(|k| k.name().to_string()).collect(),
        sizes,
        regime: regime.name().into(),
        normalization: normalization.name().into(),
        data,
        synthetic,
        events,
        test_len,
        seed,
        jobs,
        units,
        look_back,
        optimizer,
        lr,
        alpha,
        iters,
        theta_init,
        importance,
        clip_norm,
        patience,
        min_delta,
    };
    std::fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(&resolved)?,
    )?;
    if args.emit_timings {
        let mut timings = String::new();
        for r in &reports {
            timings.push_str(&format!(
                "{} size={} {:.3}s\n",
                r.model, r.train_size, r.wall_clock_s
            ));
        }
        std::fs::write(out.join("timings.txt"), timings)?;
    }

    print!("{table}");
    let failed = reports.iter().filter(|r| r.status != "ok").count();
    println!(
        "{} runs, {} failed; results in {}",
        reports.len(),
        failed,
        out.display()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode, Error> {
    let kind: ModelKind = args.model.parse()?;
    let regime: TrainRegime = args.regime.parse()?;
    let normalization: NormMode = args.normalization.parse()?;

    let mut spec = ModelSpec::new(kind);
    spec.units = args.units;
    spec.look_back = if kind == ModelKind::OptmLstm {
        1
    } else {
        args.look_back
    };
    spec.optimizer = args.optimizer.parse()?;
    spec.learning_rate = args.lr;
    spec.clip_norm = args.clip_norm;
    spec.repo.alpha = args.alpha;
    spec.repo.iters = args.iters;
    spec.repo.theta_init = args.theta_init.parse()?;
    spec.repo.importance_mode = args.importance.parse()?;
    spec.seed = args.seed;
    spec.validate()?;

    let needed = args.train_size.unwrap_or(2).max(2);
    let stream = load_stream(
        args.data.as_deref(),
        args.synthetic.as_deref(),
        args.events,
        needed,
        args.seed,
    )?;
    let train_size = args.train_size.unwrap_or(stream.len());
    if train_size < 2 || train_size > stream.len() {
        return Err(Error::Config(format!(
            "train size {train_size} must be in [2, {}]",
            stream.len()
        )));
    }

    let mut model = Model::new(spec)?;
    let summary = train_forecaster(
        &mut model,
        &stream.events[..train_size],
        regime,
        EarlyStopConfig {
            patience: args.patience,
            min_delta: args.min_delta,
        },
        normalization,
    )
    .map_err(run_failure)?;
    models::save_checkpoint(&model, &args.out)?;

    println!(
        "trained {} on {} events ({} regime, {} normalization): {}",
        kind.name(),
        train_size,
        regime.name(),
        normalization.name(),
        serde_json::to_string(&summary)?
    );
    println!("checkpoint written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EvaluateSummary {
    model: String,
    test_len: usize,
    test_mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    selection_counts: Option<Vec<u64>>,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode, Error> {
    let mut model = models::load_checkpoint(&args.checkpoint)?;
    let needed = args.test_len + 1;
    let stream = load_stream(
        args.data.as_deref(),
        args.synthetic.as_deref(),
        args.events,
        needed,
        args.seed,
    )?;
    if stream.len() < args.test_len + 1 {
        return Err(Error::Config(format!(
            "stream of {} events cannot cover {} progressive test steps",
            stream.len(),
            args.test_len
        )));
    }

    let start = stream.len() - args.test_len;
    let counts_before = model.selection_counts();
    let pairs =
        progressive_test(&mut model, &stream.events, start, args.test_len).map_err(run_failure)?;
    let normalizer = model.normalizer();
    let test_mse = pairs
        .iter()
        .map(|&(p, r)| {
            let d = normalizer.normalize_label(p) - normalizer.normalize_label(r);
            d * d
        })
        .sum::<f64>()
        / pairs.len() as f64;

    // Selection frequencies over the evaluated window only.
    let selection_counts = model.selection_counts().map(|after| {
        let before = counts_before.unwrap_or([0; 6]);
        (0..6).map(|j| after[j] - before[j]).collect::<Vec<u64>>()
    });
    let summary = EvaluateSummary {
        model: model.kind().name().to_string(),
        test_len: args.test_len,
        test_mse,
        selection_counts,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if test_mse.is_finite() {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Error::Numeric("test MSE diverged".into()))
    }
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<ExitCode, Error> {
    let report = check::run_full(args.seed, args.perturb).map_err(run_failure)?;
    let mut current_case = String::new();
    for entry in &report.entries {
        if entry.case != current_case {
            current_case = entry.case.clone();
            println!("{current_case}:");
        }
        println!(
            "  {:<10} max rel err {:.3e}",
            entry.tensor, entry.max_rel_err
        );
    }
    let worst = report.max_rel_err();
    if report.passes(args.tolerance) {
        println!(
            "gradcheck PASS: max relative error {worst:.3e} < {:.1e}",
            args.tolerance
        );
        Ok(ExitCode::SUCCESS)
    } else {
        let offenders: Vec<String> = report
            .failures(args.tolerance)
            .iter()
            .map(|e| format!("{}/{}", e.case, e.tensor))
            .collect();
        println!(
            "gradcheck FAIL: max relative error {worst:.3e} >= {:.1e} in {}",
            args.tolerance,
            offenders.join(", ")
        );
        Ok(ExitCode::from(1))
    }
}

/// Errors inside a run (as opposed to setup) exit with code 1.
fn run_failure(e: Error) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(m),
        other => Error::Numeric(other.to_string()),
    }
}
