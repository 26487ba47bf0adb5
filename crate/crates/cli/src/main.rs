mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use ofi_core::data::{self, generate_synthetic};
use ofi_core::eval::{self, Averaging, EvalReport};
use ofi_core::hybrid::{self, ModelBundle, ModelKind};
use ofi_core::nn::{Activation, Optimizer};
use ofi_core::sweep::{self, Dataset, SweepOptions};
use ofi_core::var::{self, observations};
use ofi_core::{seed, OfiParams};

use config::{check_seed, sidecar_path, RunConfig, RunRecord, FIT_STREAM, SYNTH_STREAM};

/// Order flow imbalance forecasting: VAR, feedforward network, and hybrid.
#[derive(Parser)]
#[command(name = "ofi", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic counts series.
    Synth(SynthArgs),
    /// Fit a model and persist it as a bundle directory.
    Fit(FitArgs),
    /// One-step rolling predictions from a bundle.
    Predict(PredictArgs),
    /// Compare prediction files in a metrics table.
    Evaluate(EvaluateArgs),
    /// Hyperparameter sweep over lag, architecture, activation, optimizer.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    base_intensity: Option<f64>,
    #[arg(long)]
    linear_strength: Option<f64>,
    #[arg(long)]
    nonlinear_strength: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

/// Settings shared by `fit` and `sweep`.
#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Train for the full epoch count without a validation slice.
    #[arg(long)]
    no_early_stopping: bool,
    /// OFI window length in intervals.
    #[arg(long)]
    window: Option<usize>,
    /// Signal threshold T.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_parser = parse_kind)]
    model: ModelKind,
    #[arg(long)]
    data: PathBuf,
    /// Bundle directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lag: Option<usize>,
    /// Lagged pairs fed to the network (defaults to the VAR lag).
    #[arg(long)]
    fnn_lags: Option<usize>,
    /// Hidden widths, e.g. `32,16`.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long, value_parser = parse_activation)]
    activation: Option<Activation>,
    #[arg(long, value_parser = parse_optimizer)]
    optimizer: Option<Optimizer>,
    /// Fit on this leading fraction of the rows only.
    #[arg(long)]
    train_fraction: Option<f64>,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// First row to predict (raised to the bundle's warmup).
    #[arg(long, default_value_t = 0)]
    start: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Prediction CSV files.
    #[arg(long = "predictions", required = true, num_args = 1..)]
    predictions: Vec<PathBuf>,
    /// Model label per file (defaults to the file stem).
    #[arg(long = "label")]
    labels: Vec<String>,
    /// Dataset label, either one for all files or one per file.
    #[arg(long = "dataset", default_value = "dataset")]
    datasets: Vec<String>,
    #[arg(long, default_value = "macro", value_parser = parse_averaging)]
    averaging: Averaging,
    /// Report CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write one confusion-matrix CSV per file into this directory.
    #[arg(long)]
    confusion_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Counts CSV files; each is one dataset named by its file stem.
    #[arg(long = "data", required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Long-format heatmap CSV (metric, lag, architecture).
    #[arg(long)]
    heatmap: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    model: Option<ModelKind>,
    #[arg(long, value_delimiter = ',')]
    lags: Option<Vec<usize>>,
    /// Hidden architectures, e.g. `--architectures 32,16 128,64,32`.
    #[arg(long, num_args = 1..)]
    architectures: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_activation)]
    activations: Option<Vec<Activation>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_optimizer)]
    optimizers: Option<Vec<Optimizer>>,
    /// Latin hypercube sample of this many configurations.
    #[arg(long)]
    lhs: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Run cells one at a time.
    #[arg(long)]
    serial: bool,
    /// Fill the runtime_s column (makes the CSV differ between runs).
    #[arg(long)]
    record_timing: bool,
    #[command(flatten)]
    train: TrainArgs,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: ofi_core::OfiError| e.to_string())
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    s.parse().map_err(|e: ofi_core::OfiError| e.to_string())
}

fn parse_optimizer(s: &str) -> Result<Optimizer, String> {
    s.parse().map_err(|e: ofi_core::OfiError| e.to_string())
}

fn parse_averaging(s: &str) -> Result<Averaging, String> {
    match s {
        "macro" => Ok(Averaging::Macro),
        "micro" => Ok(Averaging::Micro),
        "weighted" => Ok(Averaging::Weighted),
        other => Err(format!("unknown averaging `{other}` (macro, micro, weighted)")),
    }
}

fn apply_train_args(config: &mut RunConfig, args: &TrainArgs) -> Result<()> {
    let train = &mut config.pipeline.train;
    if let Some(v) = args.epochs {
        train.epochs = v;
    }
    if let Some(v) = args.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        train.learning_rate = v;
        config.sweep.learning_rate = Some(v);
    }
    if let Some(v) = args.patience {
        train.patience = v;
    }
    if let Some(v) = args.validation_fraction {
        train.validation_fraction = v;
    }
    if args.no_early_stopping {
        train.early_stopping = false;
    }
    let ofi = &mut config.pipeline.ofi;
    let window = args.window.unwrap_or(ofi.window);
    let threshold = args.threshold.unwrap_or(ofi.threshold);
    *ofi = OfiParams::new(window, threshold)?;
    Ok(())
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| display(path))
}

fn load_obs(path: &Path) -> Result<Vec<[f64; 2]>> {
    let series = data::load_counts_csv(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(observations(&series))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn cmd_synth(mut config: RunConfig, args: &SynthArgs) -> Result<()> {
    let spec = &mut config.synth;
    if let Some(v) = args.length {
        spec.length = v;
    }
    if let Some(v) = args.base_intensity {
        spec.base_intensity = v;
    }
    if let Some(v) = args.linear_strength {
        spec.linear_strength = v;
    }
    if let Some(v) = args.nonlinear_strength {
        spec.nonlinear_strength = v;
    }
    spec.seed = seed::derive(config.seed, &[SYNTH_STREAM]);
    let series = generate_synthetic(spec)?;
    create_parent(&args.out)?;
    data::write_counts_csv(&args.out, &series)?;
    let sidecar = sidecar_path(&args.out);
    config.write_sidecar(
        &sidecar,
        RunRecord {
            command: "synth".into(),
            inputs: vec![],
            outputs: vec![display(&args.out)],
            notes: vec![],
        },
    )?;
    println!("wrote {} rows to {}", series.len(), args.out.display());
    Ok(())
}

fn cmd_fit(mut config: RunConfig, args: &FitArgs) -> Result<()> {
    let pipeline = &mut config.pipeline;
    if let Some(v) = args.lag {
        pipeline.var_lag = v;
        pipeline.fnn_input_lags = v;
    }
    if let Some(v) = args.fnn_lags {
        pipeline.fnn_input_lags = v;
    }
    if let Some(h) = &args.hidden {
        pipeline.hidden = sweep::parse_architecture(h)?;
    }
    if let Some(v) = args.activation {
        pipeline.activation = v;
    }
    if let Some(v) = args.optimizer {
        pipeline.train.optimizer = v;
        if args.train.learning_rate.is_none() {
            pipeline.train.learning_rate = v.default_learning_rate();
        }
    }
    apply_train_args(&mut config, &args.train)?;
    config.pipeline.train.seed = seed::derive(config.seed, &[FIT_STREAM]);

    let obs = load_obs(&args.data)?;
    let rows = match args.train_fraction {
        Some(f) => data::split_index(obs.len(), f)?,
        None => obs.len(),
    };
    let train_obs = &obs[..rows];
    info!("fitting {} on {rows} rows", args.model);
    let (bundle, trace) = hybrid::fit(args.model, train_obs, &config.pipeline)
        .with_context(|| format!("fitting {} model", args.model))?;

    bundle.save(&args.out)?;
    let mut outputs = vec![
        display(&args.out.join(hybrid::MANIFEST_FILE)),
    ];
    if let Some(var_model) = &bundle.var_part {
        let (_, diag) = var::fit_var(train_obs, var_model.p)?;
        let text = var::summary(var_model, &diag);
        print!("{text}");
        let path = args.out.join("summary.txt");
        std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        outputs.push(display(&args.out.join(hybrid::VAR_FILE)));
        outputs.push(display(&path));
    }
    if let Some(trace) = &trace {
        let path = args.out.join("trace.csv");
        trace.save_csv(&path)?;
        outputs.push(display(&args.out.join(hybrid::FNN_FILE)));
        outputs.push(display(&path));
        println!(
            "network trained for {} epochs, kept epoch {}",
            trace.stopped_epoch, trace.best_epoch
        );
    }
    config.write_sidecar(
        &args.out.join("resolved.toml"),
        RunRecord {
            command: "fit".into(),
            inputs: vec![display(&args.data)],
            outputs,
            notes: vec![format!("model = {}", args.model), format!("train_rows = {rows}")],
        },
    )?;
    println!("saved {} bundle to {}", args.model, args.out.display());
    Ok(())
}

fn cmd_predict(config: RunConfig, args: &PredictArgs) -> Result<()> {
    let bundle = ModelBundle::load(&args.bundle).with_context(|| format!("loading bundle {}", args.bundle.display()))?;
    let obs = load_obs(&args.data)?;
    let records = hybrid::predict_from(&bundle, &obs, args.start)?;
    create_parent(&args.out)?;
    hybrid::save_predictions(&args.out, &records)?;
    let mut resolved = config;
    resolved.pipeline = bundle.config.clone();
    resolved.write_sidecar(
        &sidecar_path(&args.out),
        RunRecord {
            command: "predict".into(),
            inputs: vec![display(&args.bundle), display(&args.data)],
            outputs: vec![display(&args.out)],
            notes: vec![format!("model = {}", bundle.kind), format!("start = {}", args.start)],
        },
    )?;
    println!("wrote {} predictions to {}", records.len(), args.out.display());
    Ok(())
}

fn cmd_evaluate(config: RunConfig, args: &EvaluateArgs) -> Result<()> {
    let n = args.predictions.len();
    if !args.labels.is_empty() && args.labels.len() != n {
        bail!("{} labels for {n} prediction files", args.labels.len());
    }
    if args.datasets.len() != 1 && args.datasets.len() != n {
        bail!("{} dataset labels for {n} prediction files", args.datasets.len());
    }
    let mut reports: Vec<EvalReport> = Vec::with_capacity(n);
    for (i, path) in args.predictions.iter().enumerate() {
        let records = hybrid::load_predictions(path).with_context(|| format!("reading {}", path.display()))?;
        let label = args.labels.get(i).cloned().unwrap_or_else(|| dataset_name(path));
        let dataset = &args.datasets[if args.datasets.len() == 1 { 0 } else { i }];
        reports.push(hybrid::evaluate_records(dataset, &label, &records, args.averaging)?);
    }
    let (table, csv) = eval::render_comparison(&reports)?;
    print!("{table}");
    create_parent(&args.out)?;
    std::fs::write(&args.out, csv).with_context(|| format!("writing {}", args.out.display()))?;
    let mut outputs = vec![display(&args.out)];
    if let Some(dir) = &args.confusion_dir {
        std::fs::create_dir_all(dir)?;
        for (path, report) in args.predictions.iter().zip(&reports) {
            let out = dir.join(format!("{}.confusion.csv", dataset_name(path)));
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            eval::write_confusion_csv(std::io::BufWriter::new(file), &report.confusion)?;
            outputs.push(display(&out));
        }
    }
    config.write_sidecar(
        &sidecar_path(&args.out),
        RunRecord {
            command: "evaluate".into(),
            inputs: args.predictions.iter().map(|p| display(p)).collect(),
            outputs,
            notes: vec![format!("averaging = {:?}", args.averaging).to_lowercase()],
        },
    )?;
    Ok(())
}

fn cmd_sweep(mut config: RunConfig, args: &SweepArgs) -> Result<()> {
    apply_train_args(&mut config, &args.train)?;
    let section = &mut config.sweep;
    if let Some(v) = args.model {
        section.model = v;
    }
    if let Some(v) = &args.lags {
        section.space.lags = v.clone();
    }
    if let Some(v) = &args.architectures {
        section.space.architectures = v.iter().map(|a| sweep::parse_architecture(a)).collect::<Result<_, _>>()?;
    }
    if let Some(v) = &args.activations {
        section.space.activations = v.clone();
    }
    if let Some(v) = &args.optimizers {
        section.space.optimizers = v.clone();
    }
    if args.lhs.is_some() {
        section.lhs = args.lhs;
    }
    if let Some(v) = args.train_fraction {
        section.train_fraction = v;
    }
    if args.serial {
        section.parallel = false;
    }
    if args.record_timing {
        section.record_timing = true;
    }
    section.space.validate()?;

    let configs = match section.lhs {
        Some(k) => sweep::lhs_sample(&section.space, k, config.seed)?,
        None => sweep::enumerate_grid(&section.space),
    };
    let names: Vec<String> = args.data.iter().map(|p| dataset_name(p)).collect();
    let series = args.data.iter().map(|p| load_obs(p)).collect::<Result<Vec<_>>>()?;
    let datasets: Vec<Dataset> = names
        .iter()
        .zip(&series)
        .map(|(name, obs)| Dataset { name, obs })
        .collect();
    let options = SweepOptions {
        kind: section.model,
        base: config.pipeline.clone(),
        learning_rate: section.learning_rate,
        train_fraction: section.train_fraction,
        master_seed: config.seed,
        parallel: section.parallel,
        record_timing: section.record_timing,
    };
    info!("sweeping {} configurations over {} datasets", configs.len(), datasets.len());
    let results = sweep::run_sweep(&configs, &datasets, &options)?;

    create_parent(&args.out)?;
    let file = std::fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    sweep::write_results_csv(std::io::BufWriter::new(file), &results)?;
    let mut outputs = vec![display(&args.out)];
    if let Some(path) = &args.heatmap {
        create_parent(path)?;
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        sweep::write_heatmap_csv(std::io::BufWriter::new(file), &results)?;
        outputs.push(display(path));
    }
    let failed = results.iter().filter(|r| r.metrics.is_none()).count();
    println!(
        "{} rows ({} configurations × {} datasets), {failed} failed cells",
        results.len(),
        configs.len(),
        datasets.len()
    );
    print!("{}", sweep::render_best(&sweep::best_per_metric(&results), section.model));
    config.write_sidecar(
        &sidecar_path(&args.out),
        RunRecord {
            command: "sweep".into(),
            inputs: args.data.iter().map(|p| display(p)).collect(),
            outputs,
            notes: vec![],
        },
    )?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::new().parse_filters(level).init();

    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    check_seed(config.seed)?;

    match &cli.command {
        Command::Synth(args) => cmd_synth(config, args),
        Command::Fit(args) => cmd_fit(config, args),
        Command::Predict(args) => cmd_predict(config, args),
        Command::Evaluate(args) => cmd_evaluate(config, args),
        Command::Sweep(args) => cmd_sweep(config, args),
    }
}
