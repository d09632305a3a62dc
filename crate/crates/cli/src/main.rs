//! `wildfire-duration`: synthesize data, train, evaluate and grid-search
//! fire-duration models.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on runtime errors.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wildfire_duration::data::{
    self, generate_synthetic, load_dataset, parse_feature_list, save_dataset, FireRecord, Geometry, GridSpec,
    SyntheticConfig, DEFAULT_BOUNDARY_YEAR, SMALL_FIRE_DAYS,
};
use wildfire_duration::evaluation::{export_report, EvaluationReport, DEFAULT_STEP_DAYS};
use wildfire_duration::pipeline::{fit, prepare, standard_split, Family, FittedModel, ModelConfig, PrepConfig};
use wildfire_duration::tuning::{export_results, grid_search, SearchSpace, SelectionMetric};
use wildfire_duration::{write_atomic, Error};

#[derive(Debug, Parser)]
#[command(name = "wildfire-duration", version, about = "Wildfire burn-duration regression toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset with a planted duration signal.
    Synth(SynthArgs),
    /// Fit a model on the training split and save it.
    Train(TrainArgs),
    /// Evaluate a saved model on the test split and write the report.
    Eval(EvalArgs),
    /// Grid-search a family's hyperparameters and write one row per configuration.
    Gridsearch(GridArgs),
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("must be a positive number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        Ok(v) => Err(format!("must be a non-negative number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn family_arg(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Read by `config::expand` before parsing; declared so clap accepts it.
#[derive(Debug, Args)]
struct ConfigArg {
    #[allow(dead_code)]
    /// Flat key=value file of defaults for any flag (flags win).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory for the manifest and raster stacks.
    #[arg(long)]
    out: PathBuf,
    /// Number of fires.
    #[arg(long, default_value_t = 400, value_parser = positive_usize)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Half-width of the uniform label noise, days.
    #[arg(long, default_value_t = 2.0, value_parser = non_negative_f64)]
    noise: f64,
    /// Radius at which the planted signal is measured, km.
    #[arg(long, default_value_t = 5.0, value_parser = positive_f64)]
    reference_radius: f64,
    /// Split year recorded in the manifest.
    #[arg(long, default_value_t = DEFAULT_BOUNDARY_YEAR)]
    boundary_year: i32,
    /// Side length in pixels of the tree and grass cover rasters.
    #[arg(long, default_value_t = 600, value_parser = positive_usize)]
    land_size: usize,
    #[arg(long, default_value_t = 100.0, value_parser = positive_f64)]
    land_res: f64,
    #[arg(long, default_value_t = 200, value_parser = positive_usize)]
    slope_size: usize,
    #[arg(long, default_value_t = 270.0, value_parser = positive_f64)]
    slope_res: f64,
    #[arg(long, default_value_t = 4, value_parser = positive_usize)]
    wind_size: usize,
    #[arg(long, default_value_t = 27_830.0, value_parser = positive_f64)]
    wind_res: f64,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Crop radius in km [default: 5, or the model's value for eval].
    #[arg(long, value_parser = positive_f64)]
    radius: Option<f64>,
    /// Fires starting before this year train, the rest test
    /// [default: the manifest's value, else 2013].
    #[arg(long)]
    boundary_year: Option<i32>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// rf, knn, xgboost (alias gbt), cnn_multi or cnn_encoder.
    #[arg(long, value_parser = family_arg, default_value = "rf")]
    family: Family,
    /// Image channels, comma separated. cnn_encoder takes two: large branch, small branch.
    #[arg(long)]
    channels: Option<String>,
    /// Number of trees (rf, xgboost).
    #[arg(long, value_parser = positive_usize)]
    n: Option<usize>,
    /// Maximum tree depth (rf, xgboost).
    #[arg(long)]
    depth: Option<usize>,
    /// Number of neighbours (knn).
    #[arg(long, value_parser = positive_usize)]
    k: Option<usize>,
    /// Learning rate (xgboost shrinkage, or the network optimizer step).
    #[arg(long, value_parser = non_negative_f64)]
    lr: Option<f64>,
    /// Leaf L2 penalty (xgboost).
    #[arg(long, value_parser = non_negative_f64)]
    lambda: Option<f64>,
    #[arg(long, value_parser = positive_usize)]
    batch_size: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    epochs: Option<usize>,
    /// sgd or adam.
    #[arg(long)]
    optimizer: Option<String>,
    /// Side length of the main image input [default: 100].
    #[arg(long, value_parser = positive_usize)]
    image_size: Option<usize>,
    /// Side length of the second encoder input [default: 30].
    #[arg(long, value_parser = positive_usize)]
    branch_b_size: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Training log [default: <out>.log].
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Report file to write.
    #[arg(long)]
    out: PathBuf,
    /// Accuracy-curve spacing in days.
    #[arg(long, default_value_t = DEFAULT_STEP_DAYS, value_parser = positive_f64)]
    step: f64,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Results file to write.
    #[arg(long)]
    out: PathBuf,
    /// Replace the default space with `name=v1,v2,..`; repeatable.
    #[arg(long, value_name = "NAME=VALUES")]
    grid: Vec<String>,
    /// relative_rmse (minimised) or worst_case_accuracy (maximised).
    #[arg(long, default_value = "relative_rmse")]
    metric: String,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl ModelArgs {
    fn model_config(&self) -> CliResult<ModelConfig> {
        let family = self.family;
        let mut config = ModelConfig::default_for(family);
        let names = ModelConfig::param_names(family);
        let flags: [(&str, Option<String>); 8] = [
            ("n_estimators", self.n.map(|v| v.to_string())),
            ("max_depth", self.depth.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("learning_rate", self.lr.map(|v| v.to_string())),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("optimizer", self.optimizer.clone()),
        ];
        for (name, value) in flags {
            if let Some(v) = value.filter(|_| names.contains(&name)) {
                config.set(name, &v).map_err(|e| usage(e.to_string()))?;
            }
        }
        Ok(config)
    }

    fn prep(&self, radius: Option<f64>) -> CliResult<PrepConfig> {
        let mut prep = PrepConfig::default_for(self.family);
        if let Some(r) = radius {
            prep.radius_km = r;
        }
        if let Some(s) = self.image_size {
            prep.image_size = (s, s);
        }
        if let Some(s) = self.branch_b_size {
            prep.branch_b_size = (s, s);
        }
        if let Some(c) = &self.channels {
            prep.channels = parse_feature_list(c).map_err(|e| usage(e.to_string()))?;
        }
        if self.family == Family::CnnEncoder && prep.channels.len() != 2 {
            return Err(usage(format!(
                "cnn_encoder takes exactly two channels (large branch, small branch), got {}",
                prep.channels.len()
            )));
        }
        Ok(prep)
    }
}

struct Loaded {
    records: Vec<FireRecord>,
    loader: data::DatasetLoader,
    boundary_year: i32,
}

fn load(args: &DataArgs) -> CliResult<Loaded> {
    let (records, loader) = load_dataset(&args.data)?;
    let boundary_year = args
        .boundary_year
        .or(loader.split_boundary_year())
        .unwrap_or(DEFAULT_BOUNDARY_YEAR);
    Ok(Loaded {
        records,
        loader,
        boundary_year,
    })
}

fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let geometry = Geometry::uniform_by_kind(
        GridSpec::new(args.land_size, args.land_size, args.land_res),
        GridSpec::new(args.slope_size, args.slope_size, args.slope_res),
        GridSpec::new(args.wind_size, args.wind_size, args.wind_res),
    );
    let config = SyntheticConfig {
        seed: args.seed,
        noise_amplitude: args.noise,
        reference_radius_km: args.reference_radius,
    };
    let ds = generate_synthetic(args.n, &geometry, &config)?;
    let provenance = vec![format!(
        "synthetic seed={} noise={} reference_radius_km={}",
        args.seed, args.noise, args.reference_radius
    )];
    let manifest = save_dataset(&args.out, ds.records(), &ds, Some(args.boundary_year), &provenance)?;
    let (train, test) = data::split_by_year(ds.records(), args.boundary_year);
    let small = ds.records().iter().filter(|r| r.duration_days <= SMALL_FIRE_DAYS).count();
    println!(
        "wrote {} fires to {} (train {}, test {}, small fires {})",
        ds.records().len(),
        manifest.display(),
        train.len(),
        test.len(),
        small
    );
    Ok(())
}

fn log_path(out: &Path, log: &Option<PathBuf>) -> PathBuf {
    log.clone().unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".log");
        PathBuf::from(p)
    })
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let config = args.model.model_config()?;
    let prep = args.model.prep(args.data.radius)?;
    let loaded = load(&args.data)?;
    let (train, test) = standard_split(&loaded.records, loaded.boundary_year, args.data.seed)?;
    if train.is_empty() {
        return Err(usage(format!("no training fires start before {}", loaded.boundary_year)));
    }
    let family = config.family();
    let set = prepare(family, &prep, &train, &loaded.loader)?;
    let (model, fit_log) = fit(&config, &prep, &set, args.data.seed)?;
    model.save(&args.out)?;

    let mut log = String::new();
    let _ = writeln!(log, "family={family}");
    let _ = writeln!(log, "seed={}", args.data.seed);
    let _ = writeln!(log, "boundary_year={}", loaded.boundary_year);
    let _ = writeln!(log, "train_fires={}", train.len());
    let _ = writeln!(log, "test_fires={}", test.len());
    let _ = writeln!(log, "radius_km={}", prep.radius_km);
    let channels: Vec<&str> = prep.channels.iter().map(|c| c.name()).collect();
    let _ = writeln!(log, "channels={}", channels.join(","));
    let _ = writeln!(log, "config={}", format!("{config:?}"));
    for (i, loss) in fit_log.loss_history.iter().enumerate() {
        let _ = writeln!(log, "loss[{i}]={loss}");
    }
    for w in &fit_log.warnings {
        let _ = writeln!(log, "warning: {w}");
        eprintln!("warning: {w}");
    }
    write_atomic(&log_path(&args.out, &args.log), log.as_bytes())?;
    println!("trained {family} on {} fires; model written to {}", train.len(), args.out.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let model = FittedModel::load(&args.model)?;
    let loaded = load(&args.data)?;
    let mut prep = model.prep.clone();
    if let Some(r) = args.data.radius {
        prep.radius_km = r;
    }
    let (_, test) = standard_split(&loaded.records, loaded.boundary_year, args.data.seed)?;
    if test.is_empty() {
        return Err(usage(format!("no test fires start in or after {}", loaded.boundary_year)));
    }
    let set = prepare(model.family(), &prep, &test, &loaded.loader)?;
    let preds = model.predict(&set)?;
    let report = EvaluationReport::compute(&preds, &set.labels, args.step)?;
    export_report(&report, &args.out)?;
    println!("family={}", model.family());
    println!("test_fires={}", set.len());
    println!("relative_rmse={}", report.relative_rmse);
    println!("rmse_std={}", report.rmse_std);
    match report.r2 {
        Some(r2) => println!("r2={r2}"),
        None => println!("r2=undefined"),
    }
    println!("worst_case_accuracy={}", report.worst_case_accuracy);
    Ok(())
}

fn parse_grid(family: Family, entries: &[String]) -> CliResult<SearchSpace> {
    if entries.is_empty() {
        return Ok(SearchSpace::default_for(family));
    }
    let mut params = Vec::new();
    for e in entries {
        let (name, values) = e
            .split_once('=')
            .ok_or_else(|| usage(format!("--grid expects name=v1,v2,.., got {e:?}")))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        params.push((name.trim().to_string(), values));
    }
    SearchSpace::new(family, params).map_err(|e| usage(e.to_string()))
}

fn cmd_gridsearch(args: &GridArgs) -> CliResult<()> {
    let base = args.model.model_config()?;
    let prep = args.model.prep(args.data.radius)?;
    let family = base.family();
    let space = parse_grid(family, &args.grid)?;
    let metric: SelectionMetric = args.metric.parse().map_err(|e: Error| usage(e.to_string()))?;
    let loaded = load(&args.data)?;
    let (train, test) = standard_split(&loaded.records, loaded.boundary_year, args.data.seed)?;
    if train.is_empty() || test.is_empty() {
        return Err(usage(format!("boundary year {} leaves an empty split", loaded.boundary_year)));
    }
    let train_set = prepare(family, &prep, &train, &loaded.loader)?;
    let eval_set = prepare(family, &prep, &test, &loaded.loader)?;
    let result = grid_search(&space, &base, &prep, &train_set, &eval_set, args.data.seed, metric)?;
    export_results(&result, &args.out)?;
    let best = result.best_row();
    let assignment: Vec<String> = result
        .param_names
        .iter()
        .zip(&best.values)
        .map(|(n, v)| format!("{n}={v}"))
        .collect();
    println!(
        "evaluated {} configurations of {family}; best by {metric}: {} (relative_rmse={}, worst_case_accuracy={})",
        result.rows.len(),
        assignment.join(" "),
        best.relative_rmse,
        best.worst_case_accuracy
    );
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gridsearch(a) => cmd_gridsearch(a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(config::ConfigError::Usage(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(2);
        }
        Err(config::ConfigError::Io(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
