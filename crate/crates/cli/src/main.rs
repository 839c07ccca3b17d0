//! `fairmtl` — fairness-constrained STL/ITL/MTL linear classification.
//!
//! Subcommands: `prepare` (ingest + snapshot), `train`, `cv`, `run` (full
//! experiment), `sweep-lambda`, `predict-sensitive`, `report`.
//!
//! Every subcommand accepts `--config FILE` holding flat `key=value` lines
//! whose keys are the subcommand's long flag names; explicit CLI flags
//! override the file. `--seed` governs every derived random stream.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fairmtl::data::{
    load_dataset, read_snapshot, stratified_folds, write_snapshot, Dataset, LoadOptions, SchemaId,
};
use fairmtl::experiment::{
    emit_results, run_experiment, ExperimentConfig, ResultFormat, ResultRow,
};
use fairmtl::forest::{confusion_matrix, fit_group_predictor, ForestConfig};
use fairmtl::model::{Method, ModelSpec};
use fairmtl::selection::{lambda_sweep, train_once, two_step_cv, EvalMetric, Grid};
use fairmtl::solver::SolverConfig;

#[derive(Parser)]
#[command(
    name = "fairmtl",
    about = "Fairness-constrained single-task, independent-task and multitask linear classification",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ingest a raw dataset and write the normalized snapshot(s)
    Prepare(PrepareArgs),
    /// Train one model at fixed hyperparameters and save its weights
    Train(TrainArgs),
    /// Two-step cross-validation over the hyperparameter grid
    Cv(CvArgs),
    /// Full experiment: optional sensitive-attribute prediction, CV, final
    /// training and test metrics
    Run(RunArgs),
    /// Train/test metrics as a function of the MTL lambda
    SweepLambda(SweepArgs),
    /// Fit the random-forest sensitive-attribute predictor
    PredictSensitive(PredictArgs),
    /// Render a results file as a table (with both P-flag encodings)
    Report(ReportArgs),
}

/// Dataset source shared by most subcommands: either a normalized snapshot
/// (`--data`) or a raw file/directory (`--schema` + `--input`).
#[derive(Args, Clone)]
struct DataArgs {
    /// Normalized snapshot written by `prepare`
    #[arg(long)]
    data: Option<PathBuf>,
    /// Raw schema: adult | compas | generic
    #[arg(long)]
    schema: Option<String>,
    /// Raw input file (compas, generic) or directory (adult)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Sensitive attribute: G, R, G+R, or comma-separated column names
    #[arg(long, default_value = "G")]
    sensitive: String,
    /// Keep the sensitive columns in the feature vector (the S flag)
    #[arg(long)]
    include_sensitive: bool,
    /// Label column (generic schema)
    #[arg(long)]
    label_column: Option<String>,
    /// Drop the Adult sampling-weight column
    #[arg(long)]
    exclude_weight_column: bool,
    /// Seeded holdout fraction when the source has no built-in test split
    #[arg(long)]
    test_fraction: Option<f64>,
}

impl DataArgs {
    fn load(&self, seed: u64) -> Result<Dataset> {
        let ds = match (&self.data, &self.schema) {
            (Some(path), None) => {
                let file = File::open(path).with_context(|| format!("opening {path:?}"))?;
                read_snapshot(file)?
            }
            (None, Some(schema)) => {
                let input = self
                    .input
                    .as_ref()
                    .context("--input is required with --schema")?;
                let schema: SchemaId = schema.parse()?;
                let mut opts = LoadOptions::new(schema, self.sensitive.parse()?);
                opts.include_sensitive = self.include_sensitive;
                opts.exclude_weight_column = self.exclude_weight_column;
                opts.label_column = self.label_column.clone();
                load_dataset(input, &opts)?
            }
            (Some(_), Some(_)) => bail!("--data and --schema are mutually exclusive"),
            (None, None) => bail!("one of --data or --schema/--input is required"),
        };
        match self.test_fraction {
            Some(f) => Ok(ds.with_holdout(f, seed)?),
            None => Ok(ds),
        }
    }

    fn load_split(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let ds = self.load(seed)?;
        let (train, test) = ds.split();
        let test = test.context(
            "the dataset has no test split; pass --test-fraction for a seeded holdout",
        )?;
        Ok((train, test))
    }
}

/// Model hyperparameters shared by train/cv/sweep.
#[derive(Args, Clone)]
struct ModelArgs {
    /// STL | STL+B | ITL | MTL
    #[arg(long, default_value = "MTL")]
    method: String,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Predict with w0 + v_s (the D flag); defaults to the method's norm
    #[arg(long)]
    group_specific: Option<bool>,
    /// none | EOp+ | EOp- | EOd (the F flag plus class selector)
    #[arg(long, default_value = "none")]
    fairness_target: String,
    /// Penalize ||w_s||^2 literally instead of the common-mean ||v_s||^2
    #[arg(long)]
    literal_regularizer: bool,
    /// Drop the per-block constant feature
    #[arg(long)]
    no_bias: bool,
}

impl ModelArgs {
    fn spec(&self, k: usize, d: usize) -> Result<ModelSpec> {
        let method: Method = self.method.parse()?;
        let mut spec = ModelSpec::new(method, k, d);
        spec.rho = self.rho;
        spec.lambda = self.lambda;
        spec.theta = self.theta;
        if let Some(d_flag) = self.group_specific {
            spec.group_specific_prediction = d_flag;
        }
        spec.fairness_target = self.fairness_target.parse()?;
        spec.literal_regularizer = self.literal_regularizer;
        spec.include_bias = !self.no_bias;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iterations: usize,
    /// Huber smoothing half-width; 0 selects the projected subgradient method
    #[arg(long, default_value_t = 1e-3)]
    hinge_smoothing: f64,
}

impl SolverArgs {
    fn config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            hinge_smoothing: self.hinge_smoothing,
            seed,
        }
    }
}

#[derive(Args)]
struct PrepareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Snapshot path for the training split
    #[arg(long)]
    output: PathBuf,
    /// Snapshot path for the test split, when one exists
    #[arg(long)]
    output_test: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Where to write the trained parameter vector
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 10)]
    n_folds: usize,
    /// Validation fairness measure: DEOp+ | DEOp- | DEOd (default: matched
    /// to the fairness target)
    #[arg(long)]
    metric: Option<String>,
    /// Use the full hyperparameter grid instead of the thinned desk-scale grid
    #[arg(long)]
    full_grid: bool,
    /// Where to write the per-point CV table
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// true | predicted: which sensitive attribute the model consumes
    #[arg(long, default_value = "true")]
    sensitive_source: String,
    #[arg(long, default_value_t = 10)]
    n_folds: usize,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    full_grid: bool,
    /// Cap on training rows (seeded subsample)
    #[arg(long)]
    subsample: Option<usize>,
    /// Forest size for the predicted-sensitive pipeline
    #[arg(long, default_value_t = 100)]
    n_trees: usize,
    /// Dataset id recorded in the result row
    #[arg(long, default_value = "dataset")]
    dataset_id: String,
    /// csv | json
    #[arg(long, default_value = "csv")]
    format: String,
    /// Results file (stdout when omitted)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also save the trained parameter vector
    #[arg(long)]
    params_out: Option<PathBuf>,
    /// Also save the per-point CV table
    #[arg(long)]
    cv_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Comma-separated lambda values
    #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
    lambdas: String,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 100)]
    n_trees: usize,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    bootstrap_fraction: f64,
    /// Comma-separated per-group weights (default: inverse group frequency)
    #[arg(long)]
    group_weights: Option<String>,
    /// Where to save the fitted predictor
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Where to write the test-split confusion matrix
    #[arg(long)]
    confusion_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results file written by `run --format json`
    #[arg(long)]
    results: PathBuf,
}

// ------------------------------------------------------------- config file

/// Expand `--config FILE` into `--key value` arguments placed before the
/// user's own flags, so explicit flags win under `args_override_self`.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config") else {
        return Ok(argv);
    };
    let path = argv
        .get(pos + 1)
        .context("--config requires a file path")?
        .clone();
    let mut text = String::new();
    File::open(&path)
        .with_context(|| format!("opening config file {path}"))?
        .read_to_string(&mut text)?;
    let mut injected = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{path}:{}: expected key=value", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        match value {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            _ => {
                injected.push(format!("--{key}"));
                injected.push(value.to_string());
            }
        }
    }
    // argv = [bin, subcommand, ...flags]; put config flags right after the
    // subcommand and drop the --config pair
    let mut out: Vec<String> = argv[..2.min(argv.len())].to_vec();
    out.extend(injected);
    for (i, a) in argv.iter().enumerate().skip(2) {
        if i == pos || i == pos + 1 {
            continue;
        }
        out.push(a.clone());
    }
    Ok(out)
}

// ------------------------------------------------------------ subcommands

fn out_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {p:?}"))?),
        None => Box::new(std::io::stdout()),
    })
}

fn cmd_prepare(args: PrepareArgs) -> Result<()> {
    let ds = args.data.load(args.seed)?;
    let (train, test) = ds.split();
    write_snapshot(&train, File::create(&args.output)?)?;
    let props: Vec<String> = train
        .group_proportions()
        .iter()
        .map(|p| format!("{:.2}%", 100.0 * p))
        .collect();
    println!(
        "wrote {} training rows ({} groups: {}; {} features) to {}",
        train.n(),
        train.k,
        props.join(" / "),
        train.d,
        args.output.display()
    );
    match (test, &args.output_test) {
        (Some(test), Some(path)) => {
            write_snapshot(&test, File::create(path)?)?;
            println!("wrote {} test rows to {}", test.n(), path.display());
        }
        (Some(_), None) => println!("note: test split present but --output-test not given"),
        (None, Some(_)) => bail!("no test split; pass --test-fraction to create one"),
        (None, None) => {}
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let ds = args.data.load(args.seed)?;
    let (train, _) = ds.split();
    let spec = args.model.spec(train.k, train.d)?;
    let result = train_once(&spec, &train, &args.solver.config(args.seed))?;
    result
        .params
        .write_text(spec.method, File::create(&args.output)?)?;
    println!(
        "objective {:.6}, constraint violation {:.2e}, {} iterations, converged: {}",
        result.objective_value, result.constraint_violation, result.iterations, result.converged
    );
    println!("parameters written to {}", args.output.display());
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<()> {
    let ds = args.data.load(args.seed)?;
    let (train, _) = ds.split();
    let template = args.model.spec(train.k, train.d)?;
    let grid = if args.full_grid {
        Grid::full(template.method)
    } else {
        Grid::thinned(template.method)
    };
    let metric = match &args.metric {
        Some(m) => m.parse()?,
        None => EvalMetric::for_target(template.fairness_target),
    };
    let folds = stratified_folds(&train, args.n_folds, args.seed)?;
    let outcome = two_step_cv(
        &train,
        &template,
        &grid,
        &folds,
        metric,
        None,
        &args.solver.config(args.seed),
    )?;
    fairmtl::selection::write_cv_csv(&outcome, File::create(&args.output)?)?;
    println!(
        "best mean ACC {:.4}; chosen rho {:?} lambda {:?} theta {:?} ({} shortlisted, {} excluded)",
        outcome.best_acc,
        outcome.chosen.rho,
        outcome.chosen.lambda,
        outcome.chosen.theta,
        outcome.shortlist.len(),
        outcome.excluded.len()
    );
    println!("per-point table written to {}", args.output.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let (train, test) = args.data.load_split(args.seed)?;
    let method: Method = args.model.method.parse()?;
    let mut cfg = ExperimentConfig {
        dataset_id: args.dataset_id.clone(),
        method,
        sensitive_source: args.sensitive_source.parse()?,
        group_specific_prediction: args
            .model
            .group_specific
            .unwrap_or(!matches!(method, Method::Stl | Method::StlGroupBias)),
        fairness_target: args.model.fairness_target.parse()?,
        full_grid: args.full_grid,
        n_folds: args.n_folds,
        subsample: args.subsample,
        solver: args.solver.config(args.seed),
        seed: args.seed,
        ..ExperimentConfig::default()
    };
    cfg.forest.n_trees = args.n_trees;
    if let Some(m) = &args.metric {
        cfg.eval_metric = Some(m.parse()?);
    }
    let out = run_experiment(&train, &test, &cfg)?;
    if let Some(path) = &args.params_out {
        out.model
            .params
            .write_text(out.model.spec.method, File::create(path)?)?;
    }
    if let Some(path) = &args.cv_out {
        fairmtl::selection::write_cv_csv(&out.cv, File::create(path)?)?;
    }
    let format: ResultFormat = args.format.parse()?;
    emit_results(&[out.row], format, out_writer(args.output.as_deref())?)?;
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let (train, test) = args.data.load_split(args.seed)?;
    let template = args.model.spec(train.k, train.d)?;
    if template.method != Method::Mtl {
        bail!("--method MTL is required for the lambda sweep");
    }
    let lambdas: Vec<f64> = args
        .lambdas
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .context("parsing --lambdas")?;
    let rows = lambda_sweep(&train, &test, &template, &lambdas, &args.solver.config(args.seed))?;
    let mut out = File::create(&args.output)?;
    writeln!(out, "lambda,acc,deod")?;
    for r in &rows {
        writeln!(out, "{:?},{:?},{:?}", r.lambda, r.acc, r.deod)?;
    }
    println!("{} sweep rows written to {}", rows.len(), args.output.display());
    Ok(())
}

fn cmd_predict_sensitive(args: PredictArgs) -> Result<()> {
    let ds = args.data.load(args.seed)?;
    let (train, test) = ds.split();
    let group_weights = match &args.group_weights {
        None => None,
        Some(spec) => Some(
            spec.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .context("parsing --group-weights")?,
        ),
    };
    let cfg = ForestConfig {
        n_trees: args.n_trees,
        max_depth: args.max_depth,
        bootstrap_fraction: args.bootstrap_fraction,
        group_weights,
        seed: args.seed,
        ..ForestConfig::default()
    };
    let features: Vec<Vec<f64>> = train
        .samples
        .iter()
        .map(|s| train.non_sensitive(&s.features).to_vec())
        .collect();
    let groups: Vec<usize> = train.samples.iter().map(|s| s.group).collect();
    let predictor = fit_group_predictor(&features, &groups, &cfg)?;
    if let Some(path) = &args.model_out {
        predictor.write_text(File::create(path)?)?;
    }
    let eval = test.as_ref().unwrap_or(&train);
    let eval_features: Vec<Vec<f64>> = eval
        .samples
        .iter()
        .map(|s| eval.non_sensitive(&s.features).to_vec())
        .collect();
    let eval_groups: Vec<usize> = eval.samples.iter().map(|s| s.group).collect();
    let cm = confusion_matrix(&predictor, &eval_features, &eval_groups)?;
    println!(
        "overall accuracy {:.2}% on the {} split ({} rows)",
        cm.overall_accuracy(),
        if test.is_some() { "test" } else { "training" },
        eval.n()
    );
    if let Some(path) = &args.confusion_out {
        cm.write_csv(File::create(path)?)?;
        println!("confusion matrix written to {}", path.display());
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let file = File::open(&args.results).with_context(|| format!("opening {:?}", args.results))?;
    let rows: Vec<ResultRow> = serde_json::from_reader(BufReader::new(file))
        .context("results file must be the JSON emitted by `run --format json`")?;
    if rows.is_empty() {
        bail!("no result rows");
    }
    println!(
        "{:<12} {:<5} {:<9} {:<5} {:<5} {:<5} {:>4} {:>4} {:>7} {:>7} {:>7} {:>7}",
        "dataset", "meth", "source", "P(a)", "P(b)", "D/F/S", "", "", "ACC", "DEOp+", "DEOp-", "DEOd"
    );
    for r in &rows {
        let predicted = r.sensitive_source == "predicted";
        let flags = format!(
            "{}{}{}",
            u8::from(r.group_specific_prediction),
            u8::from(r.fairness_target != "none"),
            u8::from(r.include_sensitive_feature)
        );
        println!(
            "{:<12} {:<5} {:<9} {:<5} {:<5} {:<5} {:>4} {:>4} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
            r.dataset,
            r.method,
            r.sensitive_source,
            u8::from(!predicted),
            u8::from(predicted),
            flags,
            "",
            "",
            r.acc,
            r.deop_pos,
            r.deop_neg,
            r.deod
        );
    }
    println!();
    println!("P(a): 1 = true sensitive attribute, 0 = predicted (as defined in the text).");
    println!("P(b): 0 = true sensitive attribute, 1 = predicted (as used in the result tables).");
    println!("The two published encodings disagree; both are shown.");
    Ok(())
}

fn main() -> Result<()> {
    let argv = expand_config(std::env::args().collect())?;
    let cli = Cli::parse_from(argv);
    match cli.cmd {
        Cmd::Prepare(args) => cmd_prepare(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Cv(args) => cmd_cv(args),
        Cmd::Run(args) => cmd_run(args),
        Cmd::SweepLambda(args) => cmd_sweep(args),
        Cmd::PredictSensitive(args) => cmd_predict_sensitive(args),
        Cmd::Report(args) => cmd_report(args),
    }
}
