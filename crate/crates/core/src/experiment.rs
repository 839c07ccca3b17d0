//! End-to-end experiment harness: flag handling, the predicted-sensitive
//! pipeline, two-step validation, and result emission.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{stratified_folds, Dataset};
use crate::error::{Error, Result};
use crate::fairness::{accuracy_report, FairnessTarget};
use crate::forest::{fit_group_predictor, ForestConfig, GroupPredictor};
use crate::model::{predict_score, Method, ModelSpec, ParamVector};
use crate::selection::{two_step_cv, train_once, CvOutcome, EvalMetric, Grid, GridPoint};
use crate::solver::SolverConfig;

/// Whether the model consumes the true sensitive group s or the predicted
/// group s_hat = g(x). Replaces the ambiguous single-bit P flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensitiveSource {
    True,
    Predicted,
}

impl SensitiveSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            SensitiveSource::True => "true",
            SensitiveSource::Predicted => "predicted",
        }
    }
}

impl std::str::FromStr for SensitiveSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true" => Ok(SensitiveSource::True),
            "predicted" => Ok(SensitiveSource::Predicted),
            other => Err(Error::InvalidConfig(format!(
                "unknown sensitive source `{other}` (expected true|predicted)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Free-form dataset id carried into the result row.
    pub dataset_id: String,
    pub method: Method,
    pub sensitive_source: SensitiveSource,
    /// The D flag: predict with w0 + v_s instead of w0.
    pub group_specific_prediction: bool,
    /// The F flag plus class selector.
    pub fairness_target: FairnessTarget,
    /// Validation fairness measure; None = matched to the target (DEOd when
    /// no constraint is active).
    pub eval_metric: Option<EvalMetric>,
    pub full_grid: bool,
    /// Explicit grid, overriding the full/thinned choice (tests, custom runs).
    pub grid_override: Option<Grid>,
    pub n_folds: usize,
    /// Optional cap on training rows (seeded subsample) for desk-scale runs.
    pub subsample: Option<usize>,
    pub forest: ForestConfig,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset_id: "generic".into(),
            method: Method::Mtl,
            sensitive_source: SensitiveSource::True,
            group_specific_prediction: false,
            fairness_target: FairnessTarget::None,
            eval_metric: None,
            full_grid: false,
            grid_override: None,
            n_folds: 10,
            subsample: None,
            forest: ForestConfig::default(),
            solver: SolverConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(Error::InvalidConfig("n_folds must be >= 2".into()));
        }
        match self.method {
            Method::Itl if !self.group_specific_prediction => Err(Error::InvalidConfig(
                "ITL requires group-specific prediction (D=1)".into(),
            )),
            Method::Stl | Method::StlGroupBias if self.group_specific_prediction => Err(
                Error::InvalidConfig("STL requires shared prediction (D=0)".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn metric(&self) -> EvalMetric {
        self.eval_metric
            .unwrap_or_else(|| EvalMetric::for_target(self.fairness_target))
    }
}

/// Flat record of one experiment, one per (dataset, flag combination).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub sensitive: String,
    pub method: String,
    pub sensitive_source: String,
    pub group_specific_prediction: bool,
    pub fairness_target: String,
    pub include_sensitive_feature: bool,
    pub acc: f64,
    pub per_group_accuracy: Vec<f64>,
    pub deop_pos: f64,
    pub deop_neg: f64,
    pub deod: f64,
    pub rho: f64,
    pub lambda: f64,
    pub theta: f64,
    pub train_constraint_violation: f64,
    pub runtime_secs: f64,
    pub seed: u64,
}

/// The fitted pipeline: h(x) = f(x, g(x)) when the source is predicted,
/// f(x, s) otherwise.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: ParamVector,
    pub predictor: Option<GroupPredictor>,
}

impl TrainedModel {
    /// Score one sample. `true_group` drives the functional form only when no
    /// predictor is attached; it never affects metric conditioning, which the
    /// caller does against true groups separately.
    pub fn score(&self, ds: &Dataset, features: &[f64], true_group: usize) -> Result<f64> {
        let s = match &self.predictor {
            Some(g) => g.predict(ds.non_sensitive(features)),
            None => true_group,
        };
        predict_score(&self.params, features, s, &self.spec)
    }
}

/// Everything run_experiment produces beyond the flat row.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub row: ResultRow,
    pub model: TrainedModel,
    pub cv: CvOutcome,
}

fn seeded_subsample(ds: &Dataset, cap: usize, seed: u64) -> Dataset {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if ds.samples.len() <= cap {
        return ds.clone();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5ab5_a17e);
    let mut idx: Vec<usize> = (0..ds.samples.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(cap);
    idx.sort_unstable();
    let mut sub = ds.clone();
    sub.samples = idx.iter().map(|&i| ds.samples[i].clone()).collect();
    sub.n_train = sub.samples.len();
    sub
}

/// Relabel every sample's group with the forest's prediction, keeping the
/// true groups for auditing.
fn relabel(ds: &Dataset, g: &GroupPredictor) -> (Dataset, Vec<usize>) {
    let truth: Vec<usize> = ds.samples.iter().map(|s| s.group).collect();
    let mut out = ds.clone();
    for s in out.samples.iter_mut() {
        s.group = g.predict(ds.non_sensitive(&s.features));
    }
    (out, truth)
}

/// Run one experiment: optional g fitting and relabeling, two-step CV on the
/// training split, a final solve at the chosen point, and test metrics
/// audited against the true groups.
pub fn run_experiment(
    train: &Dataset,
    test: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let train = match cfg.subsample {
        Some(cap) => seeded_subsample(train, cap, cfg.seed),
        None => train.clone(),
    };

    let predictor = match cfg.sensitive_source {
        SensitiveSource::True => None,
        SensitiveSource::Predicted => {
            let features: Vec<Vec<f64>> = train
                .samples
                .iter()
                .map(|s| train.non_sensitive(&s.features).to_vec())
                .collect();
            let groups: Vec<usize> = train.samples.iter().map(|s| s.group).collect();
            let mut fc = cfg.forest.clone();
            fc.seed = cfg.seed.wrapping_add(fc.seed);
            Some(fit_group_predictor(&features, &groups, &fc)?)
        }
    };

    let (work_train, train_truth) = match &predictor {
        Some(g) => relabel(&train, g),
        None => {
            let truth = train.samples.iter().map(|s| s.group).collect();
            (train.clone(), truth)
        }
    };

    let mut template = ModelSpec::new(cfg.method, work_train.k, work_train.d);
    template.group_specific_prediction = cfg.group_specific_prediction;
    template.fairness_target = cfg.fairness_target;
    let grid = match &cfg.grid_override {
        Some(g) => g.clone(),
        None if cfg.full_grid => Grid::full(cfg.method),
        None => Grid::thinned(cfg.method),
    };
    let folds = stratified_folds(&work_train, cfg.n_folds, cfg.seed)?;
    let cv = two_step_cv(
        &work_train,
        &template,
        &grid,
        &folds,
        cfg.metric(),
        Some(&train_truth),
        &cfg.solver,
    )?;

    let GridPoint { rho, lambda, theta } = cv.chosen;
    let mut spec = template.clone();
    spec.rho = rho;
    spec.lambda = lambda;
    spec.theta = theta;
    let fit = train_once(&spec, &work_train, &cfg.solver)?;
    // the chosen point converged on every fold; the full training split can
    // need more iterations, so grant the final fit one larger budget
    let fit = if fit.converged {
        fit
    } else {
        let mut retry = cfg.solver.clone();
        retry.max_iterations = cfg.solver.max_iterations.saturating_mul(4);
        train_once(&spec, &work_train, &retry)?
    };
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.iterations,
        });
    }

    let model = TrainedModel {
        spec: spec.clone(),
        params: fit.params,
        predictor,
    };

    let scores: Vec<f64> = test
        .samples
        .iter()
        .map(|s| model.score(test, &s.features, s.group))
        .collect::<Result<_>>()?;
    let labels: Vec<i8> = test.samples.iter().map(|s| s.label).collect();
    let truth: Vec<usize> = test.samples.iter().map(|s| s.group).collect();
    let report = accuracy_report(&scores, &labels, &truth, test.k)?;

    let row = ResultRow {
        dataset: cfg.dataset_id.clone(),
        sensitive: work_train.sensitive_spec.clone(),
        method: cfg.method.as_str().to_string(),
        sensitive_source: cfg.sensitive_source.as_str().to_string(),
        group_specific_prediction: cfg.group_specific_prediction,
        fairness_target: cfg.fairness_target.as_str().to_string(),
        include_sensitive_feature: train.includes_sensitive,
        acc: report.acc,
        per_group_accuracy: report.per_group_accuracy,
        deop_pos: report.deop_pos,
        deop_neg: report.deop_neg,
        deod: report.deod,
        rho,
        lambda,
        theta,
        train_constraint_violation: fit.constraint_violation,
        runtime_secs: started.elapsed().as_secs_f64(),
        seed: cfg.seed,
    };
    Ok(ExperimentOutput { row, model, cv })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ResultFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ResultFormat::Csv),
            "json" => Ok(ResultFormat::Json),
            other => Err(Error::InvalidConfig(format!("unknown format `{other}`"))),
        }
    }
}

/// Deterministic result emission: fixed column order, `{:?}` float rendering.
/// Identical rows produce identical bytes; callers comparing reruns should
/// zero the wall-clock field first with `normalize_runtime`.
pub fn emit_results<W: Write>(rows: &[ResultRow], format: ResultFormat, mut out: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no result rows to emit".into()));
    }
    match format {
        ResultFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
        ResultFormat::Csv => {
            writeln!(
                out,
                "dataset,sensitive,method,sensitive_source,group_specific_prediction,\
                 fairness_target,include_sensitive_feature,acc,per_group_accuracy,\
                 deop_pos,deop_neg,deod,rho,lambda,theta,train_constraint_violation,\
                 runtime_secs,seed"
            )?;
            for r in rows {
                let per_group = r
                    .per_group_accuracy
                    .iter()
                    .map(|a| format!("{a:?}"))
                    .collect::<Vec<_>>()
                    .join(";");
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{:?},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
                    r.dataset,
                    r.sensitive,
                    r.method,
                    r.sensitive_source,
                    r.group_specific_prediction as u8,
                    r.fairness_target,
                    r.include_sensitive_feature as u8,
                    r.acc,
                    per_group,
                    r.deop_pos,
                    r.deop_neg,
                    r.deod,
                    r.rho,
                    r.lambda,
                    r.theta,
                    r.train_constraint_violation,
                    r.runtime_secs,
                    r.seed
                )?;
            }
        }
    }
    Ok(())
}

/// Zero the wall-clock field so reruns can be compared byte-for-byte.
pub fn normalize_runtime(rows: &mut [ResultRow]) {
    for r in rows {
        r.runtime_secs = 0.0;
    }
}
