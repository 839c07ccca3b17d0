//! Fairness-constrained single-task / independent-task / multitask linear
//! classification.
//!
//! The crate provides:
//! - dataset ingestion and preprocessing ([`data`]),
//! - the stacked-parameter linear models and their regularized objectives
//!   ([`model`]),
//! - equalized-odds group-mean equality constraints and DEO metrics
//!   ([`fairness`]),
//! - an equality-constrained smoothed-hinge solver ([`solver`]),
//! - the two-step cross-validation protocol and hyperparameter grids
//!   ([`selection`]),
//! - a class-weighted random-forest sensitive-group predictor ([`forest`]),
//! - the end-to-end experiment harness ([`experiment`]),
//! - seeded synthetic generators for tests and benches ([`synthetic`]).

pub mod data;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod forest;
pub mod model;
pub mod selection;
pub mod solver;
pub mod synthetic;
pub(crate) mod vecmath;

pub use data::{
    group_partition, load_dataset, stratified_folds, Dataset, Fold, GroupIndex, LoadOptions,
    Sample, SchemaId, SensitiveSpec,
};
pub use error::{Error, Result};
pub use experiment::{
    emit_results, run_experiment, ExperimentConfig, ExperimentOutput, ResultFormat, ResultRow,
    SensitiveSource, TrainedModel,
};
pub use fairness::{
    accuracy_report, build_constraints, deod, deop, group_mean_vectors, Class, ConstraintSet,
    ConstraintTarget, FairnessReport, FairnessTarget, GroupMeanVectors,
};
pub use forest::{
    confusion_matrix, fit_group_predictor, margin_band_accuracy, BandRow, ConfusionMatrix,
    ForestConfig, GroupPredictor,
};
pub use model::{classify, hinge, objective, predict_score, Method, ModelSpec, ParamVector};
pub use selection::{lambda_sweep, train_once, two_step_cv, CvOutcome, EvalMetric, Grid, GridPoint};
pub use solver::{nullspace_basis, solve, SolveResult, SolverConfig};
