//! Two-step 10-fold cross-validation protocol and the hyperparameter grids.
//!
//! Step 1 finds the grid point with the highest mean validation accuracy A*.
//! Step 2 shortlists points with mean accuracy >= 0.97 A* and picks the
//! shortlist point with the lowest validation fairness measure. Fairness is
//! never consulted before the shortlist is formed.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Fold, GroupIndex, group_partition};
use crate::error::{Error, Result};
use crate::fairness::{
    accuracy_report, build_constraints, group_mean_vectors, Class, ConstraintSet, FairnessTarget,
};
use crate::model::{predict_score, Method, ModelSpec};
use crate::solver::{solve, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub rho: f64,
    pub lambda: f64,
    pub theta: f64,
}

/// Validation fairness measure, matching the experiment's reported column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMetric {
    DeopPos,
    DeopNeg,
    Deod,
}

impl EvalMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalMetric::DeopPos => "DEOp+",
            EvalMetric::DeopNeg => "DEOp-",
            EvalMetric::Deod => "DEOd",
        }
    }

    pub fn for_target(target: FairnessTarget) -> Self {
        match target {
            FairnessTarget::EopPos => EvalMetric::DeopPos,
            FairnessTarget::EopNeg => EvalMetric::DeopNeg,
            FairnessTarget::Eod | FairnessTarget::None => EvalMetric::Deod,
        }
    }

    fn of(&self, report: &crate::fairness::FairnessReport) -> f64 {
        match self {
            EvalMetric::DeopPos => report.deop_pos,
            EvalMetric::DeopNeg => report.deop_neg,
            EvalMetric::Deod => report.deod,
        }
    }
}

impl std::str::FromStr for EvalMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DEOp+" | "deop+" => Ok(EvalMetric::DeopPos),
            "DEOp-" | "deop-" => Ok(EvalMetric::DeopNeg),
            "DEOd" | "deod" => Ok(EvalMetric::Deod),
            other => Err(Error::InvalidConfig(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub points: Vec<GridPoint>,
}

impl Grid {
    /// rho in {10^-6.0, 10^-5.5, ..., 10^+6.0}: 25 values.
    pub fn rho_values_full() -> Vec<f64> {
        (0..25).map(|i| 10f64.powf(-6.0 + 0.5 * i as f64)).collect()
    }

    /// {0} u {2^-15..2^-1} u {1-2^-2..1-2^-15} u {1}: 31 values.
    pub fn mix_values_full() -> Vec<f64> {
        let mut v = vec![0.0];
        for e in (1..=15).rev() {
            v.push(2f64.powi(-e));
        }
        for e in 2..=15 {
            v.push(1.0 - 2f64.powi(-e));
        }
        v.push(1.0);
        v
    }

    /// Desk-scale thinning: every other rho (13 values).
    pub fn rho_values_thinned() -> Vec<f64> {
        Self::rho_values_full().into_iter().step_by(2).collect()
    }

    /// Desk-scale 9-point mixing grid, endpoints included.
    pub fn mix_values_thinned() -> Vec<f64> {
        vec![0.0, 2f64.powi(-8), 2f64.powi(-4), 2f64.powi(-2), 0.5, 0.75, 0.9375, 0.99609375, 1.0]
    }

    fn build(method: Method, rho: Vec<f64>, mix: Vec<f64>) -> Grid {
        let mut points = Vec::new();
        match method {
            Method::Mtl => {
                for &rho in &rho {
                    for &lambda in &mix {
                        for &theta in &mix {
                            points.push(GridPoint { rho, lambda, theta });
                        }
                    }
                }
            }
            // STL/ITL validate over rho only; lambda/theta are undefined
            _ => {
                for &rho in &rho {
                    points.push(GridPoint {
                        rho,
                        lambda: 0.0,
                        theta: 0.0,
                    });
                }
            }
        }
        Grid { points }
    }

    pub fn full(method: Method) -> Grid {
        Self::build(method, Self::rho_values_full(), Self::mix_values_full())
    }

    pub fn thinned(method: Method) -> Grid {
        Self::build(method, Self::rho_values_thinned(), Self::mix_values_thinned())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CvPointOutcome {
    pub point: GridPoint,
    pub mean_acc: f64,
    pub mean_fairness: f64,
    pub folds_used: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvOutcome {
    pub per_point: Vec<CvPointOutcome>,
    /// Indices into per_point passing the 0.97 A* accuracy threshold.
    pub shortlist: Vec<usize>,
    pub best_acc: f64,
    pub chosen: GridPoint,
    /// Grid points excluded because a fold failed (non-convergence or an
    /// infeasible validation cell), with the reason.
    pub excluded: Vec<(GridPoint, String)>,
}

const SHORTLIST_FACTOR: f64 = 0.97;

/// The two-step rule on already-evaluated points: shortlist everything with
/// mean accuracy >= 0.97 of the best, then take the lowest fairness measure;
/// ties break to larger rho, then smaller lambda, then smaller theta.
fn apply_selection_rule(per_point: &[CvPointOutcome]) -> (Vec<usize>, f64, GridPoint) {
    let best_acc = per_point.iter().map(|o| o.mean_acc).fold(f64::MIN, f64::max);
    let threshold = SHORTLIST_FACTOR * best_acc;
    let shortlist: Vec<usize> = per_point
        .iter()
        .enumerate()
        .filter(|(_, o)| o.mean_acc >= threshold)
        .map(|(i, _)| i)
        .collect();
    let chosen = shortlist
        .iter()
        .map(|&i| &per_point[i])
        .min_by(|a, b| {
            a.mean_fairness
                .total_cmp(&b.mean_fairness)
                .then(b.point.rho.total_cmp(&a.point.rho))
                .then(a.point.lambda.total_cmp(&b.point.lambda))
                .then(a.point.theta.total_cmp(&b.point.theta))
        })
        .map(|o| o.point)
        .expect("shortlist contains the accuracy argmax");
    (shortlist, best_acc, chosen)
}

fn spec_at(template: &ModelSpec, point: &GridPoint) -> ModelSpec {
    let mut spec = template.clone();
    spec.rho = point.rho;
    spec.lambda = point.lambda;
    spec.theta = point.theta;
    spec
}

/// Train on a dataset, build its fairness constraints when the target is
/// active, and return the solve result.
pub fn train_once(
    spec: &ModelSpec,
    ds: &Dataset,
    solver: &SolverConfig,
) -> Result<crate::solver::SolveResult> {
    let gi = group_partition(ds);
    let constraints = constraints_for(spec, ds, &gi)?;
    solve(spec, ds, &gi, constraints.as_ref(), solver)
}

pub fn constraints_for(
    spec: &ModelSpec,
    ds: &Dataset,
    gi: &GroupIndex,
) -> Result<Option<ConstraintSet>> {
    if spec.fairness_target == FairnessTarget::None {
        return Ok(None);
    }
    let classes = spec.fairness_target.classes();
    let u_pos = if classes.contains(&Class::Pos) {
        Some(group_mean_vectors(ds, gi, Class::Pos, spec.include_bias)?)
    } else {
        None
    };
    let u_neg = if classes.contains(&Class::Neg) {
        Some(group_mean_vectors(ds, gi, Class::Neg, spec.include_bias)?)
    } else {
        None
    };
    Ok(Some(build_constraints(u_pos.as_ref(), u_neg.as_ref(), spec)?))
}

fn subset(ds: &Dataset, indices: &[usize]) -> Dataset {
    let mut sub = ds.clone();
    sub.samples = indices.iter().map(|&i| ds.samples[i].clone()).collect();
    sub.n_train = sub.samples.len();
    sub
}

/// Run the two-step CV protocol over the grid.
///
/// `audit_groups`, when given, supplies the true group of each training
/// sample for metric conditioning (the sample's own group drives the
/// functional form); it must align with `ds.samples`.
pub fn two_step_cv(
    ds: &Dataset,
    template: &ModelSpec,
    grid: &Grid,
    folds: &[Fold],
    metric: EvalMetric,
    audit_groups: Option<&[usize]>,
    solver: &SolverConfig,
) -> Result<CvOutcome> {
    if grid.points.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    if let Some(a) = audit_groups {
        if a.len() != ds.samples.len() {
            return Err(Error::DimensionMismatch {
                expected: ds.samples.len(),
                got: a.len(),
            });
        }
    }

    // fold training subsets are shared across grid points
    let fold_data: Vec<(Dataset, Dataset, Vec<usize>)> = folds
        .iter()
        .map(|(train_idx, val_idx)| {
            let audit: Vec<usize> = val_idx
                .iter()
                .map(|&i| audit_groups.map(|a| a[i]).unwrap_or(ds.samples[i].group))
                .collect();
            (subset(ds, train_idx), subset(ds, val_idx), audit)
        })
        .collect();

    let evaluated: Vec<std::result::Result<CvPointOutcome, (GridPoint, String)>> = grid
        .points
        .par_iter()
        .map(|point| {
            let spec = spec_at(template, point);
            let mut accs = Vec::with_capacity(fold_data.len());
            let mut fairs = Vec::with_capacity(fold_data.len());
            for (train, val, audit) in &fold_data {
                let result = train_once(&spec, train, solver)
                    .map_err(|e| (*point, e.to_string()))?;
                if !result.converged {
                    return Err((*point, "solver did not converge".into()));
                }
                let scores: Vec<f64> = val
                    .samples
                    .iter()
                    .map(|s| predict_score(&result.params, &s.features, s.group, &spec))
                    .collect::<Result<_>>()
                    .map_err(|e| (*point, e.to_string()))?;
                let labels: Vec<i8> = val.samples.iter().map(|s| s.label).collect();
                let report = accuracy_report(&scores, &labels, audit, spec.k)
                    .map_err(|e| (*point, e.to_string()))?;
                accs.push(report.acc);
                fairs.push(metric.of(&report));
            }
            let n = accs.len() as f64;
            Ok(CvPointOutcome {
                point: *point,
                mean_acc: accs.iter().sum::<f64>() / n,
                mean_fairness: fairs.iter().sum::<f64>() / n,
                folds_used: accs.len(),
            })
        })
        .collect();

    let mut per_point = Vec::new();
    let mut excluded = Vec::new();
    for item in evaluated {
        match item {
            Ok(o) => per_point.push(o),
            Err(e) => excluded.push(e),
        }
    }
    if per_point.is_empty() {
        return Err(Error::Other(format!(
            "every grid point was excluded; first reason: {}",
            excluded
                .first()
                .map(|(_, r)| r.clone())
                .unwrap_or_default()
        )));
    }

    let (shortlist, best_acc, chosen) = apply_selection_rule(&per_point);

    Ok(CvOutcome {
        per_point,
        shortlist,
        best_acc,
        chosen,
        excluded,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub acc: f64,
    pub deod: f64,
}

/// Train/test evaluation per lambda with theta and rho held at their chosen
/// values; emits one plot-ready row per lambda.
pub fn lambda_sweep(
    train: &Dataset,
    test: &Dataset,
    template: &ModelSpec,
    lambdas: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<SweepRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let mut spec = template.clone();
            spec.lambda = lambda;
            let result = train_once(&spec, train, solver)?;
            let scores: Vec<f64> = test
                .samples
                .iter()
                .map(|s| predict_score(&result.params, &s.features, s.group, &spec))
                .collect::<Result<_>>()?;
            let labels: Vec<i8> = test.samples.iter().map(|s| s.label).collect();
            let groups: Vec<usize> = test.samples.iter().map(|s| s.group).collect();
            let report = accuracy_report(&scores, &labels, &groups, spec.k)?;
            Ok(SweepRow {
                lambda,
                acc: report.acc,
                deod: report.deod,
            })
        })
        .collect()
}

/// One row per grid point, CSV.
pub fn write_cv_csv<W: Write>(outcome: &CvOutcome, mut out: W) -> Result<()> {
    writeln!(out, "rho,lambda,theta,mean_acc,mean_fairness,folds_used,shortlisted")?;
    for (i, o) in outcome.per_point.iter().enumerate() {
        writeln!(
            out,
            "{:?},{:?},{:?},{:?},{:?},{},{}",
            o.point.rho,
            o.point.lambda,
            o.point.theta,
            o.mean_acc,
            o.mean_fairness,
            o.folds_used,
            outcome.shortlist.contains(&i) as u8
        )?;
    }
    Ok(())
}
