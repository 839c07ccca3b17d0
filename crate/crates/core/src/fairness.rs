//! Fairness constraints (group-mean equalities under the linear-loss
//! relaxation) and fairness metrics (DEOp+/-, DEOd, group-balanced accuracy).
//!
//! Metrics use hard-loss rates; training constraints use the linear-loss
//! relaxation. The two are never conflated.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroupIndex};
use crate::error::{Error, Result};
use crate::model::{classify, ModelSpec};

/// Label class selector (which of the two label classes a measure targets).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Class {
    Neg,
    Pos,
}

impl Class {
    pub fn label(&self) -> i8 {
        match self {
            Class::Neg => -1,
            Class::Pos => 1,
        }
    }
}

impl std::fmt::Display for Class {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Class::Neg => write!(f, "-1"),
            Class::Pos => write!(f, "+1"),
        }
    }
}

/// Which empirical fairness constraint to enforce (the F flag plus class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FairnessTarget {
    None,
    EopPos,
    EopNeg,
    Eod,
}

impl FairnessTarget {
    pub fn classes(&self) -> &'static [Class] {
        match self {
            FairnessTarget::None => &[],
            FairnessTarget::EopPos => &[Class::Pos],
            FairnessTarget::EopNeg => &[Class::Neg],
            FairnessTarget::Eod => &[Class::Pos, Class::Neg],
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FairnessTarget::None => "none",
            FairnessTarget::EopPos => "EOp+",
            FairnessTarget::EopNeg => "EOp-",
            FairnessTarget::Eod => "EOd",
        }
    }
}

impl std::str::FromStr for FairnessTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FairnessTarget::None),
            "EOp+" | "eop+" => Ok(FairnessTarget::EopPos),
            "EOp-" | "eop-" => Ok(FairnessTarget::EopNeg),
            "EOd" | "eod" => Ok(FairnessTarget::Eod),
            other => Err(Error::InvalidConfig(format!("unknown fairness target `{other}`"))),
        }
    }
}

/// Per-group class-conditional mean embeddings u_t in the d'-dimensional base space.
#[derive(Debug, Clone)]
pub struct GroupMeanVectors {
    pub class: Class,
    /// u[t-1] has length d'.
    pub u: Vec<Vec<f64>>,
}

/// Empirical mean of phi'(x) over each group's class cell.
pub fn group_mean_vectors(
    ds: &Dataset,
    gi: &GroupIndex,
    class: Class,
    include_bias: bool,
) -> Result<GroupMeanVectors> {
    let dp = ds.d + usize::from(include_bias);
    let mut u = Vec::with_capacity(gi.k);
    for t in 1..=gi.k {
        let cell = match class {
            Class::Pos => &gi.pos[t - 1],
            Class::Neg => &gi.neg[t - 1],
        };
        if cell.is_empty() {
            return Err(Error::EmptyClassCell { group: t, class });
        }
        let mut mean = vec![0.0; dp];
        for &i in cell {
            for (m, x) in mean.iter_mut().zip(&ds.samples[i].features) {
                *m += x;
            }
            if include_bias {
                mean[dp - 1] += 1.0;
            }
        }
        let n = cell.len() as f64;
        for m in mean.iter_mut() {
            *m /= n;
        }
        u.push(mean);
    }
    Ok(GroupMeanVectors { class, u })
}

/// Whether constraints bind the shared model w0 or the group-specific w_s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintTarget {
    Shared,
    Specific,
}

/// Linear equality constraints c_j . W = 0 in the stacked parameter space.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub rows: Vec<Vec<f64>>,
    pub target: ConstraintTarget,
    pub classes: Vec<Class>,
}

impl ConstraintSet {
    pub fn empty() -> Self {
        ConstraintSet {
            rows: Vec::new(),
            target: ConstraintTarget::Shared,
            classes: Vec::new(),
        }
    }

    /// max_j |c_j . w|
    pub fn violation(&self, stacked: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| crate::vecmath::dot(r, stacked).abs())
            .fold(0.0, f64::max)
    }
}

/// Build the (k-1) constraints per class against reference group 1.
///
/// Shared target (D=0): (u_1 - u_t) in the w0 block. Specific target (D=1):
/// (u_1 - u_t) in the w0 block, u_1 in block 1 and -u_t in block t, encoding
/// (w0+v_1).u_1 = (w0+v_t).u_t. EOd emits both class families: 2(k-1) rows.
pub fn build_constraints(
    u_pos: Option<&GroupMeanVectors>,
    u_neg: Option<&GroupMeanVectors>,
    spec: &ModelSpec,
) -> Result<ConstraintSet> {
    let classes = spec.fairness_target.classes();
    if classes.is_empty() {
        return Err(Error::InvalidConfig(
            "build_constraints called with fairness_target = none".into(),
        ));
    }
    let target = if spec.group_specific_prediction {
        ConstraintTarget::Specific
    } else {
        ConstraintTarget::Shared
    };
    let dp = spec.d_prime();
    let mut rows = Vec::with_capacity(classes.len() * (spec.k - 1));
    for class in classes {
        let u = match class {
            Class::Pos => u_pos,
            Class::Neg => u_neg,
        }
        .ok_or_else(|| {
            Error::InvalidConfig(format!("missing group means for class {class}"))
        })?;
        if u.class != *class || u.u.len() != spec.k || u.u[0].len() != dp {
            return Err(Error::InvalidConfig("group means do not match spec".into()));
        }
        for t in 2..=spec.k {
            let mut row = vec![0.0; spec.stacked_len()];
            for i in 0..dp {
                row[i] = u.u[0][i] - u.u[t - 1][i];
            }
            if target == ConstraintTarget::Specific {
                for i in 0..dp {
                    row[dp + i] = u.u[0][i];
                    row[t * dp + i] = -u.u[t - 1][i];
                }
            }
            rows.push(row);
        }
    }
    Ok(ConstraintSet {
        rows,
        target,
        classes: classes.to_vec(),
    })
}

fn class_rates(
    scores: &[f64],
    labels: &[i8],
    groups: &[usize],
    k: usize,
    class: Class,
) -> Result<Vec<f64>> {
    debug_assert!(scores.len() == labels.len() && labels.len() == groups.len());
    let mut correct = vec![0usize; k];
    let mut total = vec![0usize; k];
    for ((&score, &label), &group) in scores.iter().zip(labels).zip(groups) {
        if label != class.label() {
            continue;
        }
        total[group - 1] += 1;
        if classify(score) == label {
            correct[group - 1] += 1;
        }
    }
    (0..k)
        .map(|t| {
            if total[t] == 0 {
                Err(Error::EmptyClassCell { group: t + 1, class })
            } else {
                Ok(correct[t] as f64 / total[t] as f64)
            }
        })
        .collect()
}

/// DEOp for one class: sum over groups of |r_t - mean(r)| where r_t is the
/// empirical correct rate P{y_hat = y | s=t, y = class}.
pub fn deop(scores: &[f64], labels: &[i8], groups: &[usize], k: usize, class: Class) -> Result<f64> {
    let rates = class_rates(scores, labels, groups, k, class)?;
    let mean = rates.iter().sum::<f64>() / k as f64;
    Ok(rates.iter().map(|r| (r - mean).abs()).sum())
}

/// DEOd = (DEOp+ + DEOp-) / 2.
pub fn deod(scores: &[f64], labels: &[i8], groups: &[usize], k: usize) -> Result<f64> {
    Ok((deop(scores, labels, groups, k, Class::Pos)?
        + deop(scores, labels, groups, k, Class::Neg)?)
        / 2.0)
}

/// Flat metric record for one evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairnessReport {
    /// P{y_hat = y | s=t, y=+1} per group.
    pub rate_pos: Vec<f64>,
    /// P{y_hat = y | s=t, y=-1} per group.
    pub rate_neg: Vec<f64>,
    pub per_group_accuracy: Vec<f64>,
    /// Unweighted mean of per-group accuracies.
    pub acc: f64,
    pub deop_pos: f64,
    pub deop_neg: f64,
    pub deod: f64,
}

/// Per-group hard-loss accuracies plus the DEO metrics.
pub fn accuracy_report(
    scores: &[f64],
    labels: &[i8],
    groups: &[usize],
    k: usize,
) -> Result<FairnessReport> {
    let mut correct = vec![0usize; k];
    let mut total = vec![0usize; k];
    for ((&score, &label), &group) in scores.iter().zip(labels).zip(groups) {
        if group < 1 || group > k {
            return Err(Error::GroupOutOfRange { group, k });
        }
        total[group - 1] += 1;
        if classify(score) == label {
            correct[group - 1] += 1;
        }
    }
    for t in 1..=k {
        if total[t - 1] == 0 {
            return Err(Error::EmptyGroup { group: t });
        }
    }
    let per_group_accuracy: Vec<f64> = (0..k)
        .map(|t| correct[t] as f64 / total[t] as f64)
        .collect();
    let acc = per_group_accuracy.iter().sum::<f64>() / k as f64;
    let rate_pos = class_rates(scores, labels, groups, k, Class::Pos)?;
    let rate_neg = class_rates(scores, labels, groups, k, Class::Neg)?;
    let deop_of = |rates: &[f64]| {
        let mean = rates.iter().sum::<f64>() / k as f64;
        rates.iter().map(|r| (r - mean).abs()).sum::<f64>()
    };
    let deop_pos = deop_of(&rate_pos);
    let deop_neg = deop_of(&rate_neg);
    Ok(FairnessReport {
        rate_pos,
        rate_neg,
        per_group_accuracy,
        acc,
        deop_pos,
        deop_neg,
        deod: (deop_pos + deop_neg) / 2.0,
    })
}
