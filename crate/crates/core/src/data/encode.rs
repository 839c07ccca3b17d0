//! Shared encoding pipeline: group enumeration, one-hot encoding and
//! train-statistics z-scoring of a parsed raw table.

use std::collections::BTreeMap;

use crate::data::{Dataset, LoadOptions, Sample};
use crate::error::{Error, Result};

#[derive(Debug)]
pub(crate) enum RawColumn {
    Continuous { name: String, values: Vec<f64> },
    Categorical { name: String, values: Vec<String> },
}

/// Parsed rows before encoding. `sensitive[j]` is the j-th declared sensitive
/// column; sensitive columns never appear in `columns`.
#[derive(Debug)]
pub(crate) struct RawTable {
    pub columns: Vec<RawColumn>,
    pub sensitive_names: Vec<String>,
    pub sensitive: Vec<Vec<String>>,
    pub labels: Vec<i8>,
    pub n_train: usize,
}

impl RawTable {
    fn n(&self) -> usize {
        self.labels.len()
    }
}

pub(crate) fn encode(raw: RawTable, opts: &LoadOptions) -> Result<Dataset> {
    let n = raw.n();
    if n == 0 {
        return Err(Error::Other("no rows survived filtering".into()));
    }

    // Group ids: enumerate observed sensitive-value combinations, ordered by
    // descending size over the full table, ties broken lexicographically.
    let combo: Vec<String> = (0..n)
        .map(|i| {
            raw.sensitive
                .iter()
                .map(|col| col[i].as_str())
                .collect::<Vec<_>>()
                .join("&")
        })
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &combo {
        *counts.entry(c.as_str()).or_insert(0) += 1;
    }
    let mut order: Vec<(&str, usize)> = counts.iter().map(|(&c, &n)| (c, n)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let group_names: Vec<String> = order.iter().map(|(c, _)| c.to_string()).collect();
    let group_id: BTreeMap<&str, usize> = order
        .iter()
        .enumerate()
        .map(|(i, (c, _))| (*c, i + 1))
        .collect();
    let k = group_names.len();
    let groups: Vec<usize> = combo.iter().map(|c| group_id[c.as_str()]).collect();

    // Encode non-sensitive feature columns.
    let n_train = raw.n_train;
    let mut feature_names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for col in &raw.columns {
        match col {
            RawColumn::Continuous { name, values } => {
                columns.push(zscore(values, n_train));
                feature_names.push(name.clone());
            }
            RawColumn::Categorical { name, values } => {
                one_hot(name, values, n_train, &mut columns, &mut feature_names);
            }
        }
    }
    let sensitive_block = if opts.include_sensitive {
        let start = columns.len();
        for (j, name) in raw.sensitive_names.iter().enumerate() {
            one_hot(name, &raw.sensitive[j], n_train, &mut columns, &mut feature_names);
        }
        Some(start)
    } else {
        None
    };

    let d = columns.len();
    let samples: Vec<Sample> = (0..n)
        .map(|i| Sample {
            features: columns.iter().map(|c| c[i]).collect(),
            group: groups[i],
            label: raw.labels[i],
        })
        .collect();

    Ok(Dataset {
        samples,
        k,
        d,
        feature_names,
        group_names,
        sensitive_spec: opts.sensitive.label(),
        includes_sensitive: opts.include_sensitive,
        sensitive_block,
        n_train,
    })
}

/// z-score with training-split population statistics; a constant column maps to zeros.
fn zscore(values: &[f64], n_train: usize) -> Vec<f64> {
    let n = n_train.max(1) as f64;
    let mean = values[..n_train.max(1).min(values.len())].iter().sum::<f64>() / n;
    let var = values[..n_train.max(1).min(values.len())]
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    let denom = if std > 0.0 { std } else { 1.0 };
    values.iter().map(|v| (v - mean) / denom).collect()
}

/// One indicator column per category observed in the training split, in
/// sorted order; unseen test categories encode as all zeros.
fn one_hot(
    name: &str,
    values: &[String],
    n_train: usize,
    columns: &mut Vec<Vec<f64>>,
    feature_names: &mut Vec<String>,
) {
    let mut cats: Vec<&str> = values[..n_train.min(values.len())]
        .iter()
        .map(|v| v.as_str())
        .collect();
    cats.sort_unstable();
    cats.dedup();
    for cat in cats {
        columns.push(
            values
                .iter()
                .map(|v| if v == cat { 1.0 } else { 0.0 })
                .collect(),
        );
        feature_names.push(format!("{name}={cat}"));
    }
}
