//! COMPAS (ProPublica two-year violent recidivism) raw reader.
//!
//! Applies the standard ProPublica filtering: screening-to-arrest window in
//! [-30, 30] days, a valid recidivism flag (`is_recid != -1`) and ordinary
//! charge degrees only (`c_charge_degree != 'O'`). Label is `two_year_recid`
//! mapped to +1 for recidivated. The whole file loads as a training split;
//! use [`crate::Dataset::with_holdout`] for a seeded test split.

use std::fs::File;
use std::path::Path;

use crate::data::{LoadOptions, RawColumn, RawTable, SensitiveSpec};
use crate::error::{Error, Result};

const CONTINUOUS: [&str; 5] = [
    "age",
    "priors_count",
    "juv_fel_count",
    "juv_misd_count",
    "juv_other_count",
];
const CATEGORICAL: [&str; 1] = ["c_charge_degree"];

pub(crate) fn read_raw(path: &Path, opts: &LoadOptions) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(File::open(path)?);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let sensitive_names: Vec<String> = match &opts.sensitive {
        SensitiveSpec::Gender => vec!["sex".into()],
        SensitiveSpec::Race => vec!["race".into()],
        SensitiveSpec::GenderRace => vec!["sex".into(), "race".into()],
        SensitiveSpec::Columns(names) => names.clone(),
    };
    for name in &sensitive_names {
        col(name).map_err(|_| Error::MissingSensitiveColumn(name.clone()))?;
    }

    let days = col("days_b_screening_arrest")?;
    let is_recid = col("is_recid")?;
    let charge = col("c_charge_degree")?;
    let label_col = col("two_year_recid")?;

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let days_val: f64 = match record.get(days).and_then(|v| v.parse().ok()) {
            Some(v) => v,
            None => continue,
        };
        if !(-30.0..=30.0).contains(&days_val) {
            continue;
        }
        if record.get(is_recid) == Some("-1") {
            continue;
        }
        if record.get(charge) == Some("O") {
            continue;
        }
        rows.push(record);
    }

    let get = |record: &csv::StringRecord, i: usize| -> String {
        record.get(i).unwrap_or("").to_string()
    };

    let mut columns = Vec::new();
    for name in CONTINUOUS {
        if sensitive_names.iter().any(|s| s == name) {
            continue;
        }
        let i = col(name)?;
        let values: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                get(row, i).parse::<f64>().map_err(|_| Error::MalformedRow {
                    row: r + 2,
                    reason: format!("non-numeric {name}"),
                })
            })
            .collect::<Result<_>>()?;
        columns.push(RawColumn::Continuous {
            name: name.to_string(),
            values,
        });
    }
    for name in CATEGORICAL {
        if sensitive_names.iter().any(|s| s == name) {
            continue;
        }
        let i = col(name)?;
        columns.push(RawColumn::Categorical {
            name: name.to_string(),
            values: rows.iter().map(|row| get(row, i)).collect(),
        });
    }

    let sensitive: Vec<Vec<String>> = sensitive_names
        .iter()
        .map(|name| {
            let i = col(name)?;
            Ok(rows.iter().map(|row| get(row, i)).collect())
        })
        .collect::<Result<_>>()?;
    let labels: Vec<i8> = rows
        .iter()
        .map(|row| if get(row, label_col) == "1" { 1 } else { -1 })
        .collect();

    let n_train = labels.len();
    Ok(RawTable {
        columns,
        sensitive_names,
        sensitive,
        labels,
        n_train,
    })
}
