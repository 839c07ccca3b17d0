//! Generic CSV reader: header row, a declared label column and declared
//! sensitive column(s). Columns whose every value parses as a number are
//! treated as continuous, the rest as categorical. Rows with empty fields are
//! dropped as missing.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use crate::data::{LoadOptions, RawColumn, RawTable, SensitiveSpec};
use crate::error::{Error, Result};

pub(crate) fn read_raw(path: &Path, opts: &LoadOptions) -> Result<RawTable> {
    let mut reader = csv::Reader::from_reader(File::open(path)?);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let sensitive_names: Vec<String> = match &opts.sensitive {
        SensitiveSpec::Columns(names) => names.clone(),
        other => {
            return Err(Error::InvalidConfig(format!(
                "generic-csv needs an explicit sensitive column list, got {}",
                other.label()
            )))
        }
    };
    let label_name = opts.label_column.clone().unwrap_or_else(|| "label".into());

    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label_idx = col(&label_name).map_err(|_| Error::MissingColumn(label_name.clone()))?;
    let sensitive_idx: Vec<usize> = sensitive_names
        .iter()
        .map(|n| col(n).map_err(|_| Error::MissingSensitiveColumn(n.clone())))
        .collect::<Result<_>>()?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let fields: Vec<String> = record.iter().map(|f| f.trim().to_string()).collect();
        if fields.len() != headers.len() || fields.iter().any(|f| f.is_empty() || f == "?") {
            continue;
        }
        rows.push(fields);
    }

    // Label mapping: {-1,+1} and {0,1} pass through; any other two distinct
    // values map in sorted order (first -> -1).
    let distinct: BTreeSet<&str> = rows.iter().map(|r| r[label_idx].as_str()).collect();
    if distinct.len() != 2 {
        return Err(Error::NonBinaryLabel {
            column: label_name,
            found: distinct.len(),
        });
    }
    let vals: Vec<&str> = distinct.into_iter().collect();
    let positive: &str = if vals.contains(&"1") && (vals.contains(&"-1") || vals.contains(&"0")) {
        "1"
    } else {
        vals[1]
    };
    let positive = positive.to_string();
    let labels: Vec<i8> = rows
        .iter()
        .map(|r| if r[label_idx] == positive { 1 } else { -1 })
        .collect();

    let mut columns = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        if i == label_idx || sensitive_idx.contains(&i) {
            continue;
        }
        let numeric: Option<Vec<f64>> = rows
            .iter()
            .map(|r| r[i].parse::<f64>().ok())
            .collect();
        match numeric {
            Some(values) => columns.push(RawColumn::Continuous {
                name: name.clone(),
                values,
            }),
            None => columns.push(RawColumn::Categorical {
                name: name.clone(),
                values: rows.iter().map(|r| r[i].clone()).collect(),
            }),
        }
    }

    let sensitive: Vec<Vec<String>> = sensitive_idx
        .iter()
        .map(|&i| rows.iter().map(|r| r[i].clone()).collect())
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
