//! Adult (UCI census income) raw reader.
//!
//! Accepts either the directory holding `adult.data` / `adult.test` or a
//! single raw file. Rows containing the `?` missing marker are dropped; when
//! both files are present the cleaned rows are concatenated (train file first)
//! and re-split at index 32561, matching the reported 32561/12661 split of the
//! cleaned 45222 instances.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::data::{LoadOptions, RawColumn, RawTable, SensitiveSpec};
use crate::error::{Error, Result};

const RESPLIT_AT: usize = 32561;

const COLUMNS: [(&str, bool); 14] = [
    ("age", true),
    ("workclass", false),
    ("fnlwgt", true),
    ("education", false),
    ("education-num", true),
    ("marital-status", false),
    ("occupation", false),
    ("relationship", false),
    ("race", false),
    ("sex", false),
    ("capital-gain", true),
    ("capital-loss", true),
    ("hours-per-week", true),
    ("native-country", false),
];

const RACE_COL: usize = 8;
const SEX_COL: usize = 9;
const FNLWGT_COL: usize = 2;

pub(crate) fn read_raw(path: &Path, opts: &LoadOptions) -> Result<RawTable> {
    let (train_path, test_path): (PathBuf, Option<PathBuf>) = if path.is_dir() {
        let train = path.join("adult.data");
        let test = path.join("adult.test");
        (train, test.exists().then_some(test))
    } else {
        (path.to_path_buf(), None)
    };

    let mut rows = read_file(&train_path)?;
    let train_file_rows = rows.len();
    if let Some(test_path) = &test_path {
        rows.extend(read_file(test_path)?);
    }
    let n = rows.len();
    let n_train = if test_path.is_some() {
        RESPLIT_AT.min(n)
    } else {
        train_file_rows
    };

    let sensitive_cols: Vec<usize> = match &opts.sensitive {
        SensitiveSpec::Gender => vec![SEX_COL],
        SensitiveSpec::Race => vec![RACE_COL],
        SensitiveSpec::GenderRace => vec![SEX_COL, RACE_COL],
        SensitiveSpec::Columns(names) => names
            .iter()
            .map(|n| {
                COLUMNS
                    .iter()
                    .position(|(c, _)| c == n)
                    .ok_or_else(|| Error::MissingSensitiveColumn(n.clone()))
            })
            .collect::<Result<_>>()?,
    };

    let mut columns = Vec::new();
    for (i, (name, continuous)) in COLUMNS.iter().enumerate() {
        if sensitive_cols.contains(&i) {
            continue;
        }
        if i == FNLWGT_COL && opts.exclude_weight_column {
            continue;
        }
        if *continuous {
            let values: Vec<f64> = rows
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    row[i].parse::<f64>().map_err(|_| Error::MalformedRow {
                        row: r + 1,
                        reason: format!("non-numeric {name}: {}", row[i]),
                    })
                })
                .collect::<Result<_>>()?;
            columns.push(RawColumn::Continuous {
                name: name.to_string(),
                values,
            });
        } else {
            columns.push(RawColumn::Categorical {
                name: name.to_string(),
                values: rows.iter().map(|row| row[i].clone()).collect(),
            });
        }
    }

    let sensitive_names: Vec<String> = sensitive_cols
        .iter()
        .map(|&i| COLUMNS[i].0.to_string())
        .collect();
    let sensitive: Vec<Vec<String>> = sensitive_cols
        .iter()
        .map(|&i| rows.iter().map(|row| row[i].clone()).collect())
        .collect();
    let labels: Vec<i8> = rows
        .iter()
        .map(|row| if row[14].starts_with(">50K") { 1 } else { -1 })
        .collect();

    Ok(RawTable {
        columns,
        sensitive_names,
        sensitive,
        labels,
        n_train,
    })
}

fn read_file(path: &Path) -> Result<Vec<Vec<String>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        // adult.test opens with a "|1x3 Cross validator" banner line
        if line.is_empty() || line.starts_with('|') {
            continue;
        }
        let fields: Vec<String> = line
            .split(',')
            .map(|f| f.trim().trim_end_matches('.').to_string())
            .collect();
        if fields.len() != 15 {
            continue;
        }
        if fields.iter().any(|f| f == "?") {
            continue;
        }
        rows.push(fields);
    }
    Ok(rows)
}
