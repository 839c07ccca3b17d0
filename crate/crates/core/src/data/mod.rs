//! Dataset ingestion, preprocessing and group indexing.
//!
//! Raw tables (Adult, COMPAS or a generic CSV) are turned into an immutable
//! [`Dataset`]: categoricals one-hot encoded, continuous columns z-scored with
//! training-split statistics, labels mapped to {-1,+1} and sensitive-value
//! combinations enumerated into group ids 1..=k ordered by descending group
//! size (ties lexicographic).

mod adult;
mod compas;
mod encode;
mod generic;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub(crate) use encode::{encode, RawColumn, RawTable};

/// One observation: preprocessed features, sensitive group in 1..=k, label in {-1,+1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub group: usize,
    pub label: i8,
}

/// Immutable preprocessed table. `samples[..n_train]` is the training split,
/// the remainder the test split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub k: usize,
    pub d: usize,
    pub feature_names: Vec<String>,
    pub group_names: Vec<String>,
    pub sensitive_spec: String,
    pub includes_sensitive: bool,
    /// First column index of the appended sensitive one-hot block, when present.
    pub sensitive_block: Option<usize>,
    pub n_train: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaId {
    Adult,
    Compas,
    GenericCsv,
}

impl std::str::FromStr for SchemaId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adult" => Ok(SchemaId::Adult),
            "compas" => Ok(SchemaId::Compas),
            "generic-csv" | "generic" => Ok(SchemaId::GenericCsv),
            other => Err(Error::UnknownSchema(other.to_string())),
        }
    }
}

/// Which raw columns define the sensitive groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SensitiveSpec {
    /// Gender column of the named schema (G).
    Gender,
    /// Race column of the named schema (R).
    Race,
    /// Cross product of gender and race (G+R).
    GenderRace,
    /// Explicit column list (generic CSV).
    Columns(Vec<String>),
}

impl SensitiveSpec {
    pub fn label(&self) -> String {
        match self {
            SensitiveSpec::Gender => "G".into(),
            SensitiveSpec::Race => "R".into(),
            SensitiveSpec::GenderRace => "G+R".into(),
            SensitiveSpec::Columns(cols) => cols.join("+"),
        }
    }
}

impl std::str::FromStr for SensitiveSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "G" => Ok(SensitiveSpec::Gender),
            "R" => Ok(SensitiveSpec::Race),
            "G+R" => Ok(SensitiveSpec::GenderRace),
            other => Ok(SensitiveSpec::Columns(
                other.split(',').map(|c| c.trim().to_string()).collect(),
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub schema: SchemaId,
    pub sensitive: SensitiveSpec,
    pub include_sensitive: bool,
    /// Drop the Adult sampling-weight column (fnlwgt). Default keeps it.
    pub exclude_weight_column: bool,
    /// Label column for the generic schema.
    pub label_column: Option<String>,
}

impl LoadOptions {
    pub fn new(schema: SchemaId, sensitive: SensitiveSpec) -> Self {
        LoadOptions {
            schema,
            sensitive,
            include_sensitive: false,
            exclude_weight_column: false,
            label_column: None,
        }
    }
}

/// Load and preprocess a raw dataset under the named schema.
///
/// For the adult schema `path` may be the directory holding `adult.data` and
/// `adult.test` (or a single raw file); the two files are cleaned of
/// missing-value rows, concatenated and re-split at index 32561 so the split
/// sizes are 32561/12661. COMPAS and generic CSVs load as a single training
/// split.
pub fn load_dataset(path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let raw = match opts.schema {
        SchemaId::Adult => adult::read_raw(path, opts)?,
        SchemaId::Compas => compas::read_raw(path, opts)?,
        SchemaId::GenericCsv => generic::read_raw(path, opts)?,
    };
    let ds = encode(raw, opts)?;
    ds.validate()?;
    Ok(ds)
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![0usize; self.k + 1];
        for s in &self.samples {
            if s.label != -1 && s.label != 1 {
                return Err(Error::Other(format!("label {} not in {{-1,+1}}", s.label)));
            }
            if s.group < 1 || s.group > self.k {
                return Err(Error::GroupOutOfRange {
                    group: s.group,
                    k: self.k,
                });
            }
            if s.features.len() != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    got: s.features.len(),
                });
            }
            if s.features.iter().any(|f| !f.is_finite()) {
                return Err(Error::Other("non-finite feature value".into()));
            }
            seen[s.group] += 1;
        }
        for g in 1..=self.k {
            if seen[g] == 0 {
                return Err(Error::EmptyGroup { group: g });
            }
        }
        Ok(())
    }

    /// Clone out the train and test splits as standalone datasets.
    pub fn split(&self) -> (Dataset, Option<Dataset>) {
        let train = Dataset {
            samples: self.samples[..self.n_train].to_vec(),
            n_train: self.n_train,
            ..self.header_clone()
        };
        let test = if self.n_train < self.samples.len() {
            Some(Dataset {
                samples: self.samples[self.n_train..].to_vec(),
                n_train: self.samples.len() - self.n_train,
                ..self.header_clone()
            })
        } else {
            None
        };
        (train, test)
    }

    /// Seeded stratified holdout split for datasets shipped without one (COMPAS).
    pub fn with_holdout(&self, test_fraction: f64, seed: u64) -> Result<Dataset> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::InvalidConfig(format!(
                "test fraction {test_fraction} not in [0,1)"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_0001);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for g in 1..=self.k {
            for label in [-1i8, 1] {
                let mut cell: Vec<usize> = (0..self.samples.len())
                    .filter(|&i| self.samples[i].group == g && self.samples[i].label == label)
                    .collect();
                cell.shuffle(&mut rng);
                let n_test = (cell.len() as f64 * test_fraction).round() as usize;
                test.extend_from_slice(&cell[..n_test]);
                train.extend_from_slice(&cell[n_test..]);
            }
        }
        train.sort_unstable();
        test.sort_unstable();
        let mut samples: Vec<Sample> = train.iter().map(|&i| self.samples[i].clone()).collect();
        let n_train = samples.len();
        samples.extend(test.iter().map(|&i| self.samples[i].clone()));
        Ok(Dataset {
            samples,
            n_train,
            ..self.header_clone()
        })
    }

    fn header_clone(&self) -> Dataset {
        Dataset {
            samples: Vec::new(),
            k: self.k,
            d: self.d,
            feature_names: self.feature_names.clone(),
            group_names: self.group_names.clone(),
            sensitive_spec: self.sensitive_spec.clone(),
            includes_sensitive: self.includes_sensitive,
            sensitive_block: self.sensitive_block,
            n_train: 0,
        }
    }

    /// Non-sensitive portion of a feature vector (everything before the
    /// appended sensitive one-hot block).
    pub fn non_sensitive<'a>(&self, features: &'a [f64]) -> &'a [f64] {
        match self.sensitive_block {
            Some(b) => &features[..b],
            None => features,
        }
    }

    /// Fraction of samples per group, indexed by group-1.
    pub fn group_proportions(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.k];
        for s in &self.samples {
            counts[s.group - 1] += 1;
        }
        let n = self.samples.len() as f64;
        counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Per-group index partition with positive/negative sub-partitions.
#[derive(Debug, Clone)]
pub struct GroupIndex {
    pub k: usize,
    /// members[t-1] = indices of D_t
    pub members: Vec<Vec<usize>>,
    pub pos: Vec<Vec<usize>>,
    pub neg: Vec<Vec<usize>>,
}

impl GroupIndex {
    pub fn n_t(&self, t: usize) -> usize {
        self.members[t - 1].len()
    }
    pub fn n_pos(&self, t: usize) -> usize {
        self.pos[t - 1].len()
    }
    pub fn n_neg(&self, t: usize) -> usize {
        self.neg[t - 1].len()
    }
}

/// Exact index partition of a dataset by group and by (group, label).
pub fn group_partition(ds: &Dataset) -> GroupIndex {
    let k = ds.k;
    let mut members = vec![Vec::new(); k];
    let mut pos = vec![Vec::new(); k];
    let mut neg = vec![Vec::new(); k];
    for (i, s) in ds.samples.iter().enumerate() {
        members[s.group - 1].push(i);
        if s.label > 0 {
            pos[s.group - 1].push(i);
        } else {
            neg[s.group - 1].push(i);
        }
    }
    GroupIndex {
        k,
        members,
        pos,
        neg,
    }
}

/// (train indices, validation indices) per fold.
pub type Fold = (Vec<usize>, Vec<usize>);

/// Deterministic stratified k-fold split: every (group x label) cell is
/// shuffled with the seeded generator and dealt round-robin, so each fold's
/// cell count differs from proportionality by less than one.
pub fn stratified_folds(ds: &Dataset, n_folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if n_folds < 2 {
        return Err(Error::InvalidConfig(format!(
            "n_folds = {n_folds}, need at least 2"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut val: Vec<Vec<usize>> = vec![Vec::new(); n_folds];
    // persistent cursor: dealing continues where the previous cell stopped,
    // keeping overall fold sizes balanced even when cells are small
    let mut cursor = 0usize;
    for g in 1..=ds.k {
        for label in [-1i8, 1] {
            let mut cell: Vec<usize> = (0..ds.samples.len())
                .filter(|&i| ds.samples[i].group == g && ds.samples[i].label == label)
                .collect();
            // cells smaller than n_folds are allowed: round-robin dealing
            // keeps every fold within one sample of proportionality
            if cell.is_empty() {
                return Err(Error::CellTooSmall {
                    group: g,
                    label,
                    count: 0,
                    folds: n_folds,
                });
            }
            cell.shuffle(&mut rng);
            for idx in cell {
                val[cursor % n_folds].push(idx);
                cursor += 1;
            }
        }
    }
    let n = ds.samples.len();
    let mut folds = Vec::with_capacity(n_folds);
    for v in val.iter_mut() {
        v.sort_unstable();
        let mut in_val = vec![false; n];
        for &i in v.iter() {
            in_val[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !in_val[i]).collect();
        folds.push((train, v.clone()));
    }
    Ok(folds)
}

/// Write the normalized internal snapshot: header `f0..f{d-1},group,label`.
pub fn write_snapshot<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let mut header: Vec<String> = (0..ds.d).map(|i| format!("f{i}")).collect();
    header.push("group".into());
    header.push("label".into());
    writeln!(out, "{}", header.join(","))?;
    for s in &ds.samples {
        let mut fields: Vec<String> = s.features.iter().map(|f| format!("{f:?}")).collect();
        fields.push(s.group.to_string());
        fields.push(s.label.to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Reload an internal snapshot written by [`write_snapshot`].
pub fn read_snapshot<R: std::io::Read>(input: R) -> Result<Dataset> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Other("empty snapshot".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[cols.len() - 2] != "group" || cols[cols.len() - 1] != "label" {
        return Err(Error::Other("snapshot header mismatch".into()));
    }
    let d = cols.len() - 2;
    let mut samples = Vec::new();
    let mut k = 0usize;
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(Error::MalformedRow {
                row: row + 2,
                reason: format!("expected {} fields, got {}", d + 2, fields.len()),
            });
        }
        let features: Vec<f64> = fields[..d]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MalformedRow {
                row: row + 2,
                reason: e.to_string(),
            })?;
        let group: usize = fields[d].parse().map_err(|_| Error::MalformedRow {
            row: row + 2,
            reason: "bad group id".into(),
        })?;
        let label: i8 = fields[d + 1].parse().map_err(|_| Error::MalformedRow {
            row: row + 2,
            reason: "bad label".into(),
        })?;
        k = k.max(group);
        samples.push(Sample {
            features,
            group,
            label,
        });
    }
    let n_train = samples.len();
    let ds = Dataset {
        samples,
        k,
        d,
        feature_names: (0..d).map(|i| format!("f{i}")).collect(),
        group_names: (1..=k).map(|g| format!("g{g}")).collect(),
        sensitive_spec: String::new(),
        includes_sensitive: false,
        sensitive_block: None,
        n_train,
    };
    ds.validate()?;
    Ok(ds)
}
