//! Sensitive-group predictor g: x -> s, a class-weighted random forest, plus
//! its confusion-matrix and margin-band diagnostics.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{predict_score, ModelSpec, ParamVector};
use crate::vecmath::norm;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// None = grow until pure.
    pub max_depth: Option<usize>,
    /// None = ceil(sqrt(d)).
    pub features_per_split: Option<usize>,
    pub bootstrap_fraction: f64,
    /// Per-group sample weights indexed by group-1; None = inverse group
    /// frequency (the class-weighting that protects minority groups).
    pub group_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            features_per_split: None,
            bootstrap_fraction: 1.0,
            group_weights: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Leaf {
        group: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { group } => return *group,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Fitted forest mapping a feature vector to a group id in 1..=k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupPredictor {
    pub k: usize,
    pub d: usize,
    trees: Vec<Tree>,
}

impl GroupPredictor {
    /// Majority vote over trees; ties break to the smallest group id.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.k];
        for tree in &self.trees {
            votes[tree.predict(x) - 1] += 1;
        }
        argmax_smallest(&votes) + 1
    }

    pub fn predict_all(&self, features: &[Vec<f64>]) -> Vec<usize> {
        features.iter().map(|x| self.predict(x)).collect()
    }

    /// Self-contained text serialization (one JSON document).
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<GroupPredictor> {
        Ok(serde_json::from_reader(input)?)
    }
}

fn argmax_smallest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn weighted_majority(counts: &[f64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    groups: &'a [usize],
    weights: &'a [f64],
    k: usize,
    m_try: usize,
    max_depth: Option<usize>,
    nodes: Vec<Node>,
}

impl<'a> TreeBuilder<'a> {
    fn class_counts(&self, idx: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.k];
        for &i in idx {
            counts[self.groups[i] - 1] += self.weights[i];
        }
        counts
    }

    fn gini(counts: &[f64], total: f64) -> f64 {
        if total <= 0.0 {
            return 0.0;
        }
        1.0 - counts.iter().map(|&c| (c / total) * (c / total)).sum::<f64>()
    }

    fn build(&mut self, mut idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.class_counts(&idx);
        let total: f64 = counts.iter().sum();
        let leaf = |nodes: &mut Vec<Node>| {
            nodes.push(Node::Leaf {
                group: weighted_majority(&counts) + 1,
            });
            nodes.len() - 1
        };
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        if pure || idx.len() < 2 || self.max_depth.is_some_and(|m| depth >= m) {
            return leaf(&mut self.nodes);
        }

        let d = self.features[0].len();
        // sample m_try distinct candidate features
        let mut candidates: Vec<usize> = (0..d).collect();
        for i in 0..self.m_try.min(d) {
            let j = rng.gen_range(i..d);
            candidates.swap(i, j);
        }
        candidates.truncate(self.m_try.min(d));

        let parent_impurity = Self::gini(&counts, total) * total;
        let mut best: Option<(f64, usize, f64)> = None; // (score, feature, threshold)
        for &f in &candidates {
            idx.sort_by(|&a, &b| self.features[a][f].total_cmp(&self.features[b][f]));
            let mut left = vec![0.0; self.k];
            let mut left_total = 0.0;
            let mut right = counts.clone();
            let mut right_total = total;
            for w in 0..idx.len() - 1 {
                let i = idx[w];
                let wt = self.weights[i];
                left[self.groups[i] - 1] += wt;
                left_total += wt;
                right[self.groups[i] - 1] -= wt;
                right_total -= wt;
                let v = self.features[i][f];
                let v_next = self.features[idx[w + 1]][f];
                if v == v_next {
                    continue;
                }
                let score = Self::gini(&left, left_total) * left_total
                    + Self::gini(&right, right_total) * right_total;
                if best.is_none_or(|(b, _, _)| score < b) {
                    best = Some((score, f, (v + v_next) / 2.0));
                }
            }
        }

        let Some((score, feature, threshold)) = best else {
            return leaf(&mut self.nodes);
        };
        if score >= parent_impurity - 1e-12 {
            return leaf(&mut self.nodes);
        }

        let (li, ri): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.features[i][feature] <= threshold);
        if li.is_empty() || ri.is_empty() {
            return leaf(&mut self.nodes);
        }
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { group: 1 }); // placeholder
        let left = self.build(li, depth + 1, rng);
        let right = self.build(ri, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

/// Fit the class-weighted forest. Deterministic given `config.seed`; trees are
/// fitted in parallel with per-tree seeds derived from the master seed.
pub fn fit_group_predictor(
    features: &[Vec<f64>],
    groups: &[usize],
    config: &ForestConfig,
) -> Result<GroupPredictor> {
    if features.is_empty() || features.len() != groups.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: groups.len(),
        });
    }
    if config.n_trees < 1 {
        return Err(Error::InvalidConfig("n_trees must be >= 1".into()));
    }
    if !(config.bootstrap_fraction > 0.0) {
        return Err(Error::InvalidConfig("bootstrap_fraction must be > 0".into()));
    }
    let k = *groups.iter().max().unwrap();
    if groups.iter().any(|&g| g < 1) {
        return Err(Error::GroupOutOfRange { group: 0, k });
    }
    let mut group_n = vec![0usize; k];
    for &g in groups {
        group_n[g - 1] += 1;
    }
    if group_n.iter().filter(|&&n| n > 0).count() < 2 {
        return Err(Error::InvalidConfig(
            "group predictor needs at least two groups present".into(),
        ));
    }
    let weights: Vec<f64> = match &config.group_weights {
        Some(w) => {
            if w.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: w.len(),
                });
            }
            groups.iter().map(|&g| w[g - 1]).collect()
        }
        None => {
            let n = groups.len() as f64;
            groups
                .iter()
                .map(|&g| n / (k as f64 * group_n[g - 1] as f64))
                .collect()
        }
    };

    let d = features[0].len();
    if d == 0 || features.iter().any(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: 0 });
    }
    let m_try = config
        .features_per_split
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .max(1);
    let n_boot = ((features.len() as f64) * config.bootstrap_fraction).round() as usize;
    let n_boot = n_boot.max(1);

    let trees: Vec<Tree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                config
                    .seed
                    .wrapping_add((t as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            );
            let idx: Vec<usize> = (0..n_boot)
                .map(|_| rng.gen_range(0..features.len()))
                .collect();
            let mut builder = TreeBuilder {
                features,
                groups,
                weights: &weights,
                k,
                m_try,
                max_depth: config.max_depth,
                nodes: Vec::new(),
            };
            builder.build(idx, 0, &mut rng);
            Tree {
                nodes: builder.nodes,
            }
        })
        .collect();

    Ok(GroupPredictor { k, d, trees })
}

/// k x k matrix of percentages; predicted groups in rows, true groups in
/// columns. Entries sum to 100.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    /// percent[p][t] = % of samples predicted p+1 with true group t+1.
    pub percent: Vec<Vec<f64>>,
    pub n: usize,
}

impl ConfusionMatrix {
    /// Diagonal sum, in percent.
    pub fn overall_accuracy(&self) -> f64 {
        (0..self.k).map(|i| self.percent[i][i]).sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "predicted\\true")?;
        for t in 1..=self.k {
            write!(out, ",{t}")?;
        }
        writeln!(out)?;
        for p in 1..=self.k {
            write!(out, "{p}")?;
            for t in 1..=self.k {
                write!(out, ",{:?}", self.percent[p - 1][t - 1])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn confusion_matrix(
    predictor: &GroupPredictor,
    features: &[Vec<f64>],
    groups: &[usize],
) -> Result<ConfusionMatrix> {
    if features.is_empty() || features.len() != groups.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: groups.len(),
        });
    }
    let k = predictor.k;
    let mut counts = vec![vec![0usize; k]; k];
    for (x, &t) in features.iter().zip(groups) {
        if t < 1 || t > k {
            return Err(Error::GroupOutOfRange { group: t, k });
        }
        counts[predictor.predict(x) - 1][t - 1] += 1;
    }
    let n = features.len();
    let percent = counts
        .iter()
        .map(|row| row.iter().map(|&c| 100.0 * c as f64 / n as f64).collect())
        .collect();
    Ok(ConfusionMatrix { k, percent, n })
}

/// One row of the margin-band table: within geometric margin <= `band` of the
/// separator, the group predictor's accuracy (percent), or None if no sample
/// falls in the band.
#[derive(Debug, Clone, Serialize)]
pub struct BandRow {
    pub band: f64,
    pub count: usize,
    pub accuracy_percent: Option<f64>,
}

/// Restrict to samples with |f(x, s_hat)| / ||active w|| <= band and report
/// g's accuracy against the true groups. The active weight vector is
/// w0 + v_{s_hat} under group-specific prediction, w0 otherwise.
pub fn margin_band_accuracy(
    predictor: &GroupPredictor,
    params: &ParamVector,
    spec: &ModelSpec,
    ds: &Dataset,
    bands: &[f64],
) -> Result<Vec<BandRow>> {
    if bands.is_empty() {
        return Err(Error::InvalidConfig("empty band list".into()));
    }
    let mut margins = Vec::with_capacity(ds.samples.len());
    let mut hits = Vec::with_capacity(ds.samples.len());
    for smp in &ds.samples {
        let s_hat = predictor.predict(ds.non_sensitive(&smp.features));
        if s_hat > spec.k {
            return Err(Error::GroupOutOfRange {
                group: s_hat,
                k: spec.k,
            });
        }
        let score = predict_score(params, &smp.features, s_hat, spec)?;
        let w_norm = if spec.group_specific_prediction {
            norm(&params.task_weight(s_hat))
        } else {
            norm(params.w0())
        };
        let margin = if w_norm > 0.0 {
            score.abs() / w_norm
        } else {
            f64::INFINITY
        };
        margins.push(margin);
        hits.push(s_hat == smp.group);
    }
    Ok(bands
        .iter()
        .map(|&band| {
            let mut count = 0usize;
            let mut correct = 0usize;
            for (&m, &hit) in margins.iter().zip(&hits) {
                if m <= band {
                    count += 1;
                    correct += hit as usize;
                }
            }
            BandRow {
                band,
                count,
                accuracy_percent: (count > 0).then(|| 100.0 * correct as f64 / count as f64),
            }
        })
        .collect())
}

pub fn write_band_csv<W: Write>(rows: &[BandRow], mut out: W) -> Result<()> {
    writeln!(out, "band,count,accuracy_percent")?;
    for r in rows {
        match r.accuracy_percent {
            Some(a) => writeln!(out, "{:?},{},{:?}", r.band, r.count, a)?,
            None => writeln!(out, "{:?},{},", r.band, r.count)?,
        }
    }
    Ok(())
}
