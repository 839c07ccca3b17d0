//! Linear model parameterization for STL, ITL and MTL via stacked feature
//! maps, plus objective evaluation.
//!
//! Parameters live in a single stacked vector (w0 | v_1 | ... | v_k) of block
//! size d' = d + 1 (a constant feature is appended per block unless
//! `include_bias` is off). Task weights w_s = w0 + v_s are derived, never
//! stored.

use std::io::{BufRead, BufReader, Write};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroupIndex};
use crate::error::{Error, Result};
use crate::fairness::FairnessTarget;
use crate::vecmath::{dot, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Stl,
    /// STL with a regularized per-group threshold: phi(x,s) = (phi(x), e_s).
    StlGroupBias,
    Itl,
    Mtl,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Stl => "STL",
            Method::StlGroupBias => "STL+B",
            Method::Itl => "ITL",
            Method::Mtl => "MTL",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "STL" => Ok(Method::Stl),
            "STL+B" | "STL-GROUP-BIAS" => Ok(Method::StlGroupBias),
            "ITL" => Ok(Method::Itl),
            "MTL" => Ok(Method::Mtl),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// Learning method, hyperparameters and experiment flags for one model.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub method: Method,
    pub rho: f64,
    /// MTL only: couples task weights to the shared weight.
    pub lambda: f64,
    /// MTL only: weight of the shared-model loss term.
    pub theta: f64,
    /// D flag: predict with w0 + v_s (true) or w0 alone (false).
    pub group_specific_prediction: bool,
    pub fairness_target: FairnessTarget,
    pub k: usize,
    pub d: usize,
    /// Append a constant feature per block (regularized bias).
    pub include_bias: bool,
    /// Penalize ||w_s||^2 literally instead of the common-mean ||v_s||^2.
    pub literal_regularizer: bool,
}

impl ModelSpec {
    pub fn new(method: Method, k: usize, d: usize) -> Self {
        ModelSpec {
            method,
            rho: 1.0,
            lambda: 0.5,
            theta: 0.5,
            group_specific_prediction: !matches!(method, Method::Stl),
            fairness_target: FairnessTarget::None,
            k,
            d,
            include_bias: true,
            literal_regularizer: false,
        }
    }

    pub fn d_prime(&self) -> usize {
        self.d + usize::from(self.include_bias)
    }

    pub fn stacked_len(&self) -> usize {
        (self.k + 1) * self.d_prime()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.lambda) || !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("lambda/theta must be in [0,1]: {} {}", self.lambda, self.theta));
        }
        if self.rho < 0.0 || !self.rho.is_finite() {
            return bad(format!("rho must be finite and >= 0: {}", self.rho));
        }
        match self.method {
            Method::Stl if self.group_specific_prediction => {
                bad("STL produces a shared model only (D=0)".into())
            }
            Method::Itl if !self.group_specific_prediction => {
                bad("ITL produces group-specific models only (D=1)".into())
            }
            Method::StlGroupBias if !self.include_bias => {
                bad("STL+B needs the constant feature".into())
            }
            _ if self.k == 0 || self.d == 0 => bad("k and d must be positive".into()),
            _ => Ok(()),
        }
    }
}

/// Stacked parameter vector (w0 | v_1 | ... | v_k), block size d'.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    stacked: Vec<f64>,
    k: usize,
    d_prime: usize,
}

impl ParamVector {
    pub fn zeros(spec: &ModelSpec) -> Self {
        ParamVector {
            stacked: vec![0.0; spec.stacked_len()],
            k: spec.k,
            d_prime: spec.d_prime(),
        }
    }

    pub fn from_stacked(stacked: Vec<f64>, k: usize, d_prime: usize) -> Result<Self> {
        if stacked.len() != (k + 1) * d_prime {
            return Err(Error::DimensionMismatch {
                expected: (k + 1) * d_prime,
                got: stacked.len(),
            });
        }
        Ok(ParamVector { stacked, k, d_prime })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d_prime(&self) -> usize {
        self.d_prime
    }

    pub fn stacked(&self) -> &[f64] {
        &self.stacked
    }

    pub fn stacked_mut(&mut self) -> &mut [f64] {
        &mut self.stacked
    }

    pub fn w0(&self) -> &[f64] {
        &self.stacked[..self.d_prime]
    }

    /// Task offset block v_s, s in 1..=k.
    pub fn v(&self, s: usize) -> &[f64] {
        &self.stacked[s * self.d_prime..(s + 1) * self.d_prime]
    }

    /// Derived task weight w_s = w0 + v_s.
    pub fn task_weight(&self, s: usize) -> Vec<f64> {
        self.w0()
            .iter()
            .zip(self.v(s))
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn matches(&self, spec: &ModelSpec) -> Result<()> {
        if self.k != spec.k || self.d_prime != spec.d_prime() {
            return Err(Error::LayoutMismatch {
                k: spec.k,
                dp: spec.d_prime(),
                got_k: self.k,
                got_dp: self.d_prime,
            });
        }
        Ok(())
    }

    /// Flat text format: a JSON header line with (k, d', method), then one
    /// `block_id index value` line per entry.
    pub fn write_text<W: Write>(&self, method: Method, mut out: W) -> Result<()> {
        writeln!(
            out,
            "{}",
            serde_json::json!({"k": self.k, "d_prime": self.d_prime, "method": method.as_str()})
        )?;
        for b in 0..=self.k {
            for i in 0..self.d_prime {
                writeln!(out, "{b} {i} {:?}", self.stacked[b * self.d_prime + i])?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: std::io::Read>(input: R) -> Result<(Self, Method)> {
        let reader = BufReader::new(input);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Other("empty parameter file".into()))??;
        let header: serde_json::Value = serde_json::from_str(&header)?;
        let k = header["k"].as_u64().unwrap_or(0) as usize;
        let d_prime = header["d_prime"].as_u64().unwrap_or(0) as usize;
        let method: Method = header["method"]
            .as_str()
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Other("bad method in parameter header".into()))?;
        let mut stacked = vec![0.0; (k + 1) * d_prime];
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (b, i, v) = (
                it.next().and_then(|t| t.parse::<usize>().ok()),
                it.next().and_then(|t| t.parse::<usize>().ok()),
                it.next().and_then(|t| t.parse::<f64>().ok()),
            );
            match (b, i, v) {
                (Some(b), Some(i), Some(v)) if b <= k && i < d_prime => {
                    stacked[b * d_prime + i] = v;
                }
                _ => return Err(Error::Other(format!("bad parameter line: {line}"))),
            }
        }
        Ok((ParamVector { stacked, k, d_prime }, method))
    }
}

/// Dot product of a d'-block with phi'(x) = (x, 1) without materializing phi'.
pub(crate) fn dot_phi(block: &[f64], x: &[f64], include_bias: bool) -> f64 {
    let d = x.len();
    let mut acc = dot(&block[..d], x);
    if include_bias {
        acc += block[d];
    }
    acc
}

/// Stacked embedding phi(x, s) for the spec's method.
pub fn embed(x: &[f64], s: usize, spec: &ModelSpec) -> Result<Vec<f64>> {
    if x.len() != spec.d {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            got: x.len(),
        });
    }
    if s < 1 || s > spec.k {
        return Err(Error::GroupOutOfRange { group: s, k: spec.k });
    }
    let dp = spec.d_prime();
    let mut out = vec![0.0; spec.stacked_len()];
    let write_phi = |out: &mut [f64], block: usize| {
        out[block * dp..block * dp + x.len()].copy_from_slice(x);
        if spec.include_bias {
            out[block * dp + dp - 1] = 1.0;
        }
    };
    match spec.method {
        Method::Stl => write_phi(&mut out, 0),
        Method::Itl => write_phi(&mut out, s),
        Method::Mtl => {
            write_phi(&mut out, 0);
            write_phi(&mut out, s);
        }
        Method::StlGroupBias => {
            write_phi(&mut out, 0);
            out[s * dp + dp - 1] = 1.0;
        }
    }
    Ok(out)
}

/// Raw score f(x, s). Group-specific prediction (D=1) uses w0 + v_s, the
/// shared model (D=0) uses w0 alone. Classification is sign(score) with an
/// exact zero classifying as -1.
pub fn predict_score(params: &ParamVector, x: &[f64], s: usize, spec: &ModelSpec) -> Result<f64> {
    params.matches(spec)?;
    if x.len() != spec.d {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            got: x.len(),
        });
    }
    if s < 1 || s > spec.k {
        return Err(Error::GroupOutOfRange { group: s, k: spec.k });
    }
    let w0 = dot_phi(params.w0(), x, spec.include_bias);
    if spec.group_specific_prediction {
        Ok(w0 + dot_phi(params.v(s), x, spec.include_bias))
    } else {
        Ok(w0)
    }
}

pub fn classify(score: f64) -> i8 {
    if score > 0.0 {
        1
    } else {
        -1
    }
}

pub fn hinge(margin: f64) -> f64 {
    (1.0 - margin).max(0.0)
}

/// True hinge objective of the spec's method. ITL reports the mean of the k
/// per-group objectives (see [`itl_group_objectives`]).
pub fn objective(
    params: &ParamVector,
    ds: &Dataset,
    gi: &GroupIndex,
    spec: &ModelSpec,
) -> Result<f64> {
    objective_with_loss(params, ds, gi, spec, hinge)
}

/// Per-group ITL objectives L_s(w_s) + rho ||w_s||^2.
pub fn itl_group_objectives(
    params: &ParamVector,
    ds: &Dataset,
    gi: &GroupIndex,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    params.matches(spec)?;
    check_groups(gi)?;
    let mut out = Vec::with_capacity(spec.k);
    for s in 1..=spec.k {
        let w = params.task_weight(s);
        let mut risk = 0.0;
        for &i in &gi.members[s - 1] {
            let smp = &ds.samples[i];
            risk += hinge(f64::from(smp.label) * dot_phi(&w, &smp.features, spec.include_bias));
        }
        risk /= gi.n_t(s) as f64;
        out.push(risk + spec.rho * norm2(&w));
    }
    Ok(out)
}

fn check_groups(gi: &GroupIndex) -> Result<()> {
    for t in 1..=gi.k {
        if gi.n_t(t) == 0 {
            return Err(Error::EmptyGroup { group: t });
        }
    }
    Ok(())
}

/// Objective under an arbitrary margin loss; the solver evaluates its
/// smoothed surrogate through the same code path.
pub(crate) fn objective_with_loss(
    params: &ParamVector,
    ds: &Dataset,
    gi: &GroupIndex,
    spec: &ModelSpec,
    loss: impl Fn(f64) -> f64,
) -> Result<f64> {
    params.matches(spec)?;
    spec.validate()?;
    check_groups(gi)?;
    let k = spec.k as f64;
    let bias = spec.include_bias;

    // group-balanced risk of a scoring function
    let balanced_risk = |score: &dyn Fn(&crate::data::Sample) -> f64| -> f64 {
        (1..=gi.k)
            .map(|t| {
                gi.members[t - 1]
                    .iter()
                    .map(|&i| {
                        let smp = &ds.samples[i];
                        loss(f64::from(smp.label) * score(smp))
                    })
                    .sum::<f64>()
                    / gi.n_t(t) as f64
            })
            .sum::<f64>()
            / k
    };

    match spec.method {
        Method::Stl => {
            let w0 = params.w0();
            let risk = balanced_risk(&|smp| dot_phi(w0, &smp.features, bias));
            Ok(risk + spec.rho * norm2(w0))
        }
        Method::StlGroupBias => {
            let risk = balanced_risk(&|smp| {
                dot_phi(params.w0(), &smp.features, bias)
                    + params.v(smp.group)[params.d_prime() - 1]
            });
            Ok(risk + spec.rho * norm2(params.stacked()))
        }
        Method::Itl => {
            let per_group = itl_objectives_with_loss(params, ds, gi, spec, &loss)?;
            Ok(per_group.iter().sum::<f64>() / k)
        }
        Method::Mtl => {
            let w0 = params.w0();
            let mut obj = 0.0;
            if spec.theta > 0.0 {
                obj += spec.theta * balanced_risk(&|smp| dot_phi(w0, &smp.features, bias));
            }
            if spec.theta < 1.0 {
                let task: Vec<Vec<f64>> = (1..=spec.k).map(|s| params.task_weight(s)).collect();
                obj += (1.0 - spec.theta)
                    * balanced_risk(&|smp| dot_phi(&task[smp.group - 1], &smp.features, bias));
            }
            let mut pen = spec.lambda * norm2(w0);
            let mut vpen = 0.0;
            for s in 1..=spec.k {
                vpen += if spec.literal_regularizer {
                    norm2(&params.task_weight(s))
                } else {
                    norm2(params.v(s))
                };
            }
            pen += (1.0 - spec.lambda) * vpen / k;
            Ok(obj + spec.rho * pen)
        }
    }
}

fn itl_objectives_with_loss(
    params: &ParamVector,
    ds: &Dataset,
    gi: &GroupIndex,
    spec: &ModelSpec,
    loss: &impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(spec.k);
    for s in 1..=spec.k {
        let w = params.task_weight(s);
        let mut risk = 0.0;
        for &i in &gi.members[s - 1] {
            let smp = &ds.samples[i];
            risk += loss(f64::from(smp.label) * dot_phi(&w, &smp.features, spec.include_bias));
        }
        risk /= gi.n_t(s) as f64;
        out.push(risk + spec.rho * norm2(&w));
    }
    Ok(out)
}
