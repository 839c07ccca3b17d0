//! Shared oracle machinery for the integration suites: an independent
//! nullspace projector built from the normal equations, a re-derivation of
//! the objective formulas, and a projected subgradient optimizer.
#![allow(dead_code)]

use fairmtl::data::Dataset;
use fairmtl::fairness::FairnessTarget;
use fairmtl::model::{Method, ModelSpec};

// ---------------------------------------------------------------- projection

/// Solve A x = b by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        assert!(p.abs() > 1e-14, "singular system in oracle projector");
        for row in col + 1..n {
            let f = a[row][col] / p;
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// Pick a maximal linearly independent subset of rows by row echelon form.
pub fn independent_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut work: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    let max_norm = rows
        .iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    for row in rows {
        let mut r = row.clone();
        for w in &work {
            let wn: f64 = w.iter().map(|x| x * x).sum();
            let c: f64 = r.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wn;
            for (ri, wi) in r.iter_mut().zip(w) {
                *ri -= c * wi;
            }
        }
        let n: f64 = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-10 * max_norm.max(1.0) {
            work.push(r);
            kept.push(row.clone());
        }
    }
    kept
}

/// Dense projector onto the nullspace of the constraint rows.
pub fn projector(rows: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let rows = independent_rows(rows);
    let m = rows.len();
    let mut p: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            e
        })
        .collect();
    if m == 0 {
        return p;
    }
    // gram = C C^T
    let gram: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| {
            rows.iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();
    // For each basis vector e_i compute e_i - C^T (C C^T)^{-1} C e_i.
    for (i, pi) in p.iter_mut().enumerate() {
        let ce: Vec<f64> = rows.iter().map(|r| r[i]).collect();
        let alpha = gauss_solve(gram.clone(), ce);
        for (j, v) in pi.iter_mut().enumerate() {
            for (a, r) in alpha.iter().zip(&rows) {
                *v -= a * r[j];
            }
        }
    }
    p
}

pub fn apply(p: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    // P is symmetric; row-apply is fine either way.
    p.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

// ------------------------------------------------------------ oracle energy

pub struct OracleProblem<'a> {
    pub ds: &'a Dataset,
    pub spec: &'a ModelSpec,
    /// sample indices per group (1-based groups)
    pub members: Vec<Vec<usize>>,
}

impl<'a> OracleProblem<'a> {
    pub fn new(ds: &'a Dataset, spec: &'a ModelSpec) -> Self {
        let mut members = vec![Vec::new(); spec.k];
        for (i, s) in ds.samples.iter().enumerate() {
            members[s.group - 1].push(i);
        }
        OracleProblem { ds, spec, members }
    }

    pub fn dp(&self) -> usize {
        self.spec.d_prime()
    }

    pub fn score_block(&self, block: &[f64], x: &[f64]) -> f64 {
        let mut acc: f64 = block[..x.len()].iter().zip(x).map(|(a, b)| a * b).sum();
        if self.spec.include_bias {
            acc += block[x.len()];
        }
        acc
    }

    /// True hinge objective from the written formulas, independent of the
    /// library's evaluation path.
    pub fn value(&self, w: &[f64]) -> f64 {
        let dp = self.dp();
        let k = self.spec.k as f64;
        let rho = self.spec.rho;
        let hinge = |m: f64| (1.0 - m).max(0.0);
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        match self.spec.method {
            Method::Itl => {
                // (1/k) sum_t [ mean_t hinge(y v_t . phi) + rho ||v_t||^2 ]
                let mut total = 0.0;
                for t in 1..=self.spec.k {
                    let vt = &w[t * dp..(t + 1) * dp];
                    let mut risk = 0.0;
                    for &i in &self.members[t - 1] {
                        let s = &self.ds.samples[i];
                        risk += hinge(f64::from(s.label) * self.score_block(vt, &s.features));
                    }
                    risk /= self.members[t - 1].len() as f64;
                    total += risk + rho * sq(vt);
                }
                total / k
            }
            Method::Mtl => {
                let w0 = &w[..dp];
                let theta = self.spec.theta;
                let lambda = self.spec.lambda;
                let mut shared = 0.0;
                let mut specific = 0.0;
                for t in 1..=self.spec.k {
                    let wt: Vec<f64> = (0..dp).map(|i| w0[i] + w[t * dp + i]).collect();
                    let mut rs = 0.0;
                    let mut rt = 0.0;
                    for &i in &self.members[t - 1] {
                        let s = &self.ds.samples[i];
                        let y = f64::from(s.label);
                        rs += hinge(y * self.score_block(w0, &s.features));
                        rt += hinge(y * self.score_block(&wt, &s.features));
                    }
                    let n = self.members[t - 1].len() as f64;
                    shared += rs / n;
                    specific += rt / n;
                }
                let mut pen = lambda * sq(w0);
                for t in 1..=self.spec.k {
                    pen += (1.0 - lambda) * sq(&w[t * dp..(t + 1) * dp]) / k;
                }
                theta * shared / k + (1.0 - theta) * specific / k + rho * pen
            }
            Method::Stl => {
                let w0 = &w[..dp];
                let mut risk = 0.0;
                for t in 1..=self.spec.k {
                    let mut r = 0.0;
                    for &i in &self.members[t - 1] {
                        let s = &self.ds.samples[i];
                        r += hinge(f64::from(s.label) * self.score_block(w0, &s.features));
                    }
                    risk += r / self.members[t - 1].len() as f64;
                }
                risk / k + rho * sq(w0)
            }
            Method::StlGroupBias => unimplemented!("not exercised by the oracle"),
        }
    }

    /// A subgradient of the value at w (flat-side choice 0 at the kink).
    pub fn subgradient(&self, w: &[f64], freeze_w0: bool) -> Vec<f64> {
        let dp = self.dp();
        let k = self.spec.k as f64;
        let rho = self.spec.rho;
        let mut g = vec![0.0; w.len()];
        let add_phi = |g: &mut [f64], off: usize, x: &[f64], c: f64, bias: bool| {
            for (gi, xi) in g[off..off + x.len()].iter_mut().zip(x) {
                *gi += c * xi;
            }
            if bias {
                g[off + x.len()] += c;
            }
        };
        let bias = self.spec.include_bias;
        match self.spec.method {
            Method::Itl => {
                for t in 1..=self.spec.k {
                    let vt = &w[t * dp..(t + 1) * dp];
                    let n = self.members[t - 1].len() as f64;
                    for &i in &self.members[t - 1] {
                        let s = &self.ds.samples[i];
                        let y = f64::from(s.label);
                        if y * self.score_block(vt, &s.features) < 1.0 {
                            add_phi(&mut g, t * dp, &s.features, -y / (k * n), bias);
                        }
                    }
                    for i in 0..dp {
                        g[t * dp + i] += 2.0 * rho * vt[i] / k;
                    }
                }
            }
            Method::Mtl => {
                let w0: Vec<f64> = w[..dp].to_vec();
                let theta = self.spec.theta;
                let lambda = self.spec.lambda;
                for t in 1..=self.spec.k {
                    let wt: Vec<f64> = (0..dp).map(|i| w0[i] + w[t * dp + i]).collect();
                    let n = self.members[t - 1].len() as f64;
                    for &i in &self.members[t - 1] {
                        let s = &self.ds.samples[i];
                        let y = f64::from(s.label);
                        if theta > 0.0 && y * self.score_block(&w0, &s.features) < 1.0 {
                            add_phi(&mut g, 0, &s.features, -theta * y / (k * n), bias);
                        }
                        if theta < 1.0 && y * self.score_block(&wt, &s.features) < 1.0 {
                            let c = -(1.0 - theta) * y / (k * n);
                            add_phi(&mut g, 0, &s.features, c, bias);
                            add_phi(&mut g, t * dp, &s.features, c, bias);
                        }
                    }
                }
                for i in 0..dp {
                    g[i] += 2.0 * rho * lambda * w0[i];
                }
                for t in 1..=self.spec.k {
                    for i in 0..dp {
                        g[t * dp + i] += 2.0 * rho * (1.0 - lambda) * w[t * dp + i] / k;
                    }
                }
            }
            Method::Stl => {
                let w0: Vec<f64> = w[..dp].to_vec();
                for t in 1..=self.spec.k {
                    let n = self.members[t - 1].len() as f64;
                    for &i in &self.members[t - 1] {
                        let s = &self.ds.samples[i];
                        let y = f64::from(s.label);
                        if y * self.score_block(&w0, &s.features) < 1.0 {
                            add_phi(&mut g, 0, &s.features, -y / (k * n), bias);
                        }
                    }
                }
                for i in 0..dp {
                    g[i] += 2.0 * rho * w0[i];
                }
            }
            Method::StlGroupBias => unimplemented!(),
        }
        if freeze_w0 {
            for gi in g[..dp].iter_mut() {
                *gi = 0.0;
            }
        }
        g
    }
}

/// Projected subgradient with 1/(mu t) steps and last-half averaging.
pub fn oracle_solve(
    problem: &OracleProblem,
    rows: &[Vec<f64>],
    mu: f64,
    iterations: usize,
    freeze_w0: bool,
) -> Vec<f64> {
    let dim = problem.spec.stacked_len();
    let p = projector(rows, dim);
    let mut x = vec![0.0; dim];
    let mut avg = vec![0.0; dim];
    let mut averaged = 0usize;
    for t in 0..iterations {
        let g = problem.subgradient(&x, freeze_w0);
        let step = 1.0 / (mu * (t + 1) as f64);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
        x = apply(&p, &x);
        if t >= iterations / 2 {
            averaged += 1;
            for (a, xi) in avg.iter_mut().zip(&x) {
                *a += xi;
            }
        }
    }
    for a in avg.iter_mut() {
        *a /= averaged as f64;
    }
    apply(&p, &avg)
}

// ------------------------------------------------------------------- checks

pub fn spec_for(idx: usize, k: usize, d: usize) -> ModelSpec {
    let method = if idx % 3 == 2 { Method::Itl } else { Method::Mtl };
    let mut spec = ModelSpec::new(method, k, d);
    spec.rho = [0.1, 1.0, 10.0][idx % 3];
    spec.lambda = 0.5;
    spec.theta = 0.5;
    spec.fairness_target = [FairnessTarget::EopPos, FairnessTarget::EopNeg, FairnessTarget::Eod]
        [idx % 3];
    // MTL alternates shared and group-specific constraint targets
    if method == Method::Mtl {
        spec.group_specific_prediction = idx % 2 == 0;
    }
    spec
}

pub fn strong_convexity(spec: &ModelSpec) -> f64 {
    let k = spec.k as f64;
    match spec.method {
        Method::Itl => 2.0 * spec.rho / k,
        Method::Mtl => 2.0 * spec.rho * spec.lambda.min((1.0 - spec.lambda) / k),
        _ => 2.0 * spec.rho,
    }
}

