//! Equality-constrained minimization of the regularized hinge objectives.
//!
//! Constraints are eliminated exactly: the orthonormalized constraint rows Q
//! define the feasible null space, iterates start at the feasible zero vector
//! and every step moves along the projected direction (I - Q^T Q) g, which is
//! the substitution W = N z for an orthonormal null-space basis N. The hinge
//! is Huberized inside a margin band of half-width delta and minimized by
//! full-batch gradient descent with backtracking line search; delta = 0 falls
//! back to projected subgradient descent with iterate averaging. The reported
//! objective is always the true (unsmoothed) hinge objective.

use crate::data::{Dataset, GroupIndex};
use crate::error::{Error, Result};
use crate::fairness::ConstraintSet;
use crate::model::{self, Method, ModelSpec, ParamVector};
use crate::vecmath::{axpy, dot, norm, norm2, scale};

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Relative gradient-norm target: stop when ||grad|| <= tolerance * (1 + |obj|).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Huberized hinge half-width; 0 selects the subgradient fallback.
    pub hinge_smoothing: f64,
    /// Reserved for optional multi-start; initialization is deterministic zero.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-6,
            max_iterations: 50_000,
            hinge_smoothing: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub params: ParamVector,
    /// True hinge objective at the solution.
    pub objective_value: f64,
    /// max_j |c_j . W| over the supplied constraint rows.
    pub constraint_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

const RANK_TOL_FACTOR: f64 = 1e-10;

/// Orthonormalize `rows` by Gram-Schmidt with reorthogonalization, dropping
/// rank-deficient rows. Returns the orthonormal spanning set.
fn orthonormalize(rows: &[Vec<f64>], dim: usize) -> Result<Vec<Vec<f64>>> {
    let max_norm = rows.iter().map(|r| norm(r)).fold(0.0, f64::max);
    let tol = RANK_TOL_FACTOR * max_norm.max(1.0);
    let mut q: Vec<Vec<f64>> = Vec::new();
    for row in rows {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Other("non-finite constraint row".into()));
        }
        let mut r = row.clone();
        for _ in 0..2 {
            for qi in &q {
                let c = dot(qi, &r);
                axpy(-c, qi, &mut r);
            }
        }
        let n = norm(&r);
        if n > tol {
            scale(1.0 / n, &mut r);
            q.push(r);
        }
    }
    Ok(q)
}

/// Orthonormal basis of the null space of the constraint rows. Redundant rows
/// are removed; an empty constraint set yields the identity basis.
pub fn nullspace_basis(constraints: &ConstraintSet, dim: usize) -> Result<Vec<Vec<f64>>> {
    let q = orthonormalize(&constraints.rows, dim)?;
    let rank = q.len();
    if rank >= dim && !constraints.rows.is_empty() {
        return Err(Error::Overconstrained { rank, dim });
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim - rank);
    for i in 0..dim {
        let mut r = vec![0.0; dim];
        r[i] = 1.0;
        for _ in 0..2 {
            for qi in q.iter().chain(basis.iter()) {
                let c = dot(qi, &r);
                axpy(-c, qi, &mut r);
            }
        }
        let n = norm(&r);
        if n > 1e-8 {
            scale(1.0 / n, &mut r);
            basis.push(r);
            if basis.len() == dim - rank {
                break;
            }
        }
    }
    Ok(basis)
}

/// Huberized hinge value and derivative in the margin m = y f.
fn huber_hinge(m: f64, delta: f64) -> (f64, f64) {
    if delta == 0.0 {
        if m < 1.0 {
            (1.0 - m, -1.0)
        } else {
            (0.0, 0.0)
        }
    } else if m <= 1.0 - delta {
        (1.0 - m, -1.0)
    } else if m >= 1.0 + delta {
        (0.0, 0.0)
    } else {
        let t = 1.0 + delta - m;
        (t * t / (4.0 * delta), -t / (2.0 * delta))
    }
}

/// Shared state for objective/gradient evaluation of the smoothed problem.
struct Problem<'a> {
    spec: &'a ModelSpec,
    ds: &'a Dataset,
    /// 1/(k n_t) per group, the balanced-risk sample weight.
    inv_kn: Vec<f64>,
    /// Orthonormalized constraint rows restricted to the free coordinates.
    q: Vec<Vec<f64>>,
    /// Shared block frozen at zero (ITL; MTL lambda=theta=0 tie-break).
    freeze_w0: bool,
    dp: usize,
    dim: usize,
}

impl<'a> Problem<'a> {
    fn project(&self, g: &mut [f64]) {
        if self.freeze_w0 {
            for gi in g[..self.dp].iter_mut() {
                *gi = 0.0;
            }
        }
        for qi in &self.q {
            let c = dot(qi, g);
            axpy(-c, qi, g);
        }
    }

    /// Smoothed objective and (optionally) its unprojected gradient.
    fn eval(&self, w: &[f64], delta: f64, grad: Option<&mut [f64]>) -> f64 {
        let spec = self.spec;
        let dp = self.dp;
        let bias = spec.include_bias;
        let k = spec.k as f64;
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }

        // task weights w0 + v_s
        let w0 = &w[..dp];
        let task: Vec<Vec<f64>> = (1..=spec.k)
            .map(|s| {
                w0.iter()
                    .zip(&w[s * dp..(s + 1) * dp])
                    .map(|(a, b)| a + b)
                    .collect()
            })
            .collect();

        // (shared-term weight, task-term weight) per method
        let (shared_coef, task_coef) = match spec.method {
            Method::Stl => (1.0, 0.0),
            Method::Itl | Method::StlGroupBias => (0.0, 1.0),
            Method::Mtl => (spec.theta, 1.0 - spec.theta),
        };

        let mut obj = 0.0;
        for smp in &self.ds.samples {
            let s = smp.group;
            let y = f64::from(smp.label);
            let wt = self.inv_kn[s - 1];
            if shared_coef > 0.0 {
                let f = model::dot_phi(w0, &smp.features, bias);
                let (l, dl) = huber_hinge(y * f, delta);
                obj += shared_coef * wt * l;
                if let Some(g) = g.as_deref_mut() {
                    let c = shared_coef * wt * dl * y;
                    add_phi(&mut g[..dp], c, &smp.features, bias);
                }
            }
            if task_coef > 0.0 {
                let f = match spec.method {
                    Method::StlGroupBias => {
                        model::dot_phi(w0, &smp.features, bias) + w[s * dp + dp - 1]
                    }
                    _ => model::dot_phi(&task[s - 1], &smp.features, bias),
                };
                let (l, dl) = huber_hinge(y * f, delta);
                obj += task_coef * wt * l;
                if let Some(g) = g.as_deref_mut() {
                    let c = task_coef * wt * dl * y;
                    match spec.method {
                        Method::StlGroupBias => {
                            add_phi(&mut g[..dp], c, &smp.features, bias);
                            g[s * dp + dp - 1] += c;
                        }
                        Method::Itl => {
                            add_phi(&mut g[s * dp..(s + 1) * dp], c, &smp.features, bias);
                        }
                        _ => {
                            add_phi(&mut g[..dp], c, &smp.features, bias);
                            add_phi(&mut g[s * dp..(s + 1) * dp], c, &smp.features, bias);
                        }
                    }
                }
            }
        }

        // regularizer
        let rho = spec.rho;
        match spec.method {
            Method::Stl => {
                obj += rho * norm2(w0);
                if let Some(g) = g.as_deref_mut() {
                    axpy(2.0 * rho, w0, &mut g[..dp]);
                }
            }
            Method::StlGroupBias => {
                obj += rho * norm2(w);
                if let Some(g) = g.as_deref_mut() {
                    axpy(2.0 * rho, w, g);
                }
            }
            Method::Itl => {
                // mean over groups of rho ||w_s||^2 with w0 = 0
                for s in 1..=spec.k {
                    obj += rho / k * norm2(&task[s - 1]);
                    if let Some(g) = g.as_deref_mut() {
                        axpy(2.0 * rho / k, &task[s - 1], &mut g[s * dp..(s + 1) * dp]);
                    }
                }
            }
            Method::Mtl => {
                obj += rho * spec.lambda * norm2(w0);
                if let Some(g) = g.as_deref_mut() {
                    axpy(2.0 * rho * spec.lambda, w0, &mut g[..dp]);
                }
                let c = rho * (1.0 - spec.lambda) / k;
                for s in 1..=spec.k {
                    if spec.literal_regularizer {
                        obj += c * norm2(&task[s - 1]);
                        if let Some(g) = g.as_deref_mut() {
                            axpy(2.0 * c, &task[s - 1], &mut g[..dp]);
                            axpy(2.0 * c, &task[s - 1], &mut g[s * dp..(s + 1) * dp]);
                        }
                    } else {
                        let v = &w[s * dp..(s + 1) * dp];
                        obj += c * norm2(v);
                        if let Some(g) = g.as_deref_mut() {
                            axpy(2.0 * c, v, &mut g[s * dp..(s + 1) * dp]);
                        }
                    }
                }
            }
        }
        obj
    }
}

fn add_phi(block: &mut [f64], c: f64, x: &[f64], include_bias: bool) {
    let d = x.len();
    for (b, xi) in block[..d].iter_mut().zip(x) {
        *b += c * xi;
    }
    if include_bias {
        block[d] += c;
    }
}

/// Minimize the spec's objective subject to the linear equality constraints.
pub fn solve(
    spec: &ModelSpec,
    ds: &Dataset,
    gi: &GroupIndex,
    constraints: Option<&ConstraintSet>,
    config: &SolverConfig,
) -> Result<SolveResult> {
    spec.validate()?;
    if config.tolerance <= 0.0 || config.hinge_smoothing < 0.0 {
        return Err(Error::InvalidConfig("tolerance must be > 0, delta >= 0".into()));
    }
    for t in 1..=gi.k {
        if gi.n_t(t) == 0 {
            return Err(Error::EmptyGroup { group: t });
        }
    }
    let dim = spec.stacked_len();
    let dp = spec.d_prime();
    let freeze_w0 = matches!(spec.method, Method::Itl)
        || (matches!(spec.method, Method::Mtl) && spec.lambda == 0.0 && spec.theta == 0.0);

    // Restrict constraint rows to the free subspace before orthonormalizing:
    // with w0 frozen at zero, c . W only sees the non-w0 coordinates.
    let rows: Vec<Vec<f64>> = constraints
        .map(|c| {
            c.rows
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    if freeze_w0 {
                        r[..dp].iter_mut().for_each(|x| *x = 0.0);
                    }
                    r
                })
                .collect()
        })
        .unwrap_or_default();
    let q = orthonormalize(&rows, dim)?;
    let free_dim = dim - if freeze_w0 { dp } else { 0 };
    if !rows.is_empty() && q.len() >= free_dim {
        return Err(Error::Overconstrained {
            rank: q.len(),
            dim: free_dim,
        });
    }

    let inv_kn: Vec<f64> = (1..=gi.k)
        .map(|t| 1.0 / (spec.k as f64 * gi.n_t(t) as f64))
        .collect();
    let problem = Problem {
        spec,
        ds,
        inv_kn,
        q,
        freeze_w0,
        dp,
        dim,
    };

    let delta = config.hinge_smoothing;
    let (w, iterations, converged) = if delta > 0.0 {
        descend(&problem, delta, config)
    } else {
        subgradient(&problem, config)
    };

    let params = ParamVector::from_stacked(w, spec.k, dp)?;
    let objective_value = model::objective(&params, ds, gi, spec)?;
    let constraint_violation = constraints.map(|c| c.violation(params.stacked())).unwrap_or(0.0);
    Ok(SolveResult {
        params,
        objective_value,
        constraint_violation,
        iterations,
        converged,
    })
}

/// Projected gradient descent with Armijo backtracking; monotone in the
/// smoothed objective.
fn descend(problem: &Problem<'_>, delta: f64, config: &SolverConfig) -> (Vec<f64>, usize, bool) {
    let dim = problem.dim;
    let mut w = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut step = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;

    let mut f = problem.eval(&w, delta, Some(&mut g));
    problem.project(&mut g);

    while iterations < config.max_iterations {
        iterations += 1;
        let g2 = norm2(&g);
        if g2.sqrt() <= config.tolerance * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        // backtracking line search on the smoothed objective
        let mut alpha = (step * 2.0).min(1e8);
        let mut accepted = false;
        for _ in 0..64 {
            trial.copy_from_slice(&w);
            axpy(-alpha, &g, &mut trial);
            let ft = problem.eval(&trial, delta, None);
            if ft <= f - 1e-4 * alpha * g2 {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no descent at machine precision
            converged = norm(&g) <= 1e2 * config.tolerance * (1.0 + f.abs());
            break;
        }
        step = alpha;
        std::mem::swap(&mut w, &mut trial);
        f = problem.eval(&w, delta, Some(&mut g));
        problem.project(&mut g);
    }
    // clean residual drift out of the feasible subspace
    problem.project(&mut w);
    (w, iterations, converged)
}

/// Projected subgradient with diminishing steps and suffix averaging, used
/// when hinge_smoothing = 0.
fn subgradient(problem: &Problem<'_>, config: &SolverConfig) -> (Vec<f64>, usize, bool) {
    let dim = problem.dim;
    let t_max = config.max_iterations.max(1);
    let rho = problem.spec.rho.max(1e-3);
    let mut w = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut avg = vec![0.0; dim];
    let mut averaged = 0usize;
    for t in 0..t_max {
        problem.eval(&w, 0.0, Some(&mut g));
        problem.project(&mut g);
        let eta = 1.0 / (rho * (t + 1) as f64);
        axpy(-eta, &g, &mut w);
        if t >= t_max / 2 {
            averaged += 1;
            for (a, wi) in avg.iter_mut().zip(&w) {
                *a += (wi - *a) / averaged as f64;
            }
        }
    }
    problem.project(&mut avg);
    (avg, t_max, true)
}

#[cfg(test)]
mod tests;
