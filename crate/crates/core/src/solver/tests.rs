use super::*;
use crate::data::{group_partition, Dataset, Sample};
use crate::fairness::{
    build_constraints, group_mean_vectors, Class, ConstraintSet, ConstraintTarget, FairnessTarget,
};
use crate::model::{objective, Method, ModelSpec};

fn toy_dataset(samples: Vec<Sample>, k: usize, d: usize) -> Dataset {
    let n_train = samples.len();
    Dataset {
        samples,
        k,
        d,
        feature_names: (0..d).map(|i| format!("f{i}")).collect(),
        group_names: (1..=k).map(|g| format!("g{g}")).collect(),
        sensitive_spec: "test".into(),
        includes_sensitive: false,
        sensitive_block: None,
        n_train,
    }
}

fn sample(features: Vec<f64>, group: usize, label: i8) -> Sample {
    Sample {
        features,
        group,
        label,
    }
}

fn rows_only(rows: Vec<Vec<f64>>) -> ConstraintSet {
    ConstraintSet {
        rows,
        target: ConstraintTarget::Shared,
        classes: Vec::new(),
    }
}

fn tight() -> SolverConfig {
    SolverConfig {
        tolerance: 1e-7,
        max_iterations: 100_000,
        hinge_smoothing: 1e-4,
        seed: 0,
    }
}

#[test]
fn nullspace_of_single_row() {
    let cs = rows_only(vec![vec![1.0, 1.0]]);
    let n = nullspace_basis(&cs, 2).unwrap();
    assert_eq!(n.len(), 1);
    let expected = 1.0 / 2f64.sqrt();
    let b = &n[0];
    assert!(
        (b[0] - expected).abs() < 1e-12 && (b[1] + expected).abs() < 1e-12
            || (b[0] + expected).abs() < 1e-12 && (b[1] - expected).abs() < 1e-12,
        "basis {b:?}"
    );
}

#[test]
fn nullspace_of_empty_set_is_identity() {
    let cs = rows_only(Vec::new());
    let n = nullspace_basis(&cs, 3).unwrap();
    assert_eq!(n.len(), 3);
    for (i, b) in n.iter().enumerate() {
        for (j, &v) in b.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
    }
}

#[test]
fn nullspace_deduplicates_rows() {
    let once = nullspace_basis(&rows_only(vec![vec![1.0, 1.0, 0.0]]), 3).unwrap();
    let twice = nullspace_basis(
        &rows_only(vec![vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]]),
        3,
    )
    .unwrap();
    assert_eq!(once.len(), 2);
    assert_eq!(twice.len(), 2);
    // same span: every basis vector of one is orthogonal to the constraint row
    for b in once.iter().chain(twice.iter()) {
        assert!(crate::vecmath::dot(b, &[1.0, 1.0, 0.0]).abs() < 1e-10);
    }
}

#[test]
fn nullspace_overconstrained_errors() {
    let cs = rows_only(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    assert!(matches!(
        nullspace_basis(&cs, 2),
        Err(Error::Overconstrained { .. })
    ));
}

fn one_dim_instance() -> (ModelSpec, Dataset) {
    let mut spec = ModelSpec::new(Method::Stl, 1, 1);
    spec.include_bias = false;
    spec.rho = 0.5;
    let ds = toy_dataset(
        vec![sample(vec![1.0], 1, 1), sample(vec![-1.0], 1, -1)],
        1,
        1,
    );
    (spec, ds)
}

/// [DERIVED] dense 1-D grid search at step 1e-4 puts the minimizer at
/// w = 1.0 with objective 0.5 (see model tests for the frozen grid scan).
#[test]
fn solve_one_dimensional_derived() {
    let (spec, ds) = one_dim_instance();
    let gi = group_partition(&ds);
    let r = solve(&spec, &ds, &gi, None, &tight()).unwrap();
    assert!(r.converged);
    assert!((r.params.w0()[0] - 1.0).abs() < 1e-3, "w = {}", r.params.w0()[0]);
    assert!((r.objective_value - 0.5).abs() < 1e-3);
    assert_eq!(r.constraint_violation, 0.0);
}

#[test]
fn subgradient_fallback_close_to_optimum() {
    let (spec, ds) = one_dim_instance();
    let gi = group_partition(&ds);
    let cfg = SolverConfig {
        hinge_smoothing: 0.0,
        max_iterations: 20_000,
        ..SolverConfig::default()
    };
    let r = solve(&spec, &ds, &gi, None, &cfg).unwrap();
    assert!((r.objective_value - 0.5).abs() < 1e-2, "obj {}", r.objective_value);
}

#[test]
fn constraints_spanning_a_block_zero_it() {
    let (spec, ds) = one_dim_instance();
    let gi = group_partition(&ds);
    // w0 block is one-dimensional; this row forces it to zero
    let cs = rows_only(vec![vec![1.0, 0.0]]);
    let r = solve(&spec, &ds, &gi, Some(&cs), &tight()).unwrap();
    assert!(r.params.w0()[0].abs() < 1e-12);
    assert!(r.constraint_violation <= 1e-8);
}

fn mirror_dataset(d: usize, n_half: usize, seed: u64) -> Dataset {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for i in 0..n_half {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        // group 2 is the point reflection of group 1 with labels kept, so the
        // optimal group-2 weights are the negated group-1 weights
        let mirrored: Vec<f64> = x.iter().map(|v| -v).collect();
        samples.push(sample(x, 1, label));
        samples.push(sample(mirrored, 2, label));
    }
    toy_dataset(samples, 2, d)
}

#[test]
fn mirror_symmetry_gives_opposite_task_offsets() {
    let ds = mirror_dataset(2, 10, 31);
    let gi = group_partition(&ds);
    let mut spec = ModelSpec::new(Method::Mtl, 2, 2);
    spec.include_bias = false;
    spec.rho = 0.3;
    spec.lambda = 0.5;
    spec.theta = 0.5;
    spec.fairness_target = FairnessTarget::Eod;
    spec.group_specific_prediction = true;
    let up = group_mean_vectors(&ds, &gi, Class::Pos, false).unwrap();
    let un = group_mean_vectors(&ds, &gi, Class::Neg, false).unwrap();
    let cs = build_constraints(Some(&up), Some(&un), &spec).unwrap();
    let r = solve(&spec, &ds, &gi, Some(&cs), &tight()).unwrap();
    assert!(r.converged);
    assert!(r.constraint_violation <= 1e-8);
    for (a, b) in r.params.v(1).iter().zip(r.params.v(2)) {
        assert!((a + b).abs() < 1e-4, "v1 {a} vs v2 {b}");
    }
}

#[test]
fn feasibility_on_random_constrained_instances() {
    for seed in 0..10u64 {
        let ds = crate::synthetic::random_instance(30, 3, 2, 100 + seed);
        let gi = group_partition(&ds);
        let mut spec = ModelSpec::new(Method::Mtl, 2, 3);
        spec.rho = 0.1;
        spec.fairness_target = FairnessTarget::Eod;
        spec.group_specific_prediction = true;
        let up = group_mean_vectors(&ds, &gi, Class::Pos, true).unwrap();
        let un = group_mean_vectors(&ds, &gi, Class::Neg, true).unwrap();
        let cs = build_constraints(Some(&up), Some(&un), &spec).unwrap();
        let r = solve(&spec, &ds, &gi, Some(&cs), &SolverConfig::default()).unwrap();
        assert!(
            r.constraint_violation <= 1e-8,
            "seed {seed}: violation {}",
            r.constraint_violation
        );
    }
}

#[test]
fn solve_is_deterministic() {
    let ds = crate::synthetic::random_instance(24, 3, 2, 7);
    let gi = group_partition(&ds);
    let mut spec = ModelSpec::new(Method::Mtl, 2, 3);
    spec.rho = 0.05;
    let a = solve(&spec, &ds, &gi, None, &SolverConfig::default()).unwrap();
    let b = solve(&spec, &ds, &gi, None, &SolverConfig::default()).unwrap();
    assert_eq!(a.params.stacked(), b.params.stacked());
    assert_eq!(a.objective_value, b.objective_value);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn itl_freezes_shared_block() {
    let ds = crate::synthetic::random_instance(20, 2, 2, 8);
    let gi = group_partition(&ds);
    let mut spec = ModelSpec::new(Method::Itl, 2, 2);
    spec.rho = 0.2;
    let r = solve(&spec, &ds, &gi, None, &SolverConfig::default()).unwrap();
    assert!(r.params.w0().iter().all(|&v| v == 0.0));
    // task blocks learn something
    assert!(crate::vecmath::norm(r.params.v(1)) > 0.0);
}

#[test]
fn mtl_zero_zero_freezes_shared_block() {
    let ds = crate::synthetic::random_instance(20, 2, 2, 9);
    let gi = group_partition(&ds);
    let mut spec = ModelSpec::new(Method::Mtl, 2, 2);
    spec.rho = 0.2;
    spec.lambda = 0.0;
    spec.theta = 0.0;
    let r = solve(&spec, &ds, &gi, None, &SolverConfig::default()).unwrap();
    assert!(r.params.w0().iter().all(|&v| v == 0.0));
}

#[test]
fn mtl_recovers_stl_at_one_one() {
    let ds = crate::synthetic::random_instance(30, 3, 2, 17);
    let gi = group_partition(&ds);
    let mut stl = ModelSpec::new(Method::Stl, 2, 3);
    stl.rho = 0.1;
    let mut mtl = ModelSpec::new(Method::Mtl, 2, 3);
    mtl.rho = 0.1;
    mtl.lambda = 1.0;
    mtl.theta = 1.0;
    let cfg = tight();
    let a = solve(&stl, &ds, &gi, None, &cfg).unwrap();
    let b = solve(&mtl, &ds, &gi, None, &cfg).unwrap();
    let scale = crate::vecmath::norm(a.params.w0()).max(1e-12);
    for (x, y) in a.params.w0().iter().zip(b.params.w0()) {
        assert!((x - y).abs() / scale < 1e-4, "{x} vs {y}");
    }
}

#[test]
fn mtl_recovers_itl_at_zero_zero() {
    let ds = crate::synthetic::random_instance(30, 3, 2, 18);
    let gi = group_partition(&ds);
    let mut itl = ModelSpec::new(Method::Itl, 2, 3);
    itl.rho = 0.1;
    let mut mtl = ModelSpec::new(Method::Mtl, 2, 3);
    mtl.rho = 0.1;
    mtl.lambda = 0.0;
    mtl.theta = 0.0;
    let cfg = tight();
    let a = solve(&itl, &ds, &gi, None, &cfg).unwrap();
    let b = solve(&mtl, &ds, &gi, None, &cfg).unwrap();
    for s in 1..=2usize {
        let wa = a.params.task_weight(s);
        let wb = b.params.task_weight(s);
        let scale = crate::vecmath::norm(&wa).max(1e-12);
        for (x, y) in wa.iter().zip(&wb) {
            assert!((x - y).abs() / scale < 1e-4, "group {s}: {x} vs {y}");
        }
    }
}

#[test]
fn reported_objective_is_true_hinge_objective() {
    let ds = crate::synthetic::random_instance(20, 2, 2, 19);
    let gi = group_partition(&ds);
    let mut spec = ModelSpec::new(Method::Stl, 2, 2);
    spec.rho = 0.3;
    let r = solve(&spec, &ds, &gi, None, &SolverConfig::default()).unwrap();
    let direct = objective(&r.params, &ds, &gi, &spec).unwrap();
    assert_eq!(r.objective_value, direct);
}

#[test]
fn overconstrained_solve_errors() {
    let (spec, ds) = one_dim_instance();
    let gi = group_partition(&ds);
    // 2-dimensional stacked space fully pinned
    let cs = rows_only(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
    assert!(matches!(
        solve(&spec, &ds, &gi, Some(&cs), &tight()),
        Err(Error::Overconstrained { .. })
    ));
}

#[test]
fn invalid_config_rejected() {
    let (spec, ds) = one_dim_instance();
    let gi = group_partition(&ds);
    let cfg = SolverConfig {
        tolerance: 0.0,
        ..SolverConfig::default()
    };
    assert!(solve(&spec, &ds, &gi, None, &cfg).is_err());
}
