//! Property-based invariants across the library: convexity, metric
//! invariances, serialization fidelity, and the constraint/score relationship
//! that the equality rows are supposed to encode.

use proptest::prelude::*;

use fairmtl::data::{group_partition, read_snapshot, write_snapshot};
use fairmtl::fairness::{
    accuracy_report, build_constraints, deod, deop, group_mean_vectors, Class, FairnessTarget,
};
use fairmtl::model::{embed, objective, predict_score, Method, ModelSpec, ParamVector};
use fairmtl::solver::nullspace_basis;
use fairmtl::synthetic::random_instance;

fn methods() -> impl Strategy<Value = Method> {
    prop_oneof![
        Just(Method::Stl),
        Just(Method::StlGroupBias),
        Just(Method::Itl),
        Just(Method::Mtl),
    ]
}

fn spec_strategy() -> impl Strategy<Value = ModelSpec> {
    (
        methods(),
        2usize..4,
        1usize..4,
        0.01f64..100.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
    )
        .prop_map(|(method, k, d, rho, lambda, theta)| {
            let mut spec = ModelSpec::new(method, k, d);
            spec.rho = rho;
            spec.lambda = lambda;
            spec.theta = theta;
            spec
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// f(a x + (1-a) y) <= a f(x) + (1-a) f(y) for every method.
    #[test]
    fn objective_is_convex_along_random_segments(
        spec in spec_strategy(),
        seed in 0u64..1000,
        alpha in 0.0f64..=1.0,
        pair in (0u64..1000, 0u64..1000),
    ) {
        let ds = random_instance(30, spec.d, spec.k, seed);
        let gi = group_partition(&ds);
        let len = spec.stacked_len();
        let draw = |s: u64| -> Vec<f64> {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
            (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()
        };
        let mut x = draw(pair.0);
        let mut y = draw(pair.1);
        if spec.method == Method::Itl {
            // ITL never materializes a shared block
            for v in x[..spec.d_prime()].iter_mut() { *v = 0.0; }
            for v in y[..spec.d_prime()].iter_mut() { *v = 0.0; }
        }
        let mix: Vec<f64> = x.iter().zip(&y)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        let at = |v: Vec<f64>| {
            let p = ParamVector::from_stacked(v, spec.k, spec.d_prime()).unwrap();
            objective(&p, &ds, &gi, &spec).unwrap()
        };
        let fx = at(x);
        let fy = at(y);
        let fm = at(mix);
        prop_assert!(fm <= alpha * fx + (1.0 - alpha) * fy + 1e-9 * (1.0 + fx.abs() + fy.abs()));
    }

    /// DEOp, DEOd and ACC depend only on the signs of the scores.
    #[test]
    fn fairness_metrics_are_scale_invariant(
        seed in 0u64..1000,
        scale in 0.001f64..1000.0,
    ) {
        let ds = random_instance(40, 2, 2, seed);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 77);
        let scores: Vec<f64> = (0..ds.samples.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let scaled: Vec<f64> = scores.iter().map(|s| s * scale).collect();
        let labels: Vec<i8> = ds.samples.iter().map(|s| s.label).collect();
        let groups: Vec<usize> = ds.samples.iter().map(|s| s.group).collect();
        let a = accuracy_report(&scores, &labels, &groups, ds.k).unwrap();
        let b = accuracy_report(&scaled, &labels, &groups, ds.k).unwrap();
        prop_assert_eq!(a.acc, b.acc);
        prop_assert_eq!(a.deop_pos, b.deop_pos);
        prop_assert_eq!(a.deop_neg, b.deop_neg);
        prop_assert_eq!(a.deod, b.deod);
    }

    /// Reordering the evaluation set leaves every reported metric unchanged.
    #[test]
    fn fairness_metrics_are_permutation_invariant(
        seed in 0u64..1000,
        perm_seed in 0u64..1000,
    ) {
        let ds = random_instance(40, 2, 2, seed);
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 31);
        let scores: Vec<f64> = (0..ds.samples.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let labels: Vec<i8> = ds.samples.iter().map(|s| s.label).collect();
        let groups: Vec<usize> = ds.samples.iter().map(|s| s.group).collect();
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let ps: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let pl: Vec<i8> = idx.iter().map(|&i| labels[i]).collect();
        let pg: Vec<usize> = idx.iter().map(|&i| groups[i]).collect();
        let a = accuracy_report(&scores, &labels, &groups, ds.k).unwrap();
        let b = accuracy_report(&ps, &pl, &pg, ds.k).unwrap();
        prop_assert_eq!(a.acc, b.acc);
        prop_assert_eq!(a.per_group_accuracy, b.per_group_accuracy);
        prop_assert_eq!(a.deod, b.deod);
    }

    /// DEOd is the mean of the two DEOp values, and every DEOp lies in
    /// [0, k]; a constant classifier has zero unfairness.
    #[test]
    fn deod_is_mean_of_deops_and_bounded(seed in 0u64..1000) {
        let ds = random_instance(40, 2, 2, seed);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 19);
        let scores: Vec<f64> = (0..ds.samples.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let labels: Vec<i8> = ds.samples.iter().map(|s| s.label).collect();
        let groups: Vec<usize> = ds.samples.iter().map(|s| s.group).collect();
        let dp = deop(&scores, &labels, &groups, ds.k, Class::Pos).unwrap();
        let dn = deop(&scores, &labels, &groups, ds.k, Class::Neg).unwrap();
        let dd = deod(&scores, &labels, &groups, ds.k).unwrap();
        prop_assert!((dd - (dp + dn) / 2.0).abs() < 1e-12);
        prop_assert!((0.0..=ds.k as f64).contains(&dp));
        prop_assert!((0.0..=ds.k as f64).contains(&dn));
        let constant = vec![1.0; scores.len()];
        prop_assert_eq!(deod(&constant, &labels, &groups, ds.k).unwrap(), 0.0);
    }

    /// Text snapshots round-trip datasets exactly (bit-for-bit floats).
    #[test]
    fn snapshot_round_trip_is_exact(seed in 0u64..1000, n in 10usize..60) {
        let ds = random_instance(n, 3, 2, seed);
        let mut buf = Vec::new();
        write_snapshot(&ds, &mut buf).unwrap();
        let back = read_snapshot(&buf[..]).unwrap();
        prop_assert_eq!(back.k, ds.k);
        prop_assert_eq!(back.d, ds.d);
        prop_assert_eq!(back.samples.len(), ds.samples.len());
        for (a, b) in back.samples.iter().zip(&ds.samples) {
            prop_assert_eq!(&a.features, &b.features);
            prop_assert_eq!(a.group, b.group);
            prop_assert_eq!(a.label, b.label);
        }
    }

    /// predict_score(w, x, s) equals <w, phi(x, s)> for the stacked embedding
    /// of every method (ITL keeps its shared block at zero).
    #[test]
    fn embedding_and_scoring_agree(
        spec in spec_strategy(),
        seed in 0u64..1000,
    ) {
        let ds = random_instance(10, spec.d, spec.k, seed);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 13);
        let mut stacked: Vec<f64> = (0..spec.stacked_len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dp = spec.d_prime();
        match spec.method {
            // ITL never materializes a shared block
            Method::Itl => {
                for v in stacked[..dp].iter_mut() { *v = 0.0; }
            }
            // STL+B trains only the constant coordinate of each v block
            Method::StlGroupBias => {
                for s in 1..=spec.k {
                    for v in stacked[s * dp..(s + 1) * dp - 1].iter_mut() { *v = 0.0; }
                }
            }
            _ => {}
        }
        let params = ParamVector::from_stacked(stacked.clone(), spec.k, spec.d_prime()).unwrap();
        for smp in &ds.samples {
            let phi = embed(&smp.features, smp.group, &spec).unwrap();
            let by_embed: f64 = phi.iter().zip(&stacked).map(|(a, b)| a * b).sum();
            let by_predict = predict_score(&params, &smp.features, smp.group, &spec).unwrap();
            prop_assert!((by_embed - by_predict).abs() < 1e-9,
                "method {:?}: {by_embed} vs {by_predict}", spec.method);
        }
    }

    /// Any parameter vector projected onto the constraint nullspace gives
    /// equal class-conditional mean scores across groups — the algebraic
    /// identity the equality rows encode.
    #[test]
    fn null_space_members_equalize_class_mean_scores(
        seed in 0u64..1000,
        specific in proptest::bool::ANY,
        k in 2usize..4,
    ) {
        let d = 2;
        let ds = random_instance(40, d, k, seed);
        let gi = group_partition(&ds);
        let mut spec = ModelSpec::new(Method::Mtl, k, d);
        spec.fairness_target = FairnessTarget::EopPos;
        spec.group_specific_prediction = specific;
        let u_pos = group_mean_vectors(&ds, &gi, Class::Pos, true).unwrap();
        let cs = build_constraints(Some(&u_pos), None, &spec).unwrap();
        let dim = spec.stacked_len();
        let basis = nullspace_basis(&cs, dim).unwrap();

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 5);
        let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        // project: sum of components along the orthonormal nullspace basis
        let mut w = vec![0.0; dim];
        for b in &basis {
            let c: f64 = raw.iter().zip(b).map(|(a, x)| a * x).sum();
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi += c * bi;
            }
        }
        prop_assert!(cs.violation(&w) <= 1e-8);

        let dp = spec.d_prime();
        let mean_score = |t: usize| -> f64 {
            let mut acc: f64 = u_pos.u[t - 1].iter().zip(&w[..dp]).map(|(u, x)| u * x).sum();
            if specific {
                acc += u_pos.u[t - 1]
                    .iter()
                    .zip(&w[t * dp..(t + 1) * dp])
                    .map(|(u, x)| u * x)
                    .sum::<f64>();
            }
            acc
        };
        let first = mean_score(1);
        for t in 2..=k {
            prop_assert!((mean_score(t) - first).abs() <= 1e-8,
                "group {t}: {} vs {first}", mean_score(t));
        }
    }
}
