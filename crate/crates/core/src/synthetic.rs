//! Seeded synthetic dataset generators used by the test suites and benches.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Sample};

fn dataset_from(samples: Vec<Sample>, k: usize, d: usize, tag: &str) -> Dataset {
    let n_train = samples.len();
    Dataset {
        samples,
        k,
        d,
        feature_names: (0..d).map(|i| format!("f{i}")).collect(),
        group_names: (1..=k).map(|g| format!("g{g}")).collect(),
        sensitive_spec: tag.to_string(),
        includes_sensitive: false,
        sensitive_block: None,
        n_train,
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random small instance: Gaussian features, a random linear teacher with
/// label noise, every group and every (group, label) cell guaranteed
/// nonempty.
pub fn random_instance(n: usize, d: usize, k: usize, seed: u64) -> Dataset {
    assert!(n >= 2 * k && d >= 1 && k >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let teacher: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let features: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
        let group = i % k + 1;
        let mut score: f64 = teacher.iter().zip(&features).map(|(w, x)| w * x).sum();
        score += 0.3 * gaussian(&mut rng);
        // force both labels into each group via the first 2k samples
        let label = if i < 2 * k {
            if i < k {
                1
            } else {
                -1
            }
        } else if score > 0.0 {
            1
        } else {
            -1
        };
        samples.push(Sample {
            features,
            group,
            label,
        });
    }
    dataset_from(samples, k, d, "synthetic")
}

/// Two statistically identical groups with a linearly separable labeling:
/// group 2 is an exact copy of group 1's rows. The fair optimum coincides
/// with the accurate optimum and every group-mean equality holds exactly.
pub fn twin_groups_separable(n_per_group: usize, d: usize, margin: f64, seed: u64) -> Dataset {
    assert!(n_per_group >= 2 && d >= 1 && margin > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
    let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in w.iter_mut() {
        *x /= nrm;
    }
    let mut base = Vec::with_capacity(n_per_group);
    for i in 0..n_per_group {
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        let mut features: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
        let score: f64 = w.iter().zip(&features).map(|(a, b)| a * b).sum();
        // shift along w so the signed margin is at least `margin`
        let shift = label as f64 * (margin + rng.gen_range(0.0..1.0)) - score;
        for (f, wi) in features.iter_mut().zip(&w) {
            *f += shift * wi;
        }
        base.push(Sample {
            features,
            group: 1,
            label,
        });
    }
    let mut samples = base.clone();
    samples.extend(base.into_iter().map(|mut s| {
        s.group = 2;
        s
    }));
    dataset_from(samples, 2, d, "twin")
}

/// Group separable by a single threshold on feature 0; remaining features are
/// noise. For forest sanity tests.
pub fn threshold_groups(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    assert!(n >= 2 && d >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let group = i % 2 + 1;
        let mut x: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
        x[0] = if group == 1 {
            -1.0 - rng.gen_range(0.0..1.0)
        } else {
            1.0 + rng.gen_range(0.0..1.0)
        };
        features.push(x);
        groups.push(group);
    }
    (features, groups)
}

/// Features independent of the group label; two equal groups.
pub fn independent_groups(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
            (x, i % 2 + 1)
        })
        .unzip()
}

/// Imbalanced (roughly 9:1) two-group problem with a noisy group signal on
/// feature 0, for class-weighting comparisons.
pub fn imbalanced_groups(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    assert!(n >= 20 && d >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let group = if i % 10 == 0 { 2 } else { 1 };
        let mut x: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
        // weak, overlapping signal
        x[0] += if group == 2 { 1.0 } else { -0.2 };
        features.push(x);
        groups.push(group);
    }
    (features, groups)
}
