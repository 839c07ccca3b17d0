//! Shared fixtures for the criterion benchmarks.

use fairmtl::data::{group_partition, Dataset, GroupIndex};
use fairmtl::fairness::FairnessTarget;
use fairmtl::model::{Method, ModelSpec};
use fairmtl::synthetic::random_instance;

/// A reproducible constrained MTL problem of the given size.
pub fn mtl_instance(n: usize, d: usize, k: usize) -> (Dataset, GroupIndex, ModelSpec) {
    let ds = random_instance(n, d, k, 42);
    let gi = group_partition(&ds);
    let mut spec = ModelSpec::new(Method::Mtl, k, d);
    spec.rho = 1.0;
    spec.fairness_target = FairnessTarget::Eod;
    (ds, gi, spec)
}
