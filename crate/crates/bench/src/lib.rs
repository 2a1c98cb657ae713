//! Fixtures shared by the benchmarks.

use dpms_core::{generate, Dataset, RngStream, SyntheticSpec};

/// A model-1 synthetic dataset with `n` rows.
pub fn model1_data(n: usize, seed: u64) -> Dataset {
    generate(&SyntheticSpec::model1(n, RngStream::from_seed(seed)))
        .expect("preset spec is valid")
        .0
}
