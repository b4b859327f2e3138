//! Shared fixtures for the benchmarks.

use coinfection_core::simulate::{demo_beta, generate, CovariateLaw, GeneratorSpec};
use coinfection_core::Dataset;

/// Synthetic cohort from the demonstration coefficients.
pub fn cohort(n: usize, seed: u64) -> Dataset {
    let law = CovariateLaw::default();
    generate(&GeneratorSpec::new(n, demo_beta(&law), seed)).expect("demo generator is valid")
}
