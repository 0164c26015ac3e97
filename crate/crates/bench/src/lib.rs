//! Shared inputs for the benchmarks under `benches/`.

use tlpred_core::nalgebra::DMatrix;
use tlpred_core::sim::{simulate_x, uniform_generator, ParetoSpec};
use tlpred_core::translin::GeneratorMatrix;

/// Generator and `n` simulated rows of the default study shape.
pub fn study_sample(p: usize, q: usize, n: usize, seed: u64) -> (GeneratorMatrix, DMatrix<f64>) {
    let a = uniform_generator(p, q, 0.0, 5.0, seed);
    let x = simulate_x(&a, n, ParetoSpec::centered(), seed.wrapping_add(1));
    (a, x)
}
