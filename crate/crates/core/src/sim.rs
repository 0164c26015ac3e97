//! Regularly varying inputs and transformed-linear constructions `X = A ∘ Z`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginal::centering_shift;
use crate::translin::{softplus_inv_unchecked, softplus_unchecked, GeneratorMatrix, ZeroClip};

/// Rows generated per independent random stream.
const ROWS_PER_STREAM: usize = 4096;

/// Shifted Pareto law with `P(Z > z) = (z + δ)⁻²` for `z > 1 − δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoSpec {
    shift: f64,
}

impl ParetoSpec {
    pub const ALPHA: f64 = 2.0;

    pub fn new(shift: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&shift) {
            return Err(Error::InvalidArgument(format!(
                "shift must lie in [0, 1) to keep the support positive, got {shift}"
            )));
        }
        Ok(Self { shift })
    }

    /// Shift chosen so that `E[t⁻¹(Z)] = 0`.
    pub fn centered() -> Self {
        Self { shift: centering_shift() }
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn lower_bound(&self) -> f64 {
        1.0 - self.shift
    }

    pub fn survival(&self, z: f64) -> f64 {
        if z <= self.lower_bound() {
            1.0
        } else {
            (z + self.shift).powi(-2)
        }
    }

    /// Inverse-CDF draw from a uniform `u ∈ (0, 1]`: `Z = u^{-1/2} − δ`.
    pub fn from_uniform(&self, u: f64) -> f64 {
        u.powf(-0.5) - self.shift
    }

    /// Value with survival probability `s`.
    pub fn survival_inverse(&self, s: f64) -> f64 {
        self.from_uniform(s)
    }
}

impl Default for ParetoSpec {
    fn default() -> Self {
        Self::centered()
    }
}

/// SplitMix64 finalizer; derives well-separated seeds from one user seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n × q` matrix of i.i.d. draws from `spec`.
///
/// Rows are produced in fixed-size blocks, each from its own ChaCha stream,
/// so the result depends only on `seed` and not on the worker count.
pub fn sample_z(q: usize, n: usize, spec: ParetoSpec, seed: u64) -> DMatrix<f64> {
    let mut data = vec![0.0; n * q];
    data.par_chunks_mut(ROWS_PER_STREAM * q.max(1)).enumerate().for_each(|(block, chunk)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block as u64);
        for v in chunk.iter_mut() {
            // 1 - U lies in (0, 1], so the draw is finite
            let u = 1.0 - rng.random::<f64>();
            *v = spec.from_uniform(u);
        }
    });
    DMatrix::from_row_slice(n, q, &data)
}

/// Generator with i.i.d. uniform(`lo`, `hi`) entries.
pub fn uniform_generator(p: usize, q: usize, lo: f64, hi: f64, seed: u64) -> GeneratorMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(p, q, |_, _| rng.random_range(lo..hi));
    GeneratorMatrix::new(m).expect("uniform draws are finite")
}

/// Row-wise `A ∘ zᵢ` for an `n × q` sample, returning `n × p`.
pub fn construct_x(a: &GeneratorMatrix, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if z.ncols() != a.ncols() {
        return Err(Error::shape(format!("{} columns", a.ncols()), format!("{} columns", z.ncols())));
    }
    if let Some((index, &value)) = z.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive { index, value });
    }
    let pre = z.map(softplus_inv_unchecked);
    Ok((pre * a.matrix().transpose()).map(softplus_unchecked))
}

/// `n × p` sample of `A ∘ Z`, generated block by block without holding the
/// full `n × q` input matrix. Equal to `construct_x(a, &sample_z(..))`.
pub fn simulate_x(a: &GeneratorMatrix, n: usize, spec: ParetoSpec, seed: u64) -> DMatrix<f64> {
    let (p, q) = (a.nrows(), a.ncols());
    let at = a.matrix().transpose();
    let mut data = vec![0.0; n * p];
    data.par_chunks_mut(ROWS_PER_STREAM * p.max(1)).enumerate().for_each(|(block, chunk)| {
        let rows = chunk.len() / p.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block as u64);
        let mut pre = DMatrix::zeros(rows, q);
        for r in 0..rows {
            for c in 0..q {
                let u = 1.0 - rng.random::<f64>();
                pre[(r, c)] = softplus_inv_unchecked(spec.from_uniform(u));
            }
        }
        let x = pre * &at;
        for r in 0..rows {
            for c in 0..p {
                chunk[r * p + c] = softplus_unchecked(x[(r, c)]);
            }
        }
    });
    DMatrix::from_row_slice(n, p, &data)
}

/// One atom of a discrete angular measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularPointMass {
    pub weight: f64,
    pub direction: Vec<f64>,
}

impl AngularPointMass {
    /// Polar angle of a bivariate direction.
    pub fn angle(&self) -> f64 {
        self.direction[1].atan2(self.direction[0])
    }
}

/// Columns below this clipped norm carry no tail mass and are dropped.
pub const MIN_ATOM_NORM: f64 = 1e-12;

/// Angular measure `Σⱼ ‖aⱼ⁽⁰⁾‖² δ_{aⱼ⁽⁰⁾/‖aⱼ⁽⁰⁾‖}` of `A ∘ Z`.
pub fn angular_measure_of(a: &GeneratorMatrix) -> Result<Vec<AngularPointMass>> {
    let clipped = a.zero_clip();
    let atoms: Vec<_> = clipped
        .matrix()
        .column_iter()
        .filter_map(|col| {
            let norm = col.norm();
            (norm >= MIN_ATOM_NORM)
                .then(|| AngularPointMass { weight: norm * norm, direction: col.iter().map(|v| v / norm).collect() })
        })
        .collect();
    if atoms.is_empty() {
        return Err(Error::Degenerate("generator has no column with a positive entry".into()));
    }
    Ok(atoms)
}

/// Ratio of exceedance frequencies `P̂(X > z) / P̂(Z > z)` at the
/// `level` empirical quantile of the reference sample.
pub fn empirical_tail_ratio(x: &[f64], reference: &[f64], level: f64) -> f64 {
    let z = crate::stats::quantile(reference, level);
    let fx = x.iter().filter(|&&v| v > z).count() as f64 / x.len() as f64;
    let fz = reference.iter().filter(|&&v| v > z).count() as f64 / reference.len() as f64;
    fx / fz
}

/// Count of rows with `‖x‖₂ > r` over count with `‖x‖₂ > 2r`; tends to
/// `2^α = 4` for regularly varying rows.
pub fn radial_scaling_ratio(x: &DMatrix<f64>, r: f64) -> f64 {
    let norms: Vec<f64> = x.row_iter().map(|row| row.norm()).collect();
    let above = |t: f64| norms.iter().filter(|&&v| v > t).count() as f64;
    above(r) / above(2.0 * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_cdf_closed_form() {
        let spec = ParetoSpec::new(0.3).unwrap();
        assert_relative_eq!(spec.from_uniform(0.25), 2.0 - 0.3, epsilon = 1e-15);
        assert_eq!(spec.survival(spec.lower_bound()), 1.0);
        assert_relative_eq!(spec.survival(2.0 - 0.3), 0.25, epsilon = 1e-15);
        assert!(ParetoSpec::new(1.0).is_err());
        assert!(ParetoSpec::new(-0.1).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_supported() {
        let spec = ParetoSpec::centered();
        let a = sample_z(3, 9000, spec, 42);
        let b = sample_z(3, 9000, spec, 42);
        assert_eq!(a, b);
        assert_ne!(a, sample_z(3, 9000, spec, 43));
        assert!(a.iter().all(|&v| v > spec.lower_bound() - 1e-15 && v > 0.0));
    }

    #[test]
    fn seed_derivation_separates_streams() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn identity_construction_is_transparent() {
        let z = sample_z(4, 200, ParetoSpec::centered(), 1);
        let id = GeneratorMatrix::new(DMatrix::identity(4, 4)).unwrap();
        let x = construct_x(&id, &z).unwrap();
        for (a, b) in x.iter().zip(z.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
    }

    #[test]
    fn streamed_simulation_matches_two_step() {
        let a = uniform_generator(3, 7, 0.0, 5.0, 2);
        let spec = ParetoSpec::centered();
        let direct = construct_x(&a, &sample_z(7, 9000, spec, 5)).unwrap();
        let streamed = simulate_x(&a, 9000, spec, 5);
        assert_eq!(direct.shape(), streamed.shape());
        for (x, y) in direct.iter().zip(streamed.iter()) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
        assert_eq!(simulate_x(&a, 0, spec, 5).nrows(), 0);
    }

    #[test]
    fn row_sums_for_large_inputs() {
        let z = DMatrix::from_row_slice(3, 2, &[50.0, 60.0, 100.0, 45.0, 1e4, 2e3]);
        let a = GeneratorMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let x = construct_x(&a, &z).unwrap();
        for i in 0..3 {
            assert_relative_eq!(x[(i, 0)], z[(i, 0)] + z[(i, 1)], max_relative = 1e-6);
        }
        let bad = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(construct_x(&a, &bad), Err(Error::NonPositive { .. })));
        assert!(construct_x(&a, &DMatrix::from_element(1, 3, 1.0)).is_err());
    }

    #[test]
    fn angular_measure_examples() {
        let id = GeneratorMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let h = angular_measure_of(&id).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h[0].weight, 1.0);
        assert_eq!(h[0].direction, vec![1.0, 0.0]);
        assert_eq!(h[1].direction, vec![0.0, 1.0]);

        let col = GeneratorMatrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let h = angular_measure_of(&col).unwrap();
        assert_relative_eq!(h[0].weight, 25.0);
        assert_relative_eq!(h[0].direction[0], 0.6);
        assert_relative_eq!(h[0].direction[1], 0.8);
        assert_relative_eq!(h[0].angle(), 4f64.atan2(3.0));

        let neg = GeneratorMatrix::from_rows(&[vec![-1.0], vec![2.0]]).unwrap();
        let h = angular_measure_of(&neg).unwrap();
        assert_relative_eq!(h[0].weight, 4.0);
        assert_eq!(h[0].direction, vec![0.0, 1.0]);

        let none = GeneratorMatrix::from_rows(&[vec![-1.0, 0.0], vec![-2.0, 0.0]]).unwrap();
        assert!(matches!(angular_measure_of(&none), Err(Error::Degenerate(_))));
    }

    #[test]
    fn total_mass_is_trace_of_clipped_gram() {
        let a = uniform_generator(4, 12, -1.0, 3.0, 9);
        let h = angular_measure_of(&a).unwrap();
        let c = a.zero_clip();
        let gram = c.matrix() * c.matrix().transpose();
        let total: f64 = h.iter().map(|m| m.weight).sum();
        assert_relative_eq!(total, gram.trace(), max_relative = 1e-13);
        for m in &h {
            let norm: f64 = m.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert_relative_eq!(norm, 1.0, epsilon = 1e-14);
        }
    }
}
