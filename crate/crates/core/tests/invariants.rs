use nalgebra::{DMatrix, Matrix2};
use proptest::prelude::*;
use tlpred_core::angular::{
    conditional_density, conditional_interval, kde_angular, AngularAtom, AngularMeasureEstimate, Bandwidth, JointRegion,
};
use tlpred_core::cpfactor::{cp_factorize, DEFAULT_MAX_ITER, DEFAULT_TOL, RECONSTRUCTION_TOL};
use tlpred_core::marginal::{MarginalOptions, MarginalTransform};
use tlpred_core::sim::{simulate_x, uniform_generator, ParetoSpec};
use tlpred_core::tpdm::{estimate_pairwise, psd_check};
use tlpred_core::translin::{softplus_inv_unchecked, softplus_unchecked};

fn sample(seed: u64, n: usize) -> Vec<f64> {
    let a = uniform_generator(1, 3, 0.5, 2.0, seed);
    simulate_x(&a, n, ParetoSpec::centered(), seed ^ 0x5a5a).column(0).iter().cloned().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softplus_round_trip(y in -700.0f64..700.0) {
        let back = softplus_inv_unchecked(softplus_unchecked(y));
        prop_assert!((back - y).abs() <= 1e-9 * y.abs().max(1.0));
    }

    #[test]
    fn marginal_cdf_is_monotone(seed in 0u64..1000, gpd in any::<bool>(), a in -5.0f64..50.0, step in 0.0f64..20.0) {
        let m = MarginalTransform::fit(&sample(seed, 1000), MarginalOptions { gpd_tail: gpd, ..Default::default() }).unwrap();
        let (f0, f1) = (m.cdf(a), m.cdf(a + step));
        prop_assert!((0.0..=1.0).contains(&f0) && f0 <= f1 + 1e-15);
    }

    #[test]
    fn marginal_round_trip_inside_support(seed in 0u64..1000, u in 0.01f64..0.999) {
        let data = sample(seed, 1000);
        let m = MarginalTransform::fit(&data, MarginalOptions::default()).unwrap();
        let z = ParetoSpec::centered().survival_inverse(1.0 - u);
        let x = m.from_pareto_scale(z);
        let z2 = m.to_pareto_scale(x).unwrap();
        prop_assert!((z2 - z).abs() <= 1e-6 * z.abs().max(1.0), "{z} -> {x} -> {z2}");
    }

    #[test]
    fn estimated_tpdm_is_symmetric_with_fixed_diagonal(seed in 0u64..1000, r0 in 0.5f64..3.0) {
        let a = uniform_generator(3, 6, 0.0, 2.0, seed);
        let x = simulate_x(&a, 3000, ParetoSpec::centered(), seed + 1);
        let ratios = [r0, 1.0, 2.0];
        let est = estimate_pairwise(&x, 0.95, &ratios).unwrap();
        let m = est.matrix();
        prop_assert_eq!(m, &m.transpose());
        for (j, r) in ratios.iter().enumerate() {
            prop_assert_eq!(m[(j, j)], *r);
        }
        prop_assert!(psd_check(m).1);
    }

    #[test]
    fn cp_factor_is_nonnegative_and_reconstructs(v in 0.0f64..5.0, extra in 0.0f64..5.0, seed in 0u64..100) {
        let g = Matrix2::new(v, v, v, v + extra);
        let f = cp_factorize(&g, 9, seed, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        prop_assert!(f.b.min() >= 0.0);
        prop_assert!((f.gram() - g).norm() <= RECONSTRUCTION_TOL * g.norm().max(1.0));
    }

    #[test]
    fn joint_region_is_scale_invariant(lo in 0.0f64..0.7, width in 0.0f64..0.8, x_hat in 0.01f64..1e4, x in 0.0f64..1e4, c in 1e-3f64..1e3) {
        let r = JointRegion { lo, hi: lo + width };
        prop_assert_eq!(r.contains(x_hat, x), r.contains(c * x_hat, c * x));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn intervals_scale_linearly(angles in prop::collection::vec(0.1f64..1.4, 2..6), x_hat in 0.01f64..1e3) {
        let atoms = angles.iter().map(|&angle| AngularAtom { weight: 1.0, angle }).collect();
        let h = kde_angular(&AngularMeasureEstimate::new(atoms).unwrap(), Bandwidth::Auto).unwrap();
        let (u_lo, u_hi) = conditional_interval(&conditional_density(&h, 1.0).unwrap(), 0.9).unwrap();
        let (lo, hi) = conditional_interval(&conditional_density(&h, x_hat).unwrap(), 0.9).unwrap();
        prop_assert!((lo - u_lo * x_hat).abs() <= 1e-9 * lo.abs().max(1e-300));
        prop_assert!((hi - u_hi * x_hat).abs() <= 1e-9 * hi);
        prop_assert!(u_lo < u_hi);
    }
}

#[test]
fn pairwise_tpdm_ignores_row_order() {
    let a = uniform_generator(3, 8, 0.0, 3.0, 4);
    let x = simulate_x(&a, 2000, ParetoSpec::centered(), 5);
    let reversed = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(x.nrows() - 1 - i, j)]);
    let ratios = [1.0; 3];
    let a = estimate_pairwise(&x, 0.95, &ratios).unwrap();
    let b = estimate_pairwise(&reversed, 0.95, &ratios).unwrap();
    assert!((a.matrix() - b.matrix()).amax() < 1e-12);
}
