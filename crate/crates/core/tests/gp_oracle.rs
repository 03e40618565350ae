mod common;

use olsynth::gp::{BoundParams, GpModel, KernelParams};
use proptest::prelude::*;

#[test]
fn posterior_matches_direct_inversion() {
    let (dm, dv) = common::gp_worst_error(30, 30, 11);
    assert!(dm < 1e-8 && dv < 1e-8, "mean error {dm:e}, variance error {dv:e}");
}

#[test]
fn oracle_inverse_is_an_inverse() {
    let a = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]];
    let inv = common::invert(&a);
    for i in 0..3 {
        for j in 0..3 {
            let v: f64 = (0..3).map(|k| a[i][k] * inv[k][j]).sum();
            assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Posterior variance never exceeds the prior and shrinks when data is added.
    #[test]
    fn variance_shrinks_with_data(
        pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -1.0f64..1.0), 2..15),
        q in (-2.0f64..2.0, -2.0f64..2.0),
    ) {
        let params = KernelParams { lengthscales: vec![0.7, 0.7], signal_variance: 1.0, noise_variance: 0.05 };
        let bound = BoundParams { rkhs_bound: 1.0, noise_scale: 0.1, info_gain: None };
        let xs: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.1]).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.2).collect();
        let x = [q.0, q.1];
        let k = xs.len() - 1;
        let small = GpModel::fit(0, 0, xs[..k].to_vec(), ys[..k].to_vec(), params.clone(), bound.clone()).unwrap();
        let full = GpModel::fit(0, 0, xs, ys, params.clone(), bound).unwrap();
        let (s_small, s_full) = (small.std(&x), full.std(&x));
        prop_assert!(s_small <= params.signal_variance.sqrt() + 1e-12);
        prop_assert!(s_full <= s_small + 1e-9);
    }
}
