use hiergp::designs::{midpoint_grid, BoxDomain, DesignSet};
use hiergp::kernels::KernelSpec;
use hiergp::regression::fit;
use hiergp::testbed::{error_norms, make_sine_series, spectral_norm, SineMode, TestFunction};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zero_order_norm_is_l2_norm(tau in 0.6f64..4.0, m in 1usize..=64, seed in any::<u64>()) {
        let f = make_sine_series(tau, m, seed).unwrap();
        let grid = midpoint_grid(&BoxDomain::unit(1), 1 << 15).unwrap();
        let l2sq = f.eval_on(&grid).iter().map(|v| v * v).sum::<f64>() / grid.len() as f64;
        let n0 = spectral_norm(&f, &[0.0]).unwrap();
        prop_assert!((n0 * n0 - l2sq).abs() <= 1e-5 * l2sq);
    }

    #[test]
    fn single_tensor_mode_norm_factorizes(
        k in prop::collection::vec(1u32..30, 1..=3),
        tau in 0.6f64..3.0,
        c in 0.1f64..5.0,
    ) {
        let d = k.len();
        let f = TestFunction::TensorSineSeries {
            modes: vec![SineMode { k: k.clone(), c }],
            r_tilde: vec![tau; d],
        };
        let got = spectral_norm(&f, &vec![tau; d]).unwrap();
        let product = k.iter().fold(c, |acc, &kj| {
            let one = TestFunction::SineSeries {
                coeffs: (1..=kj).map(|n| if n == kj { 1.0 } else { 0.0 }).collect(),
                tau_tilde: tau,
            };
            acc * spectral_norm(&one, &[tau]).unwrap()
        });
        prop_assert!((got - product).abs() <= 1e-12 * product);
    }
}

#[test]
fn zero_function_zero_errors() {
    let design = DesignSet::from_points(BoxDomain::unit(1), vec![vec![0.2], vec![0.7]]).unwrap();
    let gp = fit(
        &KernelSpec::matern(1.0, 0.3, 1.5).unwrap(),
        &design,
        &[0.0, 0.0],
    )
    .unwrap();
    let zero = TestFunction::SineSeries {
        coeffs: vec![0.0; 4],
        tau_tilde: 1.0,
    };
    let grid = midpoint_grid(&BoxDomain::unit(1), 128).unwrap();
    let r = error_norms(&gp, &zero, &grid).unwrap();
    assert_eq!(r.l2_error, 0.0);
    assert_eq!(r.sup_error, 0.0);
}
