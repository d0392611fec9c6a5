use std::f64::consts::PI;
use std::sync::Arc;

use hiergp::designs::{BoxDomain, DesignSet};
use hiergp::hyperfit::{
    estimate, log_marginal_likelihood, HyperBox, HyperParam, LogPrior, Objective,
};
use hiergp::kernels::{gram, KernelFamily, KernelSpec, MeanSpec, DEFAULT_NUGGET};
use hiergp::regression::fit;
use nalgebra::DVector;
use proptest::prelude::*;

fn design_1d(min: usize, max: usize) -> impl Strategy<Value = DesignSet> {
    prop::collection::btree_set(0u32..200, min..=max).prop_map(|s| {
        DesignSet::from_points(
            BoxDomain::unit(1),
            s.into_iter().map(|a| vec![a as f64 / 199.0]).collect(),
        )
        .unwrap()
    })
}

fn family() -> impl Strategy<Value = KernelFamily> {
    prop::sample::select(vec![KernelFamily::Matern, KernelFamily::SeparableMatern])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn estimate_stays_in_box(
        design in design_1d(2, 8),
        vals in prop::collection::vec(-5.0f64..5.0, 8),
        fam in family(),
        seed in any::<u64>(),
        narrow in any::<bool>(),
    ) {
        let f = &vals[..design.len()];
        let mut hb = HyperBox::default_for(fam, 1);
        if narrow {
            hb.lambda = vec![HyperParam::Free { lo: 0.2, hi: 0.3 }];
            hb.sigma2 = HyperParam::Free { lo: 0.5, hi: 2.0 };
        }
        if let Ok(r) = estimate(&hb, &MeanSpec::zero(), &design, f, &Objective::Mle, 2, seed) {
            prop_assert!(hb.contains(&r.theta_hat.cov), "{:?}", r.theta_hat);
        }
    }

    #[test]
    fn log_marginal_matches_dense_oracle(
        design in design_1d(1, 8),
        vals in prop::collection::vec(-3.0f64..3.0, 8),
        sigma2 in 0.1f64..10.0,
        lambda in 0.05f64..1.0,
        nu in 0.5f64..3.0,
    ) {
        let n = design.len();
        let f = &vals[..n];
        let spec = KernelSpec::matern(sigma2, lambda, nu).unwrap();
        let got = log_marginal_likelihood(&spec, &design, f).unwrap();
        let mut k = gram(&spec, &design);
        for i in 0..n {
            k[(i, i)] += DEFAULT_NUGGET * sigma2;
        }
        let eig = k.clone().symmetric_eigen();
        prop_assume!(eig.eigenvalues.min() > 1e-6 * sigma2);
        let logdet: f64 = eig.eigenvalues.iter().map(|l| l.ln()).sum();
        let r = DVector::from_column_slice(f);
        let proj = eig.eigenvectors.transpose() * &r;
        let quad: f64 = proj.iter().zip(eig.eigenvalues.iter()).map(|(p, l)| p * p / l).sum();
        let want = -0.5 * quad - 0.5 * logdet - 0.5 * n as f64 * (2.0 * PI).ln();
        prop_assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{got} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flat_map_reproduces_mle(design in design_1d(3, 10), seed in any::<u64>(), fam in family()) {
        let f: Vec<f64> = design.points().map(|u| (5.0 * u[0]).sin() + u[0]).collect();
        let hb = HyperBox::default_for(fam, 1);
        let a = estimate(&hb, &MeanSpec::zero(), &design, &f, &Objective::Mle, 2, seed);
        let flat: LogPrior = Arc::new(|_| 0.0);
        let b = estimate(&hb, &MeanSpec::zero(), &design, &f, &Objective::Map(flat), 2, seed);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn predictive_mean_ignores_sigma2(
        design in design_1d(2, 12),
        sigma2 in 0.01f64..10.0,
        lambda in 0.05f64..0.5,
        nu in 0.5f64..3.0,
    ) {
        let spec = KernelSpec::matern(sigma2, lambda, nu).unwrap();
        let eig = gram(&spec, &design).symmetric_eigen();
        prop_assume!(eig.eigenvalues.min() > 1e-5 * eig.eigenvalues.max());
        let f: Vec<f64> = design.points().map(|u| (7.0 * u[0]).cos()).collect();
        let a = fit(&spec, &design, &f).unwrap();
        let b = fit(&spec.with_sigma2(10.0 * sigma2), &design, &f).unwrap();
        for i in 0..50 {
            let u = [i as f64 / 49.0];
            let (x, y) = (a.predict_mean(&u).unwrap(), b.predict_mean(&u).unwrap());
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }
}
