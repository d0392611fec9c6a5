use std::collections::BTreeSet;

use hiergp::convergence::fit_rate;
use hiergp::designs::{
    clenshaw_curtis, geometry, halton, smolyak_grid, uniform_grid, BoxDomain, DesignSet,
    OneDimFamily, SparseGridSpec,
};
use proptest::prelude::*;

fn keys(d: &DesignSet) -> BTreeSet<Vec<u64>> {
    d.points()
        .map(|p| p.iter().map(|x| x.to_bits()).collect())
        .collect()
}

#[test]
fn one_dimensional_families_are_nested() {
    for family in [OneDimFamily::ClenshawCurtis, OneDimFamily::NestedUniform] {
        let mut prev: Option<BTreeSet<Vec<u64>>> = None;
        for q in 1..=8 {
            let spec = SparseGridSpec {
                level: q,
                dim: 1,
                one_dim_family: family,
            };
            let cur = keys(&smolyak_grid(&spec, &BoxDomain::unit(1)).unwrap());
            if let Some(p) = &prev {
                assert!(p.is_subset(&cur), "{family:?} level {q}");
            }
            prev = Some(cur);
        }
    }
    for i in 1..8 {
        let a = clenshaw_curtis(i).unwrap();
        let b = clenshaw_curtis(i + 1).unwrap();
        assert!(a
            .iter()
            .all(|x| b.iter().any(|y| x.to_bits() == y.to_bits())));
    }
}

#[test]
fn uniform_grids_are_quasi_uniform() {
    for d in 1..=2usize {
        let max_n = if d == 1 { 64 } else { 24 };
        for n in 2..=max_n {
            let design = uniform_grid(&BoxDomain::unit(d), n).unwrap();
            let g = geometry(&design).unwrap();
            let scale = (design.len() as f64).powf(1.0 / d as f64);
            let hn = g.fill_distance * scale;
            let qn = g.separation_radius * scale;
            assert!(
                hn <= (d as f64).sqrt() * (1.0 + 1.0 / n as f64) + 1e-12,
                "d={d} n={n} hN={hn}"
            );
            assert!(
                (0.5 - 1e-12..=1.0 + 1e-12).contains(&qn),
                "d={d} n={n} qN={qn}"
            );
        }
    }
}

#[test]
fn halton_fill_distance_slope() {
    let pairs: Vec<(f64, f64)> = (4..=12)
        .map(|k| {
            let n = 1usize << k;
            let d = halton(&BoxDomain::unit(1), n).unwrap();
            (n as f64, geometry(&d).unwrap().fill_distance)
        })
        .collect();
    let fit = fit_rate(&pairs).unwrap();
    let slope = -fit.slope;
    assert!((-1.2..=-0.8).contains(&slope), "slope {slope}");
}

fn brute_force_size(q: u32, d: usize, family: OneDimFamily) -> usize {
    let lmax = q - d as u32 + 1;
    let level_set = |i: u32| -> Vec<u64> {
        let spec = SparseGridSpec {
            level: i,
            dim: 1,
            one_dim_family: family,
        };
        smolyak_grid(&spec, &BoxDomain::unit(1))
            .unwrap()
            .points()
            .map(|p| p[0].to_bits())
            .collect()
    };
    let mut all = BTreeSet::new();
    let mut idx = vec![1u32; d];
    loop {
        if idx.iter().sum::<u32>() == q {
            let axes: Vec<Vec<u64>> = idx.iter().map(|&i| level_set(i)).collect();
            let mut pos = vec![0usize; d];
            'inner: loop {
                all.insert(
                    pos.iter()
                        .zip(&axes)
                        .map(|(&p, a)| a[p])
                        .collect::<Vec<_>>(),
                );
                for j in (0..d).rev() {
                    pos[j] += 1;
                    if pos[j] < axes[j].len() {
                        continue 'inner;
                    }
                    pos[j] = 0;
                }
                break;
            }
        }
        let mut j = d;
        loop {
            if j == 0 {
                return all.len();
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] <= lmax {
                break;
            }
            idx[j] = 1;
        }
    }
}

#[test]
fn smolyak_counts_match_brute_force_and_grow() {
    for family in [OneDimFamily::ClenshawCurtis, OneDimFamily::NestedUniform] {
        for d in 1..=3usize {
            let mut last = 0;
            for q in d as u32..=(d as u32 + 4) {
                let spec = SparseGridSpec {
                    level: q,
                    dim: d,
                    one_dim_family: family,
                };
                let n = smolyak_grid(&spec, &BoxDomain::unit(d)).unwrap().len();
                assert_eq!(n, brute_force_size(q, d, family), "{family:?} d={d} q={q}");
                assert!(n >= last);
                last = n;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn mesh_ratio_at_least_one(pts in prop::collection::btree_set((0u32..1000, 0u32..1000), 2..20)) {
        let design = DesignSet::from_points(
            BoxDomain::unit(2),
            pts.iter().map(|&(a, b)| vec![a as f64 / 999.0, b as f64 / 999.0]).collect(),
        ).unwrap();
        let g = geometry(&design).unwrap();
        prop_assert!(g.mesh_ratio >= 1.0);
    }

    #[test]
    fn mesh_ratio_at_least_one_1d(pts in prop::collection::btree_set(0u32..100_000, 2..40)) {
        let design = DesignSet::from_points(
            BoxDomain::unit(1),
            pts.iter().map(|&a| vec![a as f64 / 99_999.0]).collect(),
        ).unwrap();
        prop_assert!(geometry(&design).unwrap().mesh_ratio >= 1.0);
    }
}
