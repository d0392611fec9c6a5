//! Test functions of prescribed Sobolev or mixed-Sobolev smoothness on the
//! unit cube, spectral norms in the Dirichlet sine basis, and error norms of
//! fitted models on evaluation grids.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::{halton, midpoint_grid, BoxDomain, DesignSet};
use crate::error::{domain, Error, Result};
use crate::kernels::KernelSpec;
use crate::regression::FittedGp;
use crate::rng::rng_for;

/// One tensor sine mode `c * prod_j sin(k_j pi u_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineMode {
    pub k: Vec<u32>,
    pub c: f64,
}

pub type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum TestFunction {
    /// `sum_n c_n sin(n pi u)` on `[0, 1]`; `coeffs[n-1] = c_n`.
    SineSeries {
        coeffs: Vec<f64>,
        tau_tilde: f64,
    },
    /// `sum_k c_k prod_j sin(k_j pi u_j)` on `[0, 1]^d`.
    TensorSineSeries {
        modes: Vec<SineMode>,
        r_tilde: Vec<f64>,
    },
    /// Kernel section `k(., center)`.
    RkhsSection {
        center: Vec<f64>,
        spec: KernelSpec,
    },
    Custom {
        f: CustomFn,
        dim: usize,
    },
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::SineSeries { coeffs, tau_tilde } => f
                .debug_struct("SineSeries")
                .field("terms", &coeffs.len())
                .field("tau_tilde", tau_tilde)
                .finish(),
            TestFunction::TensorSineSeries { modes, r_tilde } => f
                .debug_struct("TensorSineSeries")
                .field("modes", &modes.len())
                .field("r_tilde", r_tilde)
                .finish(),
            TestFunction::RkhsSection { center, spec } => f
                .debug_struct("RkhsSection")
                .field("center", center)
                .field("spec", spec)
                .finish(),
            TestFunction::Custom { dim, .. } => write!(f, "Custom {{ dim: {dim} }}"),
        }
    }
}

impl TestFunction {
    pub fn dim(&self) -> usize {
        match self {
            TestFunction::SineSeries { .. } => 1,
            TestFunction::TensorSineSeries { r_tilde, .. } => r_tilde.len(),
            TestFunction::RkhsSection { center, .. } => center.len(),
            TestFunction::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            TestFunction::SineSeries { coeffs, .. } => {
                let s = SineTable::new(u[0], coeffs.len());
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * s.get(i + 1))
                    .sum()
            }
            TestFunction::TensorSineSeries { modes, .. } => {
                let kmax = modes
                    .iter()
                    .flat_map(|m| m.k.iter().copied())
                    .max()
                    .unwrap_or(0) as usize;
                let tables: Vec<SineTable> = u.iter().map(|&x| SineTable::new(x, kmax)).collect();
                modes
                    .iter()
                    .map(|m| {
                        m.k.iter()
                            .zip(&tables)
                            .fold(m.c, |acc, (&k, t)| acc * t.get(k as usize))
                    })
                    .sum()
            }
            TestFunction::RkhsSection { center, spec } => spec.k(u, center),
            TestFunction::Custom { f, .. } => f(u),
        }
    }

    /// Values on every point of `grid`, in order.
    pub fn eval_on(&self, grid: &DesignSet) -> Vec<f64> {
        (0..grid.len())
            .into_par_iter()
            .with_min_len(64)
            .map(|i| self.eval(grid.point(i)))
            .collect()
    }

    /// Smoothness target: `[tau_tilde]` for 1D series, `r_tilde` for tensor series.
    pub fn smoothness_target(&self) -> Option<Vec<f64>> {
        match self {
            TestFunction::SineSeries { tau_tilde, .. } => Some(vec![*tau_tilde]),
            TestFunction::TensorSineSeries { r_tilde, .. } => Some(r_tilde.clone()),
            _ => None,
        }
    }

    /// Whether every smoothness order exceeds `d/2` per axis, the range
    /// covered by the convergence theory.
    pub fn in_safe_range(&self) -> bool {
        match self.smoothness_target() {
            Some(t) => t.iter().all(|&r| r > 0.5),
            None => true,
        }
    }
}

/// `sin(n pi x)` for `n = 0..=n_max` via the three-term recurrence.
struct SineTable(Vec<f64>);

impl SineTable {
    fn new(x: f64, n_max: usize) -> Self {
        let theta = PI * x;
        let mut v = Vec::with_capacity(n_max + 1);
        v.push(0.0);
        if n_max >= 1 {
            v.push(theta.sin());
        }
        let two_cos = 2.0 * theta.cos();
        for n in 2..=n_max {
            let next = two_cos * v[n - 1] - v[n - 2];
            v.push(next);
        }
        Self(v)
    }

    #[inline]
    fn get(&self, n: usize) -> f64 {
        self.0[n]
    }
}

fn random_sign(rng: &mut impl Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// `sum_{n=1}^{m} n^{-(tau_tilde + 1/2)} zeta_n sin(n pi u)` with random signs.
pub fn make_sine_series(tau_tilde: f64, m: usize, seed: u64) -> Result<TestFunction> {
    if !(tau_tilde.is_finite() && tau_tilde > 0.5) {
        return domain(format!("tau_tilde must exceed 1/2, got {tau_tilde}"));
    }
    if m == 0 {
        return domain("at least one sine mode is required");
    }
    let mut rng = rng_for(seed, 0x5349_4e45);
    let coeffs = (1..=m)
        .map(|n| (n as f64).powf(-(tau_tilde + 0.5)) * random_sign(&mut rng))
        .collect();
    Ok(TestFunction::SineSeries { coeffs, tau_tilde })
}

/// Tensor series over all modes `k in {1..m}^d` with
/// `c_k = zeta_k prod_j k_j^{-(r_tilde_j + 1/2)}`.
pub fn make_tensor_sine_series(r_tilde: &[f64], m: usize, seed: u64) -> Result<TestFunction> {
    if r_tilde.is_empty() || r_tilde.iter().any(|r| !(r.is_finite() && *r > 0.5)) {
        return domain("every r_tilde_j must exceed 1/2");
    }
    if m == 0 {
        return domain("at least one sine mode per axis is required");
    }
    let d = r_tilde.len();
    let total = m
        .checked_pow(d as u32)
        .filter(|t| *t <= 1 << 24)
        .ok_or_else(|| Error::Unsupported("too many tensor modes".into()))?;
    let mut rng = rng_for(seed, 0x5453_494e);
    let mut modes = Vec::with_capacity(total);
    let mut k = vec![1u32; d];
    for _ in 0..total {
        let c = k
            .iter()
            .zip(r_tilde)
            .fold(random_sign(&mut rng), |acc, (&kj, r)| {
                acc * (kj as f64).powf(-(r + 0.5))
            });
        modes.push(SineMode { k: k.clone(), c });
        for j in (0..d).rev() {
            k[j] += 1;
            if k[j] as usize <= m {
                break;
            }
            k[j] = 1;
        }
    }
    Ok(TestFunction::TensorSineSeries {
        modes,
        r_tilde: r_tilde.to_vec(),
    })
}

/// Spectral Sobolev norm in the sine basis:
/// `(sum_n (1 + (n pi)^2)^tau c_n^2 / 2)^{1/2}` in 1D and the product-weight
/// analogue `sum_k prod_j (1 + (k_j pi)^2)^{tau_j} c_k^2 / 2^d` for tensor series.
pub fn spectral_norm(f: &TestFunction, tau: &[f64]) -> Result<f64> {
    let w = |k: f64, t: f64| (1.0 + (k * PI).powi(2)).powf(t);
    match f {
        TestFunction::SineSeries { coeffs, .. } => {
            if tau.len() != 1 {
                return domain("a 1D series needs one smoothness exponent");
            }
            let s: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| w((i + 1) as f64, tau[0]) * c * c / 2.0)
                .sum();
            Ok(s.sqrt())
        }
        TestFunction::TensorSineSeries { modes, r_tilde } => {
            if tau.len() != r_tilde.len() {
                return domain("one smoothness exponent per axis is required");
            }
            let scale = 0.5f64.powi(tau.len() as i32);
            let s: f64 = modes
                .iter()
                .map(|m| {
                    m.k.iter()
                        .zip(tau)
                        .fold(m.c * m.c * scale, |acc, (&k, &t)| acc * w(k as f64, t))
                })
                .sum();
            Ok(s.sqrt())
        }
        _ => Err(Error::Unsupported(
            "spectral norms exist only for sine series".into(),
        )),
    }
}

/// Serializable description of a test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionRecipe {
    SineSeries {
        tau_tilde: f64,
        m: usize,
        seed: u64,
    },
    TensorSineSeries {
        r_tilde: Vec<f64>,
        m: usize,
        seed: u64,
    },
    RkhsSection {
        center: Vec<f64>,
        kernel: KernelSpec,
    },
}

impl TestFunctionRecipe {
    pub fn build(&self) -> Result<TestFunction> {
        match self {
            TestFunctionRecipe::SineSeries { tau_tilde, m, seed } => {
                make_sine_series(*tau_tilde, *m, *seed)
            }
            TestFunctionRecipe::TensorSineSeries { r_tilde, m, seed } => {
                make_tensor_sine_series(r_tilde, *m, *seed)
            }
            TestFunctionRecipe::RkhsSection { center, kernel } => {
                kernel.validate()?;
                kernel.check_dim(center.len())?;
                if !BoxDomain::unit(center.len()).contains(center) {
                    return domain("kernel-section center must lie in the unit cube");
                }
                Ok(TestFunction::RkhsSection {
                    center: center.clone(),
                    spec: kernel.clone(),
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TestFunctionRecipe::SineSeries { .. } => 1,
            TestFunctionRecipe::TensorSineSeries { r_tilde, .. } => r_tilde.len(),
            TestFunctionRecipe::RkhsSection { center, .. } => center.len(),
        }
    }
}

/// Evaluation grid used for L2 and sup norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvalGridSpec {
    /// Midpoint grid with `2^12` points in 1D, `2^7` per axis in 2D and 3D;
    /// `2^14` Halton points beyond.
    #[default]
    Default,
    Midpoint {
        n_per_axis: usize,
    },
    Halton {
        n: usize,
    },
}

impl EvalGridSpec {
    pub fn build(&self, domain: &BoxDomain) -> Result<DesignSet> {
        match *self {
            EvalGridSpec::Default => match domain.dim() {
                1 => midpoint_grid(domain, 1 << 12),
                2 | 3 => midpoint_grid(domain, 1 << 7),
                _ => halton(domain, 1 << 14),
            },
            EvalGridSpec::Midpoint { n_per_axis } => midpoint_grid(domain, n_per_axis),
            EvalGridSpec::Halton { n } => halton(domain, n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub l2_error: f64,
    pub sup_error: f64,
    /// `(mean over the grid of k_N(u,u) * |U|)^{1/2}`.
    pub avg_pred_sd: f64,
    /// Largest predictive standard deviation on the grid.
    pub max_pred_sd: f64,
    pub grid_size: usize,
    /// Negative predictive variances clamped to zero.
    pub clamped_variances: usize,
}

/// Error norms of `gp` against `f` on an equal-weight grid.
pub fn error_norms(gp: &FittedGp, f: &TestFunction, grid: &DesignSet) -> Result<ErrorReport> {
    let truth = f.eval_on(grid);
    error_norms_with_truth(gp, &truth, grid)
}

/// As [`error_norms`], with the true values on the grid supplied.
pub fn error_norms_with_truth(
    gp: &FittedGp,
    truth: &[f64],
    grid: &DesignSet,
) -> Result<ErrorReport> {
    if grid.is_empty() || truth.len() != grid.len() {
        return domain("one true value per nonempty grid point is required");
    }
    let mean = gp.predict_mean_batch(grid)?;
    let var = gp.predict_var_batch(grid)?;
    let vol = grid.domain().volume();
    let n = grid.len() as f64;
    let sq: f64 = truth
        .iter()
        .zip(&mean)
        .map(|(t, m)| (t - m) * (t - m))
        .sum();
    let sup = truth
        .iter()
        .zip(&mean)
        .map(|(t, m)| (t - m).abs())
        .fold(0.0, f64::max);
    let vsum: f64 = var.values.iter().sum();
    let vmax = var.values.iter().copied().fold(0.0, f64::max);
    Ok(ErrorReport {
        l2_error: (sq / n * vol).sqrt(),
        sup_error: sup,
        avg_pred_sd: (vsum / n * vol).sqrt(),
        max_pred_sd: vmax.sqrt(),
        grid_size: grid.len(),
        clamped_variances: var.clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::uniform_grid;
    use crate::regression::fit;

    #[test]
    fn single_mode_examples() {
        let f = TestFunction::SineSeries {
            coeffs: vec![1.0],
            tau_tilde: 2.0,
        };
        assert!((f.eval(&[0.5]) - 1.0).abs() < 1e-15);
        let g = make_sine_series(1.5, 40, 3).unwrap();
        assert!(g.eval(&[0.0]).abs() < 1e-15);
        assert!((spectral_norm(&f, &[0.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let z = TestFunction::SineSeries {
            coeffs: vec![0.0; 5],
            tau_tilde: 2.0,
        };
        assert_eq!(spectral_norm(&z, &[1.3]).unwrap(), 0.0);
    }

    #[test]
    fn recurrence_matches_direct_sines() {
        let g = make_sine_series(2.0, 3000, 1).unwrap();
        if let TestFunction::SineSeries { coeffs, .. } = &g {
            for &x in &[0.013, 0.37, 0.5, 0.999] {
                let direct: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * ((i + 1) as f64 * PI * x).sin())
                    .sum();
                assert!((g.eval(&[x]) - direct).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn parseval_against_quadrature() {
        let g = make_sine_series(1.5, 64, 8).unwrap();
        // Midpoint rule is exact for trigonometric polynomials of degree < 2n.
        let grid = midpoint_grid(&BoxDomain::unit(1), 4096).unwrap();
        let q: f64 = g.eval_on(&grid).iter().map(|v| v * v).sum::<f64>() / 4096.0;
        let s = spectral_norm(&g, &[0.0]).unwrap();
        assert!((s * s - q).abs() <= 1e-6 * q);
    }

    #[test]
    fn spectral_norm_nondecreasing_in_tau() {
        let g = make_sine_series(2.5, 50, 2).unwrap();
        let mut prev = 0.0;
        for i in 0..20 {
            let s = spectral_norm(&g, &[i as f64 * 0.15]).unwrap();
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn tensor_single_mode_is_product_of_1d() {
        let a = TestFunction::SineSeries {
            coeffs: vec![0.0, 0.0, 0.7],
            tau_tilde: 2.0,
        };
        let b = TestFunction::SineSeries {
            coeffs: vec![0.0, -1.3],
            tau_tilde: 2.0,
        };
        let t = TestFunction::TensorSineSeries {
            modes: vec![SineMode {
                k: vec![3, 2],
                c: 0.7 * -1.3,
            }],
            r_tilde: vec![2.0, 2.0],
        };
        let want = spectral_norm(&a, &[2.0]).unwrap() * spectral_norm(&b, &[2.0]).unwrap();
        let got = spectral_norm(&t, &[2.0, 2.0]).unwrap();
        assert!((got - want).abs() <= 1e-12 * want);
        let u = [0.3, 0.8];
        assert!((t.eval(&u) - a.eval(&u[..1]) * b.eval(&u[1..])).abs() < 1e-14);
    }

    #[test]
    fn tensor_series_mode_count_and_decay() {
        let t = make_tensor_sine_series(&[2.0, 1.5], 6, 4).unwrap();
        if let TestFunction::TensorSineSeries { modes, .. } = &t {
            assert_eq!(modes.len(), 36);
            let last = modes.last().unwrap();
            assert_eq!(last.k, vec![6, 6]);
            assert!((last.c.abs() - 6f64.powf(-2.5) * 6f64.powf(-2.0)).abs() < 1e-15);
        }
        assert!(make_tensor_sine_series(&[0.4], 3, 0).is_err());
    }

    #[test]
    fn recipes_round_trip() {
        let r = TestFunctionRecipe::SineSeries {
            tau_tilde: 2.5,
            m: 128,
            seed: 3,
        };
        let json = serde_json::to_string(&r).unwrap();
        let back: TestFunctionRecipe = serde_json::from_str(&json).unwrap();
        assert_eq!(r, back);
        let a = r.build().unwrap();
        let b = back.build().unwrap();
        assert_eq!(a.eval(&[0.3]), b.eval(&[0.3]));
    }

    #[test]
    fn error_norms_zero_function_is_exactly_zero() {
        let spec = KernelSpec::matern(1.0, 0.2, 1.5).unwrap();
        let d = uniform_grid(&BoxDomain::unit(1), 6).unwrap();
        let gp = fit(&spec, &d, &[0.0; 6]).unwrap();
        let zero = TestFunction::Custom {
            f: Arc::new(|_| 0.0),
            dim: 1,
        };
        let grid = midpoint_grid(&BoxDomain::unit(1), 100).unwrap();
        let r = error_norms(&gp, &zero, &grid).unwrap();
        assert_eq!((r.l2_error, r.sup_error), (0.0, 0.0));
    }

    #[test]
    fn error_norms_at_data_and_l2_le_sup() {
        let spec = KernelSpec::matern(1.0, 0.2, 1.5).unwrap();
        let d = uniform_grid(&BoxDomain::unit(1), 16).unwrap();
        let f = make_sine_series(2.0, 64, 5).unwrap();
        let gp = fit(&spec, &d, &f.eval_on(&d)).unwrap();
        let r = error_norms(&gp, &f, &d).unwrap();
        assert!(r.sup_error <= 1e-6 * 2.0);
        let grid = midpoint_grid(&BoxDomain::unit(1), 1000).unwrap();
        let r = error_norms(&gp, &f, &grid).unwrap();
        assert!(r.l2_error <= r.sup_error);
        let tiny = fit(&spec.with_sigma2(1e-12), &d, &f.eval_on(&d)).unwrap();
        assert!(error_norms(&tiny, &f, &grid).unwrap().avg_pred_sd < 1e-6);
    }
}
