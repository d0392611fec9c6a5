//! GP predictive mean and covariance under plug-in hyper-parameters,
//! predictive-process sampling and native-space norms.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::designs::DesignSet;
use crate::error::{domain, Error, Result};
use crate::kernels::{
    cross_covariance, factorize_with_nugget, gram, kernel_matrix, KernelMatrix, KernelSpec,
    DEFAULT_NUGGET,
};
use crate::rng::rng_for;

/// Relative jitter added to predictive covariances before sampling.
pub const SAMPLE_JITTER: f64 = 1e-10;

const BATCH: usize = 256;

/// Posterior state after conditioning on `f(D_N)`. Immutable.
#[derive(Debug, Clone)]
pub struct FittedGp {
    spec: KernelSpec,
    design: DesignSet,
    values: Vec<f64>,
    kernel: Arc<KernelMatrix>,
    alpha: DVector<f64>,
}

/// Predictive variances on a batch of points.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceBatch {
    pub values: Vec<f64>,
    /// Number of negative round-off values clamped to zero.
    pub clamped: usize,
}

/// Predictive covariance on a grid.
#[derive(Debug, Clone)]
pub struct PredictiveCov {
    pub matrix: DMatrix<f64>,
    /// Whether negative eigenvalues had to be floored at zero.
    pub floored: bool,
}

/// Fits the GP with the default nugget.
pub fn fit(spec: &KernelSpec, design: &DesignSet, fvals: &[f64]) -> Result<FittedGp> {
    FittedGp::new(spec, design, fvals, DEFAULT_NUGGET)
}

impl FittedGp {
    pub fn new(spec: &KernelSpec, design: &DesignSet, fvals: &[f64], nugget: f64) -> Result<Self> {
        let km = kernel_matrix(spec, design, nugget)?;
        Self::with_kernel(spec, design, fvals, Arc::new(km))
    }

    /// Fits against an already factorized kernel matrix of `design`.
    pub fn with_kernel(
        spec: &KernelSpec,
        design: &DesignSet,
        fvals: &[f64],
        kernel: Arc<KernelMatrix>,
    ) -> Result<Self> {
        if fvals.len() != design.len() {
            return domain(format!(
                "{} values supplied for {} design points",
                fvals.len(),
                design.len()
            ));
        }
        if design.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if !fvals.iter().all(|v| v.is_finite()) {
            return domain("observed values must be finite");
        }
        let resid = DVector::from_iterator(
            design.len(),
            design.points().zip(fvals).map(|(u, f)| f - spec.m(u)),
        );
        let alpha = kernel.factor.solve(&resid);
        Ok(Self {
            spec: spec.clone(),
            design: design.clone(),
            values: fvals.to_vec(),
            kernel,
            alpha,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn design(&self) -> &DesignSet {
        &self.design
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn nugget_used(&self) -> f64 {
        self.kernel.nugget
    }

    pub fn kernel(&self) -> &Arc<KernelMatrix> {
        &self.kernel
    }

    /// Lower Cholesky factor of the (nugget-augmented) kernel matrix.
    pub fn factor_l(&self) -> DMatrix<f64> {
        self.kernel.factor.l()
    }

    fn k_vec(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.design.len(),
            self.design.points().map(|z| self.spec.k(u, z)),
        )
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.design.dim() {
            return domain(format!(
                "point has {} coordinates, model is {}-dimensional",
                u.len(),
                self.design.dim()
            ));
        }
        Ok(())
    }

    /// `m(u) + k(u, D)^T alpha`.
    pub fn predict_mean(&self, u: &[f64]) -> Result<f64> {
        self.check_point(u)?;
        Ok(self.mean_unchecked(u))
    }

    fn mean_unchecked(&self, u: &[f64]) -> f64 {
        self.spec.m(u) + self.k_vec(u).dot(&self.alpha)
    }

    /// `k(u,u) - |L^{-1} k(u, D)|^2`, clamped at zero.
    pub fn predict_var(&self, u: &[f64]) -> Result<f64> {
        self.check_point(u)?;
        Ok(self.var_unchecked(u).0)
    }

    fn var_unchecked(&self, u: &[f64]) -> (f64, bool) {
        let v = self
            .kernel
            .factor
            .l_dirty()
            .solve_lower_triangular(&self.k_vec(u))
            .expect("factor has a positive diagonal");
        let var = self.spec.k(u, u) - v.norm_squared();
        if var < 0.0 {
            (0.0, true)
        } else {
            (var, false)
        }
    }

    /// Predictive means at every grid point.
    pub fn predict_mean_batch(&self, grid: &DesignSet) -> Result<Vec<f64>> {
        self.check_point(grid.point(0))?;
        Ok((0..grid.len())
            .into_par_iter()
            .with_min_len(BATCH)
            .map(|i| self.mean_unchecked(grid.point(i)))
            .collect())
    }

    /// Predictive variances at every grid point.
    pub fn predict_var_batch(&self, grid: &DesignSet) -> Result<VarianceBatch> {
        self.check_point(grid.point(0))?;
        let pairs: Vec<(f64, bool)> = (0..grid.len())
            .into_par_iter()
            .with_min_len(BATCH)
            .map(|i| self.var_unchecked(grid.point(i)))
            .collect();
        Ok(VarianceBatch {
            clamped: pairs.iter().filter(|p| p.1).count(),
            values: pairs.into_iter().map(|p| p.0).collect(),
        })
    }

    /// `k(u,u') - k(u,D)^T K^{-1} k(u',D)` on `grid x grid`, without any
    /// eigenvalue floor. Exactly symmetric.
    pub fn predict_cov_raw(&self, grid: &DesignSet) -> Result<DMatrix<f64>> {
        self.check_point(grid.point(0))?;
        let kx = cross_covariance(&self.spec, &self.design, grid);
        let v = self
            .kernel
            .factor
            .l_dirty()
            .solve_lower_triangular(&kx)
            .expect("factor has a positive diagonal");
        let prior = gram(&self.spec, grid);
        let vtv = v.tr_mul(&v);
        let m = grid.len();
        let mut c = prior - vtv;
        for j in 0..m {
            for i in j + 1..m {
                let s = 0.5 * (c[(i, j)] + c[(j, i)]);
                c[(i, j)] = s;
                c[(j, i)] = s;
            }
        }
        Ok(c)
    }

    /// Predictive covariance, projected onto the positive-semidefinite cone by
    /// flooring negative eigenvalues at zero.
    pub fn predict_cov(&self, grid: &DesignSet) -> Result<PredictiveCov> {
        let c = self.predict_cov_raw(grid)?;
        let eig = c.clone().symmetric_eigen();
        if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
            return Ok(PredictiveCov {
                matrix: c,
                floored: false,
            });
        }
        let lam = eig.eigenvalues.map(|l| l.max(0.0));
        let q = &eig.eigenvectors;
        let mut m = q * DMatrix::from_diagonal(&lam) * q.transpose();
        let n = m.nrows();
        for j in 0..n {
            for i in j + 1..n {
                let s = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        Ok(PredictiveCov {
            matrix: m,
            floored: true,
        })
    }

    /// Native-space norm of the interpolant, `sqrt(alpha^T (f - m(D)))`.
    pub fn interpolant_norm(&self) -> f64 {
        let quad: f64 = self
            .design
            .points()
            .zip(&self.values)
            .zip(self.alpha.iter())
            .map(|((u, f), a)| a * (f - self.spec.m(u)))
            .sum();
        quad.max(0.0).sqrt()
    }
}

/// Draws from the predictive process on `grid`: `n_draws` vectors from the
/// multivariate normal with the predictive mean and covariance plus jitter.
pub fn sample_process(
    gp: &FittedGp,
    grid: &DesignSet,
    seed: u64,
    n_draws: usize,
) -> Result<Vec<Vec<f64>>> {
    let sampler = ProcessSampler::new(gp, grid)?;
    Ok((0..n_draws as u64).map(|k| sampler.draw(seed, k)).collect())
}

/// Factorized predictive distribution on a fixed grid, reusable across draws.
#[derive(Debug, Clone)]
pub struct ProcessSampler {
    mean: Vec<f64>,
    chol: DMatrix<f64>,
    pub jitter_used: f64,
}

impl ProcessSampler {
    pub fn new(gp: &FittedGp, grid: &DesignSet) -> Result<Self> {
        let mean = gp.predict_mean_batch(grid)?;
        let cov = gp.predict_cov_raw(grid)?;
        let km = factorize_with_nugget(cov, gp.spec.sigma2(), SAMPLE_JITTER)?;
        Ok(Self {
            mean,
            chol: km.factor.l(),
            jitter_used: km.nugget,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Draw number `k` of the stream identified by `seed`.
    pub fn draw(&self, seed: u64, k: u64) -> Vec<f64> {
        let mut rng = rng_for(seed, k);
        let z = DVector::from_iterator(
            self.mean.len(),
            (0..self.mean.len()).map(|_| StandardNormal.sample(&mut rng)),
        );
        let x = &self.chol * z;
        self.mean.iter().zip(x.iter()).map(|(m, e)| m + e).collect()
    }
}

/// `g(u) = sum_i a_i k(u, z_i)`, an element of the native space.
#[derive(Debug, Clone)]
pub struct RkhsFunction {
    pub centers: DesignSet,
    pub weights: Vec<f64>,
    pub spec: KernelSpec,
}

impl RkhsFunction {
    pub fn new(centers: DesignSet, weights: Vec<f64>, spec: KernelSpec) -> Result<Self> {
        if centers.len() != weights.len() {
            return domain("one weight per center is required");
        }
        spec.validate()?;
        spec.check_dim(centers.dim())?;
        Ok(Self {
            centers,
            weights,
            spec,
        })
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.centers
            .points()
            .zip(&self.weights)
            .map(|(z, a)| a * self.spec.k(u, z))
            .sum()
    }

    /// Copy scaled to unit native norm (unchanged if the norm is zero).
    pub fn normalized(&self) -> Result<Self> {
        let n = rkhs_norm(self)?;
        let mut g = self.clone();
        if n > 0.0 {
            g.weights.iter_mut().for_each(|a| *a /= n);
        }
        Ok(g)
    }
}

/// `sqrt(a^T K(z) a)`.
pub fn rkhs_norm(g: &RkhsFunction) -> Result<f64> {
    // Factorization check only; the quadratic form uses the exact Gram matrix.
    kernel_matrix(&g.spec, &g.centers, 0.0)?;
    let k = gram(&g.spec, &g.centers);
    let a = DVector::from_column_slice(&g.weights);
    Ok(a.dot(&(&k * &a)).max(0.0).sqrt())
}

/// Independent GPs for a vector-valued function sharing one design.
#[derive(Debug, Clone)]
pub struct MultiOutputGp {
    pub outputs: Vec<FittedGp>,
}

impl MultiOutputGp {
    /// Same kernel for every output; the factorization is shared.
    /// `values[n]` holds the `d_y` outputs at design point `n`.
    pub fn fit(spec: &KernelSpec, design: &DesignSet, values: &[Vec<f64>]) -> Result<Self> {
        Self::fit_with_nugget(spec, design, values, DEFAULT_NUGGET)
    }

    pub fn fit_with_nugget(
        spec: &KernelSpec,
        design: &DesignSet,
        values: &[Vec<f64>],
        nugget: f64,
    ) -> Result<Self> {
        let dy = output_dim(values)?;
        let km = Arc::new(kernel_matrix(spec, design, nugget)?);
        let outputs = (0..dy)
            .map(|k| FittedGp::with_kernel(spec, design, &column(values, k), km.clone()))
            .collect::<Result<_>>()?;
        Ok(Self { outputs })
    }

    /// One kernel per output.
    pub fn fit_per_output(
        specs: &[KernelSpec],
        design: &DesignSet,
        values: &[Vec<f64>],
        nugget: f64,
    ) -> Result<Self> {
        let dy = output_dim(values)?;
        if specs.len() != dy {
            return domain("one kernel per output is required");
        }
        let outputs = specs
            .iter()
            .enumerate()
            .map(|(k, s)| FittedGp::new(s, design, &column(values, k), nugget))
            .collect::<Result<_>>()?;
        Ok(Self { outputs })
    }

    pub fn dim_out(&self) -> usize {
        self.outputs.len()
    }

    pub fn predict_mean(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.outputs.iter().map(|g| g.predict_mean(u)).collect()
    }

    /// Predictive variance of each output.
    pub fn predict_var(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.outputs.iter().map(|g| g.predict_var(u)).collect()
    }
}

fn output_dim(values: &[Vec<f64>]) -> Result<usize> {
    let dy = values.first().map_or(0, Vec::len);
    if dy == 0 || values.iter().any(|v| v.len() != dy) {
        return domain("outputs must be nonempty and of equal length");
    }
    Ok(dy)
}

fn column(values: &[Vec<f64>], k: usize) -> Vec<f64> {
    values.iter().map(|v| v[k]).collect()
}
