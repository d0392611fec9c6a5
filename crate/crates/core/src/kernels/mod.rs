//! Matérn and separable Matérn covariance kernels, polynomial prior means,
//! kernel-matrix assembly with a nugget escalation policy, and the Matérn
//! spectral density.
//!
//! The Matérn kernel is parameterised as
//!
//! ```text
//! k(r) = sigma2 / (Gamma(nu) 2^(nu-1)) * (r/lambda)^nu * K_nu(r/lambda)
//! ```
//!
//! i.e. the scaled distance is `r / lambda` without the `sqrt(2 nu)` factor
//! used by some libraries. With this convention the native space on a
//! `d`-dimensional domain is the Sobolev space of order `nu + d/2`.

mod bessel;

pub use bessel::{bessel_k, ln_bessel_k, BesselK};

use std::f64::consts::{LN_2, PI};

use nalgebra::{Cholesky, DMatrix, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::designs::DesignSet;
use crate::error::{domain, Error, Result};

/// Default relative nugget added to the kernel-matrix diagonal.
pub const DEFAULT_NUGGET: f64 = 1e-10;
/// Number of tenfold nugget escalations attempted before giving up.
pub const MAX_NUGGET_ESCALATIONS: usize = 6;

/// Largest `nu - 1/2` for which the half-integer closed form is used.
const MAX_CLOSED_FORM_ORDER: u32 = 12;

/// Hyper-parameters `{sigma2, lambda, nu}` of an isotropic Matérn kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaternParams {
    pub sigma2: f64,
    pub lambda: f64,
    pub nu: f64,
}

impl MaternParams {
    pub fn new(sigma2: f64, lambda: f64, nu: f64) -> Result<Self> {
        let p = Self { sigma2, lambda, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("sigma2", self.sigma2)?;
        check_positive("lambda", self.lambda)?;
        check_positive("nu", self.nu)
    }

    /// Sobolev order `nu + d/2` of the native space on a `d`-dimensional domain.
    pub fn sobolev_order(&self, dim: usize) -> f64 {
        self.nu + dim as f64 / 2.0
    }

    /// Kernel value at distance `r >= 0`. Parameters are assumed valid.
    pub fn value(&self, r: f64) -> f64 {
        self.sigma2 * unit_matern(self.nu, r / self.lambda)
    }
}

/// Per-axis parameters of a separable Matérn kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisParams {
    pub lambda: f64,
    pub nu: f64,
}

/// Hyper-parameters of a separable (tensor-product) Matérn kernel.
///
/// `sigma2` is the product of the per-axis marginal variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SepMaternParams {
    pub sigma2: f64,
    pub per_dim: Vec<AxisParams>,
}

impl SepMaternParams {
    pub fn new(sigma2: f64, per_dim: Vec<AxisParams>) -> Result<Self> {
        let p = Self { sigma2, per_dim };
        p.validate()?;
        Ok(p)
    }

    /// Same `(lambda, nu)` on each of `dim` axes.
    pub fn isotropic(sigma2: f64, lambda: f64, nu: f64, dim: usize) -> Result<Self> {
        Self::new(sigma2, vec![AxisParams { lambda, nu }; dim])
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("sigma2", self.sigma2)?;
        if self.per_dim.is_empty() {
            return domain("separable Matérn kernel needs at least one axis");
        }
        for a in &self.per_dim {
            check_positive("lambda_j", a.lambda)?;
            check_positive("nu_j", a.nu)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.per_dim.len()
    }

    /// Per-axis Sobolev orders `nu_j + 1/2` of the mixed-smoothness native space.
    pub fn sobolev_orders(&self) -> Vec<f64> {
        self.per_dim.iter().map(|a| a.nu + 0.5).collect()
    }

    pub fn value(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut k = self.sigma2;
        for ((a, x), y) in self.per_dim.iter().zip(u).zip(v) {
            k *= unit_matern(a.nu, (x - y).abs() / a.lambda);
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Matern,
    SeparableMatern,
}

/// Covariance hyper-parameters, tagged by kernel family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovParams {
    Matern(MaternParams),
    SeparableMatern(SepMaternParams),
}

impl CovParams {
    pub fn family(&self) -> KernelFamily {
        match self {
            CovParams::Matern(_) => KernelFamily::Matern,
            CovParams::SeparableMatern(_) => KernelFamily::SeparableMatern,
        }
    }

    pub fn sigma2(&self) -> f64 {
        match self {
            CovParams::Matern(p) => p.sigma2,
            CovParams::SeparableMatern(p) => p.sigma2,
        }
    }

    /// Copy with the marginal variance replaced.
    pub fn with_sigma2(&self, sigma2: f64) -> Self {
        match self {
            CovParams::Matern(p) => CovParams::Matern(MaternParams { sigma2, ..*p }),
            CovParams::SeparableMatern(p) => CovParams::SeparableMatern(SepMaternParams {
                sigma2,
                per_dim: p.per_dim.clone(),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CovParams::Matern(p) => p.validate(),
            CovParams::SeparableMatern(p) => p.validate(),
        }
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            CovParams::Matern(p) => p.value(euclidean(u, v)),
            CovParams::SeparableMatern(p) => p.value(u, v),
        }
    }
}

/// One monomial `coefficient * prod_j u_j^exponents[j]` of a polynomial mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialTerm {
    pub exponents: Vec<u32>,
    pub coefficient: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeanKind {
    #[default]
    Zero,
    Polynomial,
}

/// Prior mean function: identically zero or a polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MeanSpec {
    pub kind: MeanKind,
    #[serde(default)]
    pub terms: Vec<MonomialTerm>,
    #[serde(default)]
    pub max_degree: u32,
}

impl MeanSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn polynomial(terms: Vec<MonomialTerm>) -> Result<Self> {
        let max_degree = terms
            .iter()
            .flat_map(|t| t.exponents.iter().copied())
            .max()
            .unwrap_or(0);
        let m = Self {
            kind: MeanKind::Polynomial,
            terms,
            max_degree,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn is_zero(&self) -> bool {
        self.kind == MeanKind::Zero
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            MeanKind::Zero if !self.terms.is_empty() => {
                domain("zero mean must not carry coefficients")
            }
            MeanKind::Zero => Ok(()),
            MeanKind::Polynomial => {
                let dim = self.terms.first().map(|t| t.exponents.len());
                for t in &self.terms {
                    if Some(t.exponents.len()) != dim {
                        return domain("polynomial terms have inconsistent dimensions");
                    }
                    if t.exponents.iter().any(|&e| e > self.max_degree) {
                        return domain("monomial exponent exceeds max_degree");
                    }
                    if !t.coefficient.is_finite() {
                        return domain("polynomial coefficient is not finite");
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        match self.kind {
            MeanKind::Zero => 0.0,
            MeanKind::Polynomial => self
                .terms
                .iter()
                .map(|t| {
                    t.exponents
                        .iter()
                        .zip(u)
                        .fold(t.coefficient, |acc, (&e, &x)| acc * x.powi(e as i32))
                })
                .sum(),
        }
    }
}

/// Evaluates the prior mean at `u`, checking the dimension.
pub fn mean_eval(mean: &MeanSpec, u: &[f64]) -> Result<f64> {
    if let Some(t) = mean.terms.first() {
        if t.exponents.len() != u.len() {
            return domain(format!(
                "mean is {}-dimensional but point has {} coordinates",
                t.exponents.len(),
                u.len()
            ));
        }
    }
    Ok(mean.eval(u))
}

/// Kernel family, covariance hyper-parameters and prior mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub cov: CovParams,
    #[serde(default)]
    pub mean: MeanSpec,
}

impl KernelSpec {
    pub fn matern(sigma2: f64, lambda: f64, nu: f64) -> Result<Self> {
        Ok(Self {
            cov: CovParams::Matern(MaternParams::new(sigma2, lambda, nu)?),
            mean: MeanSpec::zero(),
        })
    }

    pub fn separable(params: SepMaternParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            cov: CovParams::SeparableMatern(params),
            mean: MeanSpec::zero(),
        })
    }

    pub fn with_mean(mut self, mean: MeanSpec) -> Self {
        self.mean = mean;
        self
    }

    pub fn family(&self) -> KernelFamily {
        self.cov.family()
    }

    pub fn sigma2(&self) -> f64 {
        self.cov.sigma2()
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Self {
        Self {
            cov: self.cov.with_sigma2(sigma2),
            mean: self.mean.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cov.validate()?;
        self.mean.validate()
    }

    /// Checks that the kernel can act on `dim`-dimensional points.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if let CovParams::SeparableMatern(p) = &self.cov {
            if p.dim() != dim {
                return domain(format!(
                    "separable kernel has {} axes but points are {dim}-dimensional",
                    p.dim()
                ));
            }
        }
        if let Some(t) = self.mean.terms.first() {
            if t.exponents.len() != dim {
                return domain("mean dimension does not match points");
            }
        }
        Ok(())
    }

    #[inline]
    pub fn k(&self, u: &[f64], v: &[f64]) -> f64 {
        self.cov.eval(u, v)
    }

    #[inline]
    pub fn m(&self, u: &[f64]) -> f64 {
        self.mean.eval(u)
    }
}

/// Matérn kernel at distance `r`.
pub fn matern_eval(params: &MaternParams, r: f64) -> Result<f64> {
    params.validate()?;
    if !(r.is_finite() && r >= 0.0) {
        return domain(format!("distance must be finite and nonnegative, got {r}"));
    }
    Ok(params.value(r))
}

/// Matérn kernel at distance `r`, always through the Bessel-function path
/// (no half-integer closed forms).
pub fn matern_eval_general(params: &MaternParams, r: f64) -> Result<f64> {
    params.validate()?;
    if !(r.is_finite() && r >= 0.0) {
        return domain(format!("distance must be finite and nonnegative, got {r}"));
    }
    Ok(params.sigma2 * unit_matern_bessel(params.nu, r / params.lambda))
}

/// Separable Matérn kernel between two points.
pub fn sepmatern_eval(params: &SepMaternParams, u: &[f64], v: &[f64]) -> Result<f64> {
    params.validate()?;
    if u.len() != params.dim() || v.len() != params.dim() {
        return domain(format!(
            "separable kernel has {} axes, points have {} and {} coordinates",
            params.dim(),
            u.len(),
            v.len()
        ));
    }
    Ok(params.value(u, v))
}

/// Matérn spectral density at frequency norm `omega_norm` in `dim` dimensions,
/// normalised so that its integral over `R^dim` equals `k(0) = sigma2`.
pub fn matern_spectral_density(params: &MaternParams, dim: usize, omega_norm: f64) -> Result<f64> {
    params.validate()?;
    if dim == 0 {
        return domain("dimension must be at least 1");
    }
    if !(omega_norm.is_finite() && omega_norm >= 0.0) {
        return domain("frequency norm must be finite and nonnegative");
    }
    let half_d = dim as f64 / 2.0;
    let MaternParams { sigma2, lambda, nu } = *params;
    let ln_c = ln_gamma(nu + half_d) - ln_gamma(nu) - half_d * PI.ln() + dim as f64 * lambda.ln();
    let ln_tail = -(nu + half_d) * (lambda * lambda * omega_norm * omega_norm).ln_1p();
    Ok(sigma2 * (ln_c + ln_tail).exp())
}

/// Unit-variance Matérn correlation at scaled distance `x = r / lambda`.
pub(crate) fn unit_matern(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    match half_integer_order(nu) {
        Some(p) => half_integer_matern(p, x),
        None => unit_matern_bessel(nu, x),
    }
}

fn half_integer_order(nu: f64) -> Option<u32> {
    let p = nu - 0.5;
    (p >= 0.0 && p.fract() == 0.0 && p <= MAX_CLOSED_FORM_ORDER as f64).then_some(p as u32)
}

/// `exp(-x) p!/(2p)! sum_{i=0}^{p} (p+i)!/(i!(p-i)!) (2x)^(p-i)` for `nu = p + 1/2`.
fn half_integer_matern(p: u32, x: f64) -> f64 {
    let mut poly = 0.0;
    // Horner in (2x) from the highest power down; coefficient of (2x)^(p-i).
    for i in 0..=p {
        poly = poly * 2.0 * x + factorial_ratio(p, i);
    }
    (-x).exp() * poly
}

/// `p!/(2p)! * (p+i)!/(i!(p-i)!)`.
fn factorial_ratio(p: u32, i: u32) -> f64 {
    let ln = ln_factorial(p) - ln_factorial(2 * p) + ln_factorial(p + i)
        - ln_factorial(i)
        - ln_factorial(p - i);
    ln.exp()
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn unit_matern_bessel(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    // x > 0 and nu > 0 are guaranteed by callers.
    let ln_k = ln_bessel_k(nu, x).expect("positive order and argument");
    let ln_val = nu * x.ln() + ln_k - ln_gamma(nu) - (nu - 1.0) * LN_2;
    ln_val.exp().min(1.0)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        domain(format!("{name} must be positive and finite, got {v}"))
    }
}

#[inline]
pub(crate) fn euclidean(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// A kernel matrix together with its Cholesky factor.
///
/// `matrix` includes the nugget `nugget * sigma2` on the diagonal.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub matrix: DMatrix<f64>,
    pub factor: Cholesky<f64, Dyn>,
    pub nugget: f64,
}

/// Assembles `K_ij = k(u_i, u_j) + nugget * sigma2 * [i == j]` and factorizes
/// it, escalating the nugget tenfold (at most [`MAX_NUGGET_ESCALATIONS`]
/// times) until the Cholesky factorization succeeds.
pub fn kernel_matrix(spec: &KernelSpec, design: &DesignSet, nugget: f64) -> Result<KernelMatrix> {
    spec.validate()?;
    spec.check_dim(design.dim())?;
    if !(nugget.is_finite() && nugget >= 0.0) {
        return domain("nugget must be finite and nonnegative");
    }
    let base = gram(spec, design);
    factorize_with_nugget(base, spec.sigma2(), nugget)
}

/// Symmetric Gram matrix without any nugget. Exactly symmetric by construction.
pub fn gram(spec: &KernelSpec, design: &DesignSet) -> DMatrix<f64> {
    let n = design.len();
    // Lower triangle computed once per column, mirrored afterwards.
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let uj = design.point(j);
            (j..n).map(|i| spec.k(design.point(i), uj)).collect()
        })
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for (j, col) in cols.into_iter().enumerate() {
        for (off, v) in col.into_iter().enumerate() {
            let i = j + off;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Adds `nugget * scale` to the diagonal and factorizes, with escalation.
pub(crate) fn factorize_with_nugget(
    base: DMatrix<f64>,
    scale: f64,
    nugget: f64,
) -> Result<KernelMatrix> {
    let mut current = nugget;
    for attempt in 0..=MAX_NUGGET_ESCALATIONS {
        if attempt > 0 {
            current = if current == 0.0 {
                DEFAULT_NUGGET
            } else {
                current * 10.0
            };
        }
        let mut m = base.clone();
        if current > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += current * scale;
            }
        }
        if let Some(factor) = Cholesky::new(m.clone()) {
            if factor
                .l_dirty()
                .diagonal()
                .iter()
                .all(|d| d.is_finite() && *d > 0.0)
            {
                return Ok(KernelMatrix {
                    matrix: m,
                    factor,
                    nugget: current,
                });
            }
        }
    }
    Err(Error::Conditioning { nugget: current })
}

/// Cross-covariance matrix with rows indexed by `a` and columns by `b`.
pub fn cross_covariance(spec: &KernelSpec, a: &DesignSet, b: &DesignSet) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = (0..b.len())
        .into_par_iter()
        .map(|j| {
            let v = b.point(j);
            (0..a.len()).map(|i| spec.k(a.point(i), v)).collect()
        })
        .collect();
    DMatrix::from_fn(a.len(), b.len(), |i, j| cols[j][i])
}
