//! Bayesian inverse problems `y = G(u) + eta` with GP surrogate likelihoods.
//!
//! The reference posterior is computed by tensor midpoint quadrature; the six
//! surrogate-based approximations are evaluated on the same grid and compared
//! in Hellinger distance.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convergence::{fit_rate, CellStatus, DesignFamily, KernelPolicy, RateFit};
use crate::designs::{midpoint_grid, BoxDomain, DesignSet};
use crate::error::{domain, Error, Result};
use crate::kernels::DEFAULT_NUGGET;
use crate::regression::{FittedGp, MultiOutputGp, ProcessSampler};
use crate::rng::{derive_seed, rng_for};

/// Callable forward model `G: U -> R^{d_y}`.
pub trait ForwardMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, u: &[f64]) -> Result<Vec<f64>>;
}

/// `G(u) = u`.
#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub dim: usize,
}

impl ForwardMap for Identity {
    fn dim_in(&self) -> usize {
        self.dim
    }
    fn dim_out(&self) -> usize {
        self.dim
    }
    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(u.to_vec())
    }
}

/// `G(u) = (sin 2 pi u, e^u)` for scalar `u`.
#[derive(Debug, Clone, Copy)]
pub struct SinExp;

impl ForwardMap for SinExp {
    fn dim_in(&self) -> usize {
        1
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![(2.0 * PI * u[0]).sin(), u[0].exp()])
    }
}

/// Mesh size of the built-in boundary-value problem.
pub const BVP_CELLS: usize = 256;
/// Observation points of the built-in boundary-value problem.
pub const BVP_OBSERVATIONS: [f64; 3] = [0.25, 0.5, 0.75];

/// `-(a p')' = 1` on `(0,1)`, `p(0) = p(1) = 0`, where `a = exp(u_j)` on the
/// `j`-th of `d_u` equal sub-intervals. Observes `p` at fixed interior nodes.
#[derive(Debug, Clone)]
pub struct TridiagBvp {
    pub pieces: usize,
    pub cells: usize,
    pub observe_at: Vec<f64>,
}

impl TridiagBvp {
    pub fn new(pieces: usize) -> Result<Self> {
        if pieces == 0 || pieces > BVP_CELLS {
            return domain("number of coefficient pieces must lie in 1..=256");
        }
        Ok(Self {
            pieces,
            cells: BVP_CELLS,
            observe_at: BVP_OBSERVATIONS.to_vec(),
        })
    }

    /// Nodal solution `p_0, ..., p_cells`.
    pub fn solve(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.pieces {
            return domain("parameter length must equal the number of pieces");
        }
        let n = self.cells;
        let h = 1.0 / n as f64;
        // a[i] is the coefficient on cell i, between nodes i and i + 1.
        let a: Vec<f64> = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                let j = ((x * self.pieces as f64) as usize).min(self.pieces - 1);
                u[j].exp()
            })
            .collect();
        if !a.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Forward(
                "diffusion coefficient is not positive and finite".into(),
            ));
        }
        // Thomas algorithm on the interior nodes 1..n-1.
        let m = n - 1;
        let mut c = vec![0.0; m];
        let mut d = vec![0.0; m];
        for k in 0..m {
            let diag = a[k] + a[k + 1];
            let lower = if k > 0 { -a[k] } else { 0.0 };
            let upper = -a[k + 1];
            let denom = diag - lower * if k > 0 { c[k - 1] } else { 0.0 };
            if denom.abs() < f64::MIN_POSITIVE {
                return Err(Error::Forward("singular tridiagonal system".into()));
            }
            c[k] = upper / denom;
            d[k] = (h * h - lower * if k > 0 { d[k - 1] } else { 0.0 }) / denom;
        }
        let mut p = vec![0.0; n + 1];
        for k in (0..m).rev() {
            let next = if k + 1 < m { p[k + 2] } else { 0.0 };
            p[k + 1] = d[k] - c[k] * next;
        }
        Ok(p)
    }
}

impl ForwardMap for TridiagBvp {
    fn dim_in(&self) -> usize {
        self.pieces
    }
    fn dim_out(&self) -> usize {
        self.observe_at.len()
    }
    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        let p = self.solve(u)?;
        Ok(self
            .observe_at
            .iter()
            .map(|x| p[(x * self.cells as f64).round() as usize])
            .collect())
    }
}

/// Built-in forward maps by name: `identity`, `sin-exp`, `tridiag-bvp`.
pub fn forward_by_name(name: &str, dim_in: usize) -> Result<Arc<dyn ForwardMap>> {
    if dim_in == 0 {
        return domain("parameter dimension must be positive");
    }
    match name {
        "identity" => Ok(Arc::new(Identity { dim: dim_in })),
        "sin-exp" if dim_in == 1 => Ok(Arc::new(SinExp)),
        "sin-exp" => domain("sin-exp takes a scalar parameter"),
        "tridiag-bvp" => Ok(Arc::new(TridiagBvp::new(dim_in)?)),
        other => domain(format!("unknown forward map {other:?}")),
    }
}

pub type PriorDensity = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Prior on the parameter box.
#[derive(Clone, Default)]
pub enum Prior {
    #[default]
    Uniform,
    /// Lebesgue density on `U`; must integrate to one.
    Density(PriorDensity),
}

impl fmt::Debug for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prior::Uniform => f.write_str("Uniform"),
            Prior::Density(_) => f.write_str("Density(..)"),
        }
    }
}

const PRIOR_CHECK_TOL: f64 = 1e-6;

fn prior_check_resolution(dim: usize) -> Option<usize> {
    match dim {
        1 => Some(1 << 14),
        2 => Some(512),
        3 => Some(96),
        _ => None,
    }
}

/// Prior, forward map, data and noise covariance.
#[derive(Clone)]
pub struct InverseProblem {
    domain: BoxDomain,
    prior: Prior,
    forward: Arc<dyn ForwardMap>,
    y: DVector<f64>,
    gamma: DMatrix<f64>,
    gamma_chol: Cholesky<f64, Dyn>,
}

impl fmt::Debug for InverseProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InverseProblem")
            .field("domain", &self.domain)
            .field("prior", &self.prior)
            .field("y", &self.y.as_slice())
            .field("gamma", &self.gamma)
            .finish()
    }
}

impl InverseProblem {
    pub fn new(
        domain: BoxDomain,
        prior: Prior,
        forward: Arc<dyn ForwardMap>,
        y: Vec<f64>,
        gamma: DMatrix<f64>,
    ) -> Result<Self> {
        domain.validate()?;
        if forward.dim_in() != domain.dim() {
            return self::domain("forward map input dimension differs from the domain");
        }
        let dy = forward.dim_out();
        if y.len() != dy {
            return self::domain(format!(
                "data has length {}, forward map gives {dy}",
                y.len()
            ));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return self::domain("data must be finite");
        }
        if gamma.shape() != (dy, dy) {
            return self::domain("noise covariance has the wrong shape");
        }
        if !gamma.iter().all(|v| v.is_finite()) || gamma != gamma.transpose() {
            return self::domain("noise covariance must be finite and symmetric");
        }
        let gamma_chol = Cholesky::new(gamma.clone())
            .ok_or_else(|| Error::Domain("noise covariance is not positive definite".into()))?;
        if let Prior::Density(p) = &prior {
            let n = prior_check_resolution(domain.dim()).ok_or_else(|| {
                Error::Unsupported("density priors need a parameter dimension of at most 3".into())
            })?;
            let grid = midpoint_grid(&domain, n)?;
            let w = domain.volume() / grid.len() as f64;
            let mut total = 0.0;
            for u in grid.points() {
                let v = p(u);
                if !(v.is_finite() && v >= 0.0) {
                    return self::domain("prior density must be finite and nonnegative");
                }
                total += w * v;
            }
            if (total - 1.0).abs() > PRIOR_CHECK_TOL {
                return self::domain(format!("prior density integrates to {total}, not 1"));
            }
        }
        Ok(Self {
            domain,
            prior,
            forward,
            y: DVector::from_vec(y),
            gamma,
            gamma_chol,
        })
    }

    /// Uniform prior and `Gamma = noise_var * I`.
    pub fn with_iid_noise(
        domain: BoxDomain,
        forward: Arc<dyn ForwardMap>,
        y: Vec<f64>,
        noise_var: f64,
    ) -> Result<Self> {
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return self::domain("noise variance must be positive and finite");
        }
        let dy = y.len();
        Self::new(
            domain,
            Prior::Uniform,
            forward,
            y,
            DMatrix::identity(dy, dy) * noise_var,
        )
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn forward(&self) -> &Arc<dyn ForwardMap> {
        &self.forward
    }

    pub fn data(&self) -> &[f64] {
        self.y.as_slice()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn dim_in(&self) -> usize {
        self.domain.dim()
    }

    pub fn dim_out(&self) -> usize {
        self.y.len()
    }

    /// Prior density at `u`; zero outside `U`.
    pub fn prior_density(&self, u: &[f64]) -> f64 {
        if !self.domain.contains(u) {
            return 0.0;
        }
        match &self.prior {
            Prior::Uniform => 1.0 / self.domain.volume(),
            Prior::Density(p) => p(u),
        }
    }

    /// `1/2 |y - g|^2_Gamma`.
    pub fn misfit(&self, g: &[f64]) -> f64 {
        let r = &self.y - DVector::from_column_slice(g);
        let s = self.gamma_chol.solve(&r);
        (0.5 * r.dot(&s)).max(0.0)
    }

    fn log_det_gamma(&self) -> f64 {
        2.0 * self
            .gamma_chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
    }

    fn forward_checked(&self, u: &[f64]) -> Result<Vec<f64>> {
        let g = self.forward.eval(u)?;
        if g.len() != self.dim_out() || !g.iter().all(|v| v.is_finite()) {
            return Err(Error::Forward(format!(
                "non-finite or misshapen output at {u:?}"
            )));
        }
        Ok(g)
    }
}

/// `Phi(u) = 1/2 |y - G(u)|^2_Gamma`.
pub fn potential(ip: &InverseProblem, u: &[f64]) -> Result<f64> {
    if !ip.domain.contains(u) {
        return domain("parameter lies outside the domain");
    }
    Ok(ip.misfit(&ip.forward_checked(u)?))
}

/// Tensor midpoint rule on `U` with cached prior density.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    nodes: DesignSet,
    n_per_axis: usize,
    weight: f64,
    prior: Vec<f64>,
}

/// Default quadrature resolution per axis.
pub fn default_quadrature_per_axis(dim: usize) -> usize {
    match dim {
        1 => 1024,
        2 => 64,
        _ => 16,
    }
}

impl QuadratureGrid {
    pub fn new(domain: &BoxDomain, n_per_axis: usize, prior: &Prior) -> Result<Self> {
        if domain.dim() > 3 {
            return Err(Error::Unsupported(
                "quadrature needs a dimension of at most 3".into(),
            ));
        }
        let nodes = midpoint_grid(domain, n_per_axis)?;
        let weight = domain.volume() / nodes.len() as f64;
        let prior = match prior {
            Prior::Uniform => vec![1.0 / domain.volume(); nodes.len()],
            Prior::Density(p) => nodes.points().map(|u| p(u)).collect(),
        };
        Ok(Self {
            nodes,
            n_per_axis,
            weight,
            prior,
        })
    }

    pub fn for_problem(ip: &InverseProblem, n_per_axis: usize) -> Result<Self> {
        Self::new(&ip.domain, n_per_axis, &ip.prior)
    }

    pub fn nodes(&self) -> &DesignSet {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    /// Common weight of every node.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn weights(&self) -> Vec<f64> {
        vec![self.weight; self.len()]
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// Index of the cell containing `u`.
    pub fn locate(&self, u: &[f64]) -> usize {
        let dom = self.nodes.domain();
        let n = self.n_per_axis;
        u.iter().enumerate().fold(0, |acc, (j, &x)| {
            let t = (x - dom.lower[j]) / (dom.upper[j] - dom.lower[j]);
            let k = ((t * n as f64).floor().max(0.0) as usize).min(n - 1);
            acc * n + k
        })
    }
}

/// Normalizes `exp(log_q) * prior` so that its weighted sum is one.
pub fn normalize_log_density(log_q: &[f64], grid: &QuadratureGrid) -> Result<Vec<f64>> {
    if log_q.len() != grid.len() {
        return domain("one value per quadrature node is required");
    }
    if log_q.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Numerical("log density is NaN or +inf".into()));
    }
    let logs: Vec<f64> = log_q
        .iter()
        .zip(&grid.prior)
        .map(|(l, p)| {
            if *p > 0.0 {
                l + p.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return domain("density vanishes on every quadrature node");
    }
    let z: f64 = logs.iter().map(|l| (l - shift).exp()).sum::<f64>() * grid.weight;
    Ok(logs.iter().map(|l| (l - shift).exp() / z).collect())
}

/// Normalized posterior density `exp(-Phi) prior / Z` on the grid nodes.
pub fn reference_posterior(ip: &InverseProblem, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    let phi = potential_on_grid(ip, grid)?;
    normalize_log_density(&phi.iter().map(|p| -p).collect::<Vec<_>>(), grid)
}

/// `G` at every node.
pub fn forward_on_grid(ip: &InverseProblem, grid: &QuadratureGrid) -> Result<Vec<Vec<f64>>> {
    (0..grid.len())
        .into_par_iter()
        .map(|i| ip.forward_checked(grid.nodes.point(i)))
        .collect()
}

/// `Phi` at every node.
pub fn potential_on_grid(ip: &InverseProblem, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    Ok(forward_on_grid(ip, grid)?
        .iter()
        .map(|g| ip.misfit(g))
        .collect())
}

/// Hellinger distance between two nonnegative weighted densities.
pub fn hellinger_weighted(p: &[f64], q: &[f64], weights: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.len() != weights.len() {
        return domain("densities and weights must have equal length");
    }
    let mass = |d: &[f64]| -> Result<f64> {
        if d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return domain("densities must be finite and nonnegative");
        }
        let m: f64 = d.iter().zip(weights).map(|(v, w)| v * w).sum();
        if m > 0.0 {
            Ok(m)
        } else {
            domain("density has zero mass")
        }
    };
    let (mp, mq) = (mass(p)?, mass(q)?);
    let d2: f64 = p
        .iter()
        .zip(q)
        .zip(weights)
        .map(|((a, b), w)| {
            let (a, b) = (a / mp, b / mq);
            let s = a.sqrt() + b.sqrt();
            if s > 0.0 {
                w * ((a - b) / s).powi(2)
            } else {
                0.0
            }
        })
        .sum();
    Ok((0.5 * d2).clamp(0.0, 1.0).sqrt())
}

/// Hellinger distance between two densities given on the quadrature nodes.
pub fn hellinger_on_grid(p: &[f64], q: &[f64], grid: &QuadratureGrid) -> Result<f64> {
    hellinger_weighted(p, q, &grid.weights())
}

/// Which likelihood approximation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Exact,
    MeanG,
    MeanPhi,
    SampleG,
    SamplePhi,
    MarginalG,
    MarginalPhi,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Exact,
        Variant::MeanG,
        Variant::MeanPhi,
        Variant::SampleG,
        Variant::SamplePhi,
        Variant::MarginalG,
        Variant::MarginalPhi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Exact => "exact",
            Variant::MeanG => "mean_g",
            Variant::MeanPhi => "mean_phi",
            Variant::SampleG => "sample_g",
            Variant::SamplePhi => "sample_phi",
            Variant::MarginalG => "marginal_g",
            Variant::MarginalPhi => "marginal_phi",
        }
    }

    pub fn emulates_g(self) -> bool {
        matches!(self, Variant::MeanG | Variant::SampleG | Variant::MarginalG)
    }

    pub fn emulates_phi(self) -> bool {
        matches!(
            self,
            Variant::MeanPhi | Variant::SamplePhi | Variant::MarginalPhi
        )
    }

    pub fn is_sample(self) -> bool {
        matches!(self, Variant::SampleG | Variant::SamplePhi)
    }
}

/// A surrogate realization on the quadrature grid: `values[node]` is the
/// realized output vector (length `d_y` for `G`, one for `Phi`).
#[derive(Debug, Clone)]
pub struct GridDraw {
    pub grid: Arc<QuadratureGrid>,
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
    pub draw: u64,
}

/// Joint samplers for a surrogate on a fixed grid, factorized once.
#[derive(Debug, Clone)]
pub struct GridSampler {
    grid: Arc<QuadratureGrid>,
    outputs: Vec<ProcessSampler>,
}

impl GridSampler {
    pub fn for_g(gp: &MultiOutputGp, grid: Arc<QuadratureGrid>) -> Result<Self> {
        let outputs = gp
            .outputs
            .iter()
            .map(|g| ProcessSampler::new(g, &grid.nodes))
            .collect::<Result<_>>()?;
        Ok(Self { grid, outputs })
    }

    pub fn for_phi(gp: &FittedGp, grid: Arc<QuadratureGrid>) -> Result<Self> {
        let outputs = vec![ProcessSampler::new(gp, &grid.nodes)?];
        Ok(Self { grid, outputs })
    }

    /// Draw `k` of stream `seed`; outputs use independent sub-streams.
    pub fn draw(&self, seed: u64, k: u64) -> GridDraw {
        let cols: Vec<Vec<f64>> = self
            .outputs
            .iter()
            .enumerate()
            .map(|(j, s)| s.draw(derive_seed(seed, j as u64), k))
            .collect();
        let values = (0..self.grid.len())
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect();
        GridDraw {
            grid: self.grid.clone(),
            values,
            seed,
            draw: k,
        }
    }
}

/// Approximate posterior, defined by its density with respect to the prior.
#[derive(Debug, Clone)]
pub enum PosteriorApprox {
    Exact,
    MeanG(Arc<MultiOutputGp>),
    MeanPhi(Arc<FittedGp>),
    SampleG(Arc<GridDraw>),
    SamplePhi(Arc<GridDraw>),
    MarginalG(Arc<MultiOutputGp>),
    MarginalPhi(Arc<FittedGp>),
}

impl PosteriorApprox {
    pub fn variant(&self) -> Variant {
        match self {
            PosteriorApprox::Exact => Variant::Exact,
            PosteriorApprox::MeanG(_) => Variant::MeanG,
            PosteriorApprox::MeanPhi(_) => Variant::MeanPhi,
            PosteriorApprox::SampleG(_) => Variant::SampleG,
            PosteriorApprox::SamplePhi(_) => Variant::SamplePhi,
            PosteriorApprox::MarginalG(_) => Variant::MarginalG,
            PosteriorApprox::MarginalPhi(_) => Variant::MarginalPhi,
        }
    }
}

/// `ln E[exp(-1/2 |y - G|^2_Gamma)]` for `G ~ N(mean, diag(var))`.
pub fn log_marginal_g(ip: &InverseProblem, mean: &[f64], var: &[f64]) -> Result<f64> {
    let dy = ip.dim_out();
    if mean.len() != dy || var.len() != dy {
        return domain("mean and variance must have the data dimension");
    }
    let a = &ip.gamma + DMatrix::from_diagonal(&DVector::from_column_slice(var));
    let chol = Cholesky::new(a)
        .ok_or_else(|| Error::Numerical("Gamma + C is not positive definite".into()))?;
    let r = &ip.y - DVector::from_column_slice(mean);
    let quad = r.dot(&chol.solve(&r));
    let log_det_a = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
    Ok(-0.5 * (log_det_a - ip.log_det_gamma()) - 0.5 * quad)
}

/// `ln E[exp(-Phi)]` for `Phi ~ N(mean, var)`.
pub fn log_marginal_phi(mean: f64, var: f64) -> f64 {
    -mean + 0.5 * var
}

fn check_draw_grid(d: &GridDraw, grid: &QuadratureGrid) -> bool {
    d.grid.len() == grid.len()
        && d.grid.n_per_axis == grid.n_per_axis
        && d.grid.nodes.domain() == grid.nodes.domain()
}

/// Log of the unnormalized density with respect to the prior at `u`.
pub fn approx_log_density(pa: &PosteriorApprox, ip: &InverseProblem, u: &[f64]) -> Result<f64> {
    if !ip.domain.contains(u) {
        return domain("parameter lies outside the domain");
    }
    match pa {
        PosteriorApprox::Exact => Ok(-potential(ip, u)?),
        PosteriorApprox::MeanG(gp) => Ok(-ip.misfit(&gp.predict_mean(u)?)),
        PosteriorApprox::MeanPhi(gp) => Ok(-gp.predict_mean(u)?),
        PosteriorApprox::SampleG(d) => Ok(-ip.misfit(&d.values[d.grid.locate(u)])),
        PosteriorApprox::SamplePhi(d) => Ok(-d.values[d.grid.locate(u)][0]),
        PosteriorApprox::MarginalG(gp) => {
            log_marginal_g(ip, &gp.predict_mean(u)?, &gp.predict_var(u)?)
        }
        PosteriorApprox::MarginalPhi(gp) => {
            Ok(log_marginal_phi(gp.predict_mean(u)?, gp.predict_var(u)?))
        }
    }
}

/// Unnormalized density with respect to the prior at `u`.
pub fn approx_density(pa: &PosteriorApprox, ip: &InverseProblem, u: &[f64]) -> Result<f64> {
    approx_log_density(pa, ip, u).map(f64::exp)
}

/// Log densities with respect to the prior at every node.
pub fn approx_log_density_on_grid(
    pa: &PosteriorApprox,
    ip: &InverseProblem,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    let nodes = &grid.nodes;
    match pa {
        PosteriorApprox::Exact => Ok(potential_on_grid(ip, grid)?.iter().map(|p| -p).collect()),
        PosteriorApprox::MeanPhi(gp) => {
            Ok(gp.predict_mean_batch(nodes)?.iter().map(|m| -m).collect())
        }
        PosteriorApprox::MarginalPhi(gp) => {
            let m = gp.predict_mean_batch(nodes)?;
            let v = gp.predict_var_batch(nodes)?.values;
            Ok(m.iter()
                .zip(&v)
                .map(|(m, v)| log_marginal_phi(*m, *v))
                .collect())
        }
        PosteriorApprox::MeanG(gp) => {
            let means = g_columns(gp, nodes, false)?;
            Ok(means.iter().map(|m| -ip.misfit(m)).collect())
        }
        PosteriorApprox::MarginalG(gp) => {
            let means = g_columns(gp, nodes, false)?;
            let vars = g_columns(gp, nodes, true)?;
            means
                .par_iter()
                .zip(&vars)
                .map(|(m, v)| log_marginal_g(ip, m, v))
                .collect()
        }
        PosteriorApprox::SampleG(d) | PosteriorApprox::SamplePhi(d) => {
            let phi_of = |v: &Vec<f64>| match pa {
                PosteriorApprox::SampleG(_) => ip.misfit(v),
                _ => v[0],
            };
            if check_draw_grid(d, grid) {
                Ok(d.values.iter().map(|v| -phi_of(v)).collect())
            } else {
                Ok(nodes
                    .points()
                    .map(|u| -phi_of(&d.values[d.grid.locate(u)]))
                    .collect())
            }
        }
    }
}

/// Per-node output vectors of the predictive means (or variances).
fn g_columns(gp: &MultiOutputGp, nodes: &DesignSet, variance: bool) -> Result<Vec<Vec<f64>>> {
    let cols: Vec<Vec<f64>> = gp
        .outputs
        .iter()
        .map(|g| {
            if variance {
                g.predict_var_batch(nodes).map(|b| b.values)
            } else {
                g.predict_mean_batch(nodes)
            }
        })
        .collect::<Result<_>>()?;
    Ok((0..nodes.len())
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect())
}

/// Normalized approximate posterior density on the grid nodes.
pub fn approx_posterior_on_grid(
    pa: &PosteriorApprox,
    ip: &InverseProblem,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    normalize_log_density(&approx_log_density_on_grid(pa, ip, grid)?, grid)
}

/// GP surrogates of `G` (one GP per output) and of `Phi`, fitted on one design.
#[derive(Debug, Clone, Default)]
pub struct Surrogates {
    pub g: Option<Arc<MultiOutputGp>>,
    pub phi: Option<Arc<FittedGp>>,
}

impl Surrogates {
    /// Fits the surrogates needed by `variants`. Hyper-parameters follow
    /// `kernel` independently for every output and for `Phi`.
    pub fn fit(
        ip: &InverseProblem,
        design: &DesignSet,
        kernel: &KernelPolicy,
        variants: &[Variant],
        seed: u64,
        nugget: f64,
    ) -> Result<Self> {
        let mut out = Self::default();
        if variants.iter().any(|v| v.emulates_g()) {
            let gd: Vec<Vec<f64>> = design
                .points()
                .map(|u| ip.forward_checked(u))
                .collect::<Result<_>>()?;
            let specs = (0..ip.dim_out())
                .map(|j| {
                    let col: Vec<f64> = gd.iter().map(|g| g[j]).collect();
                    kernel.resolve(design, &col, derive_seed(seed, j as u64), nugget)
                })
                .collect::<Result<Vec<_>>>()?;
            out.g = Some(Arc::new(MultiOutputGp::fit_per_output(
                &specs, design, &gd, nugget,
            )?));
        }
        if variants.iter().any(|v| v.emulates_phi()) {
            let pd: Vec<f64> = design
                .points()
                .map(|u| potential(ip, u))
                .collect::<Result<_>>()?;
            let spec = kernel.resolve(design, &pd, derive_seed(seed, u64::MAX), nugget)?;
            out.phi = Some(Arc::new(FittedGp::new(&spec, design, &pd, nugget)?));
        }
        Ok(out)
    }

    fn g(&self) -> Result<&Arc<MultiOutputGp>> {
        self.g
            .as_ref()
            .ok_or_else(|| Error::Domain("no surrogate of G was fitted".into()))
    }

    fn phi(&self) -> Result<&Arc<FittedGp>> {
        self.phi
            .as_ref()
            .ok_or_else(|| Error::Domain("no surrogate of Phi was fitted".into()))
    }

    /// Approximation of a Mean, Marginal or Exact variant.
    pub fn approx(&self, v: Variant) -> Result<PosteriorApprox> {
        Ok(match v {
            Variant::Exact => PosteriorApprox::Exact,
            Variant::MeanG => PosteriorApprox::MeanG(self.g()?.clone()),
            Variant::MarginalG => PosteriorApprox::MarginalG(self.g()?.clone()),
            Variant::MeanPhi => PosteriorApprox::MeanPhi(self.phi()?.clone()),
            Variant::MarginalPhi => PosteriorApprox::MarginalPhi(self.phi()?.clone()),
            Variant::SampleG | Variant::SamplePhi => {
                return domain("sample variants need a grid draw; use a sampler")
            }
        })
    }

    /// Joint grid sampler for a Sample variant.
    pub fn sampler(&self, v: Variant, grid: &Arc<QuadratureGrid>) -> Result<GridSampler> {
        match v {
            Variant::SampleG => GridSampler::for_g(self.g()?, grid.clone()),
            Variant::SamplePhi => GridSampler::for_phi(self.phi()?, grid.clone()),
            _ => domain("only sample variants have grid samplers"),
        }
    }
}

/// Approximation for any variant; Sample variants use draw `draw` of stream
/// `seed` realized on `grid`.
pub fn build_approx(
    sur: &Surrogates,
    v: Variant,
    grid: &Arc<QuadratureGrid>,
    seed: u64,
    draw: u64,
) -> Result<PosteriorApprox> {
    match v {
        Variant::SampleG => Ok(PosteriorApprox::SampleG(Arc::new(
            sur.sampler(v, grid)?.draw(seed, draw),
        ))),
        Variant::SamplePhi => Ok(PosteriorApprox::SamplePhi(Arc::new(
            sur.sampler(v, grid)?.draw(seed, draw),
        ))),
        _ => sur.approx(v),
    }
}

/// Number of predictive draws averaged for the Sample variants.
pub const DEFAULT_DRAWS: usize = 32;

fn default_draws() -> usize {
    DEFAULT_DRAWS
}

fn default_nugget() -> f64 {
    DEFAULT_NUGGET
}

/// Sweep over design sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub design: DesignFamily,
    pub schedule: Vec<u32>,
    pub kernel: KernelPolicy,
    pub variants: Vec<Variant>,
    #[serde(default = "default_draws")]
    pub n_draws: usize,
    /// Quadrature nodes per axis; dimension-dependent default when absent.
    #[serde(default)]
    pub quadrature_per_axis: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_nugget")]
    pub nugget: f64,
}

impl SweepConfig {
    pub fn validate(&self, ip: &InverseProblem) -> Result<()> {
        if self.variants.is_empty() {
            return domain("variant list is empty");
        }
        if self.schedule.is_empty() {
            return domain("schedule is empty");
        }
        if ip.dim_in() > 2 {
            return Err(Error::Unsupported(
                "posterior sweeps need a parameter dimension of at most 2".into(),
            ));
        }
        if self.n_draws == 0 {
            return domain("number of draws must be positive");
        }
        if self.quadrature_per_axis == Some(0) {
            return domain("quadrature resolution must be positive");
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return domain("nugget must be nonnegative");
        }
        Ok(())
    }
}

/// Hellinger distance of one variant in one cell. For Sample variants the
/// value is the root mean square over draws, with its Monte Carlo error.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HellingerEntry {
    pub variant: Variant,
    pub hellinger: f64,
    pub mc_std_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub schedule_value: u32,
    pub n: usize,
    pub entries: Vec<HellingerEntry>,
    /// `|G - m^G_N|` in `L^2` of the prior.
    pub l2_error_g: Option<f64>,
    /// `|Phi - m^Phi_N|` in `L^2` of the prior.
    pub l2_error_phi: Option<f64>,
    pub status: CellStatus,
}

impl SweepCell {
    pub fn is_ok(&self) -> bool {
        matches!(self.status, CellStatus::Ok)
    }

    pub fn hellinger(&self, v: Variant) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.variant == v)
            .map(|e| e.hellinger)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantRate {
    pub variant: Variant,
    pub fit: Option<RateFit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub rates: Vec<VariantRate>,
    pub quadrature_nodes: usize,
}

impl SweepResult {
    /// `(N, d_Hell)` over successful cells.
    pub fn curve(&self, v: Variant) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .filter(|c| c.is_ok())
            .filter_map(|c| c.hellinger(v).map(|h| (c.n as f64, h)))
            .collect()
    }

    pub fn succeeded(&self) -> usize {
        self.cells.iter().filter(|c| c.is_ok()).count()
    }
}

struct Reference {
    grid: Arc<QuadratureGrid>,
    gvals: Vec<Vec<f64>>,
    phi: Vec<f64>,
    density: Vec<f64>,
}

/// Fits surrogates for each design size and measures every requested
/// variant against the reference posterior.
pub fn posterior_error_sweep(ip: &InverseProblem, cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate(ip)?;
    let n_axis = cfg
        .quadrature_per_axis
        .unwrap_or_else(|| default_quadrature_per_axis(ip.dim_in()));
    let grid = Arc::new(QuadratureGrid::for_problem(ip, n_axis)?);
    let gvals = forward_on_grid(ip, &grid)?;
    let phi: Vec<f64> = gvals.iter().map(|g| ip.misfit(g)).collect();
    let density = normalize_log_density(&phi.iter().map(|p| -p).collect::<Vec<_>>(), &grid)?;
    let reference = Reference {
        grid,
        gvals,
        phi,
        density,
    };
    let mut variants = cfg.variants.clone();
    variants.sort();
    variants.dedup();
    let cells: Vec<SweepCell> = cfg
        .schedule
        .par_iter()
        .map(
            |&value| match sweep_cell(ip, cfg, &variants, &reference, value) {
                Ok(cell) => cell,
                Err((n, e)) => SweepCell {
                    schedule_value: value,
                    n,
                    entries: Vec::new(),
                    l2_error_g: None,
                    l2_error_phi: None,
                    status: CellStatus::Failed(e.to_string()),
                },
            },
        )
        .collect();
    let mut result = SweepResult {
        cells,
        rates: Vec::new(),
        quadrature_nodes: reference.grid.len(),
    };
    result.rates = variants
        .iter()
        .map(|&v| {
            let pts: Vec<(f64, f64)> = result.curve(v).into_iter().filter(|p| p.1 > 0.0).collect();
            VariantRate {
                variant: v,
                fit: fit_rate(&pts).ok(),
            }
        })
        .collect();
    Ok(result)
}

fn sweep_cell(
    ip: &InverseProblem,
    cfg: &SweepConfig,
    variants: &[Variant],
    r: &Reference,
    value: u32,
) -> std::result::Result<SweepCell, (usize, Error)> {
    let design = cfg.design.build(ip.domain(), value).map_err(|e| (0, e))?;
    let n = design.len();
    let fail = |e: Error| (n, e);
    let cell_seed = derive_seed(cfg.seed, n as u64);
    let w = r.grid.weight();
    let prior = r.grid.prior();
    let sur =
        Surrogates::fit(ip, &design, &cfg.kernel, variants, cell_seed, cfg.nugget).map_err(fail)?;

    let l2_error_g = match &sur.g {
        Some(gp) => {
            let means = g_columns(gp, r.grid.nodes(), false).map_err(fail)?;
            let s: f64 = means
                .iter()
                .zip(&r.gvals)
                .zip(prior)
                .map(|((m, g), p)| {
                    w * p * m.iter().zip(g).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                })
                .sum();
            Some(s.sqrt())
        }
        None => None,
    };
    let l2_error_phi = match &sur.phi {
        Some(gp) => {
            let means = gp.predict_mean_batch(r.grid.nodes()).map_err(fail)?;
            let s: f64 = means
                .iter()
                .zip(&r.phi)
                .zip(prior)
                .map(|((m, f), p)| w * p * (m - f).powi(2))
                .sum();
            Some(s.sqrt())
        }
        None => None,
    };

    let mut entries = Vec::with_capacity(variants.len());
    for &v in variants {
        let entry = match v {
            Variant::SampleG | Variant::SamplePhi => {
                let sampler = sur.sampler(v, &r.grid).map_err(fail)?;
                let stream = derive_seed(cell_seed, v as u64);
                let d2: Vec<f64> = (0..cfg.n_draws as u64)
                    .into_par_iter()
                    .map(|k| {
                        let draw = Arc::new(sampler.draw(stream, k));
                        let pa = match v {
                            Variant::SampleG => PosteriorApprox::SampleG(draw),
                            _ => PosteriorApprox::SamplePhi(draw),
                        };
                        let q = approx_posterior_on_grid(&pa, ip, &r.grid)?;
                        Ok(hellinger_on_grid(&r.density, &q, &r.grid)?.powi(2))
                    })
                    .collect::<Result<_>>()
                    .map_err(fail)?;
                let (mean, se) = mean_and_se(&d2);
                let root = mean.sqrt();
                HellingerEntry {
                    variant: v,
                    hellinger: root,
                    mc_std_error: Some(if root > 0.0 { se / (2.0 * root) } else { 0.0 }),
                }
            }
            _ => {
                let pa = sur.approx(v).map_err(fail)?;
                let q = if v == Variant::Exact {
                    r.density.clone()
                } else {
                    approx_posterior_on_grid(&pa, ip, &r.grid).map_err(fail)?
                };
                HellingerEntry {
                    variant: v,
                    hellinger: hellinger_on_grid(&r.density, &q, &r.grid).map_err(fail)?,
                    mc_std_error: None,
                }
            }
        };
        entries.push(entry);
    }
    Ok(SweepCell {
        schedule_value: value,
        n,
        entries,
        l2_error_g,
        l2_error_phi,
        status: CellStatus::Ok,
    })
}

fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Random-walk Metropolis output.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Chain {
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
}

impl Chain {
    pub fn mean(&self) -> Vec<f64> {
        let d = self.samples.first().map_or(0, Vec::len);
        let n = self.samples.len() as f64;
        (0..d)
            .map(|j| self.samples.iter().map(|s| s[j]).sum::<f64>() / n)
            .collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        let m = self.mean();
        let n = self.samples.len() as f64;
        m.iter()
            .enumerate()
            .map(|(j, mj)| {
                self.samples
                    .iter()
                    .map(|s| (s[j] - mj).powi(2))
                    .sum::<f64>()
                    / n
            })
            .collect()
    }
}

/// Random-walk Metropolis targeting `prior * approx_density`, started at the
/// centre of `U`, with proposals `u + step * N(0, I)`. Proposals outside `U`
/// are rejected.
pub fn rwm_sampler(
    pa: &PosteriorApprox,
    ip: &InverseProblem,
    n_samples: usize,
    step: f64,
    seed: u64,
) -> Result<Chain> {
    if !(step.is_finite() && step > 0.0) {
        return domain("step must be positive and finite");
    }
    let dom = ip.domain();
    let log_target = |u: &[f64]| -> Result<f64> {
        let p = ip.prior_density(u);
        if p <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(p.ln() + approx_log_density(pa, ip, u)?)
    };
    let mut cur: Vec<f64> = dom
        .lower
        .iter()
        .zip(&dom.upper)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let mut cur_lt = log_target(&cur)?;
    if cur_lt == f64::NEG_INFINITY {
        return domain("target density vanishes at the starting point");
    }
    let mut rng = rng_for(seed, 0);
    let mut samples = Vec::with_capacity(n_samples);
    let mut accepted = 0usize;
    for _ in 0..n_samples {
        let prop: Vec<f64> = cur
            .iter()
            .map(|x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x + step * z
            })
            .collect();
        let u: f64 = rng.random();
        if dom.contains(&prop) {
            let lt = log_target(&prop)?;
            if u.ln() < lt - cur_lt {
                cur = prop;
                cur_lt = lt;
                accepted += 1;
            }
        }
        samples.push(cur.clone());
    }
    Ok(Chain {
        samples,
        acceptance_rate: if n_samples > 0 {
            accepted as f64 / n_samples as f64
        } else {
            0.0
        },
    })
}
