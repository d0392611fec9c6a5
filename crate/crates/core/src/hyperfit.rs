//! Empirical-Bayes point estimation of kernel hyper-parameters.
//!
//! The marginal variance is profiled out in closed form; the remaining free
//! parameters are searched in log space by coordinate-wise golden-section
//! refinement from Latin-hypercube starts inside a compact box.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::DesignSet;
use crate::error::{domain, Error, Result};
use crate::kernels::{
    kernel_matrix, AxisParams, CovParams, KernelFamily, KernelSpec, MaternParams, MeanSpec,
    SepMaternParams, DEFAULT_NUGGET,
};
use crate::rng::rng_for;

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const MAX_SWEEPS: usize = 8;
const LOG_TOL: f64 = 1e-4;
const IMPROVE_TOL: f64 = 1e-9;

/// A hyper-parameter that is either fixed or free within `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperParam {
    Fixed(f64),
    Free { lo: f64, hi: f64 },
}

impl HyperParam {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            HyperParam::Fixed(v) if ok(v) => Ok(()),
            HyperParam::Free { lo, hi } if ok(lo) && ok(hi) && lo <= hi => Ok(()),
            _ => domain(format!("invalid range for {name}: {self:?}")),
        }
    }

    /// `Some((ln lo, ln hi))` for a free parameter with a nondegenerate range.
    fn log_range(&self) -> Option<(f64, f64)> {
        match *self {
            HyperParam::Free { lo, hi } if lo < hi => Some((lo.ln(), hi.ln())),
            _ => None,
        }
    }

    fn fixed_value(&self) -> f64 {
        match *self {
            HyperParam::Fixed(v) => v,
            HyperParam::Free { lo, .. } => lo,
        }
    }

    fn clamp(&self, v: f64) -> f64 {
        match *self {
            HyperParam::Fixed(x) => x,
            HyperParam::Free { lo, hi } => v.clamp(lo, hi),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        match *self {
            HyperParam::Fixed(x) => v == x,
            HyperParam::Free { lo, hi } => lo <= v && v <= hi,
        }
    }
}

/// Compact box `S` of admissible hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperBox {
    pub family: KernelFamily,
    pub sigma2: HyperParam,
    /// One entry for the isotropic kernel, one per axis for the separable one.
    pub lambda: Vec<HyperParam>,
    pub nu: Vec<HyperParam>,
}

pub const DEFAULT_SIGMA2_RANGE: (f64, f64) = (1e-6, 1e6);
pub const DEFAULT_LAMBDA_RANGE: (f64, f64) = (1e-2, 10.0);
pub const DEFAULT_NU_RANGE: (f64, f64) = (0.6, 4.0);

impl HyperBox {
    /// Every parameter free within the default ranges.
    pub fn default_for(family: KernelFamily, dim: usize) -> Self {
        let axes = match family {
            KernelFamily::Matern => 1,
            KernelFamily::SeparableMatern => dim,
        };
        let free = |(lo, hi): (f64, f64)| HyperParam::Free { lo, hi };
        Self {
            family,
            sigma2: free(DEFAULT_SIGMA2_RANGE),
            lambda: vec![free(DEFAULT_LAMBDA_RANGE); axes],
            nu: vec![free(DEFAULT_NU_RANGE); axes],
        }
    }

    /// Box with every parameter fixed to the values of `cov`.
    pub fn fixed(cov: &CovParams) -> Self {
        match cov {
            CovParams::Matern(p) => Self {
                family: KernelFamily::Matern,
                sigma2: HyperParam::Fixed(p.sigma2),
                lambda: vec![HyperParam::Fixed(p.lambda)],
                nu: vec![HyperParam::Fixed(p.nu)],
            },
            CovParams::SeparableMatern(p) => Self {
                family: KernelFamily::SeparableMatern,
                sigma2: HyperParam::Fixed(p.sigma2),
                lambda: p
                    .per_dim
                    .iter()
                    .map(|a| HyperParam::Fixed(a.lambda))
                    .collect(),
                nu: p.per_dim.iter().map(|a| HyperParam::Fixed(a.nu)).collect(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sigma2.validate("sigma2")?;
        if self.lambda.is_empty() || self.lambda.len() != self.nu.len() {
            return domain("lambda and nu ranges must be nonempty and of equal length");
        }
        if self.family == KernelFamily::Matern && self.lambda.len() != 1 {
            return domain("the isotropic Matérn box has a single lambda and nu");
        }
        for (l, n) in self.lambda.iter().zip(&self.nu) {
            l.validate("lambda")?;
            n.validate("nu")?;
        }
        Ok(())
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.family == KernelFamily::SeparableMatern && self.lambda.len() != dim {
            return domain(format!(
                "separable box has {} axes but the design is {dim}-dimensional",
                self.lambda.len()
            ));
        }
        Ok(())
    }

    /// Shape parameters `lambda_1..lambda_k, nu_1..nu_k` in that order.
    fn shape_params(&self) -> Vec<HyperParam> {
        self.lambda.iter().chain(&self.nu).copied().collect()
    }

    /// Covariance with the given marginal variance and shape parameters.
    fn cov(&self, sigma2: f64, shape: &[f64]) -> CovParams {
        let k = self.lambda.len();
        match self.family {
            KernelFamily::Matern => CovParams::Matern(MaternParams {
                sigma2,
                lambda: shape[0],
                nu: shape[1],
            }),
            KernelFamily::SeparableMatern => CovParams::SeparableMatern(SepMaternParams {
                sigma2,
                per_dim: (0..k)
                    .map(|j| AxisParams {
                        lambda: shape[j],
                        nu: shape[k + j],
                    })
                    .collect(),
            }),
        }
    }

    /// Whether every hyper-parameter of `cov` lies in the box.
    pub fn contains(&self, cov: &CovParams) -> bool {
        let (s, l, n): (f64, Vec<f64>, Vec<f64>) = match cov {
            CovParams::Matern(p) => (p.sigma2, vec![p.lambda], vec![p.nu]),
            CovParams::SeparableMatern(p) => (
                p.sigma2,
                p.per_dim.iter().map(|a| a.lambda).collect(),
                p.per_dim.iter().map(|a| a.nu).collect(),
            ),
        };
        cov.family() == self.family
            && self.sigma2.contains(s)
            && l.len() == self.lambda.len()
            && self.lambda.iter().zip(&l).all(|(b, v)| b.contains(*v))
            && self.nu.iter().zip(&n).all(|(b, v)| b.contains(*v))
    }
}

/// `r^T K^{-1} r`, `log det K` and `N` for the kernel in `spec`.
struct QuadTerms {
    quad: f64,
    log_det: f64,
    n: usize,
}

fn quad_terms(
    spec: &KernelSpec,
    design: &DesignSet,
    fvals: &[f64],
    nugget: f64,
) -> Result<QuadTerms> {
    if fvals.len() != design.len() {
        return domain("one value per design point is required");
    }
    if design.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let km = kernel_matrix(spec, design, nugget)?;
    let r = DVector::from_iterator(
        design.len(),
        design.points().zip(fvals).map(|(u, f)| f - spec.m(u)),
    );
    let w = km
        .factor
        .l_dirty()
        .solve_lower_triangular(&r)
        .expect("factor has a positive diagonal");
    let log_det = 2.0
        * km.factor
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
    Ok(QuadTerms {
        quad: w.norm_squared(),
        log_det,
        n: design.len(),
    })
}

fn gaussian_loglik(quad: f64, log_det: f64, n: usize) -> f64 {
    -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln()
}

/// `-1/2 r^T K^{-1} r - 1/2 log det K - N/2 log 2 pi`, `r = f(D) - m(D)`.
pub fn log_marginal_likelihood(
    spec: &KernelSpec,
    design: &DesignSet,
    fvals: &[f64],
) -> Result<f64> {
    let t = quad_terms(spec, design, fvals, DEFAULT_NUGGET)?;
    Ok(gaussian_loglik(t.quad, t.log_det, t.n))
}

/// Closed-form maximiser of the marginal likelihood in `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfiledSigma2 {
    pub sigma2: f64,
    /// Set when the residual vanishes; `sigma2` is then the lower bound.
    pub degenerate: bool,
}

/// `r^T K~^{-1} r / N` with `K~` the unit-variance kernel matrix, clamped to
/// `[lo, hi]`. The `sigma2` of `spec` is ignored.
pub fn profile_sigma2(
    spec: &KernelSpec,
    design: &DesignSet,
    fvals: &[f64],
    bounds: (f64, f64),
) -> Result<ProfiledSigma2> {
    let t = quad_terms(&spec.with_sigma2(1.0), design, fvals, DEFAULT_NUGGET)?;
    Ok(profile_from_quad(t.quad, t.n, bounds))
}

fn profile_from_quad(quad: f64, n: usize, (lo, hi): (f64, f64)) -> ProfiledSigma2 {
    if quad <= 0.0 {
        return ProfiledSigma2 {
            sigma2: lo,
            degenerate: true,
        };
    }
    ProfiledSigma2 {
        sigma2: (quad / n as f64).clamp(lo, hi),
        degenerate: false,
    }
}

/// Log prior density on the log hyper-parameters
/// `(ln sigma2, ln lambda_1.., ln nu_1..)`.
pub type LogPrior = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Objective {
    Mle,
    Map(LogPrior),
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Mle => write!(f, "Mle"),
            Objective::Map(_) => write!(f, "Map(..)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub theta_hat: KernelSpec,
    /// Log marginal likelihood at `theta_hat`.
    pub log_marginal: f64,
    /// Value of the maximised objective (equal to `log_marginal` for MLE).
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub sigma2_degenerate: bool,
}

struct Evaluation {
    objective: f64,
    log_marginal: f64,
    sigma2: f64,
    degenerate: bool,
}

struct Problem<'a> {
    hbox: &'a HyperBox,
    mean: &'a MeanSpec,
    design: &'a DesignSet,
    fvals: &'a [f64],
    objective: &'a Objective,
    nugget: f64,
    shape: Vec<HyperParam>,
    /// Indices into `shape` of the free coordinates and their log ranges.
    free: Vec<(usize, (f64, f64))>,
}

impl Problem<'_> {
    fn shape_at(&self, x: &[f64]) -> Vec<f64> {
        let mut s: Vec<f64> = self.shape.iter().map(HyperParam::fixed_value).collect();
        for (&(i, _), xi) in self.free.iter().zip(x) {
            s[i] = self.shape[i].clamp(xi.exp());
        }
        s
    }

    fn evaluate(&self, x: &[f64]) -> Option<Evaluation> {
        let shape = self.shape_at(x);
        let unit = KernelSpec {
            cov: self.hbox.cov(1.0, &shape),
            mean: self.mean.clone(),
        };
        let t = quad_terms(&unit, self.design, self.fvals, self.nugget).ok()?;
        let (sigma2, degenerate) = match self.hbox.sigma2 {
            HyperParam::Fixed(s) => (s, false),
            HyperParam::Free { lo, hi } => {
                let p = profile_from_quad(t.quad, t.n, (lo, hi));
                (p.sigma2, p.degenerate)
            }
        };
        // K = sigma2 K~ exactly, as the nugget is relative to sigma2.
        let log_marginal =
            gaussian_loglik(t.quad / sigma2, t.log_det + t.n as f64 * sigma2.ln(), t.n);
        let objective = match self.objective {
            Objective::Mle => log_marginal,
            Objective::Map(prior) => {
                let mut logs = vec![sigma2.ln()];
                logs.extend(shape.iter().map(|v| v.ln()));
                log_marginal + prior(&logs)
            }
        };
        objective.is_finite().then_some(Evaluation {
            objective,
            log_marginal,
            sigma2,
            degenerate,
        })
    }
}

struct StartResult {
    x: Vec<f64>,
    best: Option<Evaluation>,
    evaluations: usize,
    converged: bool,
}

fn score(e: &Option<Evaluation>) -> f64 {
    e.as_ref().map_or(f64::NEG_INFINITY, |e| e.objective)
}

/// Coordinate-wise golden-section ascent from `x0` with shrinking brackets.
fn local_search(p: &Problem<'_>, x0: Vec<f64>) -> StartResult {
    let mut x = x0;
    let mut best = p.evaluate(&x);
    let mut evaluations = 1;
    let mut converged = false;
    let mut half_width: Vec<f64> = p.free.iter().map(|(_, (lo, hi))| 0.5 * (hi - lo)).collect();
    for _ in 0..MAX_SWEEPS {
        let before = score(&best);
        for (c, &(_, (lo, hi))) in p.free.iter().enumerate() {
            let mut a = (x[c] - half_width[c]).max(lo);
            let mut b = (x[c] + half_width[c]).min(hi);
            let at = |t: f64, x: &[f64]| {
                let mut y = x.to_vec();
                y[c] = t;
                y
            };
            let mut x1 = b - GOLDEN * (b - a);
            let mut x2 = a + GOLDEN * (b - a);
            let mut f1 = score(&p.evaluate(&at(x1, &x)));
            let mut f2 = score(&p.evaluate(&at(x2, &x)));
            evaluations += 2;
            while b - a > LOG_TOL {
                if f1 >= f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - GOLDEN * (b - a);
                    f1 = score(&p.evaluate(&at(x1, &x)));
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + GOLDEN * (b - a);
                    f2 = score(&p.evaluate(&at(x2, &x)));
                }
                evaluations += 1;
            }
            // Endpoints are admissible maximisers too.
            for t in [
                0.5 * (a + b),
                lo.max(x[c] - half_width[c]),
                hi.min(x[c] + half_width[c]),
            ] {
                let cand = at(t, &x);
                let e = p.evaluate(&cand);
                evaluations += 1;
                if score(&e) > score(&best) {
                    best = e;
                    x = cand;
                }
            }
        }
        let gain = score(&best) - before;
        half_width.iter_mut().for_each(|w| *w *= 0.5);
        if gain.is_finite() && gain.abs() <= IMPROVE_TOL * (1.0 + score(&best).abs()) {
            converged = true;
            break;
        }
    }
    StartResult {
        x,
        best,
        evaluations,
        converged,
    }
}

/// Latin-hypercube sample of `n` points in the product of `ranges`.
fn latin_hypercube(ranges: &[(f64, f64)], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, 0x004c_4853);
    let mut pts = vec![vec![0.0; ranges.len()]; n];
    for (j, &(lo, hi)) in ranges.iter().enumerate() {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for (i, p) in pts.iter_mut().enumerate() {
            let t = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
            p[j] = lo + t * (hi - lo);
        }
    }
    pts
}

/// Empirical-Bayes estimate of the hyper-parameters within `hbox`.
pub fn estimate(
    hbox: &HyperBox,
    mean: &MeanSpec,
    design: &DesignSet,
    fvals: &[f64],
    objective: &Objective,
    budget: usize,
    seed: u64,
) -> Result<EstimationResult> {
    estimate_with_nugget(
        hbox,
        mean,
        design,
        fvals,
        objective,
        budget,
        seed,
        DEFAULT_NUGGET,
    )
}

/// [`estimate`] with an explicit starting nugget for every kernel matrix.
#[allow(clippy::too_many_arguments)]
pub fn estimate_with_nugget(
    hbox: &HyperBox,
    mean: &MeanSpec,
    design: &DesignSet,
    fvals: &[f64],
    objective: &Objective,
    budget: usize,
    seed: u64,
    nugget: f64,
) -> Result<EstimationResult> {
    if !(nugget.is_finite() && nugget >= 0.0) {
        return domain("nugget must be finite and nonnegative");
    }
    hbox.validate()?;
    hbox.check_dim(design.dim())?;
    mean.validate()?;
    if budget == 0 {
        return domain("estimation budget must be at least 1");
    }
    if fvals.len() != design.len() {
        return domain("one value per design point is required");
    }
    let shape = hbox.shape_params();
    let free: Vec<(usize, (f64, f64))> = shape
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.log_range().map(|r| (i, r)))
        .collect();
    let problem = Problem {
        hbox,
        mean,
        design,
        fvals,
        objective,
        nugget,
        shape,
        free,
    };
    let results: Vec<StartResult> = if problem.free.is_empty() {
        vec![StartResult {
            x: vec![],
            best: problem.evaluate(&[]),
            evaluations: 1,
            converged: true,
        }]
    } else {
        let ranges: Vec<(f64, f64)> = problem.free.iter().map(|f| f.1).collect();
        latin_hypercube(&ranges, budget, seed)
            .into_par_iter()
            .map(|x0| local_search(&problem, x0))
            .collect()
    };
    let evaluations = results.iter().map(|r| r.evaluations).sum();
    let mut winner: Option<&StartResult> = None;
    for r in &results {
        if r.best.is_some() && winner.is_none_or(|w| score(&r.best) > score(&w.best)) {
            winner = Some(r);
        }
    }
    let w = winner.ok_or_else(|| {
        Error::Estimation("every start failed to factorize the kernel matrix".into())
    })?;
    let e = w.best.as_ref().expect("winner has an evaluation");
    let theta_hat = KernelSpec {
        cov: hbox.cov(e.sigma2, &problem.shape_at(&w.x)),
        mean: mean.clone(),
    };
    let log_marginal = quad_terms(&theta_hat, design, fvals, nugget)
        .map(|t| gaussian_loglik(t.quad, t.log_det, t.n))
        .unwrap_or(e.log_marginal);
    Ok(EstimationResult {
        theta_hat,
        log_marginal,
        objective: e.objective,
        evaluations,
        converged: w.converged,
        sigma2_degenerate: e.degenerate,
    })
}
