//! N-sweeps of GP emulators, empirical rate fits and the rate exponents
//! predicted for Matérn and separable Matérn kernels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::{
    geometry, halton, smolyak_grid, uniform_grid, BoxDomain, DesignSet, GeometryDiagnostics,
    OneDimFamily, SparseGridSpec,
};
use crate::error::{domain, Error, Result};
use crate::hyperfit::{estimate_with_nugget, HyperBox, HyperParam, Objective};
use crate::kernels::{CovParams, KernelSpec, MeanSpec, DEFAULT_NUGGET};
use crate::regression::FittedGp;
use crate::rng::derive_seed;
use crate::testbed::{error_norms_with_truth, ErrorReport, EvalGridSpec, TestFunctionRecipe};

/// Least-squares fit of `log error = intercept - slope * log N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Positive for decaying errors.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Fits a power law to `(N, error)` pairs; pairs with nonpositive error are skipped.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(n, e)| *n > 0.0 && *e > 0.0 && e.is_finite())
        .map(|(n, e)| (n.ln(), e.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: pts.len(),
        });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return domain("all N values coincide");
    }
    let b = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope: -b + 0.0,
        intercept: my - b * mx,
        r_squared,
        points_used: pts.len(),
    })
}

/// Number of trailing schedule points used for a rate fit.
pub fn tail_len(len: usize) -> usize {
    len.div_ceil(2).max(4).min(len)
}

/// [`fit_rate`] on the last `max(4, ceil(len/2))` pairs.
pub fn fit_rate_tail(pairs: &[(f64, f64)]) -> Result<RateFit> {
    fit_rate(&pairs[pairs.len() - tail_len(pairs.len())..])
}

/// [`fit_rate_tail`] after dividing each error by `(log N)^power`.
pub fn fit_rate_tail_log_corrected(pairs: &[(f64, f64)], power: f64) -> Result<RateFit> {
    let adjusted: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&(n, e)| (n, e / n.ln().powf(power)))
        .collect();
    fit_rate_tail(&adjusted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Matched,
    Under,
    Over,
}

/// Rate exponents predicted by the convergence theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremRate {
    pub exponent_in_h: f64,
    pub exponent_in_rho: f64,
    pub exponent_in_n: f64,
    /// Exponent of the `log N` factor (sparse grids only).
    pub polylog_power: f64,
    pub regime: Regime,
}

const REGIME_TOL: f64 = 1e-12;

fn classify(tilde: f64, minus: f64, plus: f64) -> Regime {
    let eq = |a: f64, b: f64| (a - b).abs() <= REGIME_TOL * (1.0 + a.abs());
    if eq(minus, tilde) && eq(plus, tilde) {
        Regime::Matched
    } else if plus > tilde && !eq(plus, tilde) {
        Regime::Over
    } else {
        Regime::Under
    }
}

/// Isotropic Matérn prediction with `h ~ N^-r_h` and `rho ~ N^r_rho`:
/// `r_h (min{tau~, tau-} - beta) - r_rho max{tau+ - tau~, 0}`.
pub fn predicted_rate_matern(
    tau_tilde: f64,
    tau_minus: f64,
    tau_plus: f64,
    beta: f64,
    r_h: f64,
    r_rho: f64,
) -> Result<TheoremRate> {
    if tau_minus > tau_plus {
        return domain("tau_minus must not exceed tau_plus");
    }
    if beta > tau_tilde {
        return domain("beta must not exceed tau_tilde");
    }
    let eh = tau_tilde.min(tau_minus) - beta;
    let er = (tau_plus - tau_tilde).max(0.0);
    Ok(TheoremRate {
        exponent_in_h: eh,
        exponent_in_rho: er,
        exponent_in_n: r_h * eh - r_rho * er,
        polylog_power: 0.0,
        regime: classify(tau_tilde, tau_minus, tau_plus),
    })
}

/// Separable Matérn prediction on sparse grids:
/// `alpha = min_j r_h (min{r~_j, r_j-} - beta_j) - r_rho max{r_j+ - r~_j, 0}`,
/// `alpha'` the same with `r_j-` and `r_j+` swapped, and `log N` power
/// `(1 + alpha')(d - 1)`.
pub fn predicted_rate_separable(
    r_tilde: &[f64],
    r_minus: &[f64],
    r_plus: &[f64],
    beta: &[f64],
    r_h: f64,
    r_rho: f64,
) -> Result<TheoremRate> {
    let d = r_tilde.len();
    if d == 0 || r_minus.len() != d || r_plus.len() != d || beta.len() != d {
        return domain("smoothness vectors must be nonempty and of equal length");
    }
    let alpha_with = |lo: &[f64], hi: &[f64]| {
        (0..d)
            .map(|j| {
                r_h * (r_tilde[j].min(lo[j]) - beta[j]) - r_rho * (hi[j] - r_tilde[j]).max(0.0)
            })
            .fold(f64::INFINITY, f64::min)
    };
    let alpha = alpha_with(r_minus, r_plus);
    let alpha_prime = alpha_with(r_plus, r_minus);
    let eh = (0..d)
        .map(|j| r_tilde[j].min(r_minus[j]) - beta[j])
        .fold(f64::INFINITY, f64::min);
    let er = (0..d)
        .map(|j| (r_plus[j] - r_tilde[j]).max(0.0))
        .fold(0.0, f64::max);
    let regimes: Vec<Regime> = (0..d)
        .map(|j| classify(r_tilde[j], r_minus[j], r_plus[j]))
        .collect();
    let regime = if regimes.contains(&Regime::Over) {
        Regime::Over
    } else if regimes.contains(&Regime::Under) {
        Regime::Under
    } else {
        Regime::Matched
    };
    Ok(TheoremRate {
        exponent_in_h: eh,
        exponent_in_rho: er,
        exponent_in_n: alpha,
        polylog_power: (1.0 + alpha_prime) * (d as f64 - 1.0),
        regime,
    })
}

/// Fixed hyper-parameters or per-cell estimation inside a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelPolicy {
    Fixed {
        kernel: KernelSpec,
    },
    Estimate {
        hyper_box: HyperBox,
        #[serde(default)]
        mean: MeanSpec,
        #[serde(default = "default_budget")]
        budget: usize,
    },
}

fn default_budget() -> usize {
    4
}

/// How a schedule value is turned into a design.
impl KernelPolicy {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            KernelPolicy::Fixed { kernel } => {
                kernel.validate()?;
                kernel.check_dim(dim)
            }
            KernelPolicy::Estimate {
                hyper_box,
                mean,
                budget,
            } => {
                hyper_box.validate()?;
                hyper_box.check_dim(dim)?;
                mean.validate()?;
                if *budget == 0 {
                    return domain("estimation budget must be at least 1");
                }
                Ok(())
            }
        }
    }

    /// Kernel to condition on for one design: the fixed kernel, or the
    /// maximum-likelihood estimate on `(design, fvals)`.
    pub fn resolve(
        &self,
        design: &DesignSet,
        fvals: &[f64],
        seed: u64,
        nugget: f64,
    ) -> Result<KernelSpec> {
        match self {
            KernelPolicy::Fixed { kernel } => Ok(kernel.clone()),
            KernelPolicy::Estimate {
                hyper_box,
                mean,
                budget,
            } => Ok(estimate_with_nugget(
                hyper_box,
                mean,
                design,
                fvals,
                &Objective::Mle,
                *budget,
                seed,
                nugget,
            )?
            .theta_hat),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignFamily {
    /// Schedule values are points per axis; `N = n^d`.
    UniformGrid,
    /// Schedule values are numbers of points.
    Halton,
    /// Schedule values are sparse-grid levels `q`.
    Smolyak { one_dim_family: OneDimFamily },
}

impl DesignFamily {
    pub fn build(&self, domain: &BoxDomain, value: u32) -> Result<DesignSet> {
        match *self {
            DesignFamily::UniformGrid => uniform_grid(domain, value as usize),
            DesignFamily::Halton => halton(domain, value as usize),
            DesignFamily::Smolyak { one_dim_family } => smolyak_grid(
                &SparseGridSpec {
                    level: value,
                    dim: domain.dim(),
                    one_dim_family,
                },
                domain,
            ),
        }
    }

    /// `(r_h, r_rho)` with `h ~ N^-r_h`, `rho ~ N^r_rho` (isotropic
    /// families), or the one-dimensional exponents for sparse grids.
    pub fn rate_exponents(&self, dim: usize) -> (f64, f64) {
        match *self {
            DesignFamily::UniformGrid | DesignFamily::Halton => (1.0 / dim as f64, 0.0),
            DesignFamily::Smolyak { one_dim_family } => one_dim_family.rate_exponents(),
        }
    }
}

fn default_band() -> f64 {
    0.4
}

fn default_nugget() -> f64 {
    DEFAULT_NUGGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub kernel: KernelPolicy,
    pub design: DesignFamily,
    /// Strictly increasing, at least four entries.
    pub schedule: Vec<u32>,
    pub function: TestFunctionRecipe,
    #[serde(default)]
    pub eval_grid: EvalGridSpec,
    #[serde(default)]
    pub seed: u64,
    /// Half-width of the PASS band around the predicted L2 exponent.
    #[serde(default = "default_band")]
    pub band: f64,
    /// Starting relative nugget for every kernel matrix of the study.
    #[serde(default = "default_nugget")]
    pub nugget: f64,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.len() < 4 {
            return domain(format!(
                "the N schedule needs at least 4 entries, got {}",
                self.schedule.len()
            ));
        }
        if self.schedule.windows(2).any(|w| w[0] >= w[1]) || self.schedule[0] == 0 {
            return domain("the N schedule must be positive and strictly increasing");
        }
        if !(self.band.is_finite() && self.band > 0.0) {
            return domain("band must be positive");
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return domain("nugget must be finite and nonnegative");
        }
        let dim = self.function.dim();
        self.kernel.validate(dim)?;
        if let DesignFamily::Smolyak { .. } = self.design {
            if (self.schedule[0] as usize) < dim {
                return domain("sparse-grid levels must be at least the dimension");
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.function.dim()
    }

    /// Kernel smoothness range `(tau-, tau+)` per axis: Sobolev order of the
    /// native space, `nu + d/2` (isotropic) or `nu_j + 1/2` (separable).
    pub fn kernel_smoothness(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        match &self.kernel {
            KernelPolicy::Fixed { kernel } => match &kernel.cov {
                CovParams::Matern(p) => {
                    let t = p.sobolev_order(dim);
                    (vec![t], vec![t])
                }
                CovParams::SeparableMatern(p) => (p.sobolev_orders(), p.sobolev_orders()),
            },
            KernelPolicy::Estimate { hyper_box, .. } => {
                let shift = match hyper_box.family {
                    crate::kernels::KernelFamily::Matern => dim as f64 / 2.0,
                    crate::kernels::KernelFamily::SeparableMatern => 0.5,
                };
                let bounds = |h: &HyperParam| match *h {
                    HyperParam::Fixed(v) => (v + shift, v + shift),
                    HyperParam::Free { lo, hi } => (lo + shift, hi + shift),
                };
                hyper_box.nu.iter().map(bounds).unzip()
            }
        }
    }

    /// Predicted L2 rate for this study.
    pub fn predicted_rate(&self) -> Result<TheoremRate> {
        let target =
            self.function.build()?.smoothness_target().ok_or_else(|| {
                Error::Unsupported("test function has no smoothness target".into())
            })?;
        let (minus, plus) = self.kernel_smoothness();
        let (r_h, r_rho) = self.design.rate_exponents(self.dim());
        match self.design {
            DesignFamily::Smolyak { .. } => {
                let d = self.dim();
                let spread = |v: &[f64]| {
                    if v.len() == d {
                        v.to_vec()
                    } else {
                        vec![v[0]; d]
                    }
                };
                let t = spread(&target);
                predicted_rate_separable(
                    &t,
                    &spread(&minus),
                    &spread(&plus),
                    &vec![0.0; d],
                    r_h,
                    r_rho,
                )
            }
            _ => {
                let tau_tilde = target.iter().copied().fold(f64::INFINITY, f64::min);
                let lo = minus.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = plus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                predicted_rate_matern(tau_tilde, lo, hi, 0.0, r_h, r_rho)
            }
        }
    }

    /// Predicted rate of the predictive standard deviation (L2 or sup):
    /// the L2 exponent in `h` reduced by `d/2`.
    pub fn predicted_sd_rate(&self) -> Result<f64> {
        let rate = self.predicted_rate()?;
        let (r_h, _) = self.design.rate_exponents(self.dim());
        Ok(r_h * (rate.exponent_in_h - self.dim() as f64 / 2.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub schedule_value: u32,
    pub n: usize,
    pub geometry: Option<GeometryDiagnostics>,
    pub report: Option<ErrorReport>,
    pub theta_hat: Option<KernelSpec>,
    pub nugget_used: Option<f64>,
    pub status: CellStatus,
}

impl StudyCell {
    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub cells: Vec<StudyCell>,
}

impl StudyResult {
    pub fn succeeded(&self) -> usize {
        self.cells.iter().filter(|c| c.is_ok()).count()
    }

    /// `(N, metric)` for successful cells.
    pub fn pairs(&self, metric: impl Fn(&ErrorReport) -> f64) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .filter_map(|c| c.report.as_ref().map(|r| (c.n as f64, metric(r))))
            .collect()
    }

    pub fn l2_pairs(&self) -> Vec<(f64, f64)> {
        self.pairs(|r| r.l2_error)
    }

    pub fn sd_pairs(&self) -> Vec<(f64, f64)> {
        self.pairs(|r| r.avg_pred_sd)
    }
}

/// Runs every cell of the schedule. Cells are independent and run in
/// parallel; each cell's random stream is derived from `(seed, N)`.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let f = cfg.function.build()?;
    let domain = BoxDomain::unit(cfg.dim());
    let grid = cfg.eval_grid.build(&domain)?;
    let truth = f.eval_on(&grid);
    let cells = cfg
        .schedule
        .par_iter()
        .map(|&value| {
            run_cell(cfg, &domain, value, &f, &grid, &truth).unwrap_or_else(|(n, e)| StudyCell {
                schedule_value: value,
                n,
                geometry: None,
                report: None,
                theta_hat: None,
                nugget_used: None,
                status: CellStatus::Failed(e.to_string()),
            })
        })
        .collect();
    Ok(StudyResult { cells })
}

fn run_cell(
    cfg: &StudyConfig,
    domain: &BoxDomain,
    value: u32,
    f: &crate::testbed::TestFunction,
    grid: &DesignSet,
    truth: &[f64],
) -> std::result::Result<StudyCell, (usize, Error)> {
    let design = cfg.design.build(domain, value).map_err(|e| (0, e))?;
    let n = design.len();
    let fail = |e: Error| (n, e);
    let fvals = f.eval_on(&design);
    let spec = cfg
        .kernel
        .resolve(&design, &fvals, derive_seed(cfg.seed, n as u64), cfg.nugget)
        .map_err(fail)?;
    let gp = FittedGp::new(&spec, &design, &fvals, cfg.nugget).map_err(fail)?;
    let report = error_norms_with_truth(&gp, truth, grid).map_err(fail)?;
    let geometry = if n >= 2 {
        Some(geometry(&design).map_err(fail)?)
    } else {
        None
    };
    Ok(StudyCell {
        schedule_value: value,
        n,
        geometry,
        report: Some(report),
        theta_hat: Some(spec),
        nugget_used: Some(gp.nugget_used()),
        status: CellStatus::Ok,
    })
}

/// Sup-norm quantities of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupStudy {
    pub sup_error: Vec<(f64, f64)>,
    pub max_pred_sd: Vec<(f64, f64)>,
    /// Predicted exponent in `N` for both: the L2 exponent in `h` minus `d/2`.
    pub predicted: f64,
}

pub fn sup_error_study(cfg: &StudyConfig) -> Result<SupStudy> {
    let res = run_study(cfg)?;
    Ok(SupStudy {
        sup_error: res.pairs(|r| r.sup_error),
        max_pred_sd: res.pairs(|r| r.max_pred_sd),
        predicted: cfg.predicted_sd_rate()?,
    })
}
