use std::sync::Arc;

use hiergp::convergence::{CellStatus, RateFit};
use hiergp::designs::BoxDomain;
use hiergp::inverse::{
    build_approx, default_quadrature_per_axis, forward_by_name, posterior_error_sweep, rwm_sampler,
    InverseProblem, Prior, QuadratureGrid, Surrogates, SweepConfig, SweepResult, Variant,
};
use hiergp::rng::derive_seed;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{invalid, CliError, Run};
use crate::output::{opt_num, Outputs};

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum Noise {
    Variance(f64),
    Covariance(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainSpec {
    variants: Vec<Variant>,
    /// Schedule value of the design the surrogates are fitted on.
    schedule_value: u32,
    n_chains: usize,
    n_samples: usize,
    step: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InvertParams {
    forward: String,
    #[serde(default = "one")]
    dim_in: usize,
    #[serde(default)]
    domain: Option<BoxDomain>,
    data: Vec<f64>,
    noise: Noise,
    sweep: SweepConfig,
    #[serde(default)]
    chains: Option<ChainSpec>,
}

fn one() -> usize {
    1
}

#[derive(Serialize)]
struct VariantSummary {
    variant: Variant,
    /// First over last `d_Hell` of the successful cells.
    decrease_factor: Option<f64>,
    /// Whether the curve never increases.
    monotone: bool,
    /// Spread `max/min` of `d_Hell / |surrogate L2 error|` (Mean variants).
    ratio_spread: Option<f64>,
    rate: Option<RateFit>,
}

#[derive(Serialize)]
struct Summary {
    cells: usize,
    succeeded: usize,
    quadrature_nodes: usize,
    variants: Vec<VariantSummary>,
}

#[derive(Serialize)]
struct ChainStats {
    chain: usize,
    seed: u64,
    acceptance_rate: f64,
    mean: Vec<f64>,
    variance: Vec<f64>,
}

#[derive(Serialize)]
struct VariantChains {
    variant: Variant,
    chains: Vec<ChainStats>,
}

#[derive(Serialize)]
struct ChainsFile {
    schedule_value: u32,
    n: usize,
    n_samples: usize,
    step: f64,
    variants: Vec<VariantChains>,
}

fn problem(p: &InvertParams) -> Result<InverseProblem, CliError> {
    let forward = forward_by_name(&p.forward, p.dim_in).map_err(invalid)?;
    let domain = p
        .domain
        .clone()
        .unwrap_or_else(|| BoxDomain::unit(p.dim_in));
    let gamma = match &p.noise {
        Noise::Variance(v) => {
            if !(v.is_finite() && *v > 0.0) {
                return Err(invalid("noise variance must be positive"));
            }
            DMatrix::identity(p.data.len(), p.data.len()) * *v
        }
        Noise::Covariance(rows) => {
            let k = rows.len();
            if rows.iter().any(|r| r.len() != k) {
                return Err(invalid("noise covariance must be square"));
            }
            DMatrix::from_fn(k, k, |i, j| rows[i][j])
        }
    };
    InverseProblem::new(domain, Prior::Uniform, forward, p.data.clone(), gamma).map_err(invalid)
}

fn summarize(res: &SweepResult, variants: &[Variant]) -> Summary {
    let ok: Vec<_> = res.cells.iter().filter(|c| c.is_ok()).collect();
    let summaries = variants
        .iter()
        .map(|&v| {
            let curve: Vec<f64> = res.curve(v).iter().map(|p| p.1).collect();
            let decrease_factor = match (curve.first(), curve.last()) {
                (Some(&a), Some(&b)) if curve.len() >= 2 && b > 0.0 => Some(a / b),
                _ => None,
            };
            let monotone = curve.windows(2).all(|w| w[1] <= w[0]);
            let l2 = |c: &hiergp::inverse::SweepCell| match v {
                Variant::MeanG => c.l2_error_g,
                Variant::MeanPhi => c.l2_error_phi,
                _ => None,
            };
            let ratios: Vec<f64> = ok
                .iter()
                .filter_map(|c| Some(c.hellinger(v)? / l2(c)?))
                .filter(|r| r.is_finite() && *r > 0.0)
                .collect();
            let ratio_spread = (ratios.len() >= 2).then(|| {
                let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
                let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
                hi / lo
            });
            VariantSummary {
                variant: v,
                decrease_factor,
                monotone,
                ratio_spread,
                rate: res
                    .rates
                    .iter()
                    .find(|r| r.variant == v)
                    .and_then(|r| r.fit),
            }
        })
        .collect();
    Summary {
        cells: res.cells.len(),
        succeeded: res.succeeded(),
        quadrature_nodes: res.quadrature_nodes,
        variants: summaries,
    }
}

fn hellinger_rows(res: &SweepResult, variants: &[Variant]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["schedule_value", "n", "status", "message"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for v in variants {
        header.push(v.name().to_owned());
        header.push(format!("{}_se", v.name()));
    }
    header.push("l2_error_g".into());
    header.push("l2_error_phi".into());
    let rows = res
        .cells
        .iter()
        .map(|c| {
            let (status, message) = match &c.status {
                CellStatus::Ok => ("ok", String::new()),
                CellStatus::Failed(m) => ("failed", m.clone()),
            };
            let mut r = vec![
                c.schedule_value.to_string(),
                c.n.to_string(),
                status.to_owned(),
                message,
            ];
            for &v in variants {
                let e = c.entries.iter().find(|e| e.variant == v);
                r.push(opt_num(e.map(|e| e.hellinger)));
                r.push(opt_num(e.and_then(|e| e.mc_std_error)));
            }
            r.push(opt_num(c.l2_error_g));
            r.push(opt_num(c.l2_error_phi));
            r
        })
        .collect();
    (header, rows)
}

fn run_chains(
    ip: &InverseProblem,
    sweep: &SweepConfig,
    spec: &ChainSpec,
) -> Result<ChainsFile, CliError> {
    let design = sweep
        .design
        .build(ip.domain(), spec.schedule_value)
        .map_err(invalid)?;
    let sur = Surrogates::fit(
        ip,
        &design,
        &sweep.kernel,
        &spec.variants,
        derive_seed(sweep.seed, design.len() as u64),
        sweep.nugget,
    )?;
    let n_axis = sweep
        .quadrature_per_axis
        .unwrap_or_else(|| default_quadrature_per_axis(ip.dim_in()));
    let grid = Arc::new(QuadratureGrid::for_problem(ip, n_axis)?);
    let variants = spec
        .variants
        .iter()
        .map(|&v| {
            let stream = derive_seed(sweep.seed, v as u64);
            let chains = (0..spec.n_chains)
                .into_par_iter()
                .map(|c| {
                    let seed = derive_seed(stream, c as u64);
                    let pa = build_approx(&sur, v, &grid, seed, c as u64)?;
                    let chain = rwm_sampler(&pa, ip, spec.n_samples, spec.step, seed)?;
                    Ok(ChainStats {
                        chain: c,
                        seed,
                        acceptance_rate: chain.acceptance_rate,
                        mean: chain.mean(),
                        variance: chain.variance(),
                    })
                })
                .collect::<Result<Vec<_>, hiergp::Error>>()?;
            Ok(VariantChains { variant: v, chains })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(ChainsFile {
        schedule_value: spec.schedule_value,
        n: design.len(),
        n_samples: spec.n_samples,
        step: spec.step,
        variants,
    })
}

fn check_chains(spec: &ChainSpec) -> Result<(), CliError> {
    if spec.variants.is_empty() {
        return Err(invalid("chains: variant list is empty"));
    }
    if spec.n_chains == 0 || spec.n_samples == 0 {
        return Err(invalid("chains: n_chains and n_samples must be positive"));
    }
    if !(spec.step.is_finite() && spec.step > 0.0) {
        return Err(invalid("chains: step must be positive"));
    }
    Ok(())
}

pub fn run(run: &Run) -> Result<(), CliError> {
    let mut p: InvertParams = run.parameters()?;
    if let Some(s) = run.seed {
        p.sweep.seed = s;
    }
    let ip = problem(&p)?;
    p.sweep.validate(&ip).map_err(invalid)?;
    if let Some(c) = &p.chains {
        check_chains(c)?;
    }
    let res = posterior_error_sweep(&ip, &p.sweep)?;
    let mut variants = p.sweep.variants.clone();
    variants.sort();
    variants.dedup();

    let mut out = Outputs::default();
    let (header, rows) = hellinger_rows(&res, &variants);
    out.csv("hellinger.csv", &header, &rows)?;
    out.json("summary.json", &summarize(&res, &variants))?;
    if let Some(spec) = &p.chains {
        out.json("chains.json", &run_chains(&ip, &p.sweep, spec)?)?;
    }
    out.write(&run.out)?;
    let needed = p.sweep.schedule.len().min(3);
    if res.succeeded() < needed {
        return Err(CliError::Partial(format!(
            "{} of {} cells succeeded",
            res.succeeded(),
            res.cells.len()
        )));
    }
    Ok(())
}
