use hiergp::convergence::{
    fit_rate_tail, fit_rate_tail_log_corrected, run_study, CellStatus, RateFit, StudyConfig,
    StudyResult, TheoremRate,
};
use serde::Serialize;

use crate::config::{invalid, CliError, Run};
use crate::output::{num, opt_num, Outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
enum Verdict {
    Pass,
    Fail,
}

#[derive(Serialize)]
struct Banded {
    fit: Option<RateFit>,
    predicted: f64,
    verdict: Verdict,
}

#[derive(Serialize)]
struct Reported {
    fit: Option<RateFit>,
}

#[derive(Serialize)]
struct Summary {
    cells: usize,
    succeeded: usize,
    theorem: TheoremRate,
    /// Whether the target smoothness lies in the range the rate theory covers.
    smoothness_in_safe_range: bool,
    band: f64,
    /// Exponent of the `log N` factor divided out before fitting.
    log_correction: f64,
    l2_error: Banded,
    avg_pred_sd: Banded,
    sup_error: Reported,
    max_pred_sd: Reported,
}

fn fit(pairs: &[(f64, f64)], log_power: f64) -> Option<RateFit> {
    let r = if log_power > 0.0 {
        fit_rate_tail_log_corrected(pairs, log_power)
    } else {
        fit_rate_tail(pairs)
    };
    r.ok()
}

fn banded(fit: Option<RateFit>, predicted: f64, band: f64) -> Banded {
    let ok = fit.is_some_and(|f| (f.slope - predicted).abs() <= band);
    Banded {
        fit,
        predicted,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
    }
}

fn summarize(cfg: &StudyConfig, res: &StudyResult) -> Result<Summary, CliError> {
    let theorem = cfg.predicted_rate()?;
    let sd_rate = cfg.predicted_sd_rate()?;
    let lp = theorem.polylog_power;
    Ok(Summary {
        cells: res.cells.len(),
        succeeded: res.succeeded(),
        theorem,
        smoothness_in_safe_range: cfg.function.build()?.in_safe_range(),
        band: cfg.band,
        log_correction: lp,
        l2_error: banded(fit(&res.l2_pairs(), lp), theorem.exponent_in_n, cfg.band),
        avg_pred_sd: banded(fit(&res.sd_pairs(), lp), sd_rate, cfg.band),
        sup_error: Reported {
            fit: fit(&res.pairs(|r| r.sup_error), lp),
        },
        max_pred_sd: Reported {
            fit: fit(&res.pairs(|r| r.max_pred_sd), lp),
        },
    })
}

const HEADER: [&str; 14] = [
    "schedule_value",
    "n",
    "status",
    "message",
    "fill_distance",
    "separation_radius",
    "mesh_ratio",
    "l2_error",
    "sup_error",
    "avg_pred_sd",
    "max_pred_sd",
    "clamped_variances",
    "nugget_used",
    "theta_hat",
];

fn rows(res: &StudyResult) -> Result<Vec<Vec<String>>, CliError> {
    res.cells
        .iter()
        .map(|c| {
            let (status, message) = match &c.status {
                CellStatus::Ok => ("ok", String::new()),
                CellStatus::Failed(m) => ("failed", m.clone()),
            };
            let g = c.geometry.as_ref();
            let r = c.report.as_ref();
            let theta = match &c.theta_hat {
                Some(t) => serde_json::to_string(t).map_err(|e| CliError::Other(e.into()))?,
                None => String::new(),
            };
            Ok(vec![
                c.schedule_value.to_string(),
                c.n.to_string(),
                status.to_owned(),
                message,
                opt_num(g.map(|g| g.fill_distance)),
                opt_num(g.map(|g| g.separation_radius)),
                opt_num(g.map(|g| g.mesh_ratio)),
                opt_num(r.map(|r| r.l2_error)),
                opt_num(r.map(|r| r.sup_error)),
                opt_num(r.map(|r| r.avg_pred_sd)),
                opt_num(r.map(|r| r.max_pred_sd)),
                r.map(|r| r.clamped_variances.to_string())
                    .unwrap_or_default(),
                c.nugget_used.map(num).unwrap_or_default(),
                theta,
            ])
        })
        .collect()
}

pub fn run(run: &Run) -> Result<(), CliError> {
    let mut cfg: StudyConfig = run.parameters()?;
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(invalid)?;
    cfg.predicted_rate().map_err(invalid)?;
    let res = run_study(&cfg)?;
    let summary = summarize(&cfg, &res)?;
    let header: Vec<String> = HEADER.iter().map(|s| s.to_string()).collect();
    let mut out = Outputs::default();
    out.csv("cells.csv", &header, &rows(&res)?)?;
    out.json("summary.json", &summary)?;
    out.write(&run.out)?;
    if res.succeeded() < 3 {
        return Err(CliError::Partial(format!(
            "{} of {} cells succeeded",
            res.succeeded(),
            res.cells.len()
        )));
    }
    Ok(())
}
