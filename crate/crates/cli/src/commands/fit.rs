use std::path::{Path, PathBuf};

use hiergp::convergence::KernelPolicy;
use hiergp::designs::{BoxDomain, DesignSet};
use hiergp::hyperfit::{estimate_with_nugget, EstimationResult, HyperBox, Objective};
use hiergp::kernels::DEFAULT_NUGGET;
use hiergp::regression::FittedGp;
use hiergp::testbed::TestFunctionRecipe;
use serde::{Deserialize, Serialize};

use super::{coord_header, DesignSpec};
use crate::config::{invalid, CliError, Run};
use crate::output::{num, Outputs};

#[derive(Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
enum DataSource {
    /// Header row, then one row per point: coordinates followed by the value.
    Csv {
        path: PathBuf,
        #[serde(default)]
        domain: Option<BoxDomain>,
    },
    Function {
        function: TestFunctionRecipe,
        design: DesignSpec,
    },
}

fn default_nugget() -> f64 {
    DEFAULT_NUGGET
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FitParams {
    data: DataSource,
    kernel: KernelPolicy,
    grid: DesignSpec,
    #[serde(default = "default_nugget")]
    nugget: f64,
    #[serde(default)]
    seed: u64,
}

#[derive(Serialize)]
struct EstimationFile {
    n: usize,
    dim: usize,
    estimation: EstimationResult,
    nugget_used: f64,
}

struct Data {
    design: DesignSet,
    values: Vec<f64>,
    truth: Option<hiergp::testbed::TestFunction>,
}

fn read_csv(run: &Run, path: &Path, domain: &Option<BoxDomain>) -> Result<Data, CliError> {
    let path = run.resolve(path);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(&path)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let row: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| invalid(format!("data row {} is not numeric", i + 1)))?;
        if row.len() < 2 {
            return Err(invalid("data rows need coordinates and a value"));
        }
        values.push(row[row.len() - 1]);
        points.push(row[..row.len() - 1].to_vec());
    }
    if points.is_empty() {
        return Err(invalid("data file has no rows"));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(invalid("data rows have differing lengths"));
    }
    let domain = domain.clone().unwrap_or_else(|| BoxDomain::unit(dim));
    let design = DesignSet::from_points(domain, points).map_err(invalid)?;
    Ok(Data {
        design,
        values,
        truth: None,
    })
}

fn load_data(run: &Run, src: &DataSource) -> Result<Data, CliError> {
    match src {
        DataSource::Csv { path, domain } => read_csv(run, path, domain),
        DataSource::Function { function, design } => {
            let f = function.build().map_err(invalid)?;
            let design = design.build()?;
            if f.dim() != design.dim() {
                return Err(invalid("function and design dimensions differ"));
            }
            let values = f.eval_on(&design);
            Ok(Data {
                design,
                values,
                truth: Some(f),
            })
        }
    }
}

pub fn run(run: &Run) -> Result<(), CliError> {
    let p: FitParams = run.parameters()?;
    let seed = run.seed.unwrap_or(p.seed);
    if !(p.nugget.is_finite() && p.nugget >= 0.0) {
        return Err(invalid("nugget must be finite and nonnegative"));
    }
    let data = load_data(run, &p.data)?;
    let dim = data.design.dim();
    p.kernel.validate(dim).map_err(invalid)?;
    let grid = p.grid.build()?;
    if grid.dim() != dim {
        return Err(invalid("prediction grid and data dimensions differ"));
    }

    let (hbox, mean, budget) = match &p.kernel {
        KernelPolicy::Fixed { kernel } => (HyperBox::fixed(&kernel.cov), kernel.mean.clone(), 1),
        KernelPolicy::Estimate {
            hyper_box,
            mean,
            budget,
        } => (hyper_box.clone(), mean.clone(), *budget),
    };
    let est = estimate_with_nugget(
        &hbox,
        &mean,
        &data.design,
        &data.values,
        &Objective::Mle,
        budget,
        seed,
        p.nugget,
    )?;
    let gp = FittedGp::new(&est.theta_hat, &data.design, &data.values, p.nugget)?;
    let means = gp.predict_mean_batch(&grid)?;
    let vars = gp.predict_var_batch(&grid)?.values;

    let extra: &[&str] = if data.truth.is_some() {
        &["mean", "sd", "truth"]
    } else {
        &["mean", "sd"]
    };
    let rows: Vec<Vec<String>> = grid
        .points()
        .zip(means.iter().zip(&vars))
        .map(|(u, (&m, &v))| {
            let mut r: Vec<String> = u.iter().map(|&x| num(x)).collect();
            r.push(num(m));
            r.push(num(v.max(0.0).sqrt()));
            if let Some(f) = &data.truth {
                r.push(num(f.eval(u)));
            }
            r
        })
        .collect();
    let mut out = Outputs::default();
    out.csv("predictions.csv", &coord_header(dim, extra), &rows)?;
    out.json(
        "estimation.json",
        &EstimationFile {
            n: data.design.len(),
            dim,
            estimation: est,
            nugget_used: gp.nugget_used(),
        },
    )?;
    out.write(&run.out)
}
