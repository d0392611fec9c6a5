use hiergp::designs::{geometry, GeometryDiagnostics};
use serde::Serialize;

use super::{coord_header, DesignSpec};
use crate::config::{CliError, Run};
use crate::output::{num, Outputs};

#[derive(Serialize)]
struct GeometryFile {
    n: usize,
    dim: usize,
    /// Absent for designs with fewer than two points.
    geometry: Option<GeometryDiagnostics>,
}

pub fn run(run: &Run) -> Result<(), CliError> {
    let spec: DesignSpec = run.parameters()?;
    let design = spec.build()?;
    let geometry = if design.len() >= 2 {
        Some(geometry(&design)?)
    } else {
        None
    };
    let rows: Vec<Vec<String>> = design
        .points()
        .map(|p| p.iter().map(|&x| num(x)).collect())
        .collect();
    let mut out = Outputs::default();
    out.csv("points.csv", &coord_header(design.dim(), &[]), &rows)?;
    out.json(
        "geometry.json",
        &GeometryFile {
            n: design.len(),
            dim: design.dim(),
            geometry,
        },
    )?;
    out.write(&run.out)
}
