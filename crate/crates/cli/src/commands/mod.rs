pub mod convergence;
pub mod design;
pub mod fit;
pub mod invert;

use hiergp::designs::{
    halton, midpoint_grid, smolyak_grid, uniform_grid, BoxDomain, DesignSet, OneDimFamily,
    SparseGridSpec,
};
use serde::Deserialize;

use crate::config::{invalid, CliError};

const MAX_POINTS: usize = 1 << 22;

/// A single design, as named in a config.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    UniformGrid {
        n_per_axis: usize,
        dim: usize,
        #[serde(default)]
        domain: Option<BoxDomain>,
    },
    Midpoint {
        n_per_axis: usize,
        dim: usize,
        #[serde(default)]
        domain: Option<BoxDomain>,
    },
    Halton {
        n: usize,
        dim: usize,
        #[serde(default)]
        domain: Option<BoxDomain>,
    },
    Smolyak {
        level: u32,
        dim: usize,
        one_dim_family: OneDimFamily,
        #[serde(default)]
        domain: Option<BoxDomain>,
    },
}

impl DesignSpec {
    pub fn dim(&self) -> usize {
        match *self {
            DesignSpec::UniformGrid { dim, .. }
            | DesignSpec::Midpoint { dim, .. }
            | DesignSpec::Halton { dim, .. }
            | DesignSpec::Smolyak { dim, .. } => dim,
        }
    }

    pub fn domain(&self) -> Result<BoxDomain, CliError> {
        let dom = match self {
            DesignSpec::UniformGrid { domain, .. }
            | DesignSpec::Midpoint { domain, .. }
            | DesignSpec::Halton { domain, .. }
            | DesignSpec::Smolyak { domain, .. } => domain.clone(),
        };
        let dim = self.dim();
        if dim == 0 {
            return Err(invalid("design dimension must be at least 1"));
        }
        let dom = dom.unwrap_or_else(|| BoxDomain::unit(dim));
        dom.validate().map_err(invalid)?;
        if dom.dim() != dim {
            return Err(invalid("design domain dimension differs from dim"));
        }
        Ok(dom)
    }

    /// Every failure here is a parameter error.
    pub fn build(&self) -> Result<DesignSet, CliError> {
        let dom = self.domain()?;
        let tensor_size = match *self {
            DesignSpec::UniformGrid {
                n_per_axis, dim, ..
            }
            | DesignSpec::Midpoint {
                n_per_axis, dim, ..
            } => u32::try_from(dim)
                .ok()
                .and_then(|d| n_per_axis.checked_pow(d)),
            DesignSpec::Halton { n, .. } => Some(n),
            DesignSpec::Smolyak { .. } => Some(0),
        };
        if tensor_size.is_none_or(|n| n > MAX_POINTS) {
            return Err(invalid(format!(
                "designs are limited to {MAX_POINTS} points"
            )));
        }
        match *self {
            DesignSpec::UniformGrid { n_per_axis, .. } => uniform_grid(&dom, n_per_axis),
            DesignSpec::Midpoint { n_per_axis, .. } => midpoint_grid(&dom, n_per_axis),
            DesignSpec::Halton { n, .. } => halton(&dom, n),
            DesignSpec::Smolyak {
                level,
                dim,
                one_dim_family,
                ..
            } => smolyak_grid(
                &SparseGridSpec {
                    level,
                    dim,
                    one_dim_family,
                },
                &dom,
            ),
        }
        .map_err(invalid)
    }
}

/// Header `u1, .., ud` followed by `extra`.
pub fn coord_header(dim: usize, extra: &[&str]) -> Vec<String> {
    (1..=dim)
        .map(|j| format!("u{j}"))
        .chain(extra.iter().map(|s| s.to_string()))
        .collect()
}
