//! Config files and the error type that decides the exit code.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

pub enum CliError {
    /// Bad config or parameters; nothing was written.
    Validation(String),
    /// Outputs were written but too few study cells succeeded.
    Partial(String),
    Other(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Partial(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Partial(m) => write!(f, "study incomplete: {m}"),
            CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<hiergp::Error> for CliError {
    fn from(e: hiergp::Error) -> Self {
        CliError::Other(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

pub fn invalid(e: impl fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    #[serde(default)]
    command: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    parameters: serde_json::Value,
}

/// A loaded config: command parameters plus the resolved seed and output directory.
pub struct Run {
    parameters: serde_json::Value,
    /// `--seed`, else the top-level `seed` of the file.
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// Directory of the config file; relative paths inside it resolve here.
    pub base_dir: PathBuf,
}

impl Run {
    pub fn parameters<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        serde_json::from_value(self.parameters.clone())
            .map_err(|e| invalid(format!("parameters: {e}")))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn load(command: &str, path: &Path, ov: &Overrides) -> Result<Run, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let file: RunFile =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    if let Some(c) = &file.command {
        if c != command {
            return Err(invalid(format!(
                "config is for command {c:?}, not {command:?}"
            )));
        }
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = match (&ov.out, &file.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_absolute() => o.clone(),
        (None, Some(o)) => base_dir.join(o),
        (None, None) => return Err(invalid("no output directory (set output_dir or --out)")),
    };
    Ok(Run {
        parameters: file.parameters,
        seed: ov.seed.or(file.seed),
        out,
        base_dir,
    })
}
