//! Buffered output files, written only once a command has finished.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::CliError;

/// Shortest representation that parses back to the same double.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn csv(
        &mut self,
        name: &str,
        header: &[String],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)
            .map_err(|e| CliError::Other(e.into()))?;
        for r in rows {
            w.write_record(r).map_err(|e| CliError::Other(e.into()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Other(anyhow::anyhow!("{e}")))?;
        self.files.push((name.to_owned(), bytes));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Other(e.into()))?;
        bytes.push(b'\n');
        self.files.push((name.to_owned(), bytes));
        Ok(())
    }

    pub fn write(self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in self.files {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}
