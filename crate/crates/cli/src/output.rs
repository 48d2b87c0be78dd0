//! Files written by a run. Every file goes into the run's output directory
//! through an atomic rename and is recorded for the manifest.

use std::path::{Path, PathBuf};

use nsrepro_core::snapshot::{save_scalar, save_velocity, write_atomic};
use nsrepro_core::{ScalarField, VectorField};
use serde::Serialize;

use crate::CliError;

/// The output directory of one run.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Outputs, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Relative names of the files written so far, sorted.
    pub fn files(&self) -> Vec<String> {
        let mut f = self.files.clone();
        f.sort();
        f.dedup();
        f
    }

    fn target(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.target(name);
        write_atomic(&path, bytes)?;
        Ok(())
    }

    /// A tidy CSV: the header line, then one record per row. An empty row
    /// list gives a header-only file.
    pub fn csv<R: Serialize>(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[R],
    ) -> Result<(), CliError> {
        let bytes = csv_bytes(header, rows)?;
        self.bytes(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes =
            serde_json::to_vec_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
        bytes.push(b'\n');
        self.bytes(name, &bytes)
    }

    pub fn velocity(&mut self, name: &str, field: &VectorField, t: f64) -> Result<(), CliError> {
        let path = self.target(name);
        save_velocity(&path, field, t)?;
        Ok(())
    }

    pub fn scalar(&mut self, name: &str, field: &ScalarField, t: f64) -> Result<(), CliError> {
        let path = self.target(name);
        save_scalar(&path, field, t)?;
        Ok(())
    }
}

/// Serialize `rows` under an explicit header.
pub fn csv_bytes<R: Serialize>(header: &[&str], rows: &[R]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header)
        .map_err(|e| CliError::Output(e.to_string()))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::Output(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}
