//! Provenance records, output writers and the run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Everything needed to reproduce a reported number. Deliberately free of
/// wall-clock data so identical command lines produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub command: String,
    pub input: Option<String>,
    pub seed: u64,
    pub samples: usize,
    pub grid: usize,
    pub tol_closed: f64,
    pub tol_mc: f64,
}

impl Provenance {
    pub fn csv_line(&self) -> String {
        format!("# provenance: {}\n", serde_json::to_string(self).expect("provenance serializes"))
    }
}

#[derive(Serialize)]
struct WithProvenance<'a, T: Serialize> {
    provenance: &'a Provenance,
    result: &'a T,
}

pub struct Writer {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&mut self, name: &str, text: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, prov: &Provenance, body: &str) -> CliResult<()> {
        self.write(name, &(prov.csv_line() + body))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, prov: &Provenance, result: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(&WithProvenance { provenance: prov, result }).expect("result serializes");
        text.push('\n');
        self.write(name, &text)
    }
}

/// One manifest per run, written next to the outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub input: Option<String>,
    pub seed: u64,
    pub samples: usize,
    pub grid: usize,
    pub tol_closed: f64,
    pub tol_mc: f64,
    pub outputs: Vec<String>,
    pub wall_clock_secs: f64,
    pub pass: bool,
    pub exit_code: i32,
    pub summary: String,
}

pub const MANIFEST: &str = "manifest.json";

impl RunManifest {
    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        let path = dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}
