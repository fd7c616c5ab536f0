//! Report envelope, CSV tables and atomic output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::args::GlobalOpts;
use crate::error::CliResult;

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig<A> {
    pub command: String,
    pub code_version: String,
    pub global: GlobalOpts,
    pub args: A,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub warnings: Vec<String>,
    pub achieved_tolerances: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix: f64,
    pub wall_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<A, R> {
    pub schema_version: u32,
    pub config: RunConfig<A>,
    pub result: R,
    pub diagnostics: Diagnostics,
    pub timing: Timing,
}

impl<A: Serialize, R: Serialize> Report<A, R> {
    pub fn to_json(&self) -> CliResult<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// A CSV table; the first column is the independent variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn body(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }

    /// `#` header lines followed by the body.
    pub fn render<A: Serialize, R>(&self, report: &Report<A, R>) -> CliResult<Vec<u8>> {
        let mut out = Vec::new();
        writeln!(out, "# command: {}", report.config.command)?;
        writeln!(out, "# code_version: {}", report.config.code_version)?;
        writeln!(out, "# config: {}", serde_json::to_string(&report.config)?)?;
        writeln!(out, "# started_unix: {}", report.timing.started_unix)?;
        writeln!(out, "# wall_seconds: {}", report.timing.wall_seconds)?;
        out.extend(self.body()?);
        Ok(out)
    }
}

pub fn num(x: f64) -> String {
    x.to_string()
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn flag(b: bool) -> String {
    (b as u8).to_string()
}

/// Drops the `#` header lines, leaving what reproducibility is judged on.
pub fn csv_body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Everything one run produced, written only once the run has succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn write(&self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            write_atomic(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::Format;

    fn sample(started: f64) -> Report<u32, Vec<f64>> {
        Report {
            schema_version: SCHEMA_VERSION,
            config: RunConfig {
                command: "demo".into(),
                code_version: CODE_VERSION.into(),
                global: GlobalOpts {
                    threads: None,
                    mem_budget: None,
                    out: ".".into(),
                    format: Format::Both,
                    no_cache: false,
                    cache_dir: None,
                },
                args: 7,
            },
            result: vec![0.1, 1e-300, -2.5e17],
            diagnostics: Diagnostics::default(),
            timing: Timing { started_unix: started, wall_seconds: started / 3.0, threads: 1 },
        }
    }

    #[test]
    fn floats_survive_json() {
        let r = sample(1.0);
        let back: Report<u32, Vec<f64>> = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn header_changes_leave_the_body_alone() {
        let mut t = Table::new(&["t", "value"]);
        t.push(vec![num(1.5), opt(None)]);
        t.push(vec![num(2.0), flag(true)]);
        let a = String::from_utf8(t.render(&sample(1.0)).unwrap()).unwrap();
        let b = String::from_utf8(t.render(&sample(2.0)).unwrap()).unwrap();
        assert_ne!(a, b);
        assert_eq!(csv_body(&a), csv_body(&b));
        assert_eq!(csv_body(&a), "t,value\n1.5,\n2,1\n");
        assert_eq!(a.lines().filter(|l| l.starts_with('#')).count(), 5);
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        write_atomic(&path, b"first version, longer").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
