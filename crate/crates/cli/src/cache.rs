//! On-disk sieve cache, one file per (params, range).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use divcong::{CongruenceParams, DivisorSieve};
use tempfile::NamedTempFile;

use crate::args::GlobalOpts;
use crate::error::CliResult;

pub const CACHE_ENV: &str = "DIVCONG_CACHE_DIR";

pub fn cache_dir(global: &GlobalOpts) -> PathBuf {
    if let Some(d) = &global.cache_dir {
        return d.clone();
    }
    match std::env::var_os(CACHE_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => std::env::temp_dir().join("divcong-cache"),
    }
}

fn params_key(p: &CongruenceParams) -> String {
    format!("d_{}-{}_{}-{}", p.first.r(), p.first.q(), p.second.r(), p.second.q())
}

pub fn entry_name(p: &CongruenceParams, start: u64, end: u64) -> String {
    format!("{}_{start}-{end}.sieve", params_key(p))
}

fn parse_range(name: &str, key: &str) -> Option<(u64, u64)> {
    let rest = name.strip_prefix(key)?.strip_prefix('_')?.strip_suffix(".sieve")?;
    let (a, b) = rest.split_once('-')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

/// The smallest cached table starting at `n = 1` and reaching `end`.
pub fn find_covering(dir: &Path, p: &CongruenceParams, end: u64) -> Option<PathBuf> {
    let key = params_key(p);
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in fs::read_dir(dir).ok()?.flatten() {
        let name = entry.file_name();
        let Some((a, b)) = name.to_str().and_then(|n| parse_range(n, &key)) else { continue };
        if a == 1 && b >= end && best.as_ref().is_none_or(|(e, _)| b < *e) {
            best = Some((b, entry.path()));
        }
    }
    best.map(|(_, p)| p)
}

/// Writes the sieve under its canonical name; readers never see a partial
/// file because the data lands in a temporary file that is renamed last.
pub fn store(dir: &Path, sieve: &DivisorSieve) -> CliResult<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(entry_name(sieve.params(), sieve.range_start(), sieve.range_end()));
    let tmp = NamedTempFile::new_in(dir)?;
    let mut w = BufWriter::new(tmp);
    sieve.write_to(&mut w)?;
    w.flush()?;
    let tmp = w.into_inner().map_err(|e| e.into_error())?;
    tmp.as_file().sync_all()?;
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}
