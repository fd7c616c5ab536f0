//! matplotlib scripts for finished reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::report::write_atomic;

const PREAMBLE: &str = r##"import csv
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(name):
    with open(os.path.join(DATA_DIR, name)) as f:
        lines = [l for l in f if not l.startswith("#")]
    reader = csv.DictReader(lines)
    cols = {k: [] for k in reader.fieldnames}
    for row in reader:
        for k, v in row.items():
            cols[k].append(float(v) if v != "" else float("nan"))
    return cols

"##;

fn envelope_plot(command: &str) -> String {
    format!(
        r##"cols = load("{command}_trace.csv")
fig, ax = plt.subplots(figsize=(10, 4))
ax.plot(cols["t"], cols["delta"], lw=0.6, label="delta")
ax.plot(cols["t"], cols["envelope_plus"], "k--", lw=0.8, label="+c t^(1/4)")
ax.plot(cols["t"], cols["envelope_minus"], "k--", lw=0.8, label="-c t^(1/4)")
ax.axhline(0.0, color="grey", lw=0.5)
ax.set_xlabel("t")
ax.set_ylabel("Delta(q1 q2 t)")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(DATA_DIR, "{command}.png"), dpi=150)
"##
    )
}

fn moments_plot(k: u64) -> String {
    format!(
        r##"K = {k}
cols = load("moments.csv")
T = cols["T"]
I = [abs(v) for v in cols["integral"]]
slope = 1.0 + K / 4.0
ref = [I[0] * (t / T[0]) ** slope for t in T]
fig, (a, b) = plt.subplots(1, 2, figsize=(11, 4))
a.loglog(T, I, "o-", ms=3, label="|integral of Delta^k|")
a.loglog(T, ref, "k--", label="slope %.2f" % slope)
a.set_xlabel("T")
a.legend()
b.semilogx(T, cols["ck_estimate"], "o-", ms=3)
b.set_xlabel("T")
b.set_ylabel("C_k estimate")
fig.tight_layout()
fig.savefig(os.path.join(DATA_DIR, "moments.png"), dpi=150)
"##
    )
}

const SHORTINT_PLOT: &str = r##"cols = load("shortint.csv")
fig, ax = plt.subplots(figsize=(6, 4))
ax.semilogx(cols["h0"], cols["ratio"], "o-")
ax.set_xlabel("h0")
ax.set_ylabel("I(T, h0) / envelope")
fig.tight_layout()
fig.savefig(os.path.join(DATA_DIR, "shortint.png"), dpi=150)
"##;

fn kernel_plot(phase: f64) -> String {
    format!(
        r##"PHASE = {phase:?}
cols = load("kernel.csv")
t = cols["t"]
lo, hi = min(t), max(t)
dense = [lo + (hi - lo) * i / 2000 for i in range(2001)]
fig, axes = plt.subplots(2, 1, figsize=(10, 6), sharex=True)
for ax, zeta, key in [(axes[0], 1, "plus"), (axes[1], -1, "minus")]:
    pred = [-(zeta / 2) * math.sin(4 * math.pi * s - 2 * math.pi * PHASE) for s in dense]
    ax.plot(dense, pred, lw=0.6, label="-(zeta/2) sin(4 pi t - 2 pi phase)")
    ax.plot(t, cols["measured_" + key], "o", ms=3, label="measured")
    ax.set_ylabel("zeta = %+d" % zeta)
    ax.legend(loc="upper right")
axes[1].set_xlabel("t")
fig.tight_layout()
fig.savefig(os.path.join(DATA_DIR, "kernel.png"), dpi=150)
"##
    )
}

/// Script text for the report at `report_path`.
pub fn plot_script(report_path: &Path) -> CliResult<String> {
    let text = fs::read_to_string(report_path)
        .map_err(|e| CliError::Plot(format!("cannot read report {}: {e}", report_path.display())))?;
    let v: Value = serde_json::from_str(&text)?;
    let command = v.pointer("/config/command").and_then(Value::as_str).unwrap_or("");
    let body = match command {
        "signs" | "runs" => envelope_plot(command),
        "moments" => {
            let k = v.pointer("/result/k").and_then(Value::as_u64).ok_or_else(|| bad_report("result.k"))?;
            moments_plot(k)
        }
        "shortint" => SHORTINT_PLOT.to_string(),
        "kernel" => {
            let phase = v
                .pointer("/result/leading_phase")
                .and_then(Value::as_f64)
                .ok_or_else(|| bad_report("result.leading_phase"))?;
            kernel_plot(phase)
        }
        other => return Err(CliError::Plot(format!("unknown report type '{other}'"))),
    };
    let dir = report_path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let dir = fs::canonicalize(dir)?;
    let dir = serde_json::to_string(&dir.display().to_string())?;
    Ok(format!("{PREAMBLE}DATA_DIR = {dir}\n\n{body}"))
}

fn bad_report(field: &str) -> CliError {
    CliError::Plot(format!("report lacks {field}"))
}

/// Writes the script next to the report unless `output` is given.
pub fn emit_plot_script(report_path: &Path, output: Option<&Path>) -> CliResult<PathBuf> {
    let script = plot_script(report_path)?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            let stem = report_path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
            report_path.with_file_name(format!("{stem}_plot.py"))
        }
    };
    write_atomic(&path, script.as_bytes())?;
    Ok(path)
}
