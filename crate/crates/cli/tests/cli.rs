use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use divcong::signs::SignRunReport;
use divcong::statistics::MomentReport;
use divcong_cli::args::*;
use divcong_cli::commands::*;
use divcong_cli::error::ErrorRecord;
use divcong_cli::report::{csv_body, Report};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

const EULER_GAMMA: f64 = 0.5772156649015329;

fn divcong(out: &Path, cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divcong"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("DIVCONG_CACHE_DIR", cache)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, cache: &Path, args: &[&str]) {
    let o = divcong(out, cache, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

/// Parses into the typed report, re-serializes and parses again.
fn round_trip<A, R>(path: &Path) -> Report<A, R>
where
    A: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug,
    R: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug,
{
    let text = fs::read_to_string(path).unwrap();
    let typed: Report<A, R> = serde_json::from_str(&text).unwrap();
    let again: Report<A, R> = serde_json::from_str(&serde_json::to_string(&typed).unwrap()).unwrap();
    assert_eq!(typed, again);
    let raw: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(raw, serde_json::to_value(&typed).unwrap(), "typed report dropped or altered fields");
    typed
}

#[test]
fn delta_example_matches_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let (out, cache) = (dir.path().join("o"), dir.path().join("c"));
    ok(&out, &cache, &["delta", "--q1", "2", "--r1", "1", "--q2", "2", "--r2", "1", "--x", "10"]);
    let r: Report<DeltaArgs, Vec<DeltaRow>> = round_trip(&out.join("delta.json"));
    let row = r.result[0];
    // odd n <= 10: d = 1, 2, 2, 2, 3
    assert_eq!(row.d_sum, 10);
    let psi_half = -EULER_GAMMA - 2.0 * 2f64.ln();
    let t = 2.5f64;
    let m = t * t.ln() - (2.0 * psi_half + 1.0) * t;
    assert!((row.main_term - m).abs() < 1e-12);
    assert!((row.delta - (10.0 - m)).abs() < 1e-12);
    assert_eq!(r.schema_version, 1);
    assert_eq!(r.config.command, "delta");
    let csv = fs::read_to_string(out.join("delta.csv")).unwrap();
    assert!(csv.starts_with("# command: delta\n"));
    assert!(csv.contains("# code_version: "));
    assert!(csv.contains("# wall_seconds: "));
    assert!(csv_body(&csv).starts_with("x,t,D,main_term,delta\n10,2.5,10,"));
}

#[test]
fn non_coprime_residue_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (out, cache) = (dir.path().join("o"), dir.path().join("c"));
    let o = divcong(&out, &cache, &["delta", "--r1", "2", "--q1", "2", "--x", "10"]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("coprimality"), "{stderr}");
    let rec: ErrorRecord = serde_json::from_str(&fs::read_to_string(out.join("delta.error.json")).unwrap()).unwrap();
    assert_eq!(rec.kind, "validation");
    assert_eq!(rec.field.as_deref(), Some("r1"));
    assert!(!out.join("delta.json").exists());
}

#[test]
fn config_errors_name_the_field_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let (out, cache) = (dir.path().join("o"), dir.path().join("c"));
    let cases: &[(&[&str], &str)] = &[
        (&["moments", "--tmax", "1e5", "--k", "0"], "k"),
        (&["moments", "--tmax", "1e5", "--tmin", "5e4"], "tmax"),
        (&["kernel", "--alpha", "0.5"], "alpha"),
        (&["kernel", "--alpha", "400"], "t2min"),
        (&["signs", "--t", "1e5", "--step", "2"], "step"),
        (&["signs", "--t", "1e5", "--windows", "3"], "tmax"),
        (&["excursion", "--t", "1e5", "--k", "2"], "k"),
        (&["shortint", "--t", "1e5", "--h0=-1"], "h0"),
        (&["voronoi-residual", "--u", "0.5", "--y", "10"], "U"),
    ];
    for (args, field) in cases {
        let o = divcong(&out, &cache, args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let name = args[0];
        let rec: ErrorRecord =
            serde_json::from_str(&fs::read_to_string(out.join(format!("{name}.error.json"))).unwrap()).unwrap();
        assert_eq!(rec.field.as_deref(), Some(*field), "{args:?}: {}", rec.message);
    }
    let o = divcong(&out, &cache, &["moments", "--tmax"]);
    assert_eq!(o.status.code(), Some(2));
    let rec: ErrorRecord = serde_json::from_str(&String::from_utf8_lossy(&o.stderr)).unwrap();
    assert_eq!(rec.kind, "usage");
    // nothing was sieved
    assert!(!cache.exists() || fs::read_dir(&cache).unwrap().next().is_none());
}

#[test]
fn moments_report_has_fitted_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let (out, cache) = (dir.path().join("o"), dir.path().join("c"));
    ok(&out, &cache, &["moments", "--q1", "3", "--r1", "1", "--q2", "3", "--r2", "1", "--k", "2", "--tmax", "1e5"]);
    let raw: Value = serde_json::from_str(&fs::read_to_string(out.join("moments.json")).unwrap()).unwrap();
    for key in ["schema_version", "config", "result", "diagnostics", "timing"] {
        assert!(raw.get(key).is_some(), "missing {key}");
    }
    assert!(raw["diagnostics"]["warnings"].is_array());
    assert!(raw["diagnostics"]["achieved_tolerances"].is_object());
    let r: Report<MomentsArgs, MomentReport> = round_trip(&out.join("moments.json"));
    assert_eq!(r.result.grid[0], 100.0);
    assert_eq!(*r.result.grid.last().unwrap(), 1e5);
    assert!((r.result.fitted_exponent - 1.5).abs() < 0.1, "{}", r.result.fitted_exponent);
}

#[test]
fn every_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (out, cache) = (dir.path().join("o"), dir.path().join("c"));
    let p = ["--q1", "2", "--q2", "3"];
    let with = |rest: &[&'static str]| -> Vec<&str> { rest.iter().copied().chain(p).collect() };
    ok(&out, &cache, &with(&["sieve", "--end", "5000"]));
    ok(&out, &cache, &with(&["mainterm", "--x", "10,1e6"]));
    ok(&out, &cache, &with(&["meanvalue", "--tmax", "1e4"]));
    ok(&out, &cache, &with(&["shortint", "--t", "2e4", "--h0", "1,4,16"]));
    ok(&out, &cache, &with(&["signs", "--t", "1e4", "--tmax", "2e4", "--windows", "4"]));
    ok(&out, &cache, &with(&["runs", "--t", "1e4"]));
    ok(&out, &cache, &with(&["kernel", "--samples", "4", "--ladder", "2", "--t2min", "2500", "--t2max", "3000"]));
    ok(&out, &cache, &with(&["voronoi-residual", "--u", "2000", "--y", "10,100", "--samples", "500"]));
    ok(&out, &cache, &["excursion", "--q1", "2", "--r2", "5", "--q2", "6", "--t", "2e4", "--points", "8"]);

    let s: Report<SieveArgs, SieveResult> = round_trip(&out.join("sieve.json"));
    assert_eq!((s.result.start, s.result.end), (1, 5000));
    round_trip::<DeltaArgs, Vec<MainTermRow>>(&out.join("mainterm.json"));
    let mv: Report<MeanValueArgs, MeanValueResult> = round_trip(&out.join("meanvalue.json"));
    // r1/q1 = 1/2 makes the predicted slope vanish
    assert_eq!(mv.result.slope_target, 0.0);
    round_trip::<ShortIntArgs, ShortIntResult>(&out.join("shortint.json"));
    let sg: Report<SignsArgs, SignsResult> = round_trip(&out.join("signs.json"));
    assert_eq!(sg.result.windows.len(), 4);
    let rn: Report<RunsArgs, SignRunReport> = round_trip(&out.join("runs.json"));
    assert!(!rn.result.window_results.is_empty());
    let k: Report<KernelArgs, KernelResult> = round_trip(&out.join("kernel.json"));
    assert_eq!(k.result.sweeps.len(), 2);
    assert!(k.result.fit.is_some());
    round_trip::<VoronoiArgs, Vec<VoronoiRow>>(&out.join("voronoi-residual.json"));
    let ex: Report<ExcursionArgs, ExcursionResult> = round_trip(&out.join("excursion.json"));
    assert!(ex.result.summary.ck_empirical);
    assert_eq!(ex.result.profile.len(), 8);
}

#[test]
fn csv_first_column_is_the_independent_variable() {
    let dir = tempfile::tempdir().unwrap();
    let (out, cache) = (dir.path().join("o"), dir.path().join("c"));
    ok(&out, &cache, &["shortint", "--q1", "2", "--q2", "3", "--t", "2e4", "--h0", "1,4"]);
    ok(&out, &cache, &["moments", "--q1", "2", "--q2", "3", "--tmax", "1e4", "--points", "4"]);
    ok(&out, &cache, &["signs", "--q1", "2", "--q2", "3", "--t", "1e4", "--trace-points", "10"]);
    let header = |name: &str| {
        let body = csv_body(&fs::read_to_string(out.join(name)).unwrap());
        body.lines().next().unwrap().split(',').next().unwrap().to_string()
    };
    assert_eq!(header("shortint.csv"), "h0");
    assert_eq!(header("moments.csv"), "T");
    assert_eq!(header("signs_trace.csv"), "t");
    let trace = csv_body(&fs::read_to_string(out.join("signs_trace.csv")).unwrap());
    assert_eq!(trace.lines().count(), 11);
}

#[test]
fn identical_runs_give_identical_csv_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("c");
    let runs: &[&[&str]] = &[
        &["signs", "--q1", "2", "--q2", "3", "--t", "1e4", "--tmax", "5e4", "--windows", "6", "--seed", "11"],
        &["kernel", "--q1", "2", "--q2", "3", "--samples", "5", "--ladder", "1", "--t2min", "2500", "--t2max", "4000", "--seed", "5"],
        &["moments", "--q1", "2", "--q2", "3", "--k", "3", "--tmax", "2e4", "--points", "5"],
    ];
    for args in runs {
        let name = args[0];
        let mut bodies = Vec::new();
        for (i, extra) in [["--threads", "2"], ["--threads", "2"]].iter().enumerate() {
            let out = dir.path().join(format!("{name}{i}"));
            let mut a = args.to_vec();
            a.extend(extra);
            ok(&out, &cache, &a);
            bodies.push(csv_body(&fs::read_to_string(out.join(format!("{name}.csv"))).unwrap()));
        }
        assert_eq!(bodies[0], bodies[1], "{name}");
        assert!(bodies[0].lines().count() > 2);
    }
}

#[test]
fn sieve_cache_is_reused_and_bypassable() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("c");
    let args = ["moments", "--q1", "2", "--q2", "3", "--tmax", "1e4", "--points", "4"];
    ok(&dir.path().join("a"), &cache, &args);
    let entries: Vec<_> = fs::read_dir(&cache).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries.len(), 1, "{entries:?}");
    let name = entries[0].to_str().unwrap().to_string();
    assert!(name.starts_with("d_1-2_1-3_1-"), "{name}");

    // a smaller range is served from the same file
    let o = divcong(&dir.path().join("b"), &cache, &["moments", "--q1", "2", "--q2", "3", "--tmax", "5e3", "--points", "4"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("using cached sieve"));
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);

    let empty = dir.path().join("unused");
    let mut bypass = args.to_vec();
    bypass.push("--no-cache");
    ok(&dir.path().join("d"), &empty, &bypass);
    assert!(!empty.exists());
    let body = |d: &str| csv_body(&fs::read_to_string(dir.path().join(d).join("moments.csv")).unwrap());
    assert_eq!(body("a"), body("d"));
}

#[test]
fn tight_budget_streams_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("c");
    let args = ["shortint", "--q1", "2", "--q2", "3", "--t", "5e3", "--h0", "2,8"];
    ok(&dir.path().join("a"), &cache, &args);
    let mut tight = args.to_vec();
    tight.extend(["--mem-budget", "1000"]);
    ok(&dir.path().join("b"), &cache, &tight);
    let r: Report<ShortIntArgs, ShortIntResult> = round_trip(&dir.path().join("b/shortint.json"));
    assert!(r.diagnostics.warnings.iter().any(|w| w.contains("streaming")));
    let full: Report<ShortIntArgs, ShortIntResult> = round_trip(&dir.path().join("a/shortint.json"));
    assert_eq!(full.result, r.result);

    let o = divcong(&dir.path().join("s"), &cache, &["sieve", "--end", "1000000", "--mem-budget", "1000"]);
    assert_eq!(o.status.code(), Some(3));
    let rec: ErrorRecord =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s/sieve.error.json")).unwrap()).unwrap();
    assert_eq!(rec.kind, "budget");
}

#[test]
fn format_selects_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("c");
    ok(&dir.path().join("j"), &cache, &["delta", "--x", "100", "--format", "json"]);
    ok(&dir.path().join("v"), &cache, &["delta", "--x", "100", "--format", "csv"]);
    assert!(dir.path().join("j/delta.json").exists() && !dir.path().join("j/delta.csv").exists());
    assert!(!dir.path().join("v/delta.json").exists() && dir.path().join("v/delta.csv").exists());
    let r: Report<DeltaArgs, Vec<DeltaRow>> = round_trip(&dir.path().join("j/delta.json"));
    assert_eq!(r.result[0].d_sum, 482);
}

#[test]
fn success_clears_an_old_failure_marker() {
    let dir = tempfile::tempdir().unwrap();
    let (out, cache) = (dir.path().join("o"), dir.path().join("c"));
    assert!(!divcong(&out, &cache, &["delta", "--x", "0"]).status.success());
    assert!(out.join("delta.error.json").exists());
    ok(&out, &cache, &["delta", "--x", "5"]);
    assert!(!out.join("delta.error.json").exists());
}

#[test]
fn plot_scripts_reference_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (out, cache) = (dir.path().join("o"), dir.path().join("c"));
    let p = ["--q1", "2", "--q2", "3"];
    let with = |rest: &[&'static str]| -> Vec<&str> { rest.iter().copied().chain(p).collect() };
    ok(&out, &cache, &with(&["signs", "--t", "1e4", "--trace-points", "50"]));
    ok(&out, &cache, &with(&["runs", "--t", "5e3", "--trace-points", "50"]));
    ok(&out, &cache, &with(&["moments", "--k", "3", "--tmax", "1e4", "--points", "4"]));
    ok(&out, &cache, &with(&["shortint", "--t", "1e4", "--h0", "1,4"]));
    ok(&out, &cache, &with(&["kernel", "--samples", "3", "--ladder", "1", "--t2min", "2500", "--t2max", "3000"]));
    ok(&out, &cache, &with(&["delta", "--x", "10"]));

    let expect: &[(&str, &[&str])] = &[
        ("signs", &["signs_trace.csv", "\"envelope_plus\"", "\"envelope_minus\"", "\"delta\""]),
        ("runs", &["runs_trace.csv", "\"envelope_plus\""]),
        ("moments", &["moments.csv", "K = 3", "\"ck_estimate\"", "slope = 1.0 + K / 4.0"]),
        ("shortint", &["shortint.csv", "\"h0\"", "\"ratio\""]),
        ("kernel", &["kernel.csv", "PHASE = ", "math.sin(4 * math.pi * s - 2 * math.pi * PHASE)"]),
    ];
    for (name, needles) in expect {
        ok(&out, &cache, &["plot", out.join(format!("{name}.json")).to_str().unwrap()]);
        let script = fs::read_to_string(out.join(format!("{name}_plot.py"))).unwrap();
        for n in *needles {
            assert!(script.contains(n), "{name} script lacks {n}");
        }
        if let Ok(o) = Command::new("python3").args(["-m", "py_compile"]).arg(out.join(format!("{name}_plot.py"))).output() {
            assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let kernel: Report<KernelArgs, KernelResult> = round_trip(&out.join("kernel.json"));
    let script = fs::read_to_string(out.join("kernel_plot.py")).unwrap();
    assert!(script.contains(&format!("PHASE = {:?}", kernel.result.leading_phase)));
    // 1/2 + 1/3 + 1/8
    assert!((kernel.result.leading_phase - (0.5 + 1.0 / 3.0 + 0.125)).abs() < 1e-15);

    let o = divcong(&out, &cache, &["plot", out.join("delta.json").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown report type"));
    assert!(out.join("plot.error.json").exists());
}
