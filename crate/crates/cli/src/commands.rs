use std::collections::BTreeMap;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use divcong::arith::{digamma_rational, main_term};
use divcong::engine::SOUNDNESS_CEILING;
use divcong::integrate::QuadOptions;
use divcong::signs::{
    detect_runs, minimal_c2, scan_sign_changes, scan_windows, MinimalC2, SignRunReport, WindowResult,
};
use divcong::statistics::{
    excursion_grid, f_k_profile, log_grid, mean_value_checks, moment_integrals_with_error, short_interval_variance,
    summarize_excursion, ExcursionPoint, ExcursionReport, MeanValueCheck, MomentReport, ShortIntervalReport,
};
use divcong::voronoi::{
    fit_residual_constants, kernel_sweep, pearson, series_correlation, truncation_residual_meansquare,
    KernelSweep, ResidualConstants, ResidualReport, VoronoiConfig, VoronoiSeries,
};
use divcong::{CongruenceParams, DeltaEvaluator, DivisorSieve, SieveOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::cache;
use crate::error::CliResult;
use crate::report::{flag, num, opt, Diagnostics, Outputs, Report, RunConfig, Table, Timing, SCHEMA_VERSION};

/// Budget used when `--mem-budget` is absent.
pub const DEFAULT_MEM_BUDGET: u64 = 2 << 30;

/// Bytes held by a sieve table plus its prefix sums up to `n`.
pub fn table_bytes(n: u64) -> u64 {
    n.saturating_add(1).saturating_mul(12)
}

pub struct Ctx {
    pub global: GlobalOpts,
    warnings: Vec<String>,
    tolerances: BTreeMap<String, f64>,
    started: Instant,
    started_unix: f64,
}

impl Ctx {
    pub fn new(global: GlobalOpts) -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Self { global, warnings: Vec::new(), tolerances: BTreeMap::new(), started: Instant::now(), started_unix }
    }

    fn warn(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    fn tolerance(&mut self, key: &str, v: f64) {
        self.tolerances.insert(key.to_string(), v);
    }

    fn budget(&self) -> u64 {
        self.global.mem_budget.unwrap_or(DEFAULT_MEM_BUDGET)
    }

    /// Tabulated evaluator when the table fits the budget (reusing or filling
    /// the cache), otherwise a streaming one.
    fn evaluator(&mut self, p: CongruenceParams, limit: u64) -> CliResult<DeltaEvaluator> {
        let budget = self.budget();
        if table_bytes(limit) > budget {
            self.warn(format!(
                "table up to n = {limit} needs {} bytes, over the {budget} byte budget; streaming instead",
                table_bytes(limit)
            ));
            return Ok(DeltaEvaluator::streaming(p, limit));
        }
        let dir = cache::cache_dir(&self.global);
        if !self.global.no_cache {
            if let Some(path) = cache::find_covering(&dir, &p, limit) {
                match DivisorSieve::load(&path) {
                    Ok(s) if table_bytes(s.range_end()) <= budget && s.params() == &p => {
                        eprintln!("using cached sieve {}", path.display());
                        return Ok(DeltaEvaluator::from_sieve(&s)?);
                    }
                    Ok(_) => {}
                    Err(e) => self.warn(format!("ignoring unreadable cache file {}: {e}", path.display())),
                }
            }
        }
        let opts = SieveOptions { mem_budget: Some(budget), ..SieveOptions::default() };
        let sieve = DivisorSieve::build(p, 1, limit, &opts)?;
        if !self.global.no_cache {
            match cache::store(&dir, &sieve) {
                Ok(path) => eprintln!("cached sieve at {}", path.display()),
                Err(e) => self.warn(format!("could not write sieve cache: {e}")),
            }
        }
        Ok(DeltaEvaluator::from_sieve(&sieve)?)
    }

    fn finish<A: Serialize, R: Serialize>(
        self,
        command: &str,
        args: A,
        result: R,
        tables: Vec<(&str, Table)>,
    ) -> CliResult<Outputs> {
        let report = Report {
            schema_version: SCHEMA_VERSION,
            config: RunConfig {
                command: command.to_string(),
                code_version: crate::report::CODE_VERSION.to_string(),
                global: self.global.clone(),
                args,
            },
            result,
            diagnostics: Diagnostics { warnings: self.warnings, achieved_tolerances: self.tolerances },
            timing: Timing {
                started_unix: self.started_unix,
                wall_seconds: self.started.elapsed().as_secs_f64(),
                threads: rayon::current_num_threads(),
            },
        };
        let mut out = Outputs::default();
        if self.global.format.json() {
            out.files.push((format!("{command}.json"), report.to_json()?.into_bytes()));
        }
        if self.global.format.csv() {
            for (suffix, table) in tables {
                let name =
                    if suffix.is_empty() { format!("{command}.csv") } else { format!("{command}_{suffix}.csv") };
                out.files.push((name, table.render(&report)?));
            }
        }
        Ok(out)
    }
}

fn scaled_limit(p: &CongruenceParams, t: f64) -> u64 {
    (p.modulus_product() as f64 * t).ceil() as u64 + 2
}

// ---------------------------------------------------------------- sieve

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveResult {
    pub start: u64,
    pub end: u64,
    /// Sum of d(n) over the range.
    pub total: u64,
    pub max_count: u32,
    pub argmax: u64,
    pub cache_path: Option<String>,
}

pub fn sieve(mut ctx: Ctx, a: SieveArgs) -> CliResult<Outputs> {
    a.validate()?;
    let p = a.params.params()?;
    let opts = SieveOptions { mem_budget: Some(ctx.budget()), ..SieveOptions::default() };
    let s = DivisorSieve::build(p, a.start, a.end, &opts)?;
    let counts = s.counts();
    let (mut max_count, mut argmax) = (0, a.start);
    for (i, &c) in counts.iter().enumerate() {
        if c > max_count {
            max_count = c;
            argmax = a.start + i as u64;
        }
    }
    let total = counts.iter().map(|&c| c as u64).sum();
    let cache_path = if ctx.global.no_cache {
        None
    } else {
        Some(cache::store(&cache::cache_dir(&ctx.global), &s)?.display().to_string())
    };
    let mut table = Table::new(&["n", "d", "cumulative"]);
    let mut acc = 0u64;
    for (i, &c) in counts.iter().take(a.rows as usize).enumerate() {
        acc += c as u64;
        table.push(vec![(a.start + i as u64).to_string(), c.to_string(), acc.to_string()]);
    }
    if (counts.len() as u64) > a.rows {
        ctx.warn(format!("CSV holds the first {} of {} entries", a.rows, counts.len()));
    }
    let result = SieveResult { start: a.start, end: a.end, total, max_count, argmax, cache_path };
    ctx.finish("sieve", a, result, vec![("", table)])
}

// ---------------------------------------------------------------- delta / mainterm

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub x: f64,
    /// `x / (q1 q2)`.
    pub t: f64,
    #[serde(rename = "D")]
    pub d_sum: u64,
    pub main_term: f64,
    pub delta: f64,
}

pub fn delta(mut ctx: Ctx, a: DeltaArgs) -> CliResult<Outputs> {
    a.validate()?;
    let p = a.params.params()?;
    let top = a.x.iter().cloned().fold(1.0, f64::max);
    if top > SOUNDNESS_CEILING {
        ctx.warn(format!("x = {top} exceeds {SOUNDNESS_CEILING:e}; the f64 difference D - M may lose digits"));
    }
    let ev = DeltaEvaluator::streaming(p, top.floor() as u64);
    let q = p.modulus_product() as f64;
    let mut rows = Vec::with_capacity(a.x.len());
    let mut table = Table::new(&["x", "t", "D", "main_term", "delta"]);
    for &x in &a.x {
        let d_sum = ev.summatory(x);
        let m = main_term(x, &p)?;
        let r = DeltaRow { x, t: x / q, d_sum, main_term: m, delta: d_sum as f64 - m };
        table.push(vec![num(r.x), num(r.t), r.d_sum.to_string(), num(r.main_term), num(r.delta)]);
        rows.push(r);
    }
    ctx.finish("delta", a, rows, vec![("", table)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MainTermRow {
    pub x: f64,
    pub t: f64,
    pub main_term: f64,
    pub psi1: f64,
    pub psi2: f64,
    /// `psi1 + psi2 + 1`.
    pub linear_coefficient: f64,
}

pub fn mainterm(ctx: Ctx, a: DeltaArgs) -> CliResult<Outputs> {
    a.validate()?;
    let p = a.params.params()?;
    let psi1 = digamma_rational(p.first.r(), p.first.q())?;
    let psi2 = digamma_rational(p.second.r(), p.second.q())?;
    let q = p.modulus_product() as f64;
    let mut rows = Vec::new();
    let mut table = Table::new(&["x", "t", "main_term", "psi1", "psi2", "linear_coefficient"]);
    for &x in &a.x {
        let r = MainTermRow { x, t: x / q, main_term: main_term(x, &p)?, psi1, psi2, linear_coefficient: p.linear_coefficient() };
        table.push(vec![num(r.x), num(r.t), num(r.main_term), num(psi1), num(psi2), num(r.linear_coefficient)]);
        rows.push(r);
    }
    ctx.finish("mainterm", a, rows, vec![("", table)])
}

// ---------------------------------------------------------------- moments

pub fn moments(mut ctx: Ctx, a: MomentsArgs) -> CliResult<Outputs> {
    a.validate()?;
    let p = a.params.params()?;
    let grid = log_grid(a.tmin(), a.tmax, a.points);
    // checks the grid and k before any sieving
    MomentReport::from_integrals(a.k, p, grid.clone(), vec![1.0; grid.len()])?;
    let ev = ctx.evaluator(p, scaled_limit(&p, a.tmax))?;
    let opts = QuadOptions::with_tol(a.tol);
    let integrals = moment_integrals_with_error(a.k, &grid, &ev, &opts)?;
    let err = integrals.iter().map(|i| i.error).fold(0.0, f64::max);
    ctx.tolerance("quadrature_error", err);
    let report = MomentReport::from_integrals(a.k, p, grid, integrals.iter().map(|i| i.value[0]).collect())?;
    if report.exploratory {
        ctx.warn(format!("k = {} is beyond the range where C_k is known to exist; exploratory only", a.k));
    }
    let mut table = Table::new(&["T", "integral", "ck_estimate", "residual"]);
    for i in 0..report.grid.len() {
        table.push(vec![
            num(report.grid[i]),
            num(report.integrals[i]),
            num(report.ck_estimates[i]),
            num(report.residuals[i]),
        ]);
    }
    ctx.finish("moments", a, report, vec![("", table)])
}

// ---------------------------------------------------------------- meanvalue

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanValueResult {
    pub slope_target: f64,
    pub checks: Vec<MeanValueCheck>,
}

pub fn meanvalue(mut ctx: Ctx, a: MeanValueArgs) -> CliResult<Outputs> {
    a.validate()?;
    let p = a.params.params()?;
    let grid = log_grid(a.tmin(), a.tmax, a.points);
    let ev = ctx.evaluator(p, a.tmax.ceil() as u64 + 2)?;
    ctx.tolerance("quadrature_tol_requested", a.tol);
    let checks = mean_value_checks(&grid, &ev, &QuadOptions::with_tol(a.tol))?;
    let mut table = Table::new(&["T", "integral", "slope_estimate", "slope_target", "residual_normalized"]);
    for c in &checks {
        table.push(vec![num(c.t), num(c.integral), num(c.slope_estimate), num(c.slope_target), num(c.residual_normalized)]);
    }
    let result = MeanValueResult { slope_target: p.mean_value_slope(), checks };
    ctx.finish("meanvalue", a, result, vec![("", table)])
}

// ---------------------------------------------------------------- shortint

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortIntResult {
    pub t: f64,
    pub rows: Vec<ShortIntervalReport>,
    pub max_ratio: f64,
}

pub fn shortint(mut ctx: Ctx, a: ShortIntArgs) -> CliResult<Outputs> {
    a.validate()?;
    let p = a.params.params()?;
    let hmax = a.h0.iter().cloned().fold(0.0, f64::max);
    let ev = ctx.evaluator(p, scaled_limit(&p, a.t + hmax))?;
    let opts = QuadOptions::with_tol(a.tol);
    let rows = a
        .h0
        .iter()
        .map(|&h| short_interval_variance(a.t, h, &ev, &opts))
        .collect::<divcong::Result<Vec<_>>>()?;
    let mut table = Table::new(&["h0", "value", "envelope", "ratio", "h0_outside_range", "error_estimate"]);
    for r in &rows {
        if r.h0_outside_range {
            ctx.warn(format!("h0 = {} lies outside [1, sqrt(T)/2]", r.h0));
        }
        table.push(vec![num(r.h0), num(r.value), num(r.envelope), num(r.ratio), flag(r.h0_outside_range), num(r.error_estimate)]);
    }
    ctx.tolerance("quadrature_error", rows.iter().map(|r| r.error_estimate).fold(0.0, f64::max));
    let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let t = a.t;
    ctx.finish("shortint", a, ShortIntResult { t, rows, max_ratio }, vec![("", table)])
}

// ---------------------------------------------------------------- signs / runs

fn hypothesis_warning(ctx: &mut Ctx, p: &CongruenceParams) -> bool {
    let outside = !p.meets_sign_hypothesis();
    if outside {
        ctx.warn("params do not satisfy q1 >= 2, q2 >= 3; sign results are empirical only");
    }
    outside
}

fn window_table(results: &[WindowResult]) -> Table {
    let mut table = Table::new(&[
        "window_start",
        "window_end",
        "crossing_count",
        "found_positive_extreme",
        "found_negative_extreme",
        "c2_for_crossing",
        "c2_for_witnesses",
        "t1",
        "t2",
    ]);
    for w in results {
        table.push(vec![
            num(w.window_start),
            num(w.window_end),
            w.crossing_count.to_string(),
            flag(w.found_positive_extreme),
            flag(w.found_negative_extreme),
            opt(w.c2_for_crossing),
            opt(w.c2_for_witnesses),
            opt(w.witnesses.t1),
            opt(w.witnesses.t2),
        ]);
    }
    table
}

/// Delta sampled on `n` midpoints of `[lo, hi]` with the `+-c t^(1/4)` lines.
fn trace_table(ev: &DeltaEvaluator, lo: f64, hi: f64, n: usize, c: f64) -> Table {
    let mut table = Table::new(&["t", "delta", "envelope_plus", "envelope_minus"]);
    let h = (hi - lo) / n as f64;
    for i in 0..n {
        let t = lo + (i as f64 + 0.5) * h;
        let e = c * t.powf(0.25);
        table.push(vec![num(t), num(ev.delta_scaled(t)), num(e), num(-e)]);
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignsResult {
    pub windows: Vec<WindowResult>,
    pub minimal_c2: MinimalC2,
    pub windows_with_crossing: usize,
    pub windows_with_both_witnesses: usize,
    /// Every sign change in the first window.
    pub first_window_crossings: Vec<f64>,
    pub outside_theorem_hypothesis: bool,
}

pub fn signs(mut ctx: Ctx, a: SignsArgs) -> CliResult<Outputs> {
    a.validate()?;
    let p = a.params.params()?;
    let outside = hypothesis_warning(&mut ctx, &p);
    let starts: Vec<f64> = if a.windows == 1 {
        vec![a.t]
    } else {
        let hi = a.tmax.expect("validated");
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        (0..a.windows).map(|_| rng.gen_range(a.t..hi)).collect()
    };
    let last = starts.iter().cloned().fold(a.t, f64::max);
    let ev = ctx.evaluator(p, scaled_limit(&p, last + a.c2 * last.sqrt()))?;
    let windows = scan_windows(&ev, &starts, a.c1, a.c2, a.step)?;
    // crossings and witnesses are located to adjacent floats
    ctx.tolerance("crossing_resolution_ulps", 1.0);
    let first_end = starts[0] + a.c2 * starts[0].sqrt();
    let first_window_crossings = scan_sign_changes(&ev, starts[0], first_end, a.step)?;
    let trace = trace_table(&ev, starts[0], first_end, a.trace_points.max(1), a.c1);
    let result = SignsResult {
        minimal_c2: minimal_c2(&windows),
        windows_with_crossing: windows.iter().filter(|w| w.crossing_count > 0).count(),
        windows_with_both_witnesses: windows
            .iter()
            .filter(|w| w.found_positive_extreme && w.found_negative_extreme)
            .count(),
        first_window_crossings,
        outside_theorem_hypothesis: outside,
        windows,
    };
    let table = window_table(&result.windows);
    ctx.finish("signs", a, result, vec![("", table), ("trace", trace)])
}

pub fn runs(mut ctx: Ctx, a: RunsArgs) -> CliResult<Outputs> {
    a.validate()?;
    let p = a.params.params()?;
    hypothesis_warning(&mut ctx, &p);
    let hi = 2.0 * a.t;
    let ev = ctx.evaluator(p, scaled_limit(&p, hi + a.c2 * hi.sqrt()))?;
    let mut report: SignRunReport = detect_runs(a.t, a.c5, &ev)?;
    ctx.tolerance("run_boundary_resolution_ulps", 1.0);
    let mut starts = vec![a.t];
    loop {
        let s = *starts.last().expect("nonempty");
        let next = s + a.c2 * s.sqrt();
        if next >= hi {
            break;
        }
        starts.push(next);
    }
    report.window_results = scan_windows(&ev, &starts, a.c1, a.c2, a.step)?;

    let mut runs: Vec<(f64, f64, i8)> = report
        .runs_plus
        .iter()
        .map(|&(s, e)| (s, e, 1))
        .chain(report.runs_minus.iter().map(|&(s, e)| (s, e, -1)))
        .collect();
    runs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut table = Table::new(&["t_start", "t_end", "sign", "length"]);
    for (s, e, sign) in runs {
        table.push(vec![num(s), num(e), sign.to_string(), num(e - s)]);
    }
    let trace = trace_table(&ev, a.t, hi, a.trace_points.max(1), a.c5);
    let windows = window_table(&report.window_results);
    ctx.finish("runs", a, report, vec![("", table), ("trace", trace), ("windows", windows)])
}

// ---------------------------------------------------------------- kernel

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelResult {
    /// `r1/q1 + r2/q2 + 1/8`; the prediction is `-(zeta/2) sin(4 pi t - 2 pi phase)`.
    pub leading_phase: f64,
    /// Correlation of measured and predicted values for zeta = +1 and -1 at
    /// the base alpha.
    pub correlation_by_zeta: [f64; 2],
    /// One sweep per alpha of the ladder, base alpha first.
    pub sweeps: Vec<KernelSweep>,
    pub fit: Option<ResidualConstants>,
}

pub fn kernel(mut ctx: Ctx, a: KernelArgs) -> CliResult<Outputs> {
    a.validate()?;
    let p = a.params.params()?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut ts: Vec<f64> =
        (0..a.samples).map(|_| if a.t2max > a.t2min { rng.gen_range(a.t2min..a.t2max) } else { a.t2min }.sqrt()).collect();
    ts.sort_by(f64::total_cmp);
    let alphas = a.alphas();
    let widest = alphas[alphas.len() - 1];
    let s = a.t2max.sqrt() + widest + 1.0;
    let ev = ctx.evaluator(p, scaled_limit(&p, s * s))?;
    let sweeps = alphas.iter().map(|&al| kernel_sweep(&ts, al, &ev, a.tol)).collect::<divcong::Result<Vec<_>>>()?;
    let base = &sweeps[0];
    let zeta_corr = |j: usize| {
        let pairs: Vec<(f64, f64)> = base.measured.iter().zip(&base.predicted).map(|(m, q)| (m[j], q[j])).collect();
        pearson(&pairs)
    };
    let correlation_by_zeta = [zeta_corr(0), zeta_corr(1)];
    ctx.tolerance("quadrature_error", sweeps.iter().map(|s| s.max_error_estimate).fold(0.0, f64::max));
    let fit = if sweeps.len() >= 2 {
        let maxima: Vec<f64> = sweeps.iter().map(|s| s.max_abs_residual).collect();
        let log_factor = sweeps.iter().map(|s| s.log_factor).fold(0.0, f64::max);
        match fit_residual_constants(&alphas, &maxima, log_factor) {
            Ok(f) => Some(f),
            Err(e) => {
                ctx.warn(format!("residual envelope not fitted: {e}"));
                None
            }
        }
    } else {
        None
    };

    let mut table = Table::new(&["t", "measured_plus", "predicted_plus", "measured_minus", "predicted_minus"]);
    for i in 0..base.t.len() {
        let (m, q) = (base.measured[i], base.predicted[i]);
        table.push(vec![num(base.t[i]), num(m[0]), num(q[0]), num(m[1]), num(q[1])]);
    }
    let mut ladder = Table::new(&["alpha", "max_abs_residual", "correlation", "envelope"]);
    for s in &sweeps {
        let env = fit.as_ref().map(|f| f.a / (s.alpha * s.alpha) + f.b * f.log_factor);
        ladder.push(vec![num(s.alpha), num(s.max_abs_residual), num(s.correlation), opt(env)]);
    }
    let result = KernelResult { leading_phase: p.leading_phase(), correlation_by_zeta, sweeps, fit };
    ctx.finish("kernel", a, result, vec![("", table), ("ladder", ladder)])
}

// ---------------------------------------------------------------- voronoi-residual

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoronoiRow {
    pub residual: ResidualReport,
    /// Correlation of Delta with the truncated series over `[U, 2U]`.
    pub correlation: f64,
    pub terms: usize,
}

pub fn voronoi_residual(mut ctx: Ctx, a: VoronoiArgs) -> CliResult<Outputs> {
    a.validate()?;
    let p = a.params.params()?;
    let ev = ctx.evaluator(p, scaled_limit(&p, 2.0 * a.u))?;
    let opts = QuadOptions::with_tol(a.tol);
    let mut rows = Vec::new();
    let mut table = Table::new(&["y", "mean_square", "envelope", "ratio", "correlation", "y_outside_admissible_range"]);
    for &y in &a.y {
        let series = VoronoiSeries::new(VoronoiConfig::new(y, p)?);
        let residual = truncation_residual_meansquare(a.u, &series, &ev, &opts)?;
        let correlation = series_correlation(a.u, 2.0 * a.u, a.samples, &series, &ev)?;
        if residual.y_outside_admissible_range {
            ctx.warn(format!("y = {y} exceeds the admissible truncation range for U = {}", a.u));
        }
        table.push(vec![
            num(y),
            num(residual.mean_square),
            opt(residual.envelope),
            opt(residual.ratio),
            num(correlation),
            flag(residual.y_outside_admissible_range),
        ]);
        rows.push(VoronoiRow { residual, correlation, terms: series.len() });
    }
    ctx.tolerance("quadrature_error", rows.iter().map(|r| r.residual.error_estimate).fold(0.0, f64::max));
    ctx.finish("voronoi-residual", a, rows, vec![("", table)])
}

// ---------------------------------------------------------------- excursion

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionResult {
    pub summary: ExcursionReport,
    pub profile: Vec<ExcursionPoint>,
    /// The moment fit that supplied `C_k` when it was not given.
    pub ck_fit: Option<MomentReport>,
}

pub fn excursion(mut ctx: Ctx, a: ExcursionArgs) -> CliResult<Outputs> {
    a.validate()?;
    let p = a.params.params()?;
    let ev = ctx.evaluator(p, scaled_limit(&p, 2.0 * a.t))?;
    let opts = QuadOptions::with_tol(a.tol);
    let (ck, ck_fit) = match a.ck {
        Some(c) => (c, None),
        None => {
            let grid = log_grid(a.t / 100.0, a.t, a.ck_points);
            let values = moment_integrals_with_error(a.k, &grid, &ev, &opts)?.iter().map(|i| i.value[0]).collect();
            let fit = MomentReport::from_integrals(a.k, p, grid, values)?;
            ctx.warn(format!("C_k estimated from the moments over [T/100, T]: {}", fit.fitted_ck));
            (fit.fitted_ck, Some(fit))
        }
    };
    let profile = f_k_profile(a.k, a.t, ck, &excursion_grid(a.t, a.points), &ev, &opts)?;
    let mut summary = summarize_excursion(a.k, a.t, ck, &profile);
    summary.ck_empirical = a.ck.is_none();
    let mut table = Table::new(&["x", "f_k", "normalized"]);
    for pt in &profile {
        table.push(vec![num(pt.x), num(pt.f_k), num(pt.normalized)]);
    }
    ctx.finish("excursion", a, ExcursionResult { summary, profile, ck_fit }, vec![("", table)])
}
