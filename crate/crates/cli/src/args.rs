use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use divcong::signs::{DEFAULT_C1, DEFAULT_C2, DEFAULT_C5};
use divcong::CongruenceParams;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CliResult};

#[derive(Debug, Parser)]
#[command(name = "divcong", version, about = "Experiments on the divisor problem with congruence conditions")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct GlobalOpts {
    /// Worker threads (default: rayon's choice).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Upper bound in bytes for sieve tables; larger ranges are streamed.
    #[arg(long = "mem-budget", global = true)]
    pub mem_budget: Option<u64>,

    /// Directory receiving reports.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    #[arg(long, global = true, value_enum, default_value = "both")]
    pub format: Format,

    /// Never read or write the sieve cache.
    #[arg(long = "no-cache", global = true)]
    pub no_cache: bool,

    /// Sieve cache directory; overrides DIVCONG_CACHE_DIR.
    #[arg(long = "cache-dir", global = true)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Args)]
pub struct ParamArgs {
    #[arg(long, default_value_t = 1)]
    pub r1: u64,
    #[arg(long, default_value_t = 1)]
    pub q1: u64,
    #[arg(long, default_value_t = 1)]
    pub r2: u64,
    #[arg(long, default_value_t = 1)]
    pub q2: u64,
}

impl ParamArgs {
    pub fn params(&self) -> CliResult<CongruenceParams> {
        Ok(CongruenceParams::new(self.r1, self.q1, self.r2, self.q2)?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sieve d(n) over a range and store it in the cache.
    Sieve(SieveArgs),
    /// D(x), the main term and Delta(x) at given x.
    Delta(DeltaArgs),
    /// The main term and its ingredients at given x.
    Mainterm(DeltaArgs),
    /// Power moments of Delta and the fitted C_k.
    Moments(MomentsArgs),
    /// First moment of Delta against its predicted slope.
    Meanvalue(MeanValueArgs),
    /// Short-interval variance I(T, h0) for a list of h0.
    Shortint(ShortIntArgs),
    /// Sign changes and witnesses in windows [T, T + c2 sqrt(T)].
    Signs(SignsArgs),
    /// Runs where |Delta| exceeds c t^(1/4) over [T, 2T].
    Runs(RunsArgs),
    /// Smoothed kernel integrals against the predicted sinusoid.
    Kernel(KernelArgs),
    /// Mean square of Delta minus the truncated Voronoi series.
    #[command(name = "voronoi-residual")]
    VoronoiResidual(VoronoiArgs),
    /// Excursions of the odd moments away from C_k x^(k/4).
    Excursion(ExcursionArgs),
    /// Write a matplotlib script for an existing report.
    Plot(PlotArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sieve(_) => "sieve",
            Command::Delta(_) => "delta",
            Command::Mainterm(_) => "mainterm",
            Command::Moments(_) => "moments",
            Command::Meanvalue(_) => "meanvalue",
            Command::Shortint(_) => "shortint",
            Command::Signs(_) => "signs",
            Command::Runs(_) => "runs",
            Command::Kernel(_) => "kernel",
            Command::VoronoiResidual(_) => "voronoi-residual",
            Command::Excursion(_) => "excursion",
            Command::Plot(_) => "plot",
        }
    }
}

fn positive(field: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and positive, got {v}")))
    }
}

fn at_least(field: &str, v: f64, lo: f64) -> CliResult<()> {
    if v >= lo && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and >= {lo}, got {v}")))
    }
}

fn nonempty<T>(field: &str, v: &[T]) -> CliResult<()> {
    if v.is_empty() {
        Err(invalid(field, "at least one value required"))
    } else {
        Ok(())
    }
}

fn tolerance(v: f64) -> CliResult<()> {
    positive("tol", v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct SieveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    /// Last n of the range.
    #[arg(long)]
    pub end: u64,
    #[arg(long, default_value_t = 1)]
    pub start: u64,
    /// Rows written to the CSV (d(n) and D(n) for n <= start + rows - 1).
    #[arg(long, default_value_t = 1000)]
    pub rows: u64,
}

impl SieveArgs {
    pub fn validate(&self) -> CliResult<()> {
        self.params.params()?;
        if self.start == 0 || self.start > self.end {
            return Err(invalid("range", format!("need 1 <= start <= end, got [{}, {}]", self.start, self.end)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct DeltaArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    /// Points x (repeat or comma separate).
    #[arg(long, value_delimiter = ',', required = true)]
    pub x: Vec<f64>,
}

impl DeltaArgs {
    pub fn validate(&self) -> CliResult<()> {
        self.params.params()?;
        nonempty("x", &self.x)?;
        for &x in &self.x {
            at_least("x", x, 1.0)?;
            if x >= 2f64.powi(62) {
                return Err(invalid("x", format!("{x} does not fit the integer range")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 2)]
    pub k: u32,
    /// Smallest T of the grid (default max(10, tmax / 1000)).
    #[arg(long)]
    pub tmin: Option<f64>,
    #[arg(long)]
    pub tmax: f64,
    #[arg(long, default_value_t = 16)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

impl MomentsArgs {
    pub fn tmin(&self) -> f64 {
        self.tmin.unwrap_or((self.tmax / 1000.0).max(10.0))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.params.params()?;
        if self.k == 0 {
            return Err(invalid("k", "moment order must be a positive integer"));
        }
        positive("tmax", self.tmax)?;
        let lo = self.tmin();
        if !(lo > 1.0) || !lo.is_finite() {
            return Err(invalid("tmin", format!("grid must start above 1, got {lo}")));
        }
        if self.tmax < 10.0 * lo {
            return Err(invalid("tmax", "grid must span at least one decade"));
        }
        if self.points < 2 {
            return Err(invalid("points", "need at least two grid points"));
        }
        tolerance(self.tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct MeanValueArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    /// Smallest T of the grid (default max(10, tmax / 100)).
    #[arg(long)]
    pub tmin: Option<f64>,
    #[arg(long)]
    pub tmax: f64,
    #[arg(long, default_value_t = 8)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

impl MeanValueArgs {
    pub fn tmin(&self) -> f64 {
        self.tmin.unwrap_or((self.tmax / 100.0).max(10.0))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.params.params()?;
        positive("tmax", self.tmax)?;
        let lo = self.tmin();
        at_least("tmin", lo, 1.0)?;
        if !(self.tmax > lo) {
            return Err(invalid("tmax", "need tmax > tmin"));
        }
        if self.points == 0 {
            return Err(invalid("points", "need at least one grid point"));
        }
        tolerance(self.tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct ShortIntArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub t: f64,
    /// Shifts h0 (repeat or comma separate).
    #[arg(long, value_delimiter = ',', required = true)]
    pub h0: Vec<f64>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

impl ShortIntArgs {
    pub fn validate(&self) -> CliResult<()> {
        self.params.params()?;
        if !(self.t > 1.0) || !self.t.is_finite() {
            return Err(invalid("T", format!("need finite T > 1, got {}", self.t)));
        }
        nonempty("h0", &self.h0)?;
        for &h in &self.h0 {
            positive("h0", h)?;
        }
        tolerance(self.tol)
    }
}

fn check_sign_constants(c1: f64, c2: f64, step: f64) -> CliResult<()> {
    at_least("c1", c1, 0.0)?;
    positive("c2", c2)?;
    if !(step > 0.0 && step <= 1.0) {
        return Err(invalid("step", format!("need 0 < step <= 1, got {step}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct SignsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    /// Start of the first window, or lower end of the sampled starts.
    #[arg(long)]
    pub t: f64,
    /// Upper end of the sampled starts when --windows > 1.
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub windows: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_C1)]
    pub c1: f64,
    #[arg(long, default_value_t = DEFAULT_C2)]
    pub c2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Samples of Delta written to the trace CSV for the first window.
    #[arg(long = "trace-points", default_value_t = 2000)]
    pub trace_points: usize,
}

impl SignsArgs {
    pub fn validate(&self) -> CliResult<()> {
        self.params.params()?;
        at_least("T", self.t, 1.0)?;
        check_sign_constants(self.c1, self.c2, self.step)?;
        if self.windows == 0 {
            return Err(invalid("windows", "need at least one window"));
        }
        if self.windows > 1 {
            match self.tmax {
                Some(hi) if hi > self.t && hi.is_finite() => {}
                _ => return Err(invalid("tmax", "sampling several windows needs tmax > T")),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct RunsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub t: f64,
    /// Run threshold c in |Delta| >= c t^(1/4).
    #[arg(long, default_value_t = DEFAULT_C5)]
    pub c5: f64,
    /// Witness threshold for the tiled windows.
    #[arg(long, default_value_t = DEFAULT_C1)]
    pub c1: f64,
    /// Window length factor for the tiled windows.
    #[arg(long, default_value_t = DEFAULT_C2)]
    pub c2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long = "trace-points", default_value_t = 2000)]
    pub trace_points: usize,
}

impl RunsArgs {
    pub fn validate(&self) -> CliResult<()> {
        self.params.params()?;
        at_least("T", self.t, 1.0)?;
        at_least("c5", self.c5, 0.0)?;
        check_sign_constants(self.c1, self.c2, self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct KernelArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    /// Number of alpha values alpha, 2 alpha, 4 alpha, ... used to fit the
    /// residual envelope (1 skips the fit).
    #[arg(long, default_value_t = 3)]
    pub ladder: usize,
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// t is sampled with t^2 uniform in [t2min, t2max].
    #[arg(long, default_value_t = 1e5)]
    pub t2min: f64,
    #[arg(long, default_value_t = 2e5)]
    pub t2max: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
}

impl KernelArgs {
    pub fn alphas(&self) -> Vec<f64> {
        (0..self.ladder).map(|j| self.alpha * 2f64.powi(j as i32)).collect()
    }

    pub fn validate(&self) -> CliResult<()> {
        self.params.params()?;
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(invalid("alpha", format!("kernel parameter must exceed 1, got {}", self.alpha)));
        }
        if self.ladder == 0 {
            return Err(invalid("ladder", "need at least one alpha"));
        }
        if self.samples < 2 {
            return Err(invalid("samples", "need at least two sampled t"));
        }
        positive("t2min", self.t2min)?;
        if !(self.t2max >= self.t2min) || !self.t2max.is_finite() {
            return Err(invalid("t2max", "need t2max >= t2min"));
        }
        let widest = self.alphas().last().copied().unwrap_or(self.alpha);
        if self.t2min.sqrt() - widest < 1.0 {
            return Err(invalid("t2min", format!("need sqrt(t2min) - alpha >= 1 for every alpha up to {widest}")));
        }
        tolerance(self.tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct VoronoiArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    /// The residual is integrated over [U, 2U].
    #[arg(long)]
    pub u: f64,
    /// Truncation lengths (repeat or comma separate).
    #[arg(long, value_delimiter = ',', required = true)]
    pub y: Vec<f64>,
    /// Sample count for the correlation of Delta with the series.
    #[arg(long, default_value_t = 20000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

impl VoronoiArgs {
    pub fn validate(&self) -> CliResult<()> {
        self.params.params()?;
        at_least("U", self.u, 1.0)?;
        nonempty("y", &self.y)?;
        for &y in &self.y {
            at_least("y", y, 0.0)?;
        }
        if self.samples < 2 {
            return Err(invalid("samples", "need at least two samples"));
        }
        tolerance(self.tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct ExcursionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    /// Odd moment order.
    #[arg(long, default_value_t = 3)]
    pub k: u32,
    /// The excursion is scanned over [T, 2T].
    #[arg(long)]
    pub t: f64,
    /// Known C_k; estimated from the moments over [T/100, T] when absent.
    #[arg(long)]
    pub ck: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    #[arg(long = "ck-points", default_value_t = 16)]
    pub ck_points: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

impl ExcursionArgs {
    pub fn validate(&self) -> CliResult<()> {
        self.params.params()?;
        if self.k == 0 || self.k.is_multiple_of(2) {
            return Err(invalid("k", "excursions are defined for odd k"));
        }
        if !(self.t > 1.0) || !self.t.is_finite() {
            return Err(invalid("T", format!("need finite T > 1, got {}", self.t)));
        }
        if let Some(ck) = self.ck {
            if !ck.is_finite() {
                return Err(invalid("ck", "must be finite"));
            }
        } else {
            if self.t / 100.0 <= 1.0 {
                return Err(invalid("T", "estimating C_k needs T > 100"));
            }
            if self.ck_points < 2 {
                return Err(invalid("ck-points", "need at least two grid points"));
            }
        }
        if self.points < 2 {
            return Err(invalid("points", "need at least two grid points"));
        }
        tolerance(self.tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct PlotArgs {
    /// A JSON report written by another subcommand.
    pub report: PathBuf,
    /// Script path (default: <report dir>/<command>_plot.py).
    #[arg(long)]
    pub output: Option<PathBuf>,
}
