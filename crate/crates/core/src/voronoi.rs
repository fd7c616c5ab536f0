//! The truncated Voronoi-type series `R0(x; y)` and the kernel-smoothing
//! experiment that isolates the leading sinusoid of `Delta`.
//!
//! In the scaled variable `x` (so that `R0(x; y)` approximates
//! `Delta(q1 q2 x)`):
//!
//! ```text
//! R0(x; y) = x^(1/4) / (sqrt(2) pi) * sum_{n <= y} n^(-3/4)
//!            * sum_{n = h l} cos(4 pi sqrt(n x) - 2 pi (h r2/q2 + l r1/q1 + 1/8))
//! ```

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::CongruenceParams;
use crate::engine::DeltaEvaluator;
use crate::error::{Error, Result};
use crate::integrate::{integrate_scaled, QuadOptions};
use crate::quadrature::{gl8, Compensated, GaussLegendre};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoronoiConfig {
    /// Truncation length: terms `n <= y` are kept.
    pub y: f64,
    pub params: CongruenceParams,
}

impl VoronoiConfig {
    pub fn new(y: f64, params: CongruenceParams) -> Result<Self> {
        if !(y >= 0.0) || !y.is_finite() {
            return Err(Error::invalid("y", format!("truncation length must be finite and >= 0, got {y}")));
        }
        Ok(Self { y, params })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    n: u64,
    freq: f64,
    cos_coef: f64,
    sin_coef: f64,
}

/// `R0(x; y)` with the inner factorization sums collapsed to one
/// amplitude/phase pair per frequency `sqrt(n)`.
#[derive(Debug, Clone)]
pub struct VoronoiSeries {
    cfg: VoronoiConfig,
    terms: Vec<Term>,
}

impl VoronoiSeries {
    pub fn new(cfg: VoronoiConfig) -> Self {
        let y = cfg.y.floor() as u64;
        let p = cfg.params;
        let (r1, q1, r2, q2) = (p.first.r(), p.first.q(), p.second.r(), p.second.q());
        let m = q1 * q2;
        let mut cos_sum = vec![0.0f64; y as usize + 1];
        let mut sin_sum = vec![0.0f64; y as usize + 1];
        for h in 1..=y {
            for l in 1..=y / h {
                // theta / 2pi = (h r2 q1 + l r1 q2) / (q1 q2) + 1/8, reduced exactly
                let num = ((h % m) * (r2 * q1) + (l % m) * (r1 * q2)) % m;
                let theta = 2.0 * PI * (num as f64 / m as f64 + 0.125);
                let n = (h * l) as usize;
                cos_sum[n] += theta.cos();
                sin_sum[n] += theta.sin();
            }
        }
        let terms = (1..=y)
            .filter_map(|n| {
                let (c, s) = (cos_sum[n as usize], sin_sum[n as usize]);
                if c.abs() < 1e-12 && s.abs() < 1e-12 {
                    return None;
                }
                let w = (n as f64).powf(-0.75);
                Some(Term { n, freq: 4.0 * PI * (n as f64).sqrt(), cos_coef: w * c, sin_coef: w * s })
            })
            .collect();
        Self { cfg, terms }
    }

    pub fn config(&self) -> &VoronoiConfig {
        &self.cfg
    }

    /// Number of frequencies with a nonzero collapsed amplitude.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `R0(x; y)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_between(x, 0.0, f64::INFINITY)
    }

    /// The part of the series with `n_lo < n <= n_hi`.
    pub fn eval_between(&self, x: f64, n_lo: f64, n_hi: f64) -> f64 {
        let rx = x.sqrt();
        let mut acc = Compensated::new();
        for t in &self.terms {
            let n = t.n as f64;
            if n <= n_lo || n > n_hi {
                continue;
            }
            let (s, c) = (t.freq * rx).sin_cos();
            // cos(w - theta) summed over factorizations = C cos w + S sin w
            acc.add(t.cos_coef * c + t.sin_coef * s);
        }
        x.sqrt().sqrt() / (SQRT_2 * PI) * acc.value()
    }
}

/// `R0(x; y)`, building the phase cache on the fly.
pub fn r0_truncated(x: f64, cfg: &VoronoiConfig) -> f64 {
    VoronoiSeries::new(*cfg).eval(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub alpha: f64,
    pub zeta: i8,
}

impl KernelConfig {
    pub fn new(alpha: f64, zeta: i8) -> Result<Self> {
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::invalid("alpha", format!("kernel parameter must exceed 1, got {alpha}")));
        }
        if zeta != 1 && zeta != -1 {
            return Err(Error::invalid("zeta", format!("zeta must be +1 or -1, got {zeta}")));
        }
        Ok(Self { alpha, zeta })
    }
}

/// `K(u) = (1 - |u|)(1 + zeta sin(4 pi alpha u))` on `|u| <= 1`.
pub fn kernel_weight(u: f64, k: &KernelConfig) -> Result<f64> {
    if !(u.abs() <= 1.0) {
        return Err(Error::invalid("u", format!("kernel is supported on |u| <= 1, got {u}")));
    }
    Ok((1.0 - u.abs()) * (1.0 + k.zeta as f64 * (4.0 * PI * k.alpha * u).sin()))
}

/// `-(zeta/2) sin(4 pi t - 2 pi (r2/q2 + r1/q1 + 1/8))`.
pub fn kernel_prediction(t: f64, p: &CongruenceParams, zeta: i8) -> f64 {
    -(zeta as f64) / 2.0 * (4.0 * PI * t - 2.0 * PI * p.leading_phase()).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelIntegral {
    pub value: f64,
    /// Sum over pieces of `|GL8 - GL4|`, a pessimistic bound on the order-8
    /// error.
    pub error_estimate: f64,
}

fn gl4() -> &'static GaussLegendre {
    static RULE: std::sync::OnceLock<GaussLegendre> = std::sync::OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(4))
}

/// `integral_{-1}^{1} g(s, Delta(q1 q2 s^2)) (1 - |u|) [1, sin(4 pi alpha u)] du`
/// with `s = t + alpha u`.
///
/// Returns the even and odd kernel parts separately; `K_zeta` combines them as
/// `even + zeta * odd`. Pieces are cut at `u = 0` and at every `u` where
/// `q1 q2 s^2` is an integer `n` with `d(n) > 0`.
pub fn smoothed_parts<G>(t: f64, alpha: f64, ev: &DeltaEvaluator, tol: f64, g: G) -> Result<([f64; 2], f64)>
where
    G: Fn(f64, f64) -> f64,
{
    if !(alpha > 1.0) {
        return Err(Error::invalid("alpha", format!("kernel parameter must exceed 1, got {alpha}")));
    }
    let (s_lo, s_hi) = (t - alpha, t + alpha);
    if !(s_lo >= 1.0) {
        return Err(Error::invalid("t", format!("need t - alpha >= 1, got t={t}, alpha={alpha}")));
    }
    let q = ev.modulus();
    let x_hi = q * s_hi * s_hi;
    ev.check_n(x_hi.floor() as u64 + 1)?;
    let lo = ((q * s_lo * s_lo).floor() as u64).max(1);
    let hi = x_hi.floor() as u64 + 1;
    let omega = 4.0 * PI * alpha;

    let integrand = |u: f64, d: u64| -> [f64; 2] {
        let s = t + alpha * u;
        let v = g(s, ev.delta_on(d, s * s)) * (1.0 - u.abs());
        [v, v * (omega * u).sin()]
    };

    let mut acc = [Compensated::new(), Compensated::new()];
    let mut err = 0.0;
    let emit = |a: f64, b: f64, d: u64, acc: &mut [Compensated; 2], err: &mut f64| {
        let hi8 = gl8().integrate_vec(a, b, |u| integrand(u, d));
        let lo4 = gl4().integrate_vec(a, b, |u| integrand(u, d));
        let e = (hi8[0] - lo4[0]).abs().max((hi8[1] - lo4[1]).abs());
        if e > tol * (b - a) {
            let mut f = |u: f64| integrand(u, d);
            let (v, e2) = gl8().integrate_adaptive(a, b, tol * (b - a), &mut f);
            acc[0].add(v[0]);
            acc[1].add(v[1]);
            *err += e2;
        } else {
            acc[0].add(hi8[0]);
            acc[1].add(hi8[1]);
            *err += e;
        }
    };

    for run in ev.runs(lo, hi) {
        let sa = ((run.start as f64 / q).sqrt()).max(s_lo);
        let sb = ((run.end as f64 / q).sqrt()).min(s_hi);
        if sb <= sa {
            continue;
        }
        let (ua, ub) = ((sa - t) / alpha, (sb - t) / alpha);
        let (ua, ub) = (ua.max(-1.0), ub.min(1.0));
        if ua < 0.0 && ub > 0.0 {
            emit(ua, 0.0, run.d_value, &mut acc, &mut err);
            emit(0.0, ub, run.d_value, &mut acc, &mut err);
        } else if ub > ua {
            emit(ua, ub, run.d_value, &mut acc, &mut err);
        }
    }
    Ok(([acc[0].value(), acc[1].value()], err))
}

/// `Delta**(s) = sqrt(2) pi s^(-1/2) (Delta(q1 q2 s^2) + f(s^2))`.
#[inline]
fn normalized(s: f64, delta: f64, perturbation: f64) -> f64 {
    SQRT_2 * PI / s.sqrt() * (delta + perturbation)
}

/// `integral_{-1}^{1} Delta**(t + alpha u) K_zeta(u) du` with `f = 0`.
pub fn smoothed_delta_integral(t: f64, k: &KernelConfig, ev: &DeltaEvaluator, tol: f64) -> Result<KernelIntegral> {
    smoothed_delta_integral_perturbed(t, k, ev, tol, |_| 0.0)
}

/// As [`smoothed_delta_integral`] with a user-supplied bounded perturbation
/// `f(x)` added to `Delta(q1 q2 x)`.
pub fn smoothed_delta_integral_perturbed<P>(
    t: f64,
    k: &KernelConfig,
    ev: &DeltaEvaluator,
    tol: f64,
    f: P,
) -> Result<KernelIntegral>
where
    P: Fn(f64) -> f64,
{
    let ([even, odd], err) = smoothed_parts(t, k.alpha, ev, tol, |s, d| normalized(s, d, f(s * s)))?;
    let value = even + k.zeta as f64 * odd;
    // error_estimate counts both parts; compare against the requested tolerance
    if err > tol.max(1e-300) * 2.0 {
        return Err(Error::ToleranceNotMet { achieved: err, requested: tol });
    }
    Ok(KernelIntegral { value, error_estimate: err })
}

/// Both `zeta = +1` and `zeta = -1` from one pass.
pub fn smoothed_delta_integral_both(t: f64, alpha: f64, ev: &DeltaEvaluator, tol: f64) -> Result<[KernelIntegral; 2]> {
    let ([even, odd], err) = smoothed_parts(t, alpha, ev, tol, |s, d| normalized(s, d, 0.0))?;
    Ok([
        KernelIntegral { value: even + odd, error_estimate: err },
        KernelIntegral { value: even - odd, error_estimate: err },
    ])
}

/// Smoothed integrals against the predicted sinusoid over a sample of `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSweep {
    pub alpha: f64,
    pub t: Vec<f64>,
    /// `[zeta = +1, zeta = -1]` per sample.
    pub measured: Vec<[f64; 2]>,
    pub predicted: Vec<[f64; 2]>,
    /// Pearson correlation over all `2 len` (measured, predicted) pairs.
    pub correlation: f64,
    pub max_abs_residual: f64,
    /// `max t^(-1/2) log^3 t` over the sample.
    pub log_factor: f64,
    pub max_error_estimate: f64,
}

pub fn kernel_sweep(ts: &[f64], alpha: f64, ev: &DeltaEvaluator, tol: f64) -> Result<KernelSweep> {
    if ts.is_empty() {
        return Err(Error::invalid("t", "no sample points"));
    }
    let p = *ev.params();
    let rows = ts
        .par_iter()
        .map(|&t| smoothed_delta_integral_both(t, alpha, ev, tol).map(|v| (t, v)))
        .collect::<Result<Vec<_>>>()?;
    let mut measured = Vec::with_capacity(rows.len());
    let mut predicted = Vec::with_capacity(rows.len());
    let mut pairs = Vec::with_capacity(2 * rows.len());
    let (mut max_abs_residual, mut max_error_estimate) = (0.0f64, 0.0f64);
    for (t, v) in &rows {
        let m = [v[0].value, v[1].value];
        let pr = [kernel_prediction(*t, &p, 1), kernel_prediction(*t, &p, -1)];
        for j in 0..2 {
            pairs.push((m[j], pr[j]));
            max_abs_residual = max_abs_residual.max((m[j] - pr[j]).abs());
            max_error_estimate = max_error_estimate.max(v[j].error_estimate);
        }
        measured.push(m);
        predicted.push(pr);
    }
    let log_factor = ts.iter().map(|t| t.ln().powi(3) / t.sqrt()).fold(0.0, f64::max);
    Ok(KernelSweep {
        alpha,
        t: ts.to_vec(),
        measured,
        predicted,
        correlation: pearson(&pairs),
        max_abs_residual,
        log_factor,
        max_error_estimate,
    })
}

/// Constants of the envelope `A alpha^-2 + B t^(-1/2) log^3 t` fitted to the
/// largest residuals of a ladder of `alpha` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualConstants {
    pub a: f64,
    pub b: f64,
    pub alphas: Vec<f64>,
    pub max_residuals: Vec<f64>,
    pub log_factor: f64,
}

/// Weighted least squares (relative residuals) on the two envelope terms,
/// negative coefficients dropped, then scaled up until the envelope covers
/// every measured maximum.
pub fn fit_residual_constants(alphas: &[f64], max_residuals: &[f64], log_factor: f64) -> Result<ResidualConstants> {
    if alphas.len() < 2 || alphas.len() != max_residuals.len() {
        return Err(Error::invalid("alpha", "need at least two alpha values with one residual each"));
    }
    if max_residuals.iter().any(|m| !(*m > 0.0)) || !(log_factor > 0.0) {
        return Err(Error::invalid("residuals", "residual maxima and log factor must be positive"));
    }
    let rows: Vec<([f64; 2], f64)> =
        alphas.iter().zip(max_residuals).map(|(a, m)| ([a.powi(-2) / m, log_factor / m], 1.0)).collect();
    let (mut a, mut b) = solve_2x2(&rows);
    if a < 0.0 || b < 0.0 {
        // one-term fits; keep whichever is nonnegative
        let only = |j: usize| {
            let num: f64 = rows.iter().map(|(x, y)| x[j] * y).sum();
            let den: f64 = rows.iter().map(|(x, _)| x[j] * x[j]).sum();
            num / den
        };
        if a < 0.0 {
            (a, b) = (0.0, only(1));
        } else {
            (a, b) = (only(0), 0.0);
        }
    }
    let scale = alphas
        .iter()
        .zip(max_residuals)
        .map(|(al, m)| m / (a * al.powi(-2) + b * log_factor))
        .fold(0.0, f64::max);
    Ok(ResidualConstants {
        a: a * scale,
        b: b * scale,
        alphas: alphas.to_vec(),
        max_residuals: max_residuals.to_vec(),
        log_factor,
    })
}

fn solve_2x2(rows: &[([f64; 2], f64)]) -> (f64, f64) {
    let (mut s00, mut s01, mut s11, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in rows {
        s00 += x[0] * x[0];
        s01 += x[0] * x[1];
        s11 += x[1] * x[1];
        r0 += x[0] * y;
        r1 += x[1] * y;
    }
    let det = s00 * s11 - s01 * s01;
    ((r0 * s11 - r1 * s01) / det, (s00 * r1 - s01 * r0) / det)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub u: f64,
    pub y: f64,
    /// `(1/U) integral_U^{2U} (Delta(q1 q2 x) - R0(x; y))^2 dx`.
    pub mean_square: f64,
    /// `U^(1/2) y^(-1/2) log^3 U + log^6 U`; absent for `y = 0`.
    pub envelope: Option<f64>,
    pub ratio: Option<f64>,
    /// `y` exceeds `(q1 q2)^2 U log^-4 U`, the admissible truncation range.
    pub y_outside_admissible_range: bool,
    pub error_estimate: f64,
}

/// Mean square of the truncation residual over `[U, 2U]`.
pub fn truncation_residual_meansquare(
    u: f64,
    series: &VoronoiSeries,
    ev: &DeltaEvaluator,
    opts: &QuadOptions,
) -> Result<ResidualReport> {
    if !(u >= 1.0) {
        return Err(Error::invalid("U", format!("need U >= 1, got {u}")));
    }
    let integral = integrate_scaled(ev, u, 2.0 * u, opts, |x, d| {
        let r = d - series.eval(x);
        [r * r]
    })?;
    let y = series.config().y;
    let log_u = u.ln();
    let envelope = (y > 0.0).then(|| u.sqrt() / y.sqrt() * log_u.powi(3) + log_u.powi(6));
    let mean_square = integral.value[0] / u;
    let q = series.config().params.modulus_product() as f64;
    Ok(ResidualReport {
        u,
        y,
        mean_square,
        envelope,
        ratio: envelope.map(|e| mean_square / e),
        y_outside_admissible_range: u > 1.0 && y > q * q * u / log_u.powi(4),
        error_estimate: integral.error / u,
    })
}

/// Pearson correlation of `Delta(q1 q2 x)` and `R0(x; y)` sampled at the
/// midpoints of `samples` equal cells of `[x_lo, x_hi]`.
pub fn series_correlation(
    x_lo: f64,
    x_hi: f64,
    samples: usize,
    series: &VoronoiSeries,
    ev: &DeltaEvaluator,
) -> Result<f64> {
    if !(x_hi > x_lo) || samples < 2 {
        return Err(Error::invalid("samples", "need x_lo < x_hi and at least two samples"));
    }
    ev.check_n((ev.modulus() * x_hi).ceil() as u64)?;
    let h = (x_hi - x_lo) / samples as f64;
    let pairs: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let x = x_lo + (i as f64 + 0.5) * h;
            (ev.delta_scaled(x), series.eval(x))
        })
        .collect();
    Ok(pearson(&pairs))
}

/// Pearson correlation of the pairs.
pub fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}
