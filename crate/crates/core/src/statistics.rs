//! Moments of `Delta`, the mean value check, short-interval variance and
//! excursions of the moment error term.
//!
//! Unless stated otherwise integrals are in the scaled variable,
//! `integral_1^T Delta^k(q1 q2 x) dx`.

use serde::{Deserialize, Serialize};

use crate::arith::CongruenceParams;
use crate::engine::DeltaEvaluator;
use crate::error::{Error, Result};
use crate::integrate::{cumulative_scaled, integrate_scaled, integrate_shifted, Integral, QuadOptions};

/// Largest `k` for which the moment asymptotic is established; larger powers
/// are computed but marked exploratory.
pub const MAX_SUPPORTED_K: u32 = 9;

fn check_k(k: u32) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k", "moment order must be a positive integer"));
    }
    Ok(())
}

fn check_grid(grid: &[f64], lower: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("grid", "grid must be strictly increasing"));
    }
    if !(grid[0] >= lower) || !grid[grid.len() - 1].is_finite() {
        return Err(Error::invalid("grid", format!("grid values must be finite and >= {lower}")));
    }
    Ok(())
}

/// `integral_1^T Delta^k(q1 q2 x) dx`.
pub fn integrate_delta_power(t: f64, k: u32, ev: &DeltaEvaluator, opts: &QuadOptions) -> Result<Integral<1>> {
    check_k(k)?;
    if !(t >= 1.0) {
        return Err(Error::invalid("T", format!("need T >= 1, got {t}")));
    }
    let k = k as i32;
    integrate_scaled(ev, 1.0, t, opts, |_, d| [d.powi(k)])
}

/// `integral_1^T Delta^k(q1 q2 x) dx` for every `T` in `grid`, one pass.
pub fn moment_integrals(k: u32, grid: &[f64], ev: &DeltaEvaluator, opts: &QuadOptions) -> Result<Vec<f64>> {
    Ok(moment_integrals_with_error(k, grid, ev, opts)?.into_iter().map(|i| i.value[0]).collect())
}

/// As [`moment_integrals`], keeping the quadrature error estimates.
pub fn moment_integrals_with_error(
    k: u32,
    grid: &[f64],
    ev: &DeltaEvaluator,
    opts: &QuadOptions,
) -> Result<Vec<Integral<1>>> {
    check_k(k)?;
    check_grid(grid, 1.0)?;
    let k = k as i32;
    cumulative_scaled(ev, 1.0, grid, opts, |_, d| [d.powi(k)])
}

/// Moments of orders `1..=N` at once: `result[i][k - 1]` belongs to `grid[i]`.
pub fn moment_table<const N: usize>(grid: &[f64], ev: &DeltaEvaluator, opts: &QuadOptions) -> Result<Vec<[f64; N]>> {
    check_grid(grid, 1.0)?;
    let out = cumulative_scaled(ev, 1.0, grid, opts, |_, d| {
        let mut v = [0.0; N];
        let mut p = 1.0;
        for slot in v.iter_mut() {
            p *= d;
            *slot = p;
        }
        v
    })?;
    Ok(out.into_iter().map(|i| i.value).collect())
}

/// `(T^(1 + k/4) - 1) / (1 + k/4)`, the exact value of `integral_1^T x^(k/4) dx`.
pub fn power_integral(t: f64, k: u32) -> f64 {
    let e = 1.0 + k as f64 / 4.0;
    (t.powf(e) - 1.0) / e
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanValueCheck {
    pub t: f64,
    /// `integral_1^T Delta(x) dx` in the unscaled variable.
    pub integral: f64,
    pub slope_estimate: f64,
    /// `(r1/q1 - 1/2)(r2/q2 - 1/2)`.
    pub slope_target: f64,
    /// `(integral - slope_target T) / ((q1 q2)^(1/4) T^(3/4))`.
    pub residual_normalized: f64,
}

/// Mean value of the unscaled `Delta(x)` over `[1, T]` for each `T` in `grid`.
///
/// Uses `integral_1^T Delta(x) dx = q1 q2 integral_{1/(q1 q2)}^{T/(q1 q2)} Delta(q1 q2 t) dt`.
pub fn mean_value_checks(grid: &[f64], ev: &DeltaEvaluator, opts: &QuadOptions) -> Result<Vec<MeanValueCheck>> {
    check_grid(grid, 1.0)?;
    let q = ev.modulus();
    let points: Vec<f64> = grid.iter().map(|&t| t / q).collect();
    let raw = cumulative_scaled(ev, 1.0 / q, &points, opts, |_, d| [d])?;
    let slope_target = ev.params().mean_value_slope();
    Ok(grid
        .iter()
        .zip(raw)
        .map(|(&t, i)| {
            let integral = q * i.value[0];
            MeanValueCheck {
                t,
                integral,
                slope_estimate: integral / t,
                slope_target,
                residual_normalized: (integral - slope_target * t) / (q.powf(0.25) * t.powf(0.75)),
            }
        })
        .collect())
}

pub fn mean_value_check(t: f64, ev: &DeltaEvaluator, opts: &QuadOptions) -> Result<MeanValueCheck> {
    Ok(mean_value_checks(&[t], ev, opts)?.pop().expect("one point"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub k: u32,
    pub params: CongruenceParams,
    pub grid: Vec<f64>,
    pub integrals: Vec<f64>,
    /// `integrals[i] / integral_1^T x^(k/4) dx`.
    pub ck_estimates: Vec<f64>,
    /// Median of `ck_estimates`.
    pub fitted_ck: f64,
    /// Least-squares slope of `log |integral|` against `log T`.
    pub fitted_exponent: f64,
    pub target_exponent: f64,
    pub residuals: Vec<f64>,
    /// `k` beyond the established range.
    pub exploratory: bool,
}

impl MomentReport {
    /// Builds the report from precomputed integrals.
    pub fn from_integrals(k: u32, params: CongruenceParams, grid: Vec<f64>, integrals: Vec<f64>) -> Result<Self> {
        check_k(k)?;
        check_grid(&grid, 1.0)?;
        if grid.len() != integrals.len() {
            return Err(Error::invalid("integrals", "one integral per grid point required"));
        }
        if grid.len() < 2 || grid[grid.len() - 1] < 10.0 * grid[0] {
            return Err(Error::invalid("grid", "grid must have two points and span at least one decade"));
        }
        if grid[0] <= 1.0 {
            return Err(Error::invalid("grid", "grid must start above 1"));
        }
        let ck_estimates: Vec<f64> = grid.iter().zip(&integrals).map(|(&t, &i)| i / power_integral(t, k)).collect();
        let fitted_ck = median(&ck_estimates);
        let residuals = ck_estimates.iter().map(|c| c - fitted_ck).collect();
        let xs: Vec<f64> = grid.iter().map(|t| t.ln()).collect();
        let ys: Vec<f64> = integrals.iter().map(|i| i.abs().ln()).collect();
        Ok(Self {
            k,
            params,
            fitted_ck,
            fitted_exponent: least_squares_slope(&xs, &ys),
            target_exponent: 1.0 + k as f64 / 4.0,
            residuals,
            ck_estimates,
            grid,
            integrals,
            exploratory: k > MAX_SUPPORTED_K,
        })
    }

    /// Median and interquartile range of the estimates at `T >= t_from`
    /// (up to rounding of the grid).
    pub fn spread_from(&self, t_from: f64) -> Option<(f64, f64)> {
        let tail: Vec<f64> =
            self.grid.iter().zip(&self.ck_estimates).filter(|(t, _)| **t >= t_from * (1.0 - 1e-12)).map(|(_, c)| *c).collect();
        if tail.is_empty() {
            return None;
        }
        Some((median(&tail), quantile(&tail, 0.75) - quantile(&tail, 0.25)))
    }
}

/// Estimates `C_k` and the growth exponent of the `k`-th moment over `grid`.
pub fn estimate_ck(k: u32, grid: &[f64], ev: &DeltaEvaluator, opts: &QuadOptions) -> Result<MomentReport> {
    // validate before the expensive pass
    MomentReport::from_integrals(k, *ev.params(), grid.to_vec(), vec![1.0; grid.len()])?;
    let integrals = moment_integrals(k, grid, ev, opts)?;
    MomentReport::from_integrals(k, *ev.params(), grid.to_vec(), integrals)
}

/// `n` points spaced evenly in `log T` from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

pub fn median(v: &[f64]) -> f64 {
    quantile(v, 0.5)
}

/// Linear-interpolation quantile of the sorted values.
pub fn quantile(v: &[f64], p: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = p * (s.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < s.len() {
        s[i] + frac * (s[i + 1] - s[i])
    } else {
        s[i]
    }
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortIntervalReport {
    pub t: f64,
    pub h0: f64,
    /// `I(T, h0) = integral_1^T (Delta(q1 q2 (x + h0)) - Delta(q1 q2 x))^2 dx`.
    pub value: f64,
    /// `T h0 log^3(sqrt(T) / h0) + T log^6 T`.
    pub envelope: f64,
    pub ratio: f64,
    /// `h0` outside `[1, sqrt(T) / 2]`; the value is still computed.
    pub h0_outside_range: bool,
    pub error_estimate: f64,
}

pub fn short_interval_envelope(t: f64, h0: f64) -> f64 {
    t * h0 * (t.sqrt() / h0).ln().powi(3) + t * t.ln().powi(6)
}

pub fn short_interval_variance(t: f64, h0: f64, ev: &DeltaEvaluator, opts: &QuadOptions) -> Result<ShortIntervalReport> {
    short_interval_between(1.0, t, h0, ev, opts)
}

/// `I` restricted to `[t_lo, t_hi]`; the envelope and flag refer to `t_hi`.
pub fn short_interval_between(
    t_lo: f64,
    t_hi: f64,
    h0: f64,
    ev: &DeltaEvaluator,
    opts: &QuadOptions,
) -> Result<ShortIntervalReport> {
    if !(t_lo >= 1.0) || !(t_hi >= t_lo) {
        return Err(Error::invalid("T", format!("need 1 <= t_lo <= T, got [{t_lo}, {t_hi}]")));
    }
    if !(h0 >= 0.0) || !h0.is_finite() {
        return Err(Error::invalid("h0", format!("need a finite h0 >= 0, got {h0}")));
    }
    let i = integrate_shifted(ev, t_lo, t_hi, h0, opts, |_, a, b| (b - a) * (b - a))?;
    let envelope = short_interval_envelope(t_hi, h0);
    Ok(ShortIntervalReport {
        t: t_hi,
        h0,
        value: i.value[0],
        envelope,
        ratio: i.value[0] / envelope,
        h0_outside_range: !(h0 >= 1.0 && h0 <= 0.5 * t_hi.sqrt()),
        error_estimate: i.error,
    })
}

/// `integral_T^{2T} (Delta(q1 q2 (t + h)) - Delta(q1 q2 t))^2 dt` at the dyadic
/// offsets `h = H0 / 2^j`, `j = 0..levels`, with the aggregate
/// `levels * sum_j (2^j + 1) J_j / (H0 T log^7 T)` that bounds the maximal
/// increment statistic up to constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicIncrements {
    pub t: f64,
    pub h0_max: f64,
    pub offsets: Vec<f64>,
    pub integrals: Vec<f64>,
    pub normalized_aggregate: f64,
}

pub fn dyadic_increments(
    t: f64,
    h0_max: f64,
    levels: u32,
    ev: &DeltaEvaluator,
    opts: &QuadOptions,
) -> Result<DyadicIncrements> {
    if !(h0_max >= 2.0 && h0_max <= t.sqrt()) {
        return Err(Error::invalid("h0", format!("need 2 <= H0 <= sqrt(T), got H0={h0_max}, T={t}")));
    }
    if levels == 0 {
        return Err(Error::invalid("levels", "need at least one level"));
    }
    let offsets: Vec<f64> = (0..levels).map(|j| h0_max / 2f64.powi(j as i32)).collect();
    let integrals = offsets
        .iter()
        .map(|&h| integrate_shifted(ev, t, 2.0 * t, h, opts, |_, a, b| (b - a) * (b - a)).map(|i| i.value[0]))
        .collect::<Result<Vec<_>>>()?;
    let agg: f64 = integrals.iter().enumerate().map(|(j, v)| (2f64.powi(j as i32) + 1.0) * v).sum();
    Ok(DyadicIncrements {
        t,
        h0_max,
        normalized_aggregate: levels as f64 * agg / (h0_max * t * t.ln().powi(7)),
        offsets,
        integrals,
    })
}

/// `(integral_T^{2T} |Delta|, integral_T^{2T} Delta^2)` in the scaled variable.
pub fn abs_and_square(t: f64, ev: &DeltaEvaluator, opts: &QuadOptions) -> Result<(f64, f64)> {
    let v = integrate_scaled(ev, t, 2.0 * t, opts, |_, d| [d.abs(), d * d])?.value;
    Ok((v[0], v[1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcursionReport {
    pub k: u32,
    pub t: f64,
    pub x_star: f64,
    /// `integral_1^X Delta^k - C_k integral_1^X x^(k/4) dx` at `x_star`.
    pub f_k_value: f64,
    /// `f_k_value log^7 X / X^(1/2 + k/4)`, maximized over the grid.
    pub normalized: f64,
    /// Smallest normalized value on the grid, for the opposite direction.
    pub min_normalized: f64,
    pub ck: f64,
    /// `C_k` was measured, not known.
    pub ck_empirical: bool,
}

/// `n >= 2` evenly spaced points covering `[T, 2T]`.
pub fn excursion_grid(t: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| t + t * i as f64 / (n - 1) as f64).collect()
}

/// One abscissa of an excursion scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcursionPoint {
    pub x: f64,
    pub f_k: f64,
    pub normalized: f64,
}

/// `F_k(X)` and its normalization at every `X` of `grid` inside `[T, 2T]`,
/// sorted and deduplicated.
pub fn f_k_profile(
    k: u32,
    t: f64,
    ck: f64,
    grid: &[f64],
    ev: &DeltaEvaluator,
    opts: &QuadOptions,
) -> Result<Vec<ExcursionPoint>> {
    check_k(k)?;
    if k.is_multiple_of(2) {
        return Err(Error::invalid("k", "excursions are defined for odd k"));
    }
    if !(t > 1.0) || !ck.is_finite() {
        return Err(Error::invalid("T", format!("need T > 1 and finite C_k, got T={t}, C_k={ck}")));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    check_grid(&sorted, t)?;
    if sorted[sorted.len() - 1] > 2.0 * t {
        return Err(Error::invalid("grid", "grid must lie in [T, 2T]"));
    }
    let integrals = moment_integrals(k, &sorted, ev, opts)?;
    let e = 0.5 + k as f64 / 4.0;
    Ok(sorted
        .iter()
        .zip(&integrals)
        .map(|(&x, &i)| {
            let f_k = i - ck * power_integral(x, k);
            ExcursionPoint { x, f_k, normalized: f_k * x.ln().powi(7) / x.powf(e) }
        })
        .collect())
}

/// Scans `F_k(X)` over `grid` inside `[T, 2T]` and reports the largest
/// normalized excursion.
pub fn f_k_excursion(
    k: u32,
    t: f64,
    ck: f64,
    grid: &[f64],
    ev: &DeltaEvaluator,
    opts: &QuadOptions,
) -> Result<ExcursionReport> {
    let profile = f_k_profile(k, t, ck, grid, ev, opts)?;
    Ok(summarize_excursion(k, t, ck, &profile))
}

pub fn summarize_excursion(k: u32, t: f64, ck: f64, profile: &[ExcursionPoint]) -> ExcursionReport {
    let best = profile.iter().fold(profile[0], |b, p| if p.normalized > b.normalized { *p } else { b });
    let min_normalized = profile.iter().map(|p| p.normalized).fold(f64::INFINITY, f64::min);
    ExcursionReport {
        k,
        t,
        x_star: best.x,
        f_k_value: best.f_k,
        normalized: best.normalized,
        min_normalized,
        ck,
        ck_empirical: true,
    }
}
