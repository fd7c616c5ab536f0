//! Sign changes, large-value witnesses and persistent runs of
//! `Delta(q1 q2 t)`.
//!
//! Everything works segment by segment. On a segment `D` is constant, so
//! `Delta` is the smooth function `d - M(q1 q2 t)`; boundaries of superlevel
//! sets are located by bisection on that branch, and a jump that carries
//! `Delta` across zero counts as one crossing at the jump point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{jump_abscissa, DeltaEvaluator, Segment};
use crate::error::{Error, Result};
use crate::integrate::{integrate_scaled, QuadOptions, CHUNK};

pub const DEFAULT_C1: f64 = 0.05;
pub const DEFAULT_C2: f64 = 30.0;
pub const DEFAULT_C5: f64 = 0.05;

/// A piecewise-smooth function presented segment by segment. Implemented by
/// [`DeltaEvaluator`]; tests also use synthetic sources.
pub trait PiecewiseSource: Sync {
    /// Calls `f` on the segments tiling `[lo, hi]`, in order.
    fn for_each_segment(&self, lo: f64, hi: f64, f: &mut dyn FnMut(&Segment)) -> Result<()>;
    /// Smooth branch on the segment with value `d`.
    fn value_on(&self, d: u64, t: f64) -> f64;
    /// Derivative of the smooth branch.
    fn slope_on(&self, d: u64, t: f64) -> f64;
    /// Exact value at `t`.
    fn value_at(&self, t: f64) -> f64;
    /// Width of the canonical chunks used to split long scans.
    fn chunk_width(&self) -> f64;
    /// Largest float `s <= t` at which [`Self::value_at`] is still on the
    /// segment ending at `t`.
    fn left_limit_point(&self, t: f64) -> f64 {
        t.next_down()
    }
    /// Smallest float `s >= t` at which [`Self::value_at`] is on the segment
    /// starting at `t`.
    fn right_point(&self, t: f64) -> f64 {
        t
    }
}

impl PiecewiseSource for DeltaEvaluator {
    fn for_each_segment(&self, lo: f64, hi: f64, f: &mut dyn FnMut(&Segment)) -> Result<()> {
        for s in self.segments(lo, hi)? {
            f(&s);
        }
        Ok(())
    }

    fn value_on(&self, d: u64, t: f64) -> f64 {
        self.delta_on(d, t)
    }

    fn slope_on(&self, _d: u64, t: f64) -> f64 {
        self.delta_slope(t)
    }

    fn value_at(&self, t: f64) -> f64 {
        self.delta_scaled(t)
    }

    fn chunk_width(&self) -> f64 {
        CHUNK as f64 / self.modulus()
    }

    fn left_limit_point(&self, t: f64) -> f64 {
        let q = self.modulus();
        let n = (q * t).round();
        let mut s = t.next_down();
        // fl(q s) must stay below the jump at n
        if (q * t - n).abs() <= 4.0 * f64::EPSILON * q * t {
            while q * s >= n {
                s = s.next_down();
            }
        }
        s
    }

    fn right_point(&self, t: f64) -> f64 {
        let x = self.modulus() * t;
        let n = x.round();
        // only points that are a jump n / (q1 q2) up to rounding
        if n >= 1.0 && (x - n).abs() <= 4.0 * f64::EPSILON * x {
            jump_abscissa(n as u64, self.modulus()).max(t)
        } else {
            t
        }
    }
}

/// Sign classes: `Delta >= 0` versus `Delta < 0`.
#[inline]
fn class(v: f64) -> bool {
    v >= 0.0
}

/// Bisection for a class change of `g` on `[a, b]`, where `g(a)` and `g(b)`
/// lie in different classes. Returns the last point in `a`'s class and the
/// first in `b`'s, adjacent to within `tol`.
fn bisect<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let ca = class(g(a));
    loop {
        let m = 0.5 * (a + b);
        if m <= a || m >= b || b - a <= tol {
            return (a, b);
        }
        if class(g(m)) == ca {
            a = m;
        } else {
            b = m;
        }
    }
}

fn check_window(lo: f64, hi: f64) -> Result<()> {
    if !(lo >= 1.0) || !(hi > lo) || !hi.is_finite() {
        return Err(Error::invalid("T", format!("need 1 <= lo < hi, got [{lo}, {hi}]")));
    }
    Ok(())
}

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid("step", format!("need 0 < step <= 1, got {step}")));
    }
    Ok(())
}

/// Canonical cut points `k w` strictly inside `(lo, hi)`, with both ends.
fn canonical_pieces(lo: f64, hi: f64, w: f64) -> Vec<(f64, f64)> {
    let mut cuts = vec![lo];
    let mut k = (lo / w).floor() + 1.0;
    while k * w < hi {
        cuts.push(k * w);
        k += 1.0;
    }
    cuts.push(hi);
    cuts.windows(2).map(|c| (c[0], c[1])).collect()
}

/// Sample abscissae on a segment: its ends plus a lattice of spacing `step`
/// anchored at the segment start, clipped to `[lo, hi]`.
fn sample_points(seg: &Segment, step: f64) -> Vec<f64> {
    let mut pts = vec![seg.t_lo];
    let n = ((seg.t_hi - seg.t_lo) / step).ceil() as usize;
    for i in 1..n {
        pts.push(seg.t_lo + i as f64 * step);
    }
    pts.push(seg.t_hi);
    pts
}

/// Ordered crossings of `Delta` in `(lo, hi]`, scanning from the value at `lo`.
pub fn scan_sign_changes<S: PiecewiseSource + ?Sized>(src: &S, lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    check_window(lo, hi)?;
    check_step(step)?;
    let mut out = Vec::new();
    let mut prev: Option<(u64, f64)> = None; // (d, t_hi) of the previous segment
    src.for_each_segment(lo, hi, &mut |seg| {
        let g = |t: f64| src.value_on(seg.d_value, t);
        if let Some((d, end)) = prev {
            // jump at the shared boundary
            if class(src.value_on(d, end)) != class(g(seg.t_lo)) && end > lo {
                out.push(src.right_point(end));
            }
        }
        let pts = sample_points(seg, step);
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if class(g(a)) != class(g(b)) {
                let (_, c) = bisect(g, a, b, 0.0);
                if c > lo && c <= hi {
                    out.push(c);
                }
            }
        }
        prev = Some((seg.d_value, seg.t_hi));
    })?;
    Ok(out)
}

/// `Delta(q1 q2 t) >= c1 t^(1/4)` at `t1` and `<= -c1 t2^(1/4)` at `t2`,
/// each the earliest witness in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witnesses {
    pub t1: Option<f64>,
    pub t2: Option<f64>,
}

/// Maximizer of `sign * value_on(d, t) - c t^(1/4)` on `[a, b]`.
fn segment_peak<S: PiecewiseSource + ?Sized>(src: &S, d: u64, a: f64, b: f64, sign: f64, c: f64) -> f64 {
    let g = |t: f64| sign * src.value_on(d, t) - c * t.powf(0.25);
    let dg = |t: f64| sign * src.slope_on(d, t) - 0.25 * c * t.powf(-0.75);
    let (da, db) = (dg(a), dg(b));
    let mut cands = vec![a, b];
    if da > 0.0 && db < 0.0 {
        // interior maximum
        let (x, y) = bisect(|t| -dg(t), a, b, 0.0);
        cands.push(x);
        cands.push(y);
    }
    cands.into_iter().fold(a, |best, t| if g(t) > g(best) { t } else { best })
}

/// Earliest witnesses in `[lo, hi]`. Each is re-evaluated with the exact
/// `value_at` before being returned.
pub fn extremal_points<S: PiecewiseSource + ?Sized>(src: &S, lo: f64, hi: f64, c1: f64) -> Result<Witnesses> {
    check_window(lo, hi)?;
    if !(c1 >= 0.0) {
        return Err(Error::invalid("c1", format!("need c1 >= 0, got {c1}")));
    }
    let mut w = Witnesses { t1: None, t2: None };
    src.for_each_segment(lo, hi, &mut |seg| {
        for (sign, slot) in [(1.0, &mut w.t1), (-1.0, &mut w.t2)] {
            if slot.is_some() {
                continue;
            }
            let a = src.right_point(seg.t_lo).min(seg.t_hi);
            let b = if seg.t_hi < hi { src.left_limit_point(seg.t_hi).max(a) } else { seg.t_hi };
            let t = segment_peak(src, seg.d_value, a, b, sign, c1);
            for cand in [t, t.next_up(), t.next_down()] {
                if cand >= lo && cand <= hi && sign * src.value_at(cand) >= c1 * cand.powf(0.25) {
                    *slot = Some(cand);
                    break;
                }
            }
        }
    })?;
    Ok(w)
}

/// One window `[T, T + c2 sqrt(T)]` of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window_start: f64,
    pub window_end: f64,
    pub found_positive_extreme: bool,
    pub found_negative_extreme: bool,
    pub crossing_count: usize,
    /// Smallest `c2` whose window contains a crossing, if one was seen.
    pub c2_for_crossing: Option<f64>,
    /// Smallest `c2` whose window contains both witnesses.
    pub c2_for_witnesses: Option<f64>,
    pub witnesses: Witnesses,
}

pub fn scan_window<S: PiecewiseSource + ?Sized>(src: &S, t: f64, c1: f64, c2: f64, step: f64) -> Result<WindowResult> {
    if !(c2 > 0.0) {
        return Err(Error::invalid("c2", format!("need c2 > 0, got {c2}")));
    }
    let end = t + c2 * t.sqrt();
    let crossings = scan_sign_changes(src, t, end, step)?;
    let witnesses = extremal_points(src, t, end, c1)?;
    let root = t.sqrt();
    let c2_for_witnesses = match (witnesses.t1, witnesses.t2) {
        (Some(a), Some(b)) => Some((a.max(b) - t) / root),
        _ => None,
    };
    Ok(WindowResult {
        window_start: t,
        window_end: end,
        found_positive_extreme: witnesses.t1.is_some(),
        found_negative_extreme: witnesses.t2.is_some(),
        crossing_count: crossings.len(),
        c2_for_crossing: crossings.first().map(|&c| (c - t) / root),
        c2_for_witnesses,
        witnesses,
    })
}

/// Windows starting at each of `starts`, evaluated concurrently and
/// returned in input order.
pub fn scan_windows<S: PiecewiseSource + ?Sized>(
    src: &S,
    starts: &[f64],
    c1: f64,
    c2: f64,
    step: f64,
) -> Result<Vec<WindowResult>> {
    starts.par_iter().map(|&t| scan_window(src, t, c1, c2, step)).collect()
}

/// Smallest `c2` for which every window has a crossing (and, separately,
/// both witnesses); `None` if some window never qualified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimalC2 {
    pub crossing: Option<f64>,
    pub witnesses: Option<f64>,
}

pub fn minimal_c2(results: &[WindowResult]) -> MinimalC2 {
    let fold = |f: fn(&WindowResult) -> Option<f64>| {
        results.iter().try_fold(0.0f64, |m, r| f(r).map(|c| m.max(c)))
    };
    MinimalC2 { crossing: fold(|r| r.c2_for_crossing), witnesses: fold(|r| r.c2_for_witnesses) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignRunReport {
    pub t: f64,
    pub threshold_c: f64,
    pub runs_plus: Vec<(f64, f64)>,
    pub runs_minus: Vec<(f64, f64)>,
    pub measure_plus: f64,
    pub measure_minus: f64,
    pub longest_plus: f64,
    pub longest_minus: f64,
    pub window_results: Vec<WindowResult>,
    /// Parameters outside `q1 >= 2, q2 >= 3`.
    pub outside_theorem_hypothesis: bool,
}

/// Superlevel intervals of `g(t) = sign * value_on(d, t) - c t^(1/4)` on one
/// segment `[a, b)`, as `(start, end)` pairs with `g > 0` at every float
/// inside.
fn segment_runs<S: PiecewiseSource + ?Sized>(
    src: &S,
    seg: &Segment,
    sign: f64,
    c: f64,
    tol: f64,
    out: &mut Vec<(f64, f64)>,
) {
    let d = seg.d_value;
    let g = |t: f64| sign * src.value_on(d, t) - c * t.powf(0.25);
    let dg = |t: f64| sign * src.slope_on(d, t) - 0.25 * c * t.powf(-0.75);
    let (a, b) = (seg.t_lo, seg.t_hi);
    // g is unimodal on a segment; split at its critical point if any
    let mut knots = vec![a];
    let (da, db) = (dg(a), dg(b));
    if (da > 0.0) != (db > 0.0) {
        let (x, _) = bisect(|t| if da > 0.0 { dg(t) } else { -dg(t) }, a, b, 0.0);
        if x > a && x < b {
            knots.push(x);
        }
    }
    knots.push(b);
    // walk the monotone pieces, recording where g > 0 starts and stops
    let pos = |t: f64| g(t) > 0.0;
    let mut start = if pos(a) { Some(a) } else { None };
    for w in knots.windows(2) {
        let (x, y) = (w[0], w[1]);
        let (px, py) = (pos(x), pos(y));
        if px != py {
            let (l, r) = bisect(|t| if g(t) > 0.0 { 0.0 } else { -1.0 }, x, y, tol);
            if py {
                start = Some(r);
            } else if let Some(s) = start.take() {
                out.push((s, l));
            }
        }
    }
    if let Some(s) = start {
        out.push((s, b));
    }
}

fn merge_runs(runs: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(runs.len());
    for r in runs {
        if r.1 <= r.0 {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.1 == r.0 => last.1 = r.1,
            _ => out.push(r),
        }
    }
    out
}

/// Intervals `(start, end)` where `+Delta` and `-Delta` exceed the threshold.
pub type RunPair = (Vec<(f64, f64)>, Vec<(f64, f64)>);

/// Maximal runs of `+Delta > c t^(1/4)` and `-Delta > c t^(1/4)` in
/// `[lo, hi]`.
pub fn runs_between<S: PiecewiseSource + ?Sized>(
    src: &S,
    lo: f64,
    hi: f64,
    c: f64,
) -> Result<RunPair> {
    check_window(lo, hi)?;
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::invalid("c5", format!("need a finite threshold c >= 0, got {c}")));
    }
    let pieces = canonical_pieces(lo, hi, src.chunk_width());
    let parts: Vec<Result<RunPair>> = pieces
        .par_iter()
        .map(|&(a, b)| {
            let (mut plus, mut minus) = (Vec::new(), Vec::new());
            src.for_each_segment(a, b, &mut |seg| {
                segment_runs(src, seg, 1.0, c, 0.0, &mut plus);
                segment_runs(src, seg, -1.0, c, 0.0, &mut minus);
            })?;
            Ok((plus, minus))
        })
        .collect();
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    for p in parts {
        let (a, b) = p?;
        plus.extend(a);
        minus.extend(b);
    }
    Ok((merge_runs(plus), merge_runs(minus)))
}

fn total(runs: &[(f64, f64)]) -> f64 {
    let mut acc = crate::quadrature::Compensated::new();
    for r in runs {
        acc.add(r.1 - r.0);
    }
    acc.value()
}

/// Runs of `+-Delta(q1 q2 t) > c t^(1/4)` on `[T, 2T]`.
pub fn detect_runs(t: f64, c: f64, ev: &DeltaEvaluator) -> Result<SignRunReport> {
    let (runs_plus, runs_minus) = runs_between(ev, t, 2.0 * t, c)?;
    let longest = |r: &[(f64, f64)]| r.iter().map(|x| x.1 - x.0).fold(0.0, f64::max);
    Ok(SignRunReport {
        t,
        threshold_c: c,
        measure_plus: total(&runs_plus),
        measure_minus: total(&runs_minus),
        longest_plus: longest(&runs_plus),
        longest_minus: longest(&runs_minus),
        runs_plus,
        runs_minus,
        window_results: Vec::new(),
        outside_theorem_hypothesis: !ev.params().meets_sign_hypothesis(),
    })
}

/// `(measure_plus, measure_minus)` of [`detect_runs`].
pub fn positivity_measure(t: f64, c: f64, ev: &DeltaEvaluator) -> Result<(f64, f64)> {
    let r = detect_runs(t, c, ev)?;
    Ok((r.measure_plus, r.measure_minus))
}

/// Positive (`sign = 1`) or negative (`sign = -1`) part of `Delta(q1 q2 t)`.
pub fn delta_pm(t: f64, sign: i8, ev: &DeltaEvaluator) -> Result<f64> {
    let v = ev.delta_scaled(t);
    split_pm(v, sign)
}

fn split_pm(v: f64, sign: i8) -> Result<f64> {
    match sign {
        1 => Ok(0.5 * (v.abs() + v)),
        -1 => Ok(0.5 * (v.abs() - v)),
        _ => Err(Error::invalid("sign", format!("sign must be +1 or -1, got {sign}"))),
    }
}

/// `integral_T^{2T} Delta_+^2` and `Delta_-^2`, with both divided by `T^(3/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartSquares {
    pub t: f64,
    pub plus: f64,
    pub minus: f64,
    pub plus_normalized: f64,
    pub minus_normalized: f64,
}

pub fn part_squares(t: f64, ev: &DeltaEvaluator, opts: &QuadOptions) -> Result<PartSquares> {
    let v = integrate_scaled(ev, t, 2.0 * t, opts, |_, d| {
        let p = d.max(0.0);
        let m = (-d).max(0.0);
        [p * p, m * m]
    })?
    .value;
    let n = t.powf(1.5);
    Ok(PartSquares { t, plus: v[0], minus: v[1], plus_normalized: v[0] / n, minus_normalized: v[1] / n })
}
