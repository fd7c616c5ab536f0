//! Piecewise-exact integration of functions of `Delta(q1 q2 t)`.
//!
//! `D(q1 q2 t)` is constant between consecutive jump points `n / (q1 q2)`, so
//! any integrand built from `Delta` is smooth on each such piece. Pieces are
//! integrated with the order-8 Gauss-Legendre rule and summed with
//! compensation.
//!
//! Work is split into canonical chunks of `CHUNK` consecutive integers of
//! `x = q1 q2 t`. Chunk boundaries depend only on absolute position, chunk
//! results are reduced in index order, so a value is bit-identical for any
//! thread count and for any set of other requested abscissae.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::DeltaEvaluator;
use crate::error::{Error, Result};
use crate::quadrature::{gl8, CompensatedVec};

/// Integers of `x = q1 q2 t` per canonical chunk.
pub const CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    /// Absolute tolerance per unit length for pieces that need adaptive
    /// subdivision.
    pub tol: f64,
    /// Pieces wider than this (in `t`) are integrated adaptively; narrower
    /// pieces get a single order-8 rule.
    pub max_piece: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_piece: 1.0 }
    }
}

impl QuadOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Integral values with the summed adaptive error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral<const N: usize> {
    #[serde(with = "serde_arrays")]
    pub value: [f64; N],
    pub error: f64,
}

mod serde_arrays {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(v: &[f64; N], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[f64; N], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into().map_err(|_| serde::de::Error::custom("wrong array length"))
    }
}

#[derive(Clone, Copy)]
struct Partial<const N: usize> {
    acc: CompensatedVec<N>,
    err: f64,
}

impl<const N: usize> Partial<N> {
    fn zero() -> Self {
        Self { acc: CompensatedVec::default(), err: 0.0 }
    }
}

#[inline]
fn piece<const N: usize, F>(a: f64, b: f64, opts: &QuadOptions, out: &mut Partial<N>, g: &mut F)
where
    F: FnMut(f64) -> [f64; N],
{
    let w = b - a;
    if w <= opts.max_piece {
        out.acc.add(&gl8().integrate_vec(a, b, g));
    } else {
        let (v, e) = gl8().integrate_adaptive(a, b, opts.tol * w, g);
        out.acc.add(&v);
        out.err += e;
    }
}

fn check_t(ev: &DeltaEvaluator, t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid("t", format!("abscissa must be finite and positive, got {t}")));
    }
    let x = ev.modulus() * t;
    if x > ev.limit() as f64 {
        return Err(Error::OutOfRange { requested: x.ceil() as u64, limit: ev.limit() });
    }
    Ok(())
}

/// Integrates `f(t, Delta(q1 q2 t))` over `[a, b]` sequentially.
fn integrate_span<const N: usize, F>(ev: &DeltaEvaluator, a: f64, b: f64, opts: &QuadOptions, f: &F) -> Partial<N>
where
    F: Fn(f64, f64) -> [f64; N],
{
    let mut out = Partial::zero();
    if !(b > a) {
        return out;
    }
    let q = ev.modulus();
    let lo = ((q * a).floor() as u64).max(1);
    let hi = (q * b).floor() as u64 + 1;
    for run in ev.runs(lo, hi) {
        let s = (run.start as f64 / q).max(a);
        let e = (run.end as f64 / q).min(b);
        if e > s {
            let d = run.d_value;
            piece(s, e, opts, &mut out, &mut |t| f(t, ev.delta_on(d, t)));
        }
    }
    out
}

fn chunk_bounds(q: f64, j: u64) -> (f64, f64) {
    ((j * CHUNK) as f64 / q, ((j + 1) * CHUNK) as f64 / q)
}

fn chunk_index(q: f64, t: f64) -> u64 {
    ((q * t) / CHUNK as f64).floor() as u64
}

/// `integral_{t0}^{X} f(t, Delta(q1 q2 t)) dt` for every `X` in `points`.
///
/// Every `X` must be `>= t0` and inside the evaluator's limit.
pub fn cumulative_scaled<const N: usize, F>(
    ev: &DeltaEvaluator,
    t0: f64,
    points: &[f64],
    opts: &QuadOptions,
    f: F,
) -> Result<Vec<Integral<N>>>
where
    F: Fn(f64, f64) -> [f64; N] + Sync,
{
    check_t(ev, t0)?;
    for &x in points {
        check_t(ev, x)?;
        if x < t0 {
            return Err(Error::invalid("grid", format!("abscissa {x} lies below the lower limit {t0}")));
        }
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let q = ev.modulus();
    let j0 = chunk_index(q, t0);
    let jmax = points.iter().map(|&x| chunk_index(q, x)).max().unwrap();

    let chunks: Vec<Partial<N>> = (j0..jmax)
        .into_par_iter()
        .map(|j| {
            let (a, b) = chunk_bounds(q, j);
            integrate_span(ev, a.max(t0), b, opts, &f)
        })
        .collect();

    // prefix[i] = sum of chunks j0 .. j0 + i
    let mut prefix = Vec::with_capacity(chunks.len() + 1);
    let mut running = Partial::<N>::zero();
    prefix.push(running);
    for c in &chunks {
        running.acc.merge(&c.acc);
        running.err += c.err;
        prefix.push(running);
    }

    points
        .par_iter()
        .map(|&x| {
            let j = chunk_index(q, x).max(j0);
            let (a, _) = chunk_bounds(q, j);
            let tail = integrate_span(ev, a.max(t0), x, opts, &f);
            let mut total = prefix[(j - j0) as usize];
            total.acc.merge(&tail.acc);
            total.err += tail.err;
            Ok(Integral { value: total.acc.value(), error: total.err })
        })
        .collect()
}

/// `integral_{t_lo}^{t_hi} f(t, Delta(q1 q2 t)) dt`.
pub fn integrate_scaled<const N: usize, F>(
    ev: &DeltaEvaluator,
    t_lo: f64,
    t_hi: f64,
    opts: &QuadOptions,
    f: F,
) -> Result<Integral<N>>
where
    F: Fn(f64, f64) -> [f64; N] + Sync,
{
    if !(t_hi >= t_lo) {
        return Err(Error::invalid("t", format!("need t_lo <= t_hi, got [{t_lo}, {t_hi}]")));
    }
    Ok(cumulative_scaled(ev, t_lo, &[t_hi], opts, f)?.pop().expect("one point"))
}

/// `integral_{t_lo}^{t_hi} f(t, Delta(q1 q2 t), Delta(q1 q2 (t + h))) dt`
/// with pieces cut at the jump points of both arguments.
pub fn integrate_shifted<F>(
    ev: &DeltaEvaluator,
    t_lo: f64,
    t_hi: f64,
    h: f64,
    opts: &QuadOptions,
    f: F,
) -> Result<Integral<1>>
where
    F: Fn(f64, f64, f64) -> f64 + Sync,
{
    if !(h >= 0.0) || !(t_hi >= t_lo) {
        return Err(Error::invalid("h0", format!("need h >= 0 and t_lo <= t_hi, got h={h}, [{t_lo}, {t_hi}]")));
    }
    check_t(ev, t_lo)?;
    check_t(ev, t_hi + h)?;
    if t_hi == t_lo {
        return Ok(Integral { value: [0.0], error: 0.0 });
    }
    let q = ev.modulus();
    let j0 = chunk_index(q, t_lo);
    let j1 = chunk_index(q, t_hi);
    let parts: Vec<Partial<1>> = (j0..=j1)
        .into_par_iter()
        .map(|j| {
            let (a, b) = chunk_bounds(q, j);
            shifted_span(ev, a.max(t_lo), b.min(t_hi), h, opts, &f)
        })
        .collect();
    let mut total = Partial::<1>::zero();
    for p in &parts {
        total.acc.merge(&p.acc);
        total.err += p.err;
    }
    Ok(Integral { value: total.acc.value(), error: total.err })
}

fn shifted_span<F>(ev: &DeltaEvaluator, a: f64, b: f64, h: f64, opts: &QuadOptions, f: &F) -> Partial<1>
where
    F: Fn(f64, f64, f64) -> f64,
{
    let mut out = Partial::zero();
    if !(b > a) {
        return out;
    }
    let q = ev.modulus();
    let mut base = ev.runs(((q * a).floor() as u64).max(1), (q * b).floor() as u64 + 1);
    let mut shifted = ev.runs(((q * (a + h)).floor() as u64).max(1), (q * (b + h)).floor() as u64 + 1);
    let (mut ra, mut rb) = (base.next(), shifted.next());
    let mut cur = a;
    while let (Some(x), Some(y)) = (ra, rb) {
        let end_a = x.end as f64 / q;
        let end_b = y.end as f64 / q - h;
        let e = end_a.min(end_b).min(b);
        if e > cur {
            let (da, db) = (x.d_value, y.d_value);
            piece(cur, e, opts, &mut out, &mut |t| [f(t, ev.delta_on(da, t), ev.delta_on(db, t + h))]);
            cur = e;
        }
        if cur >= b {
            break;
        }
        if end_a <= cur {
            ra = base.next();
        }
        if end_b <= cur {
            rb = shifted.next();
        }
    }
    out
}
