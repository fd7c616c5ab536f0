//! Exact evaluation of the restricted divisor summatory function `D(x)` and of
//! the error term `Delta(x) = D(x) - M(x)`.
//!
//! `D` is always carried as an exact integer; the only floating point
//! subtraction happens when `Delta` is formed. With `D ~ x ln x` and
//! `Delta ~ x^(1/4)` this loses about `log10(D / Delta)` digits, which keeps
//! double precision sound up to `x ~ 1e12`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{isqrt, scaled_main_term, CongruenceParams};
use crate::error::{Error, Result};

/// Default number of entries sieved per block.
pub const DEFAULT_BLOCK: usize = 1 << 22;

/// Largest `x` for which the single f64 subtraction in `delta` is trusted.
pub const SOUNDNESS_CEILING: f64 = 1e12;

/// `D(x)` by a single loop over `n1 = r1 (mod q1)`, `n1 <= x`.
pub fn summatory_bruteforce(x: f64, p: &CongruenceParams) -> u64 {
    if !(x >= 1.0) {
        return 0;
    }
    let n = x.floor() as u64;
    let mut total = 0;
    let mut n1 = p.first.r();
    while n1 <= n {
        total += p.second.count_upto(n / n1);
        n1 += p.first.q();
    }
    total
}

/// `D(x)` by the Dirichlet hyperbola method: `O(sqrt(x))` progression steps.
pub fn summatory_hyperbola(x: f64, p: &CongruenceParams) -> u64 {
    if !(x >= 1.0) {
        return 0;
    }
    summatory_upto(x.floor() as u64, p)
}

/// Integer form of [`summatory_hyperbola`]: `D(n)`.
pub fn summatory_upto(n: u64, p: &CongruenceParams) -> u64 {
    if n == 0 {
        return 0;
    }
    let s = isqrt(n);
    let mut total = 0u64;
    let mut n1 = p.first.r();
    while n1 <= s {
        total += p.second.count_upto(n / n1);
        n1 += p.first.q();
    }
    let mut n2 = p.second.r();
    while n2 <= s {
        total += p.first.count_upto(n / n2);
        n2 += p.second.q();
    }
    total - p.first.count_upto(s) * p.second.count_upto(s)
}

/// Adds `d(n; p)` into `out[n - lo]` for every `n` in `[lo, lo + out.len())`.
///
/// Every ordered pair `(n1, n2)` is reached exactly once through its smaller
/// factor: pairs with `n1 <= n2` walk `n2` for each `n1 <= sqrt(hi)`, pairs
/// with `n2 < n1` walk `n1` for each `n2 <= sqrt(hi)`.
pub fn sieve_block(p: &CongruenceParams, lo: u64, out: &mut [u32]) {
    if out.is_empty() {
        return;
    }
    assert!(lo >= 1);
    let hi = lo + out.len() as u64 - 1;
    let root = isqrt(hi);
    let (c1, c2) = (p.first, p.second);

    let mut n1 = c1.r();
    while n1 <= root {
        // n2 >= n1 with n1 * n2 in [lo, hi]
        let start = n1.max(lo.div_ceil(n1));
        let n2 = c2.first_at_least(start);
        let mut n = n1 * n2;
        let step = n1 * c2.q();
        while n <= hi {
            out[(n - lo) as usize] += 1;
            n += step;
        }
        n1 += c1.q();
    }

    let mut n2 = c2.r();
    while n2 <= root {
        // n1 > n2 with n1 * n2 in [lo, hi]
        let start = (n2 + 1).max(lo.div_ceil(n2));
        let n1 = c1.first_at_least(start);
        let mut n = n1 * n2;
        let step = n2 * c1.q();
        while n <= hi {
            out[(n - lo) as usize] += 1;
            n += step;
        }
        n2 += c2.q();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SieveOptions {
    /// Entries per independently sieved block.
    pub block_size: usize,
    /// Upper bound on bytes the sieve and its prefix table may allocate.
    pub mem_budget: Option<u64>,
}

impl Default for SieveOptions {
    fn default() -> Self {
        Self { block_size: DEFAULT_BLOCK, mem_budget: None }
    }
}

impl SieveOptions {
    fn check_budget(&self, bytes: u64) -> Result<()> {
        match self.mem_budget {
            Some(allowed) if bytes > allowed => Err(Error::BudgetExceeded { requested: bytes, allowed }),
            _ => Ok(()),
        }
    }
}

/// `d(n; p)` for every `n` in `[range_start, range_end]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DivisorSieve {
    params: CongruenceParams,
    range_start: u64,
    counts: Vec<u32>,
}

const SIEVE_MAGIC: &[u8; 8] = b"DIVCONG\0";
const SIEVE_VERSION: u32 = 1;

impl DivisorSieve {
    /// Sieves `[start, end]` in independent blocks, merged in index order.
    pub fn build(params: CongruenceParams, start: u64, end: u64, opts: &SieveOptions) -> Result<Self> {
        if start == 0 || end < start {
            return Err(Error::invalid("range", format!("need 1 <= start <= end, got [{start}, {end}]")));
        }
        let len = end - start + 1;
        opts.check_budget(len * 4)?;
        let block = opts.block_size.max(1) as u64;
        let mut counts = vec![0u32; len as usize];
        counts
            .par_chunks_mut(block as usize)
            .enumerate()
            .for_each(|(i, chunk)| sieve_block(&params, start + i as u64 * block, chunk));
        Ok(Self { params, range_start: start, counts })
    }

    pub fn params(&self) -> &CongruenceParams {
        &self.params
    }

    pub fn range_start(&self) -> u64 {
        self.range_start
    }

    pub fn range_end(&self) -> u64 {
        self.range_start + self.counts.len() as u64 - 1
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// `d(n; p)`, `None` outside the sieved range.
    pub fn get(&self, n: u64) -> Option<u32> {
        n.checked_sub(self.range_start).and_then(|i| self.counts.get(i as usize).copied())
    }

    /// Writes `{magic, version, r1, q1, r2, q2, start, end}` followed by the
    /// little-endian `u32` counts.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SIEVE_MAGIC)?;
        w.write_all(&SIEVE_VERSION.to_le_bytes())?;
        for v in [
            self.params.first.r(),
            self.params.first.q(),
            self.params.second.r(),
            self.params.second.q(),
            self.range_start,
            self.range_end(),
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(1 << 16);
        for chunk in self.counts.chunks(1 << 14) {
            buf.clear();
            for c in chunk {
                buf.extend_from_slice(&c.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SIEVE_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != SIEVE_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let mut fields = [0u64; 6];
        for f in &mut fields {
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)?;
            *f = u64::from_le_bytes(b8);
        }
        let [r1, q1, r2, q2, start, end] = fields;
        let params = CongruenceParams::new(r1, q1, r2, q2).map_err(|e| Error::Format(e.to_string()))?;
        if start == 0 || end < start {
            return Err(Error::Format(format!("bad range [{start}, {end}]")));
        }
        let len = (end - start + 1) as usize;
        let mut bytes = vec![0u8; len * 4];
        r.read_exact(&mut bytes)?;
        let counts = bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { params, range_start: start, counts })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// `d(n; p)` for `n = 1..=n_max`.
pub fn sieve_divisor_counts(n_max: u64, p: &CongruenceParams, opts: &SieveOptions) -> Result<DivisorSieve> {
    DivisorSieve::build(*p, 1, n_max, opts)
}

/// A maximal interval of the scaled variable on which `D(q1 q2 t)` is
/// constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_lo: f64,
    pub t_hi: f64,
    /// `D(q1 q2 t)` on the open interval.
    pub d_value: u64,
}

/// Integer run: `D(x) = d_value` for real `x` in `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Run {
    pub start: u64,
    pub end: u64,
    pub d_value: u64,
}

/// Exact `D` and `Delta` for one parameter set.
///
/// `D(n)` is tabulated for `n <= cached_upto()`; larger arguments fall back to
/// the hyperbola method. Segment and integration queries are allowed up to
/// `limit()` and sieve uncached stretches on the fly.
#[derive(Debug, Clone)]
pub struct DeltaEvaluator {
    params: CongruenceParams,
    modulus: f64,
    linear: f64,
    prefix: Vec<u64>,
    limit: u64,
}

/// Entries sieved per refill when walking an uncached stretch.
const WALK_BLOCK: u64 = 1 << 16;

impl DeltaEvaluator {
    /// Tabulates `D(n)` for all `n <= limit`.
    pub fn new(params: CongruenceParams, limit: u64) -> Result<Self> {
        Self::with_options(params, limit, limit, &SieveOptions::default())
    }

    /// No table; every query sieves or uses the hyperbola method.
    pub fn streaming(params: CongruenceParams, limit: u64) -> Self {
        Self::with_options(params, limit, 0, &SieveOptions::default()).expect("no allocation requested")
    }

    pub fn with_options(params: CongruenceParams, limit: u64, cache_upto: u64, opts: &SieveOptions) -> Result<Self> {
        let cache_upto = cache_upto.min(limit);
        let prefix = if cache_upto > 0 {
            opts.check_budget((cache_upto + 1) * 8 + cache_upto * 4)?;
            let sieve = sieve_divisor_counts(cache_upto, &params, opts)?;
            prefix_sums(sieve.counts())
        } else {
            vec![0]
        };
        Ok(Self::assemble(params, prefix, limit))
    }

    /// Builds the table from a sieve that starts at 1.
    pub fn from_sieve(sieve: &DivisorSieve) -> Result<Self> {
        if sieve.range_start() != 1 {
            return Err(Error::invalid("sieve", "evaluator tables need a sieve starting at n = 1"));
        }
        Ok(Self::assemble(sieve.params, prefix_sums(sieve.counts()), sieve.range_end()))
    }

    fn assemble(params: CongruenceParams, prefix: Vec<u64>, limit: u64) -> Self {
        Self {
            modulus: params.modulus_product() as f64,
            linear: params.linear_coefficient(),
            params,
            prefix,
            limit,
        }
    }

    pub fn params(&self) -> &CongruenceParams {
        &self.params
    }

    /// `q1 q2` as a float.
    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    /// Largest `n` served by segment and integration queries.
    pub fn limit(&self) -> u64 {
        self.limit
    }

    /// Largest `n` with a tabulated `D(n)`.
    pub fn cached_upto(&self) -> u64 {
        self.prefix.len() as u64 - 1
    }

    /// Largest scaled abscissa `t` served by segment queries.
    pub fn t_limit(&self) -> f64 {
        self.limit as f64 / self.modulus
    }

    /// Exact `D(n)`.
    pub fn summatory_at(&self, n: u64) -> u64 {
        match self.prefix.get(n as usize) {
            Some(&d) => d,
            None => summatory_upto(n, &self.params),
        }
    }

    /// Exact `D(x)`.
    pub fn summatory(&self, x: f64) -> u64 {
        if !(x >= 1.0) {
            return 0;
        }
        self.summatory_at(x.floor() as u64)
    }

    /// `d(n; p)`.
    pub fn count_at(&self, n: u64) -> u64 {
        if n == 0 {
            return 0;
        }
        if (n as usize) < self.prefix.len() {
            self.prefix[n as usize] - self.prefix[n as usize - 1]
        } else {
            crate::arith::divisor_count(n, &self.params) as u64
        }
    }

    /// `Delta(x) = D(x) - M(x)`.
    pub fn delta(&self, x: f64) -> f64 {
        let t = x / self.modulus;
        self.summatory(x) as f64 - scaled_main_term(t, self.linear)
    }

    /// `Delta(q1 q2 t)`. The main term is evaluated at `t` itself, so inside a
    /// segment this agrees bitwise with [`Self::delta_on`].
    pub fn delta_scaled(&self, t: f64) -> f64 {
        self.summatory(self.modulus * t) as f64 - scaled_main_term(t, self.linear)
    }

    /// `D(q1 q2 t) - M(q1 q2 t)` for a known value of `D`, the smooth branch
    /// used inside a segment.
    #[inline]
    pub fn delta_on(&self, d_value: u64, t: f64) -> f64 {
        d_value as f64 - scaled_main_term(t, self.linear)
    }

    /// `d/dt Delta(q1 q2 t)` inside a segment.
    #[inline]
    pub fn delta_slope(&self, t: f64) -> f64 {
        -(t.ln() + 1.0 - self.linear)
    }

    pub(crate) fn check_n(&self, n: u64) -> Result<()> {
        if n > self.limit {
            Err(Error::OutOfRange { requested: n, limit: self.limit })
        } else {
            Ok(())
        }
    }

    /// Runs of constant `D` covering real `x` in `[lo, hi)`, `1 <= lo < hi`.
    pub(crate) fn runs(&self, lo: u64, hi: u64) -> Runs<'_> {
        Runs::new(self, lo, hi)
    }

    /// Maximal constant pieces of `D(q1 q2 t)` tiling `[t_lo, t_hi]`. Jump
    /// points `n / (q1 q2)` with `d(n; p) = 0` are not boundaries.
    pub fn segments(&self, t_lo: f64, t_hi: f64) -> Result<Segments<'_>> {
        if !(t_lo < t_hi) || !(t_lo > 0.0) || !t_hi.is_finite() {
            return Err(Error::invalid("t", format!("need 0 < t_lo < t_hi, got [{t_lo}, {t_hi}]")));
        }
        let x_lo = self.modulus * t_lo;
        let x_hi = self.modulus * t_hi;
        let hi = x_hi.floor() as u64 + 1;
        self.check_n(hi - 1)?;
        let lo = (x_lo.floor() as u64).max(1);
        Ok(Segments { runs: self.runs(lo, hi), t_lo, t_hi, modulus: self.modulus, started: false })
    }
}

fn prefix_sums(counts: &[u32]) -> Vec<u64> {
    let mut prefix = Vec::with_capacity(counts.len() + 1);
    prefix.push(0u64);
    let mut acc = 0u64;
    for &c in counts {
        acc += c as u64;
        prefix.push(acc);
    }
    prefix
}

pub(crate) struct Runs<'a> {
    ev: &'a DeltaEvaluator,
    next_n: u64,
    hi: u64,
    cur_start: u64,
    cur_d: u64,
    buf: Vec<u32>,
    buf_start: u64,
    done: bool,
}

impl<'a> Runs<'a> {
    fn new(ev: &'a DeltaEvaluator, lo: u64, hi: u64) -> Self {
        debug_assert!(lo >= 1 && lo < hi);
        Self {
            ev,
            next_n: lo + 1,
            hi,
            cur_start: lo,
            cur_d: ev.summatory_at(lo),
            buf: Vec::new(),
            buf_start: 0,
            done: false,
        }
    }

    #[inline]
    fn count(&mut self, n: u64) -> u64 {
        let prefix = &self.ev.prefix;
        if (n as usize) < prefix.len() {
            return prefix[n as usize] - prefix[n as usize - 1];
        }
        if n < self.buf_start || n >= self.buf_start + self.buf.len() as u64 {
            let len = WALK_BLOCK.min(self.hi - n) as usize;
            self.buf.clear();
            self.buf.resize(len, 0);
            self.buf_start = n;
            sieve_block(&self.ev.params, n, &mut self.buf);
        }
        self.buf[(n - self.buf_start) as usize] as u64
    }
}

impl Iterator for Runs<'_> {
    type Item = Run;

    fn next(&mut self) -> Option<Run> {
        if self.done {
            return None;
        }
        while self.next_n < self.hi {
            let n = self.next_n;
            self.next_n += 1;
            let d = self.count(n);
            if d > 0 {
                let run = Run { start: self.cur_start, end: n, d_value: self.cur_d };
                self.cur_start = n;
                self.cur_d += d;
                return Some(run);
            }
        }
        self.done = true;
        Some(Run { start: self.cur_start, end: self.hi, d_value: self.cur_d })
    }
}

/// Iterator over [`Segment`]s, see [`DeltaEvaluator::segments`].
pub struct Segments<'a> {
    runs: Runs<'a>,
    t_lo: f64,
    t_hi: f64,
    modulus: f64,
    started: bool,
}

impl Iterator for Segments<'_> {
    type Item = Segment;

    fn next(&mut self) -> Option<Segment> {
        loop {
            let run = self.runs.next()?;
            let a = if self.started { run.start as f64 / self.modulus } else { self.t_lo };
            let b = (run.end as f64 / self.modulus).min(self.t_hi);
            if !self.started {
                // skip runs lying entirely left of t_lo
                if run.end as f64 / self.modulus <= self.t_lo {
                    continue;
                }
                self.started = true;
            }
            if b <= a {
                continue;
            }
            return Some(Segment { t_lo: a, t_hi: b, d_value: run.d_value });
        }
    }
}

/// Smallest float `t` with `fl(q t) >= n`, i.e. the first representable point
/// at which `delta_scaled` sees the jump at `n`.
pub fn jump_abscissa(n: u64, modulus: f64) -> f64 {
    let target = n as f64;
    let mut t = target / modulus;
    while modulus * t < target {
        t = t.next_up();
    }
    while (modulus * t.next_down()) >= target {
        t = t.next_down();
    }
    t
}
