//! Exact counting in arithmetic progressions, digamma at rational points and
//! the smooth main term of the congruence-restricted divisor sum.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Euler's constant.
#[allow(clippy::excessive_precision)]
pub const EULER_GAMMA: f64 = 0.57721566490153286;

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Integer square root, `floor(sqrt(n))`.
pub fn isqrt(n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let mut s = (n as f64).sqrt() as u64;
    while s.saturating_mul(s) > n {
        s -= 1;
    }
    while (s + 1).saturating_mul(s + 1) <= n {
        s += 1;
    }
    s
}

/// A residue class `r (mod q)` with `1 <= r <= q` and `gcd(r, q) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawClass", into = "RawClass")]
pub struct CongruenceClass {
    r: u64,
    q: u64,
}

#[derive(Serialize, Deserialize)]
struct RawClass {
    r: u64,
    q: u64,
}

impl TryFrom<RawClass> for CongruenceClass {
    type Error = Error;
    fn try_from(raw: RawClass) -> Result<Self> {
        CongruenceClass::new(raw.r, raw.q)
    }
}

impl From<CongruenceClass> for RawClass {
    fn from(c: CongruenceClass) -> Self {
        RawClass { r: c.r, q: c.q }
    }
}

impl CongruenceClass {
    pub fn new(r: u64, q: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::invalid("q", "modulus must be positive"));
        }
        if r == 0 || r > q {
            return Err(Error::invalid("r", format!("residue {r} must satisfy 1 <= r <= q = {q}")));
        }
        if gcd(r, q) != 1 {
            return Err(Error::invalid(
                "r",
                format!("coprimality invariant violated: gcd({r}, {q}) = {} != 1", gcd(r, q)),
            ));
        }
        Ok(Self { r, q })
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    /// `r / q` as a float.
    pub fn fraction(&self) -> f64 {
        self.r as f64 / self.q as f64
    }

    /// Smallest member of the class that is `>= lo` (with `lo >= 1`).
    #[inline]
    pub fn first_at_least(&self, lo: u64) -> u64 {
        let rem = (self.r % self.q + self.q - lo % self.q) % self.q;
        lo + rem
    }

    #[inline]
    pub fn contains(&self, n: u64) -> bool {
        n % self.q == self.r % self.q
    }

    /// Number of members in `[1, n]`.
    #[inline]
    pub fn count_upto(&self, n: u64) -> u64 {
        if n < self.r {
            0
        } else {
            (n - self.r) / self.q + 1
        }
    }

    /// Number of members in `[1, y]` for real `y >= 0`.
    pub fn count_in(&self, y: f64) -> u64 {
        count_in_class(y, *self)
    }
}

impl fmt::Display for CongruenceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} mod {}", self.r, self.q)
    }
}

/// The two residue classes `(r1, q1), (r2, q2)` restricting the factors of
/// `n = n1 * n2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CongruenceParams {
    pub first: CongruenceClass,
    pub second: CongruenceClass,
}

impl CongruenceParams {
    pub fn new(r1: u64, q1: u64, r2: u64, q2: u64) -> Result<Self> {
        let first = CongruenceClass::new(r1, q1).map_err(|e| e.prefixed("1"))?;
        let second = CongruenceClass::new(r2, q2).map_err(|e| e.prefixed("2"))?;
        if q1.checked_mul(q2).is_none_or(|m| m > 1 << 32) {
            return Err(Error::invalid("q1*q2", "modulus product too large"));
        }
        Ok(Self { first, second })
    }

    /// The unrestricted case `(1, 1, 1, 1)`.
    pub fn classical() -> Self {
        Self::new(1, 1, 1, 1).expect("valid")
    }

    /// `q1 * q2`.
    pub fn modulus_product(&self) -> u64 {
        self.first.q * self.second.q
    }

    /// `r1/q1 + r2/q2 + 1/8`, the phase offset of the leading oscillation.
    pub fn leading_phase(&self) -> f64 {
        self.first.fraction() + self.second.fraction() + 0.125
    }

    /// `psi(r1/q1) + psi(r2/q2) + 1`.
    pub fn linear_coefficient(&self) -> f64 {
        digamma_class(self.first) + digamma_class(self.second) + 1.0
    }

    /// Whether the sign-change theorem's hypothesis `q1 >= 2, q2 >= 3` holds.
    pub fn meets_sign_hypothesis(&self) -> bool {
        self.first.q >= 2 && self.second.q >= 3
    }

    /// `(r1/q1 - 1/2)(r2/q2 - 1/2)`, the mean value slope.
    pub fn mean_value_slope(&self) -> f64 {
        (self.first.fraction() - 0.5) * (self.second.fraction() - 0.5)
    }
}

impl fmt::Display for CongruenceParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(r1={}, q1={}, r2={}, q2={})",
            self.first.r, self.first.q, self.second.r, self.second.q
        )
    }
}

/// `#{n : 1 <= n <= y, n = r (mod q)}`.
pub fn count_in_class(y: f64, cls: CongruenceClass) -> u64 {
    if !(y >= 1.0) {
        return 0;
    }
    cls.count_upto(y.floor() as u64)
}

/// Number of ordered factorizations `n = n1 * n2` with `n1 = r1 (mod q1)` and
/// `n2 = r2 (mod q2)`. Enumerates divisors up to `sqrt(n)`.
pub fn divisor_count(n: u64, p: &CongruenceParams) -> u32 {
    assert!(n >= 1, "divisor_count needs n >= 1");
    let mut count = 0u32;
    let mut d = 1u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            let e = n / d;
            if p.first.contains(d) && p.second.contains(e) {
                count += 1;
            }
            if d != e && p.first.contains(e) && p.second.contains(d) {
                count += 1;
            }
        }
        d += 1;
    }
    count
}

/// `psi(r/q) = Gamma'(r/q) / Gamma(r/q)` for `1 <= r <= q` via Gauss's digamma
/// theorem:
///
/// `psi(r/q) = -gamma - ln(2q) - (pi/2) cot(pi r/q)
///             + 2 sum_{n=1}^{ceil(q/2)-1} cos(2 pi n r/q) ln sin(pi n/q)`.
pub fn digamma_rational(r: u64, q: u64) -> Result<f64> {
    if q == 0 || r == 0 || r > q {
        return Err(Error::invalid("r", format!("digamma_rational needs 1 <= r <= q, got r={r}, q={q}")));
    }
    let g = gcd(r, q);
    let (r, q) = (r / g, q / g);
    if r == q {
        return Ok(-EULER_GAMMA);
    }
    let qf = q as f64;
    let rf = r as f64;
    let mut sum = 0.0;
    for n in 1..q.div_ceil(2) {
        let nf = n as f64;
        // reduce n*r mod q before scaling to keep the cosine argument small
        let nr = ((n * r) % q) as f64;
        sum += (2.0 * PI * nr / qf).cos() * (PI * nf / qf).sin().ln();
    }
    let cot = 1.0 / (PI * rf / qf).tan();
    Ok(-EULER_GAMMA - (2.0 * qf).ln() - 0.5 * PI * cot + 2.0 * sum)
}

fn digamma_class(c: CongruenceClass) -> f64 {
    digamma_rational(c.r, c.q).expect("class invariants guarantee 1 <= r <= q")
}

/// `M(x) = (x/Q) ln(x/Q) - (psi(r1/q1) + psi(r2/q2) + 1) x/Q` with `Q = q1 q2`.
///
/// The asymptotic formula is only claimed for `x >= Q`; smaller `x` still
/// evaluates the same expression.
pub fn main_term(x: f64, p: &CongruenceParams) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid("x", format!("main term needs finite x > 0, got {x}")));
    }
    let t = x / p.modulus_product() as f64;
    Ok(scaled_main_term(t, p.linear_coefficient()))
}

/// Main term in the scaled variable `t = x / (q1 q2)`: `t ln t - a t`.
#[inline]
pub(crate) fn scaled_main_term(t: f64, a: f64) -> f64 {
    t * t.ln() - a * t
}
