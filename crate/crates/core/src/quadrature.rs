//! Gauss-Legendre rules and compensated accumulation.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// An `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes are the roots of `P_n`, found by Newton iteration from the
    /// Chebyshev-like initial guesses `cos(pi (i - 1/4) / (n + 1/2))`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `integral_a^b f` with this rule.
    #[inline]
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }

    /// Vector-valued variant; accumulates `N` integrals at once.
    #[inline]
    pub fn integrate_vec<const N: usize, F: FnMut(f64) -> [f64; N]>(
        &self,
        a: f64,
        b: f64,
        mut f: F,
    ) -> [f64; N] {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = [0.0; N];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x);
            for j in 0..N {
                s[j] += w * v[j];
            }
        }
        for v in &mut s {
            *v *= half;
        }
        s
    }

    /// Adaptive bisection: compares the rule on `[a, b]` with the sum over both
    /// halves until they agree to `tol`. Returns `(value, error_estimate)`.
    pub fn integrate_adaptive<const N: usize, F: FnMut(f64) -> [f64; N]>(
        &self,
        a: f64,
        b: f64,
        tol: f64,
        f: &mut F,
    ) -> ([f64; N], f64) {
        let whole = self.integrate_vec(a, b, &mut *f);
        self.adapt(a, b, whole, tol, 0, f)
    }

    fn adapt<const N: usize, F: FnMut(f64) -> [f64; N]>(
        &self,
        a: f64,
        b: f64,
        whole: [f64; N],
        tol: f64,
        depth: u32,
        f: &mut F,
    ) -> ([f64; N], f64) {
        let m = 0.5 * (a + b);
        let left = self.integrate_vec(a, m, &mut *f);
        let right = self.integrate_vec(m, b, &mut *f);
        let mut err = 0.0f64;
        let mut both = [0.0; N];
        for j in 0..N {
            both[j] = left[j] + right[j];
            err = err.max((both[j] - whole[j]).abs());
        }
        if err <= tol || depth >= 40 || (b - a) < 1e-12 * a.abs().max(1.0) {
            return (both, err);
        }
        let (l, el) = self.adapt(a, m, left, 0.5 * tol, depth + 1, f);
        let (r, er) = self.adapt(m, b, right, 0.5 * tol, depth + 1, f);
        let mut out = [0.0; N];
        for j in 0..N {
            out[j] = l[j] + r[j];
        }
        (out, el + er)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// The order-8 rule used for every smooth piece.
pub fn gl8() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(8))
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another accumulator in, keeping both compensation terms.
    pub fn merge(&mut self, other: &Compensated) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `N` compensated accumulators side by side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensatedVec<const N: usize>(pub [Compensated; N]);

impl<const N: usize> Default for CompensatedVec<N> {
    fn default() -> Self {
        Self([Compensated::default(); N])
    }
}

impl<const N: usize> CompensatedVec<N> {
    #[inline]
    pub fn add(&mut self, v: &[f64; N]) {
        for (acc, x) in self.0.iter_mut().zip(v) {
            acc.add(*x);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for (acc, o) in self.0.iter_mut().zip(&other.0) {
            acc.merge(o);
        }
    }

    pub fn value(&self) -> [f64; N] {
        let mut out = [0.0; N];
        for (o, acc) in out.iter_mut().zip(&self.0) {
            *o = acc.value();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl8_nodes_are_standard() {
        let r = gl8();
        // largest node and its weight for the 8-point rule
        assert!((r.nodes()[7] - 0.960_289_856_497_536_2).abs() < 1e-15);
        assert!((r.weights()[7] - 0.101_228_536_290_376_26).abs() < 1e-15);
        let wsum: f64 = r.weights().iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn exact_for_degree_fifteen() {
        let r = gl8();
        for deg in 0..=15 {
            let got = r.integrate(0.0, 2.0, |x| x.powi(deg));
            let want = 2f64.powi(deg + 1) / (deg as f64 + 1.0);
            assert!((got - want).abs() < 1e-12 * want, "deg {deg}");
        }
    }

    #[test]
    fn adaptive_handles_oscillation() {
        let r = gl8();
        let mut f = |x: f64| [(40.0 * x).sin()];
        let (v, err) = r.integrate_adaptive(0.0, 3.0, 1e-12, &mut f);
        let want = (1.0 - (120.0f64).cos()) / 40.0;
        assert!((v[0] - want).abs() < 1e-11);
        assert!(err < 1e-11);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut c = Compensated::new();
        c.add(1e16);
        for _ in 0..1000 {
            c.add(1.0);
        }
        c.add(-1e16);
        assert_eq!(c.value(), 1000.0);
    }
}
