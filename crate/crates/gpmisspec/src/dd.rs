//! Double-double arithmetic: an unevaluated sum of two `f64` giving roughly
//! 32 significant decimal digits.
//!
//! Smooth Matérn Gram matrices have smallest eigenvalues proportional to
//! `n^{-(2ν+d)/d}`, which drops below the `f64` round-off floor of a dense
//! factorization long before desk-scale sizes are reached (around n = 300 for
//! ν = 5/2 in one dimension). Conditional variances and trace products at
//! those sizes are meaningless in plain doubles, so the factorization and
//! solve kernels in [`crate::gram`] optionally run on this type instead.
//!
//! The algorithms are the classical error-free transformations (Dekker,
//! Knuth) and the add/mul/div/sqrt compositions used by the QD library.
//! No FMA is required.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Double-double number: `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

/// Error-free sum: returns (fl(a+b), exact error).
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// Error-free sum assuming |a| >= |b|.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

/// Veltkamp split of a double into two 26-bit halves.
#[inline]
fn split(a: f64) -> (f64, f64) {
    const SPLITTER: f64 = 134217729.0; // 2^27 + 1
    let t = SPLITTER * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

/// Error-free product: returns (fl(a*b), exact error). Dekker's algorithm.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ahi, alo) = split(a);
    let (bhi, blo) = split(b);
    let err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo;
    (p, err)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    /// pi to double-double precision.
    pub const PI: Dd = Dd {
        hi: 3.141592653589793,
        lo: 1.2246467991473532e-16,
    };
    /// ln 2 to double-double precision.
    pub const LN2: Dd = Dd {
        hi: 0.6931471805599453,
        lo: 2.3190468138462996e-17,
    };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact product of two doubles as a double-double.
    #[inline]
    pub fn from_prod(a: f64, b: f64) -> Dd {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    /// Exact difference of two doubles as a double-double.
    #[inline]
    pub fn from_diff(a: f64, b: f64) -> Dd {
        let (hi, lo) = two_sum(a, -b);
        Dd { hi, lo }
    }

    /// Nearest double.
    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn sqrt(self) -> Dd {
        if self.hi == 0.0 && self.lo == 0.0 {
            return Dd::ZERO;
        }
        // One Newton step on a double-precision estimate doubles its accuracy.
        let y = self.hi.sqrt();
        let y_dd = Dd::from_f64(y);
        let residual = self - y_dd * y_dd;
        y_dd + residual / Dd::from_f64(2.0 * y)
    }

    /// exp(self); valid over the range used by covariance kernels.
    pub fn exp(self) -> Dd {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        if self.hi > 709.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        // Reduce: self = k ln2 + r with |r| <= ln2 / 2, then Taylor in r.
        let k = (self.hi / Dd::LN2.hi).round();
        let r = self - Dd::LN2 * Dd::from_f64(k);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for i in 1..40 {
            term = term * r / Dd::from_f64(i as f64);
            sum = sum + term;
            if term.hi.abs() < sum.hi.abs() * 1e-35 {
                break;
            }
        }
        Dd {
            hi: ldexp(sum.hi, k as i32),
            lo: ldexp(sum.lo, k as i32),
        }
    }
}

fn ldexp(x: f64, e: i32) -> f64 {
    // Exact scaling by a power of two; e stays small here.
    x * f64::powi(2.0, e)
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, rhs: Dd) -> Dd {
        let (s1, e1) = two_sum(self.hi, rhs.hi);
        let (s2, e2) = two_sum(self.lo, rhs.lo);
        let (s, mut e) = quick_two_sum(s1, e1 + s2);
        e += e2;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, rhs: Dd) -> Dd {
        self + (-rhs)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, rhs: Dd) -> Dd {
        let (p, mut e) = two_prod(self.hi, rhs.hi);
        e += self.hi * rhs.lo + self.lo * rhs.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, rhs: Dd) -> Dd {
        let q1 = self.hi / rhs.hi;
        let r = self - rhs * Dd::from_f64(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Dd::from_f64(q2);
        let q3 = r.hi / rhs.hi;
        let (s, e) = quick_two_sum(q1, q2);
        Dd { hi: s, lo: e } + Dd::from_f64(q3)
    }
}

impl PartialEq for Dd {
    fn eq(&self, other: &Self) -> bool {
        self.hi == other.hi && self.lo == other.lo
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

/// Arithmetic shared by the `f64` and [`Dd`] code paths in the dense solvers.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + PartialOrd
    + Send
    + Sync
{
    const ZERO: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
}

impl Real for f64 {
    const ZERO: f64 = 0.0;
    #[inline]
    fn from_f64(x: f64) -> f64 {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
}

impl Real for Dd {
    const ZERO: Dd = Dd::ZERO;
    #[inline]
    fn from_f64(x: f64) -> Dd {
        Dd::from_f64(x)
    }
    #[inline]
    fn to_f64(self) -> f64 {
        Dd::to_f64(self)
    }
    #[inline]
    fn sqrt(self) -> Dd {
        Dd::sqrt(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Dd, b: f64, tol: f64) -> bool {
        ((a.hi - b) + a.lo).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn add_tracks_exact_thirds() {
        let third = Dd::ONE / Dd::from_f64(3.0);
        let one = third + third + third;
        assert!((one.hi - 1.0).abs() < 1e-31 || (one.hi == 1.0 && one.lo.abs() < 1e-31));
    }

    #[test]
    fn mul_is_consistent_with_exact_products() {
        // (1e8+1)(1e8-1) = 1e16 - 1, which is NOT an f64; the dd pair must
        // carry the exact value split across hi and lo.
        let a = Dd::from_f64(1.0e8 + 1.0);
        let b = Dd::from_f64(1.0e8 - 1.0);
        let p = a * b;
        let expected = Dd::from_f64(1.0e16) - Dd::ONE;
        assert_eq!(p, expected);
        assert_ne!(p.lo, 0.0);
    }

    #[test]
    fn sqrt_round_trips() {
        for &x in &[2.0, 3.0, 1.2533141373155003e-15, 7.0e12] {
            let r = Dd::from_f64(x).sqrt();
            let back = r * r - Dd::from_f64(x);
            assert!(back.hi.abs() <= 1e-30 * x, "x = {x}, err = {:?}", back);
        }
    }

    #[test]
    fn div_matches_known_quotient() {
        let q = Dd::from_f64(1.0) / Dd::from_f64(7.0);
        // 1/7 = 0.142857142857... ; check against f64 then residual.
        let residual = q * Dd::from_f64(7.0) - Dd::ONE;
        assert!(residual.hi.abs() < 1e-31);
    }

    #[test]
    fn exp_matches_reference_values() {
        // exp(1) = 2.718281828459045235360287...
        let e = Dd::from_f64(1.0).exp();
        assert!(close(e, 2.718281828459045, 1e-15));
        assert!((e.hi - 2.718281828459045).abs() < 1e-15);
        // check the lo part carries real information:
        // e − fl(e) = 1.445646891729e-16
        let tail = (e.hi - std::f64::consts::E) + e.lo;
        assert!((tail - 1.4456468917292502e-16).abs() < 1e-21, "tail = {tail:e}");
        // exp(-40) stays accurate in relative terms.
        let small = Dd::from_f64(-40.0).exp();
        let expected = 4.248354255291589e-18;
        assert!((small.hi / expected - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_constructors() {
        let d = Dd::from_prod(0.1, 0.1);
        // 0.1*0.1 in exact arithmetic differs from fl(0.01); lo records it.
        assert!(d.lo != 0.0);
        let s = Dd::from_diff(1.0, 1e-20);
        assert_eq!(s.hi, 1.0);
        assert_eq!(s.lo, -1e-20);
    }
}
