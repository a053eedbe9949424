//! Numeric back ends for the exact matrix computations.
//!
//! Every exact-law routine is generic over [`Scalar`], implemented for `f64`
//! and for [`Rational`] (arbitrary precision). Floating inputs are converted to
//! rationals without rounding, so the rational mode is exact for the binary
//! values actually used.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

pub type Rational = BigRational;

pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn ratio(num: i64, den: i64) -> Self;
    fn abs(&self) -> Self;
    fn is_zero(&self) -> bool;
    /// Text form for reports: `{:.16e}` for floats, `p/q` for rationals.
    fn render(&self) -> String;

    fn from_int(k: i64) -> Self {
        Self::ratio(k, 1)
    }

    fn ipow(&self, k: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }
}

impl Scalar for f64 {
    fn render(&self) -> String {
        format!("{self:.16e}")
    }
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

impl Scalar for Rational {
    fn render(&self) -> String {
        self.to_string()
    }
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite value")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
}

/// Binomial coefficient as a scalar (zero when `k > n`).
pub fn binom<S: Scalar>(n: usize, k: usize) -> S {
    if k > n {
        return S::zero();
    }
    let k = k.min(n - k);
    let mut acc = S::one();
    for i in 0..k {
        acc = acc * S::from_int((n - i) as i64) / S::from_int((i + 1) as i64);
    }
    acc
}

/// Binomial coefficient as `f64`.
pub fn binom_f64(n: usize, k: usize) -> f64 {
    binom::<f64>(n, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_conversion_is_exact() {
        let r = Rational::from_f64(0.1);
        assert_eq!(Scalar::to_f64(&r), 0.1);
        assert_ne!(r, Rational::ratio(1, 10));
        assert_eq!(Rational::from_f64(0.25), Rational::ratio(1, 4));
    }

    #[test]
    fn powers_and_binomials() {
        assert_eq!(Rational::ratio(1, 2).ipow(3), Rational::ratio(1, 8));
        assert_eq!(binom::<Rational>(8, 3), Rational::from_int(56));
        assert_eq!(binom_f64(5, 7), 0.0);
        assert_eq!(Scalar::ipow(&3.0f64, 0), 1.0);
    }
}
