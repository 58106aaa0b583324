//! Exact binary fixed-point numbers.
//!
//! A [`Dyadic`] is `mantissa * 2^(-precision)` with an arbitrary-precision
//! signed mantissa. Arithmetic never rounds; the only lossy operation is
//! [`Dyadic::truncate`], which floors onto a coarser grid. Digit queries use
//! floor semantics throughout, so the digits of a negative number are those
//! of its two's-complement expansion.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DyadicError {
    #[error("digit place {place} exceeds stored precision {precision}")]
    PrecisionExceeded { place: u32, precision: u32 },
}

/// Exact value `mantissa * 2^(-precision)`.
///
/// There is no canonical form: `1/2` may be stored as `(1, 1)` or `(4, 3)`.
/// Equality, ordering and hashing compare values.
#[derive(Clone, Debug)]
pub struct Dyadic {
    mantissa: BigInt,
    precision: u32,
}

impl Dyadic {
    pub fn new(mantissa: impl Into<BigInt>, precision: u32) -> Self {
        Dyadic {
            mantissa: mantissa.into(),
            precision,
        }
    }

    pub fn zero() -> Self {
        Dyadic::new(0, 0)
    }

    pub fn from_integer(n: impl Into<BigInt>) -> Self {
        Dyadic::new(n, 0)
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.mantissa.is_negative()
    }

    pub fn abs(&self) -> Dyadic {
        Dyadic::new(self.mantissa.abs(), self.precision)
    }

    /// Same value at a finer precision `p >= self.precision()`.
    ///
    /// Returns `None` when `p` is coarser than the stored precision, since
    /// that would require rounding.
    pub fn with_precision(&self, p: u32) -> Option<Dyadic> {
        if p < self.precision {
            return None;
        }
        Some(Dyadic::new(
            &self.mantissa << (p - self.precision) as usize,
            p,
        ))
    }

    /// Mantissa at precision `p`, exact when `p >= precision`, floored otherwise.
    fn scaled_mantissa(&self, p: u32) -> BigInt {
        if p >= self.precision {
            &self.mantissa << (p - self.precision) as usize
        } else {
            // BigInt's right shift rounds toward negative infinity.
            &self.mantissa >> (self.precision - p) as usize
        }
    }

    /// `floor(2^j * self)` as an exact integer.
    pub fn floor_scaled(&self, j: u32) -> BigInt {
        self.scaled_mantissa(j)
    }

    /// `2^(-p) * floor(2^p * self)`, stored at precision `p`.
    pub fn truncate(&self, p: u32) -> Dyadic {
        Dyadic::new(self.scaled_mantissa(p), p)
    }

    /// The digit in place `j`: `floor(2^j * self) mod 2`.
    ///
    /// Place `j` is the coefficient of `2^(-j)`. Asking for a place beyond the
    /// stored precision is an error rather than an implicit zero.
    pub fn bit(&self, j: u32) -> Result<bool, DyadicError> {
        if j > self.precision {
            return Err(DyadicError::PrecisionExceeded {
                place: j,
                precision: self.precision,
            });
        }
        // Two's-complement bit test matches floor semantics for negatives.
        let shift = (self.precision - j) as u64;
        Ok(bit_of(&self.mantissa, shift))
    }

    /// `self - 2^(-a) * floor(2^a * self)`, always in `[0, 2^(-a))`.
    pub fn mod_pow2(&self, a: u32) -> Dyadic {
        let p = self.precision.max(a);
        let m = self.scaled_mantissa(p);
        let modulus = BigInt::one() << (p - a) as usize;
        Dyadic::new(m.mod_floor(&modulus), p)
    }

    pub fn to_f64(&self) -> f64 {
        // Drop low bits first so huge mantissas do not overflow to infinity.
        let bits = self.mantissa.bits();
        if bits > 1000 {
            let drop = bits - 1000;
            let m = (&self.mantissa >> drop as usize).to_f64().unwrap_or(0.0);
            return m * 2f64.powi(drop as i32 - self.precision as i32);
        }
        self.mantissa.to_f64().unwrap_or(0.0) * 2f64.powi(-(self.precision as i32))
    }

    /// Mantissa with trailing zero bits removed, and the matching precision.
    fn reduced(&self) -> (BigInt, u32) {
        if self.mantissa.is_zero() {
            return (BigInt::zero(), 0);
        }
        let tz = self.mantissa.trailing_zeros().unwrap_or(0);
        let strip = tz.min(self.precision as u64) as u32;
        (&self.mantissa >> strip as usize, self.precision - strip)
    }
}

/// Bit `shift` of the two's-complement expansion of `m`.
pub(crate) fn bit_of(m: &BigInt, shift: u64) -> bool {
    match m.sign() {
        Sign::Minus => {
            // -m - 1 has the complemented bits of m.
            let complement = -m - 1u32;
            !complement.magnitude().bit(shift)
        }
        _ => m.magnitude().bit(shift),
    }
}

impl Default for Dyadic {
    fn default() -> Self {
        Dyadic::zero()
    }
}

fn align(a: &Dyadic, b: &Dyadic) -> (BigInt, BigInt, u32) {
    let p = a.precision.max(b.precision);
    (a.scaled_mantissa(p), b.scaled_mantissa(p), p)
}

impl PartialEq for Dyadic {
    fn eq(&self, other: &Self) -> bool {
        let (x, y, _) = align(self, other);
        x == y
    }
}

impl Eq for Dyadic {}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (x, y, _) = align(self, other);
        x.cmp(&y)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Hash for Dyadic {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.reduced().hash(state);
    }
}

impl Add for &Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &Dyadic) -> Dyadic {
        let (x, y, p) = align(self, rhs);
        Dyadic::new(x + y, p)
    }
}

impl Sub for &Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: &Dyadic) -> Dyadic {
        let (x, y, p) = align(self, rhs);
        Dyadic::new(x - y, p)
    }
}

impl Mul for &Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: &Dyadic) -> Dyadic {
        Dyadic::new(
            &self.mantissa * &rhs.mantissa,
            self.precision + rhs.precision,
        )
    }
}

impl Neg for &Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic::new(-&self.mantissa, self.precision)
    }
}

macro_rules! forward_owned {
    ($($tr:ident $f:ident),*) => {$(
        impl $tr for Dyadic {
            type Output = Dyadic;
            fn $f(self, rhs: Dyadic) -> Dyadic {
                (&self).$f(&rhs)
            }
        }
    )*};
}
forward_owned!(Add add, Sub sub, Mul mul);

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        -&self
    }
}

impl std::iter::Sum for Dyadic {
    fn sum<I: Iterator<Item = Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::zero(), |acc, x| &acc + &x)
    }
}

impl fmt::Display for Dyadic {
    /// Exact decimal expansion; every dyadic rational has a finite one.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (m, p) = self.reduced();
        if p == 0 {
            return write!(f, "{m}");
        }
        let digits = (m.abs() * BigInt::from(5u32).pow(p)).to_string();
        let p = p as usize;
        let padded = format!("{digits:0>width$}", width = p + 1);
        let (int, frac) = padded.split_at(padded.len() - p);
        let sign = if m.is_negative() { "-" } else { "" };
        write!(f, "{sign}{int}.{frac}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(m: i64, p: u32) -> Dyadic {
        Dyadic::new(m, p)
    }

    #[test]
    fn make_and_compare() {
        assert_eq!(d(5, 3), d(10, 4));
        assert_eq!(d(0, 10), Dyadic::zero());
        assert!(d(-1, 2) < Dyadic::zero());
        assert_eq!(d(-1, 2).to_f64(), -0.25);
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(&d(1, 1) + &d(1, 2), d(3, 2));
        assert_eq!(&d(1, 2) - &d(1, 1), d(-1, 2));
        let prod = &d(3, 2) * &d(-1, 1);
        assert_eq!(prod, d(-3, 3));
        assert_eq!(prod.precision(), 3);
        assert_eq!((&d(1, 1) + &d(1, 5)).precision(), 5);
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(d(5, 3).truncate(2), d(1, 1));
        assert_eq!(d(-1, 3).truncate(2), d(-1, 2));
        assert_eq!(d(3, 2).truncate(5), d(3, 2));
        assert_eq!(d(3, 2).truncate(5).precision(), 5);
    }

    #[test]
    fn bit_examples() {
        let t = d(5, 3);
        assert!(t.bit(1).unwrap());
        assert!(!t.bit(2).unwrap());
        assert!(t.bit(3).unwrap());
        assert!(d(-1, 2).bit(2).unwrap());
        assert!(!d(0, 7).bit(7).unwrap());
        assert_eq!(
            t.bit(4),
            Err(DyadicError::PrecisionExceeded {
                place: 4,
                precision: 3
            })
        );
    }

    #[test]
    fn floor_scaled_examples() {
        assert_eq!(d(3, 2).floor_scaled(2), BigInt::from(3));
        assert_eq!(d(3, 2).floor_scaled(0), BigInt::from(0));
        assert_eq!(d(-3, 2).floor_scaled(1), BigInt::from(-2));
    }

    #[test]
    fn mod_pow2_examples() {
        assert_eq!(d(5, 3).mod_pow2(1), d(1, 3));
        assert_eq!(d(5, 3).mod_pow2(0), d(5, 3));
        assert_eq!(d(-1, 3).mod_pow2(0), d(7, 3));
    }

    #[test]
    fn display_is_exact() {
        assert_eq!(d(5, 3).to_string(), "0.625");
        assert_eq!(d(-1, 2).to_string(), "-0.25");
        assert_eq!(d(12, 2).to_string(), "3");
        assert_eq!(d(-3, 1).to_string(), "-1.5");
    }

    #[test]
    fn hash_agrees_with_eq() {
        use std::collections::HashSet;
        let set: HashSet<Dyadic> = [d(1, 1), d(2, 2), d(8, 4), d(0, 3), d(0, 0)]
            .into_iter()
            .collect();
        assert_eq!(set.len(), 2);
    }
}
