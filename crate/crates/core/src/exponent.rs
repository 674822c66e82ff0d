//! Exact decay exponents of the form `q1 + q2·σ`.
//!
//! All bookkeeping happens in ℚ + ℚσ. A numeric σ is only consulted when two
//! exponents have to be ordered; exact ties between structurally different
//! exponents are broken as if σ had been nudged slightly downwards, so the
//! order stays total and no boundary value is ever hit by accident.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{Signed, Zero};

/// A numeric value of σ used to order exponents. Always positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigma(f64);

impl Sigma {
    pub fn new(value: f64) -> Option<Self> {
        (value.is_finite() && value > 0.0).then_some(Sigma(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `q1 + q2·σ` with rational coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymbolicExponent {
    pub q1: Rational64,
    pub q2: Rational64,
}

pub type Exp = SymbolicExponent;

impl SymbolicExponent {
    pub const fn new(q1: Rational64, q2: Rational64) -> Self {
        SymbolicExponent { q1, q2 }
    }

    pub fn zero() -> Self {
        Self::int(0)
    }

    pub fn int(n: i64) -> Self {
        Self::new(Rational64::from_integer(n), Rational64::zero())
    }

    pub fn frac(num: i64, den: i64) -> Self {
        Self::new(Rational64::new(num, den), Rational64::zero())
    }

    /// The exponent `σ` itself.
    pub fn sigma() -> Self {
        Self::new(Rational64::zero(), Rational64::from_integer(1))
    }

    /// `c + k·σ` with integer-over-integer constant part.
    pub fn affine(num: i64, den: i64, k: i64) -> Self {
        Self::new(Rational64::new(num, den), Rational64::from_integer(k))
    }

    pub fn is_constant(&self) -> bool {
        self.q2.is_zero()
    }

    pub fn value(&self, sigma: Sigma) -> f64 {
        to_f64(self.q1) + to_f64(self.q2) * sigma.0
    }

    /// Total order at the given σ, with the downward-σ tie break.
    pub fn cmp_at(&self, other: &Self, sigma: Sigma) -> Ordering {
        let dq1 = self.q1 - other.q1;
        let dq2 = self.q2 - other.q2;
        if dq2.is_zero() {
            return dq1.cmp(&Rational64::zero());
        }
        let d = to_f64(dq1) + to_f64(dq2) * sigma.0;
        let scale = 1.0 + to_f64(dq1).abs() + to_f64(dq2).abs() * sigma.0;
        if d.abs() > 1e-12 * scale {
            return d.partial_cmp(&0.0).unwrap_or(Ordering::Equal);
        }
        // Numerically tied: lowering σ makes the one with the larger σ
        // coefficient smaller.
        if dq2.is_positive() {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }

    pub fn lt(&self, other: &Self, sigma: Sigma) -> bool {
        self.cmp_at(other, sigma) == Ordering::Less
    }

    pub fn le(&self, other: &Self, sigma: Sigma) -> bool {
        self.cmp_at(other, sigma) != Ordering::Greater
    }

    pub fn gt(&self, other: &Self, sigma: Sigma) -> bool {
        self.cmp_at(other, sigma) == Ordering::Greater
    }

    pub fn ge(&self, other: &Self, sigma: Sigma) -> bool {
        self.cmp_at(other, sigma) != Ordering::Less
    }

    pub fn min_at(self, other: Self, sigma: Sigma) -> Self {
        if other.lt(&self, sigma) {
            other
        } else {
            self
        }
    }

    pub fn max_at(self, other: Self, sigma: Sigma) -> Self {
        if other.gt(&self, sigma) {
            other
        } else {
            self
        }
    }

    pub fn scale(self, k: Rational64) -> Self {
        Self::new(self.q1 * k, self.q2 * k)
    }
}

fn to_f64(q: Rational64) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

impl Add for SymbolicExponent {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.q1 + rhs.q1, self.q2 + rhs.q2)
    }
}

impl AddAssign for SymbolicExponent {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for SymbolicExponent {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.q1 - rhs.q1, self.q2 - rhs.q2)
    }
}

impl Neg for SymbolicExponent {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.q1, -self.q2)
    }
}

impl Mul<i64> for SymbolicExponent {
    type Output = Self;
    fn mul(self, k: i64) -> Self {
        self.scale(Rational64::from_integer(k))
    }
}

impl From<i64> for SymbolicExponent {
    fn from(n: i64) -> Self {
        Self::int(n)
    }
}

impl fmt::Display for SymbolicExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.q2.is_negative() { '-' } else { '+' };
        write!(f, "{}{}{}s", self.q1, sign, self.q2.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse exponent `{0}` (expected q1+q2s)")]
pub struct ParseExponentError(String);

impl FromStr for SymbolicExponent {
    type Err = ParseExponentError;

    /// Accepts the trace format `q1+q2s` / `q1-q2s`, or a bare rational.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseExponentError(s.to_string());
        let t = s.trim();
        let Some(body) = t.strip_suffix('s') else {
            return Rational64::from_str(t)
                .map(|q| Self::new(q, Rational64::zero()))
                .map_err(|_| err());
        };
        // The σ part starts at the last sign that is not the leading one.
        let split = body
            .char_indices()
            .skip(1)
            .filter(|&(_, c)| c == '+' || c == '-')
            .last()
            .map(|(i, _)| i)
            .ok_or_else(err)?;
        let (a, b) = body.split_at(split);
        let q1 = Rational64::from_str(a).map_err(|_| err())?;
        let q2 = Rational64::from_str(b.trim_start_matches('+')).map_err(|_| err())?;
        Ok(Self::new(q1, q2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Sigma {
        Sigma::new(v).unwrap()
    }

    #[test]
    fn display_round_trips() {
        for e in [
            Exp::affine(1, 2, 1),
            Exp::affine(-1, 2, -1),
            Exp::int(3),
            Exp::sigma(),
            Exp::affine(7, 4, 2),
        ] {
            let text = e.to_string();
            assert_eq!(text.parse::<Exp>().unwrap(), e, "{text}");
        }
        assert_eq!(Exp::affine(1, 2, 1).to_string(), "1/2+1s");
        assert_eq!(Exp::affine(0, 1, -1).to_string(), "0-1s");
    }

    #[test]
    fn ordering_uses_numeric_sigma() {
        let one_plus_sigma = Exp::int(1) + Exp::sigma();
        assert!(one_plus_sigma.lt(&Exp::int(2), s(0.5)));
        assert!(one_plus_sigma.gt(&Exp::int(2), s(1.5)));
    }

    #[test]
    fn ties_break_towards_smaller_sigma() {
        // At σ=2, 1+σ and 3 coincide numerically; lowering σ makes 1+σ smaller.
        let a = Exp::int(1) + Exp::sigma();
        let b = Exp::int(3);
        assert_eq!(a.cmp_at(&b, s(2.0)), Ordering::Less);
        assert_eq!(b.cmp_at(&a, s(2.0)), Ordering::Greater);
        assert_eq!(a.min_at(b, s(2.0)), a);
    }

    #[test]
    fn equal_pairs_compare_equal() {
        let a = Exp::affine(1, 3, 2);
        assert_eq!(a.cmp_at(&a, s(0.7)), Ordering::Equal);
    }
}
