//! Arbitrary-precision rationals for game parameters and exact metrics.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};
use core::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::CoreError;
use crate::units::Units;

/// A rational number kept in lowest terms with a positive denominator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(numer: i64, denom: i64) -> Result<Self, CoreError> {
        if denom == 0 {
            return Err(CoreError::ZeroDenominator);
        }
        Ok(Rational(BigRational::new(numer.into(), denom.into())))
    }

    pub fn from_big(numer: BigInt, denom: BigInt) -> Result<Self, CoreError> {
        if denom.is_zero() {
            return Err(CoreError::ZeroDenominator);
        }
        Ok(Rational(BigRational::new(numer, denom)))
    }

    pub fn integer(v: i64) -> Self {
        Rational(BigRational::from_integer(v.into()))
    }

    pub fn from_units(numer: &Units, denom: &Units) -> Self {
        Rational(BigRational::new(
            BigInt::from_biguint(Sign::Plus, numer.to_biguint()),
            BigInt::from_biguint(Sign::Plus, denom.to_biguint()),
        ))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    /// Denominator as an unsigned count.
    pub fn denom_units(&self) -> Units {
        Units::from_biguint(self.0.denom().magnitude().clone())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn recip(&self) -> Option<Self> {
        (!self.is_zero()).then(|| Rational(self.0.recip()))
    }

    pub fn floor(&self) -> BigInt {
        self.0.floor().to_integer()
    }

    pub fn pow(&self, exp: u32) -> Self {
        Rational(num_traits::Pow::pow(&self.0, exp))
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn inner(&self) -> &BigRational {
        &self.0
    }

    /// Multiply by a non-negative count; `None` if the product is not a
    /// non-negative integer.
    pub fn times_units(&self, units: &Units) -> Option<Units> {
        let product = &self.0 * BigRational::from_integer(BigInt::from_biguint(Sign::Plus, units.to_biguint()));
        if !product.is_integer() || product.is_negative() {
            return None;
        }
        Some(Units::from_biguint(product.to_integer().magnitude().clone()))
    }

    /// Decimal rendering with `digits` fractional digits, truncated toward zero.
    pub fn to_decimal_string(&self, digits: usize) -> String {
        use core::fmt::Write;
        let mut out = String::new();
        if self.is_negative() {
            out.push('-');
        }
        let numer: BigUint = self.0.numer().magnitude().clone();
        let denom: BigUint = self.0.denom().magnitude().clone();
        let (int, mut rem) = numer.div_rem(&denom);
        let _ = write!(out, "{int}");
        if digits > 0 {
            out.push('.');
            let ten = BigUint::from(10u8);
            let mut frac: Vec<u8> = Vec::with_capacity(digits);
            for _ in 0..digits {
                rem *= &ten;
                let (d, r) = rem.div_rem(&denom);
                frac.push(b'0' + d.to_u8().unwrap_or(0));
                rem = r;
            }
            out.push_str(core::str::from_utf8(&frac).unwrap_or(""));
        }
        out
    }
}

impl FromStr for Rational {
    type Err = CoreError;

    /// Accepts `a/b` or a bare integer `a`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CoreError::ParseRational(String::from(s));
        let t = s.trim();
        let (n, d) = match t.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (t, "1"),
        };
        let numer = BigInt::from_str(n).map_err(|_| bad())?;
        let denom = BigInt::from_str(d).map_err(|_| bad())?;
        Rational::from_big(numer, denom)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

macro_rules! forward_binop {
    ($tr:ident, $m:ident) => {
        impl $tr<&Rational> for &Rational {
            type Output = Rational;
            fn $m(self, rhs: &Rational) -> Rational {
                Rational((&self.0).$m(&rhs.0))
            }
        }
        impl $tr for Rational {
            type Output = Rational;
            fn $m(self, rhs: Rational) -> Rational {
                Rational(self.0.$m(rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl<'a> core::iter::Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        Rational(iter.fold(BigRational::zero(), |acc, x| acc + &x.0))
    }
}

impl core::iter::Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        Rational(iter.fold(BigRational::zero(), |acc, x| acc + x.0))
    }
}

/// Compare `a/b` with `c/d` for non-negative counts without building rationals.
pub fn cmp_fractions(a: &Units, b: &Units, c: &Units, d: &Units) -> Ordering {
    (a * d).cmp(&(c * b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn parses_and_reduces() {
        let r: Rational = "6/8".parse().unwrap();
        assert_eq!(r.to_string(), "3/4");
        assert_eq!("-2/-4".parse::<Rational>().unwrap().to_string(), "1/2");
        assert_eq!("5".parse::<Rational>().unwrap().to_string(), "5");
        assert!("1/0".parse::<Rational>().is_err());
        assert!("x/2".parse::<Rational>().is_err());
    }

    #[test]
    fn decimal_rendering() {
        let r = Rational::new(13, 24).unwrap();
        assert_eq!(r.to_decimal_string(6), "0.541666");
        assert_eq!(Rational::integer(6).to_decimal_string(2), "6.00");
    }

    #[test]
    fn times_units_checks_integrality() {
        let r = Rational::new(3, 10).unwrap();
        assert_eq!(r.times_units(&Units::from_u64(8)), None);
        assert_eq!(r.times_units(&Units::from_u64(20)), Some(Units::from_u64(6)));
    }
}
