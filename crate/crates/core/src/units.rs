//! Non-negative integer counts with a word-sized fast path.
//!
//! Most games run at resolutions that fit comfortably in a machine word, but
//! the harmonic adversaries need resolutions divisible by `lcm(2..=n)`, which
//! for a few thousand cups is thousands of bits wide. `Units` keeps small
//! values inline and only spills to a [`BigUint`] when a value no longer fits.

use alloc::string::String;
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, AddAssign, Mul, Sub, SubAssign};
use core::str::FromStr;

use alloc::borrow::Cow;
use alloc::sync::Arc;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};

/// A non-negative integer. Values `<= u64::MAX` are always stored inline.
#[derive(Clone)]
pub struct Units(Repr);

#[derive(Clone)]
enum Repr {
    Small(u64),
    Big(Arc<BigUint>),
}

impl Units {
    pub const ZERO: Units = Units(Repr::Small(0));

    pub const fn from_u64(v: u64) -> Self {
        Units(Repr::Small(v))
    }

    pub fn from_biguint(v: BigUint) -> Self {
        match v.to_u64() {
            Some(small) => Units(Repr::Small(small)),
            None => Units(Repr::Big(Arc::new(v))),
        }
    }

    pub fn to_biguint(&self) -> BigUint {
        match &self.0 {
            Repr::Small(v) => BigUint::from(*v),
            Repr::Big(v) => (**v).clone(),
        }
    }

    fn as_big(&self) -> Cow<'_, BigUint> {
        match &self.0 {
            Repr::Small(v) => Cow::Owned(BigUint::from(*v)),
            Repr::Big(v) => Cow::Borrowed(&**v),
        }
    }

    pub fn to_u64(&self) -> Option<u64> {
        match &self.0 {
            Repr::Small(v) => Some(*v),
            Repr::Big(_) => None,
        }
    }

    /// Lossy conversion for reporting.
    pub fn to_f64(&self) -> f64 {
        match &self.0 {
            Repr::Small(v) => *v as f64,
            Repr::Big(v) => (**v).to_f64().unwrap_or(f64::INFINITY),
        }
    }

    /// `self / other` as a float, accurate even when both exceed the `f64`
    /// range.
    pub fn ratio_f64(&self, other: &Units) -> f64 {
        if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &other.0) {
            return *a as f64 / *b as f64;
        }
        let (a, b) = (self.to_biguint(), other.to_biguint());
        let shift = a.bits().max(b.bits()).saturating_sub(960);
        ((a >> shift).to_f64().unwrap_or(f64::INFINITY)) / ((b >> shift).to_f64().unwrap_or(f64::INFINITY))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.0, Repr::Small(0))
    }

    pub fn is_even(&self) -> bool {
        match &self.0 {
            Repr::Small(v) => v % 2 == 0,
            Repr::Big(v) => v.is_even(),
        }
    }

    pub fn is_odd(&self) -> bool {
        !self.is_even()
    }

    pub fn checked_sub(&self, rhs: &Units) -> Option<Units> {
        match (&self.0, &rhs.0) {
            (Repr::Small(a), Repr::Small(b)) => a.checked_sub(*b).map(Units::from_u64),
            (Repr::Small(_), Repr::Big(_)) => None,
            (Repr::Big(a), Repr::Small(b)) => Some(Units::from_biguint(&**a - *b)),
            (Repr::Big(a), Repr::Big(b)) => {
                if a < b {
                    None
                } else {
                    Some(Units::from_biguint(&**a - &**b))
                }
            }
        }
    }

    /// Floor division and remainder. Panics on a zero divisor.
    pub fn div_rem(&self, rhs: &Units) -> (Units, Units) {
        match (&self.0, &rhs.0) {
            (Repr::Small(a), Repr::Small(b)) => (Units::from_u64(a / b), Units::from_u64(a % b)),
            (Repr::Small(a), Repr::Big(_)) => (Units::ZERO, Units::from_u64(*a)),
            _ => {
                let (q, r) = self.as_big().div_rem(&rhs.as_big());
                (Units::from_biguint(q), Units::from_biguint(r))
            }
        }
    }

    pub fn div_floor(&self, rhs: &Units) -> Units {
        self.div_rem(rhs).0
    }

    pub fn rem(&self, rhs: &Units) -> Units {
        self.div_rem(rhs).1
    }

    pub fn is_multiple_of(&self, rhs: &Units) -> bool {
        if rhs.is_zero() {
            return self.is_zero();
        }
        self.rem(rhs).is_zero()
    }

    pub fn mul_u64(&self, rhs: u64) -> Units {
        match &self.0 {
            Repr::Small(a) => match a.checked_mul(rhs) {
                Some(v) => Units::from_u64(v),
                None => Units::from_biguint(BigUint::from(*a) * rhs),
            },
            Repr::Big(a) => Units::from_biguint(&**a * rhs),
        }
    }

    /// Exact division by a word; `None` if `rhs` does not divide `self`.
    pub fn exact_div_u64(&self, rhs: u64) -> Option<Units> {
        if rhs == 0 {
            return None;
        }
        match &self.0 {
            Repr::Small(a) => (a % rhs == 0).then(|| Units::from_u64(a / rhs)),
            Repr::Big(a) => {
                let (q, r) = a.div_rem(&BigUint::from(rhs));
                r.is_zero().then(|| Units::from_biguint(q))
            }
        }
    }

    pub fn half(&self) -> Units {
        match &self.0 {
            Repr::Small(a) => Units::from_u64(a / 2),
            Repr::Big(a) => Units::from_biguint(&**a >> 1u32),
        }
    }
}

impl Default for Units {
    fn default() -> Self {
        Units::ZERO
    }
}

impl From<u64> for Units {
    fn from(v: u64) -> Self {
        Units::from_u64(v)
    }
}

impl From<BigUint> for Units {
    fn from(v: BigUint) -> Self {
        Units::from_biguint(v)
    }
}

impl PartialEq for Units {
    fn eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (Repr::Small(a), Repr::Small(b)) => a == b,
            (Repr::Big(a), Repr::Big(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Units {}

impl PartialOrd for Units {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Units {
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.0, &other.0) {
            (Repr::Small(a), Repr::Small(b)) => a.cmp(b),
            (Repr::Small(_), Repr::Big(_)) => Ordering::Less,
            (Repr::Big(_), Repr::Small(_)) => Ordering::Greater,
            (Repr::Big(a), Repr::Big(b)) => a.cmp(b),
        }
    }
}

impl core::hash::Hash for Units {
    fn hash<H: core::hash::Hasher>(&self, state: &mut H) {
        match &self.0 {
            Repr::Small(v) => v.hash(state),
            Repr::Big(v) => v.hash(state),
        }
    }
}

impl AddAssign<&Units> for Units {
    fn add_assign(&mut self, rhs: &Units) {
        match (&mut self.0, &rhs.0) {
            (Repr::Small(a), Repr::Small(b)) => match a.checked_add(*b) {
                Some(v) => *a = v,
                None => self.0 = Repr::Big(Arc::new(BigUint::from(*a) + *b)),
            },
            (Repr::Big(a), Repr::Small(b)) => *Arc::make_mut(a) += *b,
            (Repr::Big(a), Repr::Big(b)) => *Arc::make_mut(a) += &**b,
            (Repr::Small(a), Repr::Big(b)) => self.0 = Repr::Big(Arc::new(&**b + *a)),
        }
    }
}

impl Add<&Units> for &Units {
    type Output = Units;
    fn add(self, rhs: &Units) -> Units {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Add for Units {
    type Output = Units;
    fn add(mut self, rhs: Units) -> Units {
        self += &rhs;
        self
    }
}

impl SubAssign<&Units> for Units {
    /// Panics on underflow.
    fn sub_assign(&mut self, rhs: &Units) {
        match (&mut self.0, &rhs.0) {
            (Repr::Small(a), Repr::Small(b)) => *a = a.checked_sub(*b).expect("unit subtraction underflow"),
            _ => *self = self.checked_sub(rhs).expect("unit subtraction underflow"),
        }
    }
}

impl Sub<&Units> for &Units {
    type Output = Units;
    fn sub(self, rhs: &Units) -> Units {
        self.checked_sub(rhs).expect("unit subtraction underflow")
    }
}

impl Mul<u64> for &Units {
    type Output = Units;
    fn mul(self, rhs: u64) -> Units {
        self.mul_u64(rhs)
    }
}

impl Mul<&Units> for &Units {
    type Output = Units;
    fn mul(self, rhs: &Units) -> Units {
        match (&self.0, &rhs.0) {
            (Repr::Small(a), Repr::Small(b)) => match a.checked_mul(*b) {
                Some(v) => Units::from_u64(v),
                None => Units::from_biguint(BigUint::from(*a) * *b),
            },
            _ => Units::from_biguint(&*self.as_big() * &*rhs.as_big()),
        }
    }
}

impl<'a> core::iter::Sum<&'a Units> for Units {
    fn sum<I: Iterator<Item = &'a Units>>(iter: I) -> Units {
        let mut acc = Units::ZERO;
        for u in iter {
            acc += u;
        }
        acc
    }
}

impl core::iter::Sum for Units {
    fn sum<I: Iterator<Item = Units>>(iter: I) -> Units {
        let mut acc = Units::ZERO;
        for u in iter {
            acc += &u;
        }
        acc
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Small(v) => write!(f, "{v}"),
            Repr::Big(v) => write!(f, "{v}"),
        }
    }
}

impl fmt::Debug for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Error parsing a decimal unit count.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a non-negative integer: `{0}`")]
pub struct ParseUnitsError(pub String);

impl FromStr for Units {
    type Err = ParseUnitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseUnitsError(String::from(s)));
        }
        if let Ok(v) = t.parse::<u64>() {
            return Ok(Units::from_u64(v));
        }
        BigUint::parse_bytes(t.as_bytes(), 10).map(Units::from_biguint).ok_or_else(|| ParseUnitsError(String::from(s)))
    }
}
