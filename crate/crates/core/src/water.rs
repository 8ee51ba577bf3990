//! Exact water quantities measured in units of `1/D`.

use alloc::string::ToString;
use core::fmt;
use core::ops::{Add, AddAssign, Sub, SubAssign};

use crate::error::CoreError;
use crate::rational::Rational;
use crate::units::Units;

/// The global resolution denominator `D`: one unit of water is `D` units.
///
/// Always positive and even, so that odd unit counts (thresholds) and even
/// unit counts (filler pours) can never coincide.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Resolution(Units);

impl Resolution {
    pub fn new(d: Units) -> Result<Self, CoreError> {
        if d.is_zero() || d.is_odd() {
            return Err(CoreError::InvalidResolution(d.to_string()));
        }
        Ok(Resolution(d))
    }

    pub fn from_u64(d: u64) -> Result<Self, CoreError> {
        Resolution::new(Units::from_u64(d))
    }

    /// Units per whole unit of water.
    pub fn units(&self) -> &Units {
        &self.0
    }

    /// One whole unit of water.
    pub fn one(&self) -> WaterAmount {
        WaterAmount(self.0.clone())
    }

    pub fn half(&self) -> Units {
        self.0.half()
    }

    pub fn as_rational(&self) -> Rational {
        Rational::from_units(&self.0, &Units::from_u64(1))
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl fmt::Debug for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D={}", self.0)
    }
}

/// A non-negative amount of water, stored as an exact unit count.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WaterAmount(Units);

impl WaterAmount {
    pub const ZERO: WaterAmount = WaterAmount(Units::ZERO);

    pub fn from_units(units: Units) -> Self {
        WaterAmount(units)
    }

    pub const fn from_u64(units: u64) -> Self {
        WaterAmount(Units::from_u64(units))
    }

    pub fn units(&self) -> &Units {
        &self.0
    }

    pub fn into_units(self) -> Units {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn checked_sub(&self, rhs: &WaterAmount) -> Option<WaterAmount> {
        self.0.checked_sub(&rhs.0).map(WaterAmount)
    }

    pub fn saturating_sub(&self, rhs: &WaterAmount) -> WaterAmount {
        self.checked_sub(rhs).unwrap_or(WaterAmount::ZERO)
    }

    /// Whole units of water, `floor(self / D)`.
    pub fn whole(&self, d: &Resolution) -> Units {
        self.0.div_floor(d.units())
    }

    /// Fractional part in units, `self mod D`.
    pub fn frac_units(&self, d: &Resolution) -> Units {
        self.0.rem(d.units())
    }

    pub fn to_rational(&self, d: &Resolution) -> Rational {
        Rational::from_units(&self.0, d.units())
    }

    pub fn to_f64(&self, d: &Resolution) -> f64 {
        self.0.ratio_f64(d.units())
    }
}

/// Convert an exact rational amount of water to units at resolution `d`.
pub fn to_units(x: &Rational, d: &Resolution) -> Result<WaterAmount, CoreError> {
    if x.is_negative() {
        return Err(CoreError::Negative(x.to_string()));
    }
    x.times_units(d.units())
        .map(WaterAmount)
        .ok_or_else(|| CoreError::NonRepresentable { value: x.to_string(), resolution: d.to_string() })
}

/// `x * D` for a rational multiplier, if it is a whole number of units.
pub(crate) fn scale(x: &Rational, d: &Resolution) -> Option<Units> {
    if x.is_negative() {
        return None;
    }
    x.times_units(d.units())
}

impl AddAssign<&WaterAmount> for WaterAmount {
    fn add_assign(&mut self, rhs: &WaterAmount) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&WaterAmount> for WaterAmount {
    fn sub_assign(&mut self, rhs: &WaterAmount) {
        self.0 -= &rhs.0;
    }
}

impl Add<&WaterAmount> for &WaterAmount {
    type Output = WaterAmount;
    fn add(self, rhs: &WaterAmount) -> WaterAmount {
        WaterAmount(&self.0 + &rhs.0)
    }
}

impl Sub<&WaterAmount> for &WaterAmount {
    type Output = WaterAmount;
    fn sub(self, rhs: &WaterAmount) -> WaterAmount {
        WaterAmount(&self.0 - &rhs.0)
    }
}

impl<'a> core::iter::Sum<&'a WaterAmount> for WaterAmount {
    fn sum<I: Iterator<Item = &'a WaterAmount>>(iter: I) -> WaterAmount {
        let mut acc = WaterAmount::ZERO;
        for w in iter {
            acc += w;
        }
        acc
    }
}

impl fmt::Display for WaterAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}u", self.0)
    }
}

impl fmt::Debug for WaterAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}u", self.0)
    }
}
