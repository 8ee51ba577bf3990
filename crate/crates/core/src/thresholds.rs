//! Randomised threshold collections and threshold counters.
//!
//! Cup `j` owns thresholds `r_j(t) = t + s_j(t0)` for whole numbers `t`,
//! where `t0 <= t` is the start of the block of `P = 1/delta + 1` indices
//! containing `t` (blocks start at `t0 = 1, 1 + P, 1 + 2P, ...`). The
//! threshold at the first index of each block, and at `t = 0`, is null.
//! Each block draws a fresh offset `s_j(t0)` in `(0, 1)`, so a filler that
//! learns one offset cannot exploit it for long.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::rational::Rational;
use crate::rng::{labels, uniform_threshold};
use crate::units::Units;
use crate::water::{scale, Resolution, WaterAmount};

/// Where block offsets come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OffsetSource {
    /// Drawn from the stream `(seed, "threshold", (trial, cup, t0))`.
    Random { seed: u64, trial: u64 },
    /// The same offset, in units, for every block of every cup.
    Fixed(Units),
}

/// How counters are initialised from water present at the start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum CounterInit {
    /// `(1 + delta)` per threshold crossed, as for crossings during play.
    #[default]
    Scaled,
    /// One unit per threshold crossed.
    Literal,
}

/// Per-cup threshold bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CupCounter {
    /// Everything ever poured into the cup, including initial water.
    pub poured: Units,
    pub counter: Units,
    /// Thresholds crossed so far, including those crossed by initial water.
    pub crossings: u64,
    cache: Option<(u64, Units)>,
}

/// Threshold collections and counters for every cup of one game.
#[derive(Clone, Debug)]
pub struct ThresholdState {
    source: OffsetSource,
    d: Resolution,
    delta: Rational,
    delta_units: Units,
    period: u64,
    increment: Units,
    cups: Vec<CupCounter>,
    nonzero: BTreeSet<u64>,
    counter_sum: Units,
}

/// Errors building a [`ThresholdState`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ThresholdError {
    /// `1/delta` is not a positive integer.
    InverseDelta,
    /// `delta * D` is not a whole number of units.
    DeltaResolution,
    /// A fixed offset is not an odd unit count strictly inside `(0, 1)`.
    BadOffset,
}

impl core::fmt::Display for ThresholdError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ThresholdError::InverseDelta => write!(f, "1/delta must be a positive integer"),
            ThresholdError::DeltaResolution => write!(f, "D not divisible by denominator of delta"),
            ThresholdError::BadOffset => write!(f, "fixed offset must be an odd unit count below D"),
        }
    }
}

impl ThresholdState {
    pub fn new(delta: &Rational, d: &Resolution, source: OffsetSource) -> Result<Self, ThresholdError> {
        let inv = delta.recip().ok_or(ThresholdError::InverseDelta)?;
        if !inv.is_integer() || !inv.is_positive() {
            return Err(ThresholdError::InverseDelta);
        }
        let inv: u64 = inv.numer().try_into().map_err(|_| ThresholdError::InverseDelta)?;
        let delta_units = scale(delta, d).ok_or(ThresholdError::DeltaResolution)?;
        if let OffsetSource::Fixed(s) = &source {
            if s.is_even() || s >= d.units() {
                return Err(ThresholdError::BadOffset);
            }
        }
        let increment = d.units() + &delta_units;
        Ok(ThresholdState {
            source,
            d: d.clone(),
            delta: delta.clone(),
            delta_units,
            period: inv + 1,
            increment,
            cups: Vec::new(),
            nonzero: BTreeSet::new(),
            counter_sum: Units::ZERO,
        })
    }

    pub fn resolution(&self) -> &Resolution {
        &self.d
    }

    pub fn delta(&self) -> &Rational {
        &self.delta
    }

    /// `delta * D`.
    pub fn delta_units(&self) -> &Units {
        &self.delta_units
    }

    /// Block length `P = 1/delta + 1`.
    pub fn period(&self) -> u64 {
        self.period
    }

    /// `(1 + delta) * D`, the counter increment per crossing.
    pub fn increment(&self) -> &Units {
        &self.increment
    }

    pub fn cup(&self, j: u64) -> Option<&CupCounter> {
        self.cups.get(j as usize)
    }

    pub fn counter(&self, j: u64) -> Units {
        self.cup(j).map(|c| c.counter.clone()).unwrap_or_default()
    }

    pub fn counter_sum(&self) -> &Units {
        &self.counter_sum
    }

    /// Ids of cups with a nonzero counter, ascending.
    pub fn nonzero(&self) -> impl Iterator<Item = u64> + '_ {
        self.nonzero.iter().copied()
    }

    fn slot(&mut self, j: u64) -> &mut CupCounter {
        let i = j as usize;
        if self.cups.len() <= i {
            self.cups.resize(i + 1, CupCounter::default());
        }
        &mut self.cups[i]
    }

    fn block_start(&self, t: u64) -> Option<u64> {
        if t == 0 {
            return None;
        }
        let m = (t - 1) % self.period;
        (m != 0).then_some(t - m)
    }

    fn draw_offset(source: &OffsetSource, d: &Resolution, j: u64, t0: u64) -> Units {
        match source {
            OffsetSource::Random { seed, trial } => {
                uniform_threshold(*seed, labels::THRESHOLD, &[*trial, j, t0], d).into_units()
            }
            OffsetSource::Fixed(s) => s.clone(),
        }
    }

    /// The offset `s_j(t0)` of the block starting at `t0`.
    pub fn offset(&self, j: u64, t0: u64) -> Units {
        Self::draw_offset(&self.source, &self.d, j, t0)
    }

    fn cached_offset(&mut self, j: u64, t0: u64) -> Units {
        let (source, d) = (self.source.clone(), self.d.clone());
        let slot = self.slot(j);
        match &slot.cache {
            Some((b, s)) if *b == t0 => s.clone(),
            _ => {
                let s = Self::draw_offset(&source, &d, j, t0);
                slot.cache = Some((t0, s.clone()));
                s
            }
        }
    }

    /// The threshold `r_j(t)` in units, or `None` if it is null.
    pub fn threshold(&self, j: u64, t: u64) -> Option<Units> {
        let t0 = self.block_start(t)?;
        Some(&self.d.units().mul_u64(t) + &self.offset(j, t0))
    }

    /// All thresholds of cup `j` in `(lo, hi]`, ascending.
    pub fn threshold_values_in(&self, j: u64, lo: &WaterAmount, hi: &WaterAmount) -> Vec<WaterAmount> {
        let mut out = Vec::new();
        if hi <= lo {
            return out;
        }
        let (first, last) = self.index_range(lo.units(), hi.units());
        for t in first..=last {
            if let Some(r) = self.threshold(j, t) {
                if &r > lo.units() && &r <= hi.units() {
                    out.push(WaterAmount::from_units(r));
                }
            }
        }
        out
    }

    fn index_range(&self, lo: &Units, hi: &Units) -> (u64, u64) {
        let whole = |u: &Units| u.div_floor(self.d.units()).to_u64().expect("fill below 2^64 units of water");
        (whole(lo), whole(hi))
    }

    fn count_crossings(&mut self, j: u64, lo: &Units, hi: &Units) -> u64 {
        if hi <= lo {
            return 0;
        }
        let (first, last) = self.index_range(lo, hi);
        let mut k = 0;
        for t in first..=last {
            let Some(t0) = self.block_start(t) else { continue };
            let r = &self.d.units().mul_u64(t) + &self.cached_offset(j, t0);
            if &r > lo && &r <= hi {
                k += 1;
            }
        }
        k
    }

    fn set_counter(&mut self, j: u64, value: Units) {
        let old = core::mem::replace(&mut self.slot(j).counter, value.clone());
        self.counter_sum -= &old;
        self.counter_sum += &value;
        if value.is_zero() {
            self.nonzero.remove(&j);
        } else {
            self.nonzero.insert(j);
        }
    }

    /// Advance `a_j` by `amount`; returns the number of thresholds crossed
    /// and raises the counter by `1 + delta` per crossing.
    pub fn record_pour(&mut self, j: u64, amount: &WaterAmount) -> u64 {
        if amount.is_zero() {
            return 0;
        }
        let lo = self.slot(j).poured.clone();
        let hi = &lo + amount.units();
        let k = self.count_crossings(j, &lo, &hi);
        let slot = self.slot(j);
        slot.poured = hi;
        slot.crossings += k;
        if k > 0 {
            let value = &self.counter(j) + &self.increment.mul_u64(k);
            self.set_counter(j, value);
        }
        k
    }

    /// Account for water present before the first step. Must be called once,
    /// before any pour is recorded.
    pub fn init_counters_from_initial_fill(&mut self, fills: &[(u64, WaterAmount)], mode: CounterInit) {
        for (j, fill) in fills {
            let k = self.count_crossings(*j, &Units::ZERO, fill.units());
            let slot = self.slot(*j);
            slot.poured = fill.units().clone();
            slot.crossings = k;
            let per = match mode {
                CounterInit::Scaled => self.increment.clone(),
                CounterInit::Literal => self.d.units().clone(),
            };
            self.set_counter(*j, per.mul_u64(k));
        }
    }

    /// Lower the counter of cup `j` by `amount` (saturating at zero).
    pub fn decrement(&mut self, j: u64, amount: &Units) {
        let cur = self.counter(j);
        let value = cur.checked_sub(amount).unwrap_or(Units::ZERO);
        self.set_counter(j, value);
    }

    /// Set a counter directly, bypassing crossings. For tests and fault
    /// injection only.
    #[doc(hidden)]
    pub fn force_counter(&mut self, j: u64, value: Units) {
        self.set_counter(j, value);
    }

    /// Forget a cup entirely (dynamic games).
    pub fn forget(&mut self, j: u64) {
        if (j as usize) < self.cups.len() {
            self.set_counter(j, Units::ZERO);
            self.cups[j as usize] = CupCounter::default();
        }
    }
}

/// Crossings beyond the `p` an emptier can service immediately.
pub fn surplus_of_step(crossings: u64, p: u64) -> u64 {
    crossings.saturating_sub(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_delta() -> ThresholdState {
        // D = 30 so that s = 1/2 is the odd unit count 15.
        let d = Resolution::from_u64(30).unwrap();
        ThresholdState::new(&"1/2".parse().unwrap(), &d, OffsetSource::Fixed(Units::from_u64(15))).unwrap()
    }

    fn w(u: u64) -> WaterAmount {
        WaterAmount::from_u64(u)
    }

    #[test]
    fn pattern_starts_above_two() {
        // thresholds 2.5, 3.5, then a null index, then 5.5, 6.5
        let st = half_delta();
        assert_eq!(st.period(), 3);
        assert_eq!(st.threshold(0, 0), None);
        assert_eq!(st.threshold(0, 1), None);
        assert_eq!(st.threshold(0, 2), Some(Units::from_u64(75)));
        assert_eq!(st.threshold(0, 3), Some(Units::from_u64(105)));
        assert_eq!(st.threshold(0, 4), None);
        assert_eq!(st.threshold(0, 5), Some(Units::from_u64(165)));
        // (1.9, 2.6] holds exactly 2.5
        assert_eq!(st.threshold_values_in(0, &w(57), &w(78)), alloc::vec![w(75)]);
        assert!(st.threshold_values_in(0, &w(0), &w(30)).is_empty());
        assert!(st.threshold_values_in(0, &w(45), &w(45)).is_empty());
    }

    #[test]
    fn crossings_raise_counter_by_one_plus_delta() {
        let d = Resolution::from_u64(8).unwrap();
        let mut st = ThresholdState::new(&"1/4".parse().unwrap(), &d, OffsetSource::Fixed(Units::from_u64(3))).unwrap();
        assert_eq!(st.record_pour(0, &w(16)), 0);
        assert_eq!(st.record_pour(0, &w(4)), 1);
        assert_eq!(st.counter(0), Units::from_u64(10));
        assert_eq!(st.record_pour(0, &WaterAmount::ZERO), 0);
        assert_eq!(st.counter_sum(), &Units::from_u64(10));
        assert_eq!(st.nonzero().collect::<Vec<_>>(), alloc::vec![0]);
        st.decrement(0, &Units::from_u64(10));
        assert_eq!(st.nonzero().count(), 0);
    }

    #[test]
    fn initial_fill_counters() {
        let mut st = half_delta();
        // fills 0, 0.6 and 3.0; the last crosses only 2.5, giving 1.5
        st.init_counters_from_initial_fill(&[(0, w(0)), (1, w(18)), (2, w(90))], CounterInit::Scaled);
        assert_eq!(st.counter(0), Units::ZERO);
        assert_eq!(st.counter(1), Units::ZERO);
        assert_eq!(st.counter(2), Units::from_u64(45));
        let mut lit = half_delta();
        lit.init_counters_from_initial_fill(&[(2, w(90))], CounterInit::Literal);
        assert_eq!(lit.counter(2), Units::from_u64(30));
    }

    #[test]
    fn random_offsets_are_reproducible() {
        let d = Resolution::from_u64(1 << 20).unwrap();
        let src = OffsetSource::Random { seed: 4, trial: 0 };
        let a = ThresholdState::new(&"1/8".parse().unwrap(), &d, src.clone()).unwrap();
        let b = ThresholdState::new(&"1/8".parse().unwrap(), &d, src).unwrap();
        let hi = w(40 << 20);
        assert_eq!(a.threshold_values_in(3, &w(0), &hi), b.threshold_values_in(3, &w(0), &hi));
        assert_ne!(a.threshold_values_in(3, &w(0), &hi), a.threshold_values_in(4, &w(0), &hi));
    }

    #[test]
    fn rejects_non_integral_inverse_delta() {
        let d = Resolution::from_u64(40).unwrap();
        let src = OffsetSource::Fixed(Units::from_u64(1));
        assert_eq!(ThresholdState::new(&"2/5".parse().unwrap(), &d, src).unwrap_err(), ThresholdError::InverseDelta);
    }

    #[test]
    fn surplus() {
        assert_eq!(surplus_of_step(5, 3), 2);
        assert_eq!(surplus_of_step(2, 3), 0);
        assert_eq!(surplus_of_step(0, 3), 0);
    }
}
