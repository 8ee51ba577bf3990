//! Quantities computed from fills and traces.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_traits::ToPrimitive;

use crate::rational::Rational;
use crate::units::Units;
use crate::water::{Resolution, WaterAmount};

/// Sum of whole units over the given fills.
pub fn integer_fill<'a>(fills: impl IntoIterator<Item = &'a Units>, d: &Resolution) -> Units {
    let mut acc = Units::ZERO;
    for f in fills {
        acc += &f.div_floor(d.units());
    }
    acc
}

/// `int_0^f (1 + eps)^ceil(x) dx` for one fill `f`, exactly.
///
/// With `g = 1 + eps` and `F = floor(f)` this is
/// `g + g^2 + ... + g^F + (f - F) g^(F + 1)`.
pub fn phi_of_fill(fill: &Units, eps: &Rational, d: &Resolution) -> Rational {
    if fill.is_zero() {
        return Rational::zero();
    }
    if eps.is_zero() {
        return Rational::from_units(fill, d.units());
    }
    let g = &Rational::one() + eps;
    let (whole, frac) = fill.div_rem(d.units());
    let whole = whole.to_u64().expect("fill below 2^64 units of water") as u32;
    let gw = g.pow(whole);
    let geometric = &(&g * &(&gw - &Rational::one())) / eps;
    let tail = &Rational::from_units(&frac, d.units()) * &(&gw * &g);
    geometric + tail
}

/// The potential `sum_j int_0^{f_j} (1 + eps)^ceil(x) dx`, exactly.
pub fn potential_phi<'a>(fills: impl IntoIterator<Item = &'a Units>, eps: &Rational, d: &Resolution) -> Rational {
    fills.into_iter().map(|f| phi_of_fill(f, eps, d)).sum()
}

/// Floating-point version of [`potential_phi`] for bulk traces.
pub fn potential_phi_f64<'a>(fills: impl IntoIterator<Item = &'a Units>, eps: f64, d: &Resolution) -> f64 {
    let g = 1.0 + eps;
    let du = d.units();
    fills
        .into_iter()
        .filter(|f| !f.is_zero())
        .map(|f| {
            let (whole, frac) = f.div_rem(du);
            let whole = whole.to_u64().unwrap_or(u64::MAX);
            if eps == 0.0 {
                return whole as f64 + frac.ratio_f64(du);
            }
            let gw = pow_f64(g, whole);
            g * (gw - 1.0) / eps + frac.ratio_f64(du) * gw * g
        })
        .sum()
}

fn pow_f64(mut base: f64, mut exp: u64) -> f64 {
    let mut acc = 1.0;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= base;
        }
        base *= base;
        exp >>= 1;
    }
    acc
}

/// Sum of the `j` largest fills; missing cups count as empty.
pub fn top_sum(fills: &[Units], j: usize) -> Units {
    let mut sorted: Vec<&Units> = fills.iter().collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted.into_iter().take(j).sum()
}

/// Average of the `j` largest fills, as water.
pub fn avg_top(fills: &[Units], j: usize, d: &Resolution) -> Rational {
    assert!(j >= 1, "avg_top needs j >= 1");
    &Rational::from_units(&top_sum(fills, j), d.units()) / &Rational::integer(j as i64)
}

/// The smallest `l >= 1` with `2 * (T_{i-l+1} + ... + T_i) >= delta l + t`,
/// where `surplus` holds `T_1..T_i`.
pub fn backlog_witness_exists(surplus: &[u64], t: &Rational, delta: &Rational) -> Option<u64> {
    let fast = (|| {
        let a: u128 = delta.numer().to_u128()?;
        let b: u128 = delta.denom().to_u128()?;
        let c: u128 = t.numer().to_u128()?;
        let e: u128 = t.denom().to_u128()?;
        Some((a, b, c, e))
    })();
    let mut sum: u128 = 0;
    for (idx, &tm) in surplus.iter().rev().enumerate() {
        let l = idx as u128 + 1;
        sum += tm as u128;
        let holds = match fast {
            Some((a, b, c, e)) => match (
                (2 * sum).checked_mul(b).and_then(|x| x.checked_mul(e)),
                a.checked_mul(l).and_then(|x| x.checked_mul(e)).zip(c.checked_mul(b)),
            ) {
                (Some(lhs), Some((r1, r2))) => r2.checked_add(r1).is_some_and(|rhs| lhs >= rhs),
                _ => slow_witness(sum, l, t, delta),
            },
            None => slow_witness(sum, l, t, delta),
        };
        if holds {
            return Some(l as u64);
        }
    }
    None
}

fn slow_witness(sum: u128, l: u128, t: &Rational, delta: &Rational) -> bool {
    let lhs = Rational::from_big(BigInt::from(2 * sum), BigInt::from(1)).expect("nonzero");
    let rhs = &(delta * &Rational::from_big(BigInt::from(l), BigInt::from(1)).expect("nonzero")) + t;
    lhs >= rhs
}

/// Exact check of `av(j) <= 1 + 1/(j+1) + ... + 1/n` over a fixed
/// resolution, with cached right-hand sides.
#[derive(Clone, Debug)]
pub struct HarmonicBound {
    d: Resolution,
    harmonic: Vec<Rational>,
    cache: BTreeMap<(u64, u64), Units>,
}

impl HarmonicBound {
    pub fn new(d: &Resolution) -> Self {
        HarmonicBound { d: d.clone(), harmonic: alloc::vec![Rational::zero()], cache: BTreeMap::new() }
    }

    fn harmonic(&mut self, k: u64) -> Rational {
        while (self.harmonic.len() as u64) <= k {
            let next = self.harmonic.len() as i64;
            let h = self.harmonic.last().expect("seeded") + &Rational::new(1, next).expect("nonzero");
            self.harmonic.push(h);
        }
        self.harmonic[k as usize].clone()
    }

    /// `floor((1 + H(n) - H(j)) * j * D)`, the largest admissible sum of
    /// the top `j` fills in units.
    pub fn limit(&mut self, j: u64, n: u64) -> Units {
        if let Some(u) = self.cache.get(&(j, n)) {
            return u.clone();
        }
        let tail = if n > j { &self.harmonic(n) - &self.harmonic(j) } else { Rational::zero() };
        let bound = &Rational::one() + &tail;
        let scaled = &bound * &(&Rational::integer(j as i64) * &self.d.as_rational());
        let floor = scaled.floor();
        let u = Units::from_biguint(floor.magnitude().clone());
        self.cache.insert((j, n), u.clone());
        u
    }

    /// Whether the top-`j` sum of `sorted_desc` respects the bound for a
    /// game with `n` cups.
    pub fn holds(&mut self, sorted_desc: &[&Units], j: u64, n: u64) -> bool {
        let sum: Units = sorted_desc.iter().take(j as usize).copied().sum();
        sum <= self.limit(j, n)
    }
}

/// The `j` values checked against the harmonic bound: powers of two up to
/// `n`, plus `n` itself.
pub fn harmonic_check_points(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut j = 1u64;
    while j <= n {
        out.push(j);
        j *= 2;
    }
    if n > 0 && out.last() != Some(&n) {
        out.push(n);
    }
    out
}

/// Deterministic aggregate of one trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSummary {
    pub steps: u64,
    pub max_backlog: WaterAmount,
    pub final_backlog: WaterAmount,
    /// Backlog quantiles in water: median, 90th, 99th percentile.
    pub backlog_p50: f64,
    pub backlog_p90: f64,
    pub backlog_p99: f64,
    /// For each configured threshold `c`, the fraction of steps with backlog `> c`.
    pub tail_fractions: Vec<(Rational, f64)>,
    /// Total surplus crossings `sum T_m`.
    pub total_surplus: u64,
    pub max_counter_sum: WaterAmount,
    pub phi_min: Option<f64>,
    pub phi_max: Option<f64>,
    pub max_virtual_backlog: Option<WaterAmount>,
    /// First step after which the integer fill was zero.
    pub first_zero_integer_fill: Option<u64>,
}

/// Streaming builder for [`TraceSummary`].
#[derive(Clone, Debug)]
pub struct Summarizer {
    d: Resolution,
    thresholds: Vec<(Rational, Units)>,
    counts: Vec<u64>,
    backlogs: Vec<f64>,
    steps: u64,
    max_backlog: WaterAmount,
    final_backlog: WaterAmount,
    total_surplus: u64,
    max_counter_sum: WaterAmount,
    phi_min: Option<f64>,
    phi_max: Option<f64>,
    max_virtual_backlog: Option<WaterAmount>,
    first_zero_integer_fill: Option<u64>,
}

/// One step's inputs to a [`Summarizer`].
#[derive(Clone, Copy, Debug)]
pub struct StepFigures<'a> {
    pub step: u64,
    pub backlog: &'a WaterAmount,
    pub integer_fill: Option<&'a Units>,
    pub surplus: u64,
    pub counter_sum: &'a WaterAmount,
    pub phi: Option<f64>,
    pub virtual_backlog: Option<&'a WaterAmount>,
}

impl Summarizer {
    /// `tail_thresholds` are the backlog levels `c` whose exceedance
    /// frequencies are tracked.
    pub fn new(d: &Resolution, tail_thresholds: &[Rational]) -> Self {
        let thresholds: Vec<(Rational, Units)> = tail_thresholds
            .iter()
            .map(|c| {
                let scaled = c * &d.as_rational();
                let floor = scaled.floor();
                let u = if floor.sign() == num_bigint::Sign::Minus {
                    Units::ZERO
                } else {
                    Units::from_biguint(floor.magnitude().clone())
                };
                (c.clone(), u)
            })
            .collect();
        Summarizer {
            d: d.clone(),
            counts: alloc::vec![0; thresholds.len()],
            thresholds,
            backlogs: Vec::new(),
            steps: 0,
            max_backlog: WaterAmount::ZERO,
            final_backlog: WaterAmount::ZERO,
            total_surplus: 0,
            max_counter_sum: WaterAmount::ZERO,
            phi_min: None,
            phi_max: None,
            max_virtual_backlog: None,
            first_zero_integer_fill: None,
        }
    }

    pub fn push(&mut self, s: StepFigures<'_>) {
        self.steps += 1;
        if s.backlog > &self.max_backlog {
            self.max_backlog = s.backlog.clone();
        }
        self.final_backlog = s.backlog.clone();
        self.backlogs.push(s.backlog.to_f64(&self.d));
        for (i, (_, u)) in self.thresholds.iter().enumerate() {
            if s.backlog.units() > u {
                self.counts[i] += 1;
            }
        }
        self.total_surplus += s.surplus;
        if s.counter_sum > &self.max_counter_sum {
            self.max_counter_sum = s.counter_sum.clone();
        }
        if let Some(p) = s.phi {
            self.phi_min = Some(self.phi_min.map_or(p, |m| m.min(p)));
            self.phi_max = Some(self.phi_max.map_or(p, |m| m.max(p)));
        }
        if let Some(v) = s.virtual_backlog {
            if self.max_virtual_backlog.as_ref().is_none_or(|m| v > m) {
                self.max_virtual_backlog = Some(v.clone());
            }
        }
        if self.first_zero_integer_fill.is_none() && s.integer_fill.is_some_and(|f| f.is_zero()) {
            self.first_zero_integer_fill = Some(s.step);
        }
    }

    pub fn finish(mut self) -> TraceSummary {
        self.backlogs.sort_by(|a, b| a.partial_cmp(b).expect("finite backlog"));
        // nearest-rank quantile with the level given in percent
        let q = |pct: usize| -> f64 {
            let len = self.backlogs.len();
            if len == 0 {
                return 0.0;
            }
            let rank = (pct * len).div_ceil(100).clamp(1, len);
            self.backlogs[rank - 1]
        };
        let steps = self.steps;
        TraceSummary {
            steps,
            max_backlog: self.max_backlog.clone(),
            final_backlog: self.final_backlog.clone(),
            backlog_p50: q(50),
            backlog_p90: q(90),
            backlog_p99: q(99),
            tail_fractions: self
                .thresholds
                .iter()
                .zip(&self.counts)
                .map(|((c, _), n)| (c.clone(), if steps == 0 { 0.0 } else { *n as f64 / steps as f64 }))
                .collect(),
            total_surplus: self.total_surplus,
            max_counter_sum: self.max_counter_sum.clone(),
            phi_min: self.phi_min,
            phi_max: self.phi_max,
            max_virtual_backlog: self.max_virtual_backlog.clone(),
            first_zero_integer_fill: self.first_zero_integer_fill,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(v: u64) -> Resolution {
        Resolution::from_u64(v).unwrap()
    }

    fn u(v: u64) -> Units {
        Units::from_u64(v)
    }

    #[test]
    fn integer_fill_examples() {
        // D = 10: fills 1.5, 0.7, 2.0
        assert_eq!(integer_fill(&[u(15), u(7), u(20)], &d(10)), u(3));
        assert_eq!(integer_fill(&[u(9), u(1)], &d(10)), u(0));
        assert_eq!(integer_fill(&[u(30)], &d(10)), u(3));
    }

    /// Numerical integration of `(1 + eps)^ceil(x)` over `[0, f]`, split at
    /// the integers and integrated piecewise with Simpson's rule, sampling
    /// the integrand only at interior points of each piece.
    fn integrate(f: f64, eps: f64) -> f64 {
        let g = 1.0 + eps;
        let integrand = |x: f64| g.powf(x.ceil());
        let mut total = 0.0;
        let mut lo = 0.0;
        while lo < f {
            let hi = (lo + 1.0).min(f);
            let (a, b) = (lo + (hi - lo) * 1e-9, hi - (hi - lo) * 1e-9);
            let m = 0.5 * (a + b);
            let simpson = (b - a) / 6.0 * (integrand(a) + 4.0 * integrand(m) + integrand(b));
            total += simpson * (hi - lo) / (b - a);
            lo = hi;
        }
        total
    }

    #[test]
    fn phi_examples() {
        let one: Rational = "1".parse().unwrap();
        assert_eq!(phi_of_fill(&u(2), &one, &d(2)), Rational::integer(2));
        assert_eq!(phi_of_fill(&u(4), &one, &d(2)), Rational::integer(6));
        assert_eq!(phi_of_fill(&u(0), &one, &d(2)), Rational::zero());
        assert!((integrate(1.0, 1.0) - 2.0).abs() < 1e-9);
        assert!((integrate(2.0, 1.0) - 6.0).abs() < 1e-9);
    }

    #[test]
    fn phi_without_augmentation_is_total_fill() {
        let zero = Rational::zero();
        assert_eq!(phi_of_fill(&u(7), &zero, &d(2)), Rational::new(7, 2).unwrap());
        assert_eq!(potential_phi_f64([&u(7), &u(4)], 0.0, &d(2)), 5.5);
    }

    proptest! {
        #[test]
        fn phi_matches_integration(units in 0u64..4000, e in 1u64..8) {
            let res = d(400);
            let eps = Rational::new(e as i64, 8).unwrap();
            let exact = phi_of_fill(&u(units), &eps, &res).to_f64();
            let f = units as f64 / 400.0;
            let numeric = integrate(f, e as f64 / 8.0);
            prop_assert!((exact - numeric).abs() <= 1e-12 * exact.max(1.0));
            let float = potential_phi_f64(&[u(units)], e as f64 / 8.0, &res);
            prop_assert!((exact - float).abs() <= 1e-12 * exact.max(1.0));
        }

        #[test]
        fn avg_top_is_non_increasing(fills in proptest::collection::vec(0u64..1000, 1..20)) {
            let fills: Vec<Units> = fills.into_iter().map(u).collect();
            let res = d(10);
            for j in 1..fills.len() + 3 {
                prop_assert!(avg_top(&fills, j + 1, &res) <= avg_top(&fills, j, &res));
            }
        }
    }

    #[test]
    fn avg_top_examples() {
        let fills = [u(4), u(2), u(2)];
        assert_eq!(avg_top(&fills, 2, &d(2)), Rational::new(3, 2).unwrap());
        assert_eq!(avg_top(&fills, 1, &d(2)), Rational::integer(2));
        assert_eq!(avg_top(&fills, 4, &d(2)), Rational::integer(1));
    }

    #[test]
    fn witness_examples() {
        let half = Rational::new(1, 2).unwrap();
        let zero = Rational::zero();
        assert_eq!(backlog_witness_exists(&[0, 0, 0], &zero, &half), None);
        assert_eq!(backlog_witness_exists(&[0, 1], &zero, &half), Some(1));
        // surplus of delta/4 per step on average: one crossing every 8 steps at delta = 1/2
        let sparse: Vec<u64> = (0..64).map(|i| u64::from(i % 16 == 0)).collect();
        assert_eq!(backlog_witness_exists(&sparse, &Rational::integer(1), &Rational::new(1, 8).unwrap()), None);
        assert_eq!(backlog_witness_exists(&[], &zero, &half), None);
    }

    #[test]
    fn harmonic_bound_limits() {
        let mut hb = HarmonicBound::new(&d(6));
        // n = 3, j = 1: 1 + 1/2 + 1/3 = 11/6, times D = 6 gives 11
        assert_eq!(hb.limit(1, 3), u(11));
        assert_eq!(hb.limit(3, 3), u(18));
        assert_eq!(harmonic_check_points(6), alloc::vec![1, 2, 4, 6]);
        assert_eq!(harmonic_check_points(8), alloc::vec![1, 2, 4, 8]);
    }

    #[test]
    fn summary_basics() {
        let res = d(2);
        let empty = Summarizer::new(&res, &[]).finish();
        assert_eq!(empty.steps, 0);
        assert_eq!(empty.max_backlog, WaterAmount::ZERO);
        let mut s = Summarizer::new(&res, &[Rational::new(1, 2).unwrap()]);
        let b = WaterAmount::from_u64(4);
        let zero = WaterAmount::ZERO;
        for step in 1..=10 {
            s.push(StepFigures {
                step,
                backlog: &b,
                integer_fill: None,
                surplus: 0,
                counter_sum: &zero,
                phi: None,
                virtual_backlog: None,
            });
        }
        let sum = s.finish();
        assert_eq!(sum.max_backlog, b);
        assert_eq!(sum.backlog_p50, 2.0);
        assert_eq!(sum.backlog_p99, 2.0);
        assert_eq!(sum.tail_fractions[0].1, 1.0);
    }
}
