//! Runtime invariant checks applied after every step.
//!
//! Each check carries a short descriptive name that appears in
//! [`InvariantViolation::invariant`]:
//!
//! | name | what is asserted |
//! |---|---|
//! | `water-conservation` | total fill changes by exactly pours minus removals |
//! | `move-validity` | both moves respect the variant's rules, rechecked from the post-step state |
//! | `dynamic-active-set` | in dynamic variants every present cup holds water |
//! | `counter-sandwich` | `w_j <= f_j <= w_j + 3` for threshold counters |
//! | `counter-multiple-of-delta` | every counter is a multiple of `delta` |
//! | `counter-water-bound` | the counters never sum to more than the water present |
//! | `single-crossing-per-step` | a pour of at most one unit crosses at most one threshold |
//! | `mod-one` | smoothed greedy: `v_j = r_j + sum of pours (mod 1)` |
//! | `virtual-fill-offset` | smoothed greedy: `f_j <= v_j <= f_j + r_j` |
//! | `harmonic-average-bound` | dynamic single-processor greedy: `av(j) <= 1 + 1/(j+1) + ... + 1/n` |
//! | `backlog-witness` | nonzero counters imply a height-0 backlog witness |
//! | `potential-case-1` | greedy removing one full unit from each of `p` cups never raises the potential |

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_traits::ToPrimitive;

use crate::config::GameVariant;
use crate::emptiers::Emptier;
use crate::game::{CupId, FillerMove, GameState, StepOutcome};
use crate::metrics::{harmonic_check_points, phi_of_fill, HarmonicBound};
use crate::units::Units;

/// A broken invariant, with the step at which it was detected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvariantViolation {
    pub step: u64,
    pub invariant: &'static str,
    pub detail: String,
}

impl InvariantViolation {
    pub fn new(step: u64, invariant: &'static str, detail: String) -> Self {
        InvariantViolation { step, invariant, detail }
    }
}

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invariant {} violated at step {}: {}", self.invariant, self.step, self.detail)
    }
}

/// How much checking to do per step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VerifyLevel {
    Off,
    /// All invariants, per-cup checks on cups touched this step.
    #[default]
    Invariants,
    /// All invariants, per-cup checks on every cup.
    Full,
}

impl VerifyLevel {
    pub fn name(self) -> &'static str {
        match self {
            VerifyLevel::Off => "off",
            VerifyLevel::Invariants => "invariants",
            VerifyLevel::Full => "full",
        }
    }
}

impl core::str::FromStr for VerifyLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "off" => Ok(VerifyLevel::Off),
            "invariants" => Ok(VerifyLevel::Invariants),
            "full" => Ok(VerifyLevel::Full),
            _ => Err(alloc::format!("unknown verify level {s:?} (expected off, invariants or full)")),
        }
    }
}

/// Stateful per-game checker. Create it from the initial state, then call
/// [`Verifier::check_step`] after every step.
#[derive(Clone, Debug)]
pub struct Verifier {
    level: VerifyLevel,
    total: Units,
    harmonic: Option<HarmonicBound>,
    /// `b * max_l (2 sum T - delta l)` over windows ending at the current
    /// step, with `delta = a/b`.
    witness_margin: Option<i128>,
    delta_parts: Option<(i128, i128)>,
}

macro_rules! fail {
    ($step:expr, $name:literal, $($arg:tt)*) => {
        return Err(InvariantViolation::new($step, $name, alloc::format!($($arg)*)))
    };
}

impl Verifier {
    pub fn new(level: VerifyLevel, state: &GameState) -> Self {
        let cfg = state.config();
        let delta_parts = match (cfg.delta.numer().to_i128(), cfg.delta.denom().to_i128()) {
            (Some(a), Some(b)) if cfg.variant.uses_delta() => Some((a, b)),
            _ => None,
        };
        Verifier {
            level,
            total: state.total_fill().into_units(),
            harmonic: (cfg.variant == GameVariant::DynamicSingle).then(|| HarmonicBound::new(&cfg.resolution)),
            witness_margin: None,
            delta_parts,
        }
    }

    pub fn level(&self) -> VerifyLevel {
        self.level
    }

    /// Check everything applicable after one step. `state` is the
    /// post-step state.
    pub fn check_step(
        &mut self,
        state: &GameState,
        filler_move: &FillerMove,
        outcome: &StepOutcome,
        emptier: &dyn Emptier,
    ) -> Result<(), InvariantViolation> {
        if self.level == VerifyLevel::Off {
            return Ok(());
        }
        self.check_conservation(state, filler_move, outcome)?;
        check_filler_move(state, filler_move)?;
        check_emptier_move(state, outcome)?;
        check_active_set(state)?;
        let touched = touched_cups(filler_move, outcome);
        if let Some(tc) = emptier.as_threshold_counter() {
            self.check_counters(state, filler_move, &touched, tc)?;
        }
        if let Some(sg) = emptier.as_smoothed() {
            self.check_smoothed(state, &touched, sg)?;
        }
        if emptier.name() == "greedy" {
            if let Some(hb) = self.harmonic.as_mut() {
                check_harmonic(state, hb)?;
            }
            check_potential_case_1(state, filler_move, outcome)?;
        }
        Ok(())
    }

    fn check_conservation(
        &mut self,
        state: &GameState,
        filler_move: &FillerMove,
        outcome: &StepOutcome,
    ) -> Result<(), InvariantViolation> {
        let poured = filler_move.total().into_units();
        let removed = outcome.emptier_move.total().into_units();
        let expected = (&self.total + &poured).checked_sub(&removed);
        let actual = state.total_fill().into_units();
        if expected.as_ref() != Some(&actual) {
            fail!(
                state.step(),
                "water-conservation",
                "before {} + poured {} - removed {} != after {}",
                self.total,
                poured,
                removed,
                actual
            );
        }
        self.total = actual;
        Ok(())
    }

    fn check_counters(
        &mut self,
        state: &GameState,
        filler_move: &FillerMove,
        touched: &[CupId],
        tc: &crate::emptiers::ThresholdCounter,
    ) -> Result<(), InvariantViolation> {
        let step = state.step();
        let th = tc.thresholds();
        let one = state.config().resolution.units();
        let three = one.mul_u64(3);
        let ids: Vec<CupId> = match self.level {
            VerifyLevel::Full => state.cups().iter().map(|c| c.id).collect(),
            _ => touched.to_vec(),
        };
        for id in ids {
            let w = th.counter(id.0);
            let f = state.fill(id).into_units();
            if w > f || f > &w + &three {
                fail!(step, "counter-sandwich", "cup {id}: counter {w}, fill {f}, expected w <= f <= w + {three}");
            }
            if !w.is_multiple_of(th.delta_units()) {
                fail!(
                    step,
                    "counter-multiple-of-delta",
                    "cup {id}: counter {w} not a multiple of {}",
                    th.delta_units()
                );
            }
        }
        let total = state.total_fill().into_units();
        if th.counter_sum() > &total {
            fail!(step, "counter-water-bound", "counter sum {} exceeds water {}", th.counter_sum(), total);
        }
        let report = tc.report();
        let poured = (filler_move.pours.len() + filler_move.new_cups.len()) as u64;
        if report.crossings > poured {
            fail!(step, "single-crossing-per-step", "{} crossings from {} pours", report.crossings, poured);
        }
        if let Some((a, b)) = self.delta_parts {
            let gain = 2 * b * report.surplus as i128 - a;
            let m = gain + self.witness_margin.map_or(0, |m| m.max(0));
            self.witness_margin = Some(m);
            if !th.counter_sum().is_zero() && m < 0 {
                fail!(step, "backlog-witness", "counter sum {} with no height-0 witness", th.counter_sum());
            }
        }
        Ok(())
    }

    fn check_smoothed(
        &self,
        state: &GameState,
        touched: &[CupId],
        sg: &crate::emptiers::SmoothedGreedy,
    ) -> Result<(), InvariantViolation> {
        let step = state.step();
        let one = state.config().resolution.units();
        let flushing = state.config().variant.is_flushing();
        let ids: Vec<CupId> = match self.level {
            VerifyLevel::Full => state.cups().iter().map(|c| c.id).collect(),
            _ => touched.to_vec(),
        };
        for id in ids {
            let Some(cup) = state.cup(id) else { continue };
            let r = sg.offset(id);
            let v = sg.virtual_fill(id);
            let f = cup.fill.units();
            if !flushing && v.rem(one) != (r + cup.poured.units()).rem(one) {
                fail!(step, "mod-one", "cup {id}: virtual fill {v}, offset {r}, poured {}", cup.poured);
            }
            if v < f || v > &(f + r) {
                fail!(step, "virtual-fill-offset", "cup {id}: virtual fill {v}, fill {f}, offset {r}");
            }
        }
        Ok(())
    }
}

fn touched_cups(filler_move: &FillerMove, outcome: &StepOutcome) -> Vec<CupId> {
    let mut ids: Vec<CupId> = filler_move
        .pours
        .iter()
        .chain(&filler_move.new_cups)
        .chain(&outcome.emptier_move.removals)
        .map(|(id, _)| *id)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

fn check_filler_move(state: &GameState, mv: &FillerMove) -> Result<(), InvariantViolation> {
    let step = state.step();
    let rules = state.rules();
    let all = mv.all_pours();
    for w in all.windows(2) {
        if w[0].0 >= w[1].0 {
            fail!(step, "move-validity", "filler pours into cup {} twice", w[1].0);
        }
    }
    let mut total = Units::ZERO;
    for (id, amt) in &all {
        let u = amt.units();
        if u.is_zero() || !u.is_even() {
            fail!(step, "move-validity", "filler pour {u} into cup {id} is not a positive even unit count");
        }
        if let Some(cap) = &rules.pour_cap {
            if u > cap {
                fail!(step, "move-validity", "filler pour {u} into cup {id} exceeds cap {cap}");
            }
        }
        total += u;
    }
    if total > rules.pour_budget {
        fail!(step, "move-validity", "filler poured {total}, budget {}", rules.pour_budget);
    }
    if !state.config().variant.is_dynamic() && !mv.new_cups.is_empty() {
        fail!(step, "move-validity", "new cups in a static game");
    }
    Ok(())
}

fn check_emptier_move(state: &GameState, outcome: &StepOutcome) -> Result<(), InvariantViolation> {
    let step = state.step();
    let rules = state.rules();
    let removals = &outcome.emptier_move.removals;
    if removals.len() as u64 > rules.max_emptied_cups {
        fail!(step, "move-validity", "emptier touched {} cups, limit {}", removals.len(), rules.max_emptied_cups);
    }
    for w in removals.windows(2) {
        if w[0].0 >= w[1].0 {
            fail!(step, "move-validity", "emptier removes from cup {} twice", w[1].0);
        }
    }
    let flushing = state.config().variant.is_flushing();
    for (id, amt) in removals {
        if amt.is_zero() {
            fail!(step, "move-validity", "zero removal from cup {id}");
        }
        if let Some(cap) = &rules.removal_cap {
            if amt.units() > cap {
                fail!(step, "move-validity", "removal {} from cup {id} exceeds cap {cap}", amt.units());
            }
        }
        let after = state.fill(*id);
        if flushing && !after.is_zero() {
            fail!(step, "move-validity", "cup {id} flushed but still holds {}", after.units());
        }
    }
    Ok(())
}

fn check_active_set(state: &GameState) -> Result<(), InvariantViolation> {
    if !state.config().variant.is_dynamic() {
        return Ok(());
    }
    for w in state.cups().windows(2) {
        if w[0].id >= w[1].id {
            fail!(state.step(), "dynamic-active-set", "cup ids out of order at {}", w[1].id);
        }
    }
    if let Some(c) = state.cups().iter().find(|c| c.fill.is_zero()) {
        fail!(state.step(), "dynamic-active-set", "empty cup {} still in play", c.id);
    }
    if let Some(c) = state.cups().last() {
        if c.id.0 >= state.next_id() {
            fail!(state.step(), "dynamic-active-set", "cup {} not below next id {}", c.id, state.next_id());
        }
    }
    Ok(())
}

fn check_harmonic(state: &GameState, hb: &mut HarmonicBound) -> Result<(), InvariantViolation> {
    let n = state.cups().len() as u64;
    if n == 0 {
        return Ok(());
    }
    let mut fills: Vec<&Units> = state.cups().iter().map(|c| c.fill.units()).collect();
    fills.sort_unstable_by(|a, b| b.cmp(a));
    let mut sum = Units::ZERO;
    let mut taken = 0usize;
    for j in harmonic_check_points(n) {
        while taken < j as usize {
            sum += fills[taken];
            taken += 1;
        }
        let limit = hb.limit(j, n);
        if sum > limit {
            fail!(state.step(), "harmonic-average-bound", "top {j} of {n} cups hold {sum} units, bound {limit}");
        }
    }
    Ok(())
}

/// Whether the step removed exactly one unit from each of `p` cups, in a
/// variant where greedy's potential argument applies.
fn is_case_1(state: &GameState, outcome: &StepOutcome) -> bool {
    let variant = state.config().variant;
    if variant.is_flushing() || variant == GameVariant::RenormalizedMulti {
        return false;
    }
    let one = state.config().resolution.units();
    let removals = &outcome.emptier_move.removals;
    removals.len() as u64 == state.config().p && removals.iter().all(|(_, a)| a.units() == one)
}

fn check_potential_case_1(
    state: &GameState,
    filler_move: &FillerMove,
    outcome: &StepOutcome,
) -> Result<(), InvariantViolation> {
    if !is_case_1(state, outcome) {
        return Ok(());
    }
    let cfg = state.config();
    let d = &cfg.resolution;
    let pours = filler_move.all_pours();
    let removals = &outcome.emptier_move.removals;
    let mut before = crate::rational::Rational::zero();
    let mut after = crate::rational::Rational::zero();
    for id in touched_cups(filler_move, outcome) {
        let now = state.fill(id).into_units();
        let poured = pours.iter().find(|(c, _)| *c == id).map(|(_, a)| a.units().clone()).unwrap_or_default();
        let removed = removals.iter().find(|(c, _)| *c == id).map(|(_, a)| a.units().clone()).unwrap_or_default();
        let prev = (&now + &removed).checked_sub(&poured).unwrap_or_default();
        before = before + phi_of_fill(&prev, &cfg.epsilon, d);
        after = after + phi_of_fill(&now, &cfg.epsilon, d);
    }
    if after > before {
        fail!(
            state.step(),
            "potential-case-1",
            "potential over touched cups rose from {} to {}",
            before.to_decimal_string(12),
            after.to_decimal_string(12)
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GameConfig;
    use crate::emptiers::{Fault, Greedy, NullEmptier, SmoothedGreedy, ThresholdCounter, TieRule};
    use crate::game::new_game;
    use crate::metrics::backlog_witness_exists;
    use crate::rational::Rational;
    use crate::thresholds::{CounterInit, OffsetSource};
    use crate::water::{Resolution, WaterAmount};
    use alloc::vec;
    use proptest::prelude::*;

    fn cfg(variant: GameVariant, n: u64, p: u64, eps: &str, delta: &str, d: u64) -> GameConfig {
        GameConfig {
            variant,
            n,
            p,
            epsilon: eps.parse().unwrap(),
            delta: delta.parse().unwrap(),
            resolution: Resolution::from_u64(d).unwrap(),
            seed: 7,
        }
    }

    fn pour(pairs: &[(u64, u64)]) -> FillerMove {
        FillerMove::from_pours(pairs.iter().map(|&(c, u)| (CupId(c), WaterAmount::from_u64(u))).collect())
    }

    #[test]
    fn greedy_single_passes() {
        let c = cfg(GameVariant::SingleProcessor, 4, 1, "1/4", "1/2", 8);
        let mut g = new_game(&c, &[]).unwrap();
        let mut e = Greedy::new();
        let mut v = Verifier::new(VerifyLevel::Full, &g);
        for i in 0..50u64 {
            let mv = pour(&[(i % 4, 2), ((i + 1) % 4, 4)]);
            let out = g.advance(&mv, &mut e).unwrap();
            v.check_step(&g, &mv, &out, &e).unwrap();
        }
    }

    #[test]
    fn tampered_fill_breaks_conservation() {
        let c = cfg(GameVariant::SingleProcessor, 2, 1, "1/4", "1/2", 8);
        let mut g = new_game(&c, &[]).unwrap();
        let mut e = NullEmptier;
        let mut v = Verifier::new(VerifyLevel::Invariants, &g);
        let mv = pour(&[(0, 4)]);
        let out = g.advance(&mv, &mut e).unwrap();
        v.check_step(&g, &mv, &out, &e).unwrap();
        g.set_fill_unchecked(CupId(1), WaterAmount::from_u64(2));
        let out = g.advance(&FillerMove::empty(), &mut e).unwrap();
        let err = v.check_step(&g, &FillerMove::empty(), &out, &e).unwrap_err();
        assert_eq!(err.invariant, "water-conservation");
        assert_eq!(err.step, 2);
    }

    #[test]
    fn off_level_checks_nothing() {
        let c = cfg(GameVariant::SingleProcessor, 2, 1, "1/4", "1/2", 8);
        let mut g = new_game(&c, &[]).unwrap();
        let mut e = NullEmptier;
        let mut v = Verifier::new(VerifyLevel::Off, &g);
        g.set_fill_unchecked(CupId(1), WaterAmount::from_u64(2));
        let out = g.advance(&FillerMove::empty(), &mut e).unwrap();
        assert!(v.check_step(&g, &FillerMove::empty(), &out, &e).is_ok());
    }

    #[test]
    fn kept_counters_are_caught() {
        let c = cfg(GameVariant::RenormalizedMulti, 4, 1, "1/4", "1/2", 8);
        let mut g = new_game(&c, &[]).unwrap();
        let mut e = ThresholdCounter::with_source(
            &g,
            OffsetSource::Fixed(Units::from_u64(1)),
            TieRule::Arbitrary,
            CounterInit::Scaled,
        )
        .unwrap()
        .with_fault(Fault::KeepCounters);
        let mut v = Verifier::new(VerifyLevel::Full, &g);
        let mut seen = None;
        for i in 0..40u64 {
            let mv = pour(&[(i % 4, 6)]);
            match g.advance(&mv, &mut e) {
                Ok(out) => {
                    if let Err(err) = v.check_step(&g, &mv, &out, &e) {
                        seen = Some(err.invariant);
                        break;
                    }
                }
                Err(crate::game::GameError::Invariant(err)) => {
                    seen = Some(err.invariant);
                    break;
                }
                Err(other) => panic!("{other}"),
            }
        }
        assert_eq!(seen, Some("counter-sandwich"));
    }

    #[test]
    fn threshold_counter_passes_full() {
        let c = cfg(GameVariant::RenormalizedMulti, 6, 2, "1/4", "1/4", 16);
        let mut g = new_game(&c, &[]).unwrap();
        let mut e = ThresholdCounter::new(&g, 3, 0, TieRule::Arbitrary, CounterInit::Scaled).unwrap();
        let mut v = Verifier::new(VerifyLevel::Full, &g);
        for i in 0..300u64 {
            let mv = pour(&[(i % 6, 8), ((i * 7 + 1) % 6, 8), ((i * 5 + 2) % 6, 6)]);
            let out = g.advance(&mv, &mut e).unwrap();
            v.check_step(&g, &mv, &out, &e).unwrap();
        }
    }

    #[test]
    fn smoothed_passes_and_detects_tampering() {
        let c = cfg(GameVariant::SingleProcessor, 3, 1, "1/4", "1/2", 40);
        let mut g = new_game(&c, &[]).unwrap();
        let mut e = SmoothedGreedy::new(&g, 11, 0);
        let mut v = Verifier::new(VerifyLevel::Full, &g);
        for i in 0..100u64 {
            let mv = pour(&[(i % 3, 14), ((i + 1) % 3, 16)]);
            let out = g.advance(&mv, &mut e).unwrap();
            v.check_step(&g, &mv, &out, &e).unwrap();
        }
        let before = g.fill(CupId(0)).into_units();
        g.set_fill_unchecked(CupId(0), WaterAmount::from_units(&before + &Units::from_u64(40)));
        let mut v = Verifier::new(VerifyLevel::Full, &g);
        let out = g.advance(&FillerMove::empty(), &mut e).unwrap();
        let err = v.check_step(&g, &FillerMove::empty(), &out, &e).unwrap_err();
        assert!(err.invariant == "mod-one" || err.invariant == "virtual-fill-offset", "{err}");
    }

    #[test]
    fn dynamic_greedy_meets_harmonic_bound() {
        let c = cfg(GameVariant::DynamicSingle, 8, 1, "1/8", "1/2", 16);
        let init: Vec<_> = (0..8).map(|i| (CupId(i), WaterAmount::from_u64(2))).collect();
        let mut g = new_game(&c, &init).unwrap();
        let mut e = Greedy::new();
        let mut v = Verifier::new(VerifyLevel::Invariants, &g);
        for _ in 0..30 {
            let live: Vec<u64> = g.cups().iter().map(|c| c.id.0).collect();
            let share = (14 / live.len().max(1) as u64) & !1;
            let mut mv = if share == 0 {
                pour(&[(live[0], 2)])
            } else {
                pour(&live.iter().map(|&i| (i, share)).collect::<Vec<_>>())
            };
            if live.len() < 4 {
                let id = g.next_id();
                mv.new_cups.push((CupId(id), WaterAmount::from_u64(2)));
            }
            let out = g.advance(&mv, &mut e).unwrap();
            v.check_step(&g, &mv, &out, &e).unwrap();
        }
    }

    #[test]
    fn harmonic_bound_flags_overfull_cup() {
        let c = cfg(GameVariant::DynamicSingle, 2, 1, "1/8", "1/2", 16);
        let init = vec![(CupId(0), WaterAmount::from_u64(2)), (CupId(1), WaterAmount::from_u64(2))];
        let mut g = new_game(&c, &init).unwrap();
        let mut e = Greedy::new();
        let mut v = Verifier::new(VerifyLevel::Invariants, &g);
        g.set_fill_unchecked(CupId(1), WaterAmount::from_u64(60));
        v.total = g.total_fill().into_units();
        let out = g.advance(&FillerMove::empty(), &mut e).unwrap();
        let err = v.check_step(&g, &FillerMove::empty(), &out, &e).unwrap_err();
        assert_eq!(err.invariant, "harmonic-average-bound");
    }

    #[test]
    fn potential_case_1_multi_greedy() {
        let c = cfg(GameVariant::MultiProcessor, 8, 2, "1/4", "1/4", 16);
        let init: Vec<_> = (0..8).map(|i| (CupId(i), WaterAmount::from_u64(16 + 2 * i))).collect();
        let mut g = new_game(&c, &init).unwrap();
        let mut e = Greedy::new();
        let mut v = Verifier::new(VerifyLevel::Invariants, &g);
        let mut case_1 = 0;
        for i in 0..200u64 {
            let mv = pour(&[(i % 8, 12), ((i + 3) % 8, 12)]);
            let out = g.advance(&mv, &mut e).unwrap();
            case_1 += u64::from(is_case_1(&g, &out));
            v.check_step(&g, &mv, &out, &e).unwrap();
        }
        assert!(case_1 > 0);
    }

    #[test]
    fn rejects_unknown_level() {
        assert_eq!("full".parse::<VerifyLevel>().unwrap(), VerifyLevel::Full);
        assert!("fast".parse::<VerifyLevel>().is_err());
    }

    proptest! {
        #[test]
        fn incremental_witness_matches_scan(surplus in proptest::collection::vec(0u64..3, 1..60), a in 1i128..4, b in 4i128..9) {
            let delta = Rational::new(a as i64, b as i64).unwrap();
            let mut m: Option<i128> = None;
            for i in 0..surplus.len() {
                let gain = 2 * b * surplus[i] as i128 - a;
                let next = gain + m.map_or(0, |x| x.max(0));
                m = Some(next);
                let scan = backlog_witness_exists(&surplus[..=i], &Rational::zero(), &delta);
                prop_assert_eq!(next >= 0, scan.is_some());
            }
        }
    }
}
