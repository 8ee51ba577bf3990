//! Filler strategies.
//!
//! A filler sees a [`FillerView`] each step. Oblivious fillers get no game
//! state and are never shown the emptier's moves; adaptive fillers get the
//! full state and an [`Filler::observe`] callback after each step.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::config::{GameConfig, GameVariant, Rules};
use crate::emptiers::Emptier;
use crate::game::{CupId, EmptierMove, FillerMove, GameState};
use crate::rng::{labels, RngStream};
use crate::units::Units;
use crate::water::WaterAmount;

/// What a filler is allowed to see.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InformationModel {
    /// Only its own history and randomness.
    Oblivious,
    /// The full game state, including the emptier's past moves.
    Adaptive,
}

/// The filler's view of the current step.
#[derive(Clone, Copy, Debug)]
pub struct FillerView<'a> {
    /// The step about to be played, counting from 1.
    pub step: u64,
    pub config: &'a GameConfig,
    pub rules: &'a Rules,
    /// The smallest id a new cup may take.
    pub next_id: u64,
    /// Present only for adaptive fillers.
    pub state: Option<&'a GameState>,
}

/// Errors raised by filler strategies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FillerError {
    /// An equal split over `cups` cups is not an even number of units.
    NonRepresentable {
        cups: u64,
    },
    Setup(String),
}

impl fmt::Display for FillerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FillerError::NonRepresentable { cups } => {
                write!(f, "equal split over {cups} cups is not a whole even number of units; choose a larger D")
            }
            FillerError::Setup(s) => write!(f, "filler setup failed: {s}"),
        }
    }
}

/// A strategy for the filler.
pub trait Filler {
    fn name(&self) -> &'static str;

    fn information_model(&self) -> InformationModel;

    fn next_move(&mut self, view: &FillerView<'_>) -> Result<FillerMove, FillerError>;

    /// Called after each step; the harness only calls it for adaptive fillers.
    fn observe(&mut self, _state: &GameState, _emptier_move: &EmptierMove) {}
}

fn even_floor(u: Units) -> Units {
    if u.is_odd() {
        u.checked_sub(&Units::from_u64(1)).expect("odd is positive")
    } else {
        u
    }
}

fn amount(u: Units) -> WaterAmount {
    WaterAmount::from_units(u)
}

/// Split `budget` equally over `cups` cups, exactly. The share is capped
/// when it would exceed `cap`.
fn exact_share(budget: &Units, cups: u64, cap: Option<&Units>) -> Result<Units, FillerError> {
    match budget.exact_div_u64(cups) {
        Some(s) if s.is_even() => Ok(match cap {
            Some(c) if &s > c => c.clone(),
            _ => s,
        }),
        Some(s) if cap.is_some_and(|c| &s > c) => Ok(cap.expect("checked").clone()),
        None if cap.is_some_and(|c| budget.div_floor(&Units::from_u64(cups)) >= *c) => {
            Ok(cap.expect("checked").clone())
        }
        _ => Err(FillerError::NonRepresentable { cups }),
    }
}

/// Split a move into pours on existing cups and new cups by comparing ids
/// with `next_id`.
fn split_new(pours: Vec<(CupId, WaterAmount)>, next_id: u64) -> FillerMove {
    let mut mv = FillerMove::from_pours(pours);
    if let Some(at) = mv.pours.iter().position(|(id, _)| id.0 >= next_id) {
        mv.new_cups = mv.pours.split_off(at);
    }
    mv
}

/// The adaptive lower-bound filler.
///
/// In the universal-emptying game it spreads the whole budget equally over
/// the cups that have never been emptied, keeping at most `n - p(i - 1)` of
/// them at step `i`, and stops after step `n/p - 1`. Some cup then holds at
/// least `(p/2)(1/n + 1/(n - p) + ... + 1/(2p))`, against any emptier.
///
/// In the other variants it plays the same idea as a stress pattern: the
/// budget goes equally (rounded down to even units, capped per cup) over
/// the untouched cups, and a fresh round starts once every cup has been
/// touched. Dynamic games start rounds on brand-new cups.
#[derive(Clone, Debug)]
pub struct AdaptiveHarmonic {
    untouched: Vec<CupId>,
    started: bool,
}

impl AdaptiveHarmonic {
    pub fn new() -> Self {
        AdaptiveHarmonic { untouched: Vec::new(), started: false }
    }

    /// Cups the filler is still pouring into: never emptied, and in the
    /// universal game within the current target size.
    pub fn untouched(&self) -> &[CupId] {
        &self.untouched
    }

    fn universal_move(&mut self, view: &FillerView<'_>) -> Result<FillerMove, FillerError> {
        let (n, p) = (view.config.n, view.config.p);
        if view.step + 1 > n / p {
            return Ok(FillerMove::empty());
        }
        let size = n - p * (view.step - 1);
        self.untouched.truncate(size as usize);
        let share = exact_share(&view.rules.pour_budget, self.untouched.len() as u64, None)?;
        Ok(FillerMove::from_pours(self.untouched.iter().map(|&id| (id, amount(share.clone()))).collect()))
    }

    fn stress_move(&mut self, view: &FillerView<'_>) -> FillerMove {
        let budget = &view.rules.pour_budget;
        if budget.is_zero() {
            return FillerMove::empty();
        }
        let dynamic = view.config.variant.is_dynamic();
        if self.untouched.is_empty() {
            if dynamic {
                let fresh = view.config.n.min(budget.half().to_u64().unwrap_or(u64::MAX));
                self.untouched = (view.next_id..view.next_id + fresh).map(CupId).collect();
            } else {
                self.untouched = (0..view.config.n).map(CupId).collect();
            }
        }
        let k = self.untouched.len() as u64;
        let mut share = even_floor(budget.div_floor(&Units::from_u64(k)));
        if let Some(cap) = &view.rules.pour_cap {
            if &share > cap {
                share = cap.clone();
            }
        }
        let pours: Vec<(CupId, WaterAmount)> = if share.is_zero() {
            let m = budget.half().to_u64().unwrap_or(u64::MAX).min(k) as usize;
            self.untouched[..m].iter().map(|&id| (id, WaterAmount::from_u64(2))).collect()
        } else {
            self.untouched.iter().map(|&id| (id, amount(share.clone()))).collect()
        };
        split_new(pours, view.next_id)
    }
}

impl Default for AdaptiveHarmonic {
    fn default() -> Self {
        Self::new()
    }
}

impl Filler for AdaptiveHarmonic {
    fn name(&self) -> &'static str {
        "adaptive_harmonic"
    }

    fn information_model(&self) -> InformationModel {
        InformationModel::Adaptive
    }

    fn next_move(&mut self, view: &FillerView<'_>) -> Result<FillerMove, FillerError> {
        if !self.started {
            self.started = true;
            if !view.config.variant.is_dynamic() {
                self.untouched = (0..view.config.n).map(CupId).collect();
            } else if let Some(state) = view.state {
                self.untouched = state.cups().iter().map(|c| c.id).collect();
            }
        }
        if view.config.variant == GameVariant::UniversalEmptying {
            self.universal_move(view)
        } else {
            Ok(self.stress_move(view))
        }
    }

    fn observe(&mut self, state: &GameState, emptier_move: &EmptierMove) {
        let emptied: BTreeSet<CupId> = emptier_move.removals.iter().map(|(id, _)| *id).collect();
        let dynamic = state.config().variant.is_dynamic();
        self.untouched.retain(|id| !emptied.contains(id) && (!dynamic || state.cup(*id).is_some()));
    }
}

/// The oblivious lower-bound filler: plays the adaptive construction on
/// cups `0..k`, replacing each observation with a uniformly random guess of
/// which `p` candidates the emptier flushed.
#[derive(Clone, Debug)]
pub struct ObliviousGuessing {
    k: u64,
    candidates: Vec<CupId>,
    rng: RngStream,
    guesses: Vec<Vec<CupId>>,
}

impl ObliviousGuessing {
    pub fn new(k: u64, seed: u64, trial: u64) -> Self {
        ObliviousGuessing {
            k,
            candidates: (0..k).map(CupId).collect(),
            rng: RngStream::new(seed, labels::FILLER, &[trial]),
            guesses: Vec::new(),
        }
    }

    /// The guessed sets so far, one per step.
    pub fn guesses(&self) -> &[Vec<CupId>] {
        &self.guesses
    }

    pub fn candidates(&self) -> &[CupId] {
        &self.candidates
    }
}

impl Filler for ObliviousGuessing {
    fn name(&self) -> &'static str {
        "oblivious_guessing"
    }

    fn information_model(&self) -> InformationModel {
        InformationModel::Oblivious
    }

    fn next_move(&mut self, view: &FillerView<'_>) -> Result<FillerMove, FillerError> {
        let p = view.config.p;
        if view.step + 1 > self.k / p || self.candidates.is_empty() {
            return Ok(FillerMove::empty());
        }
        let share = exact_share(&view.rules.pour_budget, self.candidates.len() as u64, view.rules.pour_cap.as_ref())?;
        let mv = FillerMove::from_pours(self.candidates.iter().map(|&id| (id, amount(share.clone()))).collect());
        let len = self.candidates.len();
        let take = (p as usize).min(len);
        for i in 0..take {
            let j = i + self.rng.below_u64((len - i) as u64) as usize;
            self.candidates.swap(i, j);
        }
        let mut guess: Vec<CupId> = self.candidates.drain(..take).collect();
        guess.sort_unstable();
        self.candidates.sort_unstable();
        self.guesses.push(guess);
        Ok(mv)
    }
}

/// Spreads the whole budget at random, in even-unit grains, over cups with
/// room under the per-cup cap.
///
/// In dynamic games the cup universe is the cups present plus enough fresh
/// ids to make `n`; a grain landing on a fresh id creates that cup.
#[derive(Clone, Debug)]
pub struct UniformRandom {
    rng: RngStream,
    dynamic: bool,
}

impl UniformRandom {
    pub fn new(seed: u64, trial: u64, variant: GameVariant) -> Self {
        UniformRandom { rng: RngStream::new(seed, labels::FILLER, &[trial]), dynamic: variant.is_dynamic() }
    }
}

impl Filler for UniformRandom {
    fn name(&self) -> &'static str {
        "uniform_random"
    }

    fn information_model(&self) -> InformationModel {
        if self.dynamic {
            InformationModel::Adaptive
        } else {
            InformationModel::Oblivious
        }
    }

    fn next_move(&mut self, view: &FillerView<'_>) -> Result<FillerMove, FillerError> {
        let budget = view.rules.pour_budget.to_u64().ok_or_else(|| FillerError::Setup("budget too large".into()))?;
        if budget == 0 {
            return Ok(FillerMove::empty());
        }
        let cap = match &view.rules.pour_cap {
            Some(c) => c.to_u64().ok_or_else(|| FillerError::Setup("cap too large".into()))?,
            None => budget,
        };
        let mut universe: Vec<CupId> = match (self.dynamic, view.state) {
            (true, Some(state)) => state.cups().iter().map(|c| c.id).collect(),
            (true, None) => return Err(FillerError::Setup("dynamic uniform filler needs the game state".into())),
            (false, _) => (0..view.config.n).map(CupId).collect(),
        };
        if self.dynamic {
            let fresh = view.config.n.saturating_sub(universe.len() as u64);
            universe.extend((view.next_id..view.next_id + fresh).map(CupId));
        }
        if universe.is_empty() {
            return Ok(FillerMove::empty());
        }
        let grains = 4u64.max(2 * budget.div_ceil(cap.max(1)));
        let grain = ((budget / grains) & !1).max(2);
        let mut poured = alloc::vec![0u64; universe.len()];
        let mut left = budget;
        while left > 0 {
            let size = if left < 2 * grain { left } else { grain };
            let mut chosen = None;
            for _ in 0..8 {
                let i = self.rng.below_u64(universe.len() as u64) as usize;
                if poured[i] + size <= cap {
                    chosen = Some((i, size));
                    break;
                }
            }
            if chosen.is_none() {
                let start = self.rng.below_u64(universe.len() as u64) as usize;
                for off in 0..universe.len() {
                    let i = (start + off) % universe.len();
                    let room = (cap - poured[i]) & !1;
                    if room > 0 {
                        chosen = Some((i, size.min(room)));
                        break;
                    }
                }
            }
            let Some((i, s)) = chosen else { break };
            poured[i] += s;
            left -= s;
        }
        let pours = universe
            .into_iter()
            .zip(poured)
            .filter(|(_, u)| *u > 0)
            .map(|(id, u)| (id, WaterAmount::from_u64(u)))
            .collect();
        Ok(split_new(pours, view.next_id))
    }
}

/// Pours as much as allowed into one cup every step.
#[derive(Clone, Copy, Debug)]
pub struct SingleTarget {
    pub cup: CupId,
}

impl Filler for SingleTarget {
    fn name(&self) -> &'static str {
        "single_target"
    }

    fn information_model(&self) -> InformationModel {
        InformationModel::Oblivious
    }

    fn next_move(&mut self, view: &FillerView<'_>) -> Result<FillerMove, FillerError> {
        let mut a = view.rules.pour_budget.clone();
        if let Some(cap) = &view.rules.pour_cap {
            if &a > cap {
                a = cap.clone();
            }
        }
        Ok(FillerMove::from_pours(alloc::vec![(self.cup, amount(a))]))
    }
}

/// Spreads the budget equally over a window of consecutive cups that
/// rotates by its own width every step.
#[derive(Clone, Copy, Debug, Default)]
pub struct RoundRobin {
    next: u64,
}

impl RoundRobin {
    pub fn new() -> Self {
        RoundRobin { next: 0 }
    }
}

impl Filler for RoundRobin {
    fn name(&self) -> &'static str {
        "round_robin"
    }

    fn information_model(&self) -> InformationModel {
        InformationModel::Oblivious
    }

    fn next_move(&mut self, view: &FillerView<'_>) -> Result<FillerMove, FillerError> {
        let budget = &view.rules.pour_budget;
        let n = view.config.n;
        let width = match &view.rules.pour_cap {
            Some(cap) if !cap.is_zero() => {
                let (q, r) = budget.div_rem(cap);
                q.to_u64().unwrap_or(n).saturating_add(u64::from(!r.is_zero()))
            }
            _ => 1,
        }
        .clamp(1, n);
        let mut share = even_floor(budget.div_floor(&Units::from_u64(width)));
        if let Some(cap) = &view.rules.pour_cap {
            if &share > cap {
                share = cap.clone();
            }
        }
        if share.is_zero() {
            return Ok(FillerMove::empty());
        }
        let pours = (0..width).map(|k| (CupId((self.next + k) % n), amount(share.clone()))).collect();
        self.next = (self.next + width) % n;
        Ok(FillerMove::from_pours(pours))
    }
}

/// Replays recorded moves; ids at or above the next free id become new
/// cups. Steps past the end of the trace pour nothing.
#[derive(Clone, Debug)]
pub struct Trace {
    moves: Vec<FillerMove>,
}

impl Trace {
    pub fn new(moves: Vec<FillerMove>) -> Self {
        Trace { moves }
    }

    pub fn moves(&self) -> &[FillerMove] {
        &self.moves
    }
}

impl Filler for Trace {
    fn name(&self) -> &'static str {
        "trace"
    }

    fn information_model(&self) -> InformationModel {
        InformationModel::Oblivious
    }

    fn next_move(&mut self, view: &FillerView<'_>) -> Result<FillerMove, FillerError> {
        let Some(mv) = self.moves.get(view.step as usize - 1) else {
            return Ok(FillerMove::empty());
        };
        Ok(split_new(mv.all_pours(), view.next_id))
    }
}

/// An oblivious filler that runs an adaptive filler against a private copy
/// of a known deterministic emptier and emits the resulting moves.
///
/// Nothing about the real game is observed: the private game is advanced
/// with the filler's own moves, which is enough because a deterministic
/// emptier's answers are a function of them.
pub struct SimulatedAdaptive {
    shadow: GameState,
    emptier: Box<dyn Emptier>,
    inner: Box<dyn Filler>,
}

impl SimulatedAdaptive {
    /// `shadow` must start from the same position as the real game.
    pub fn new(shadow: GameState, emptier: Box<dyn Emptier>, inner: Box<dyn Filler>) -> Result<Self, FillerError> {
        if emptier.is_randomized() {
            return Err(FillerError::Setup(alloc::format!(
                "cannot pre-simulate the randomized emptier {}",
                emptier.name()
            )));
        }
        Ok(SimulatedAdaptive { shadow, emptier, inner })
    }

    /// Generate the first `steps` moves as a fixed trace.
    pub fn precompute(mut self, steps: u64) -> Result<Vec<FillerMove>, FillerError> {
        let cfg = self.shadow.config().clone();
        let rules = self.shadow.rules().clone();
        let mut out = Vec::with_capacity(steps as usize);
        for step in 1..=steps {
            let view = FillerView { step, config: &cfg, rules: &rules, next_id: self.shadow.next_id(), state: None };
            out.push(self.next_move(&view)?);
        }
        Ok(out)
    }
}

impl fmt::Debug for SimulatedAdaptive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimulatedAdaptive")
            .field("emptier", &self.emptier.name())
            .field("inner", &self.inner.name())
            .field("step", &self.shadow.step())
            .finish()
    }
}

impl Filler for SimulatedAdaptive {
    fn name(&self) -> &'static str {
        "simulated_adaptive"
    }

    fn information_model(&self) -> InformationModel {
        InformationModel::Oblivious
    }

    fn next_move(&mut self, view: &FillerView<'_>) -> Result<FillerMove, FillerError> {
        let cfg = self.shadow.config().clone();
        let rules = self.shadow.rules().clone();
        let inner_view = FillerView {
            step: self.shadow.step() + 1,
            config: &cfg,
            rules: &rules,
            next_id: self.shadow.next_id(),
            state: Some(&self.shadow),
        };
        let mv = self.inner.next_move(&inner_view)?;
        let outcome = self
            .shadow
            .advance(&mv, self.emptier.as_mut())
            .map_err(|e| FillerError::Setup(alloc::format!("private simulation failed: {e}")))?;
        self.inner.observe(&self.shadow, &outcome.emptier_move);
        Ok(split_new(mv.all_pours(), view.next_id))
    }
}

/// Pours nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroFiller;

impl Filler for ZeroFiller {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn information_model(&self) -> InformationModel {
        InformationModel::Oblivious
    }

    fn next_move(&mut self, _view: &FillerView<'_>) -> Result<FillerMove, FillerError> {
        Ok(FillerMove::empty())
    }
}

/// The guaranteed fill `(p/2)(1/n + 1/(n - p) + ... + 1/(2p))` of the
/// adaptive lower-bound filler after step `n/p - 1`, exactly.
pub fn harmonic_lower_bound(n: u64, p: u64) -> crate::rational::Rational {
    let half_p = crate::rational::Rational::new(p as i64, 2).expect("nonzero");
    let mut sum = crate::rational::Rational::zero();
    let mut size = n;
    while size >= 2 * p {
        sum = sum + crate::rational::Rational::new(1, size as i64).expect("nonzero");
        size -= p;
    }
    &half_p * &sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::minimal_resolution;
    use crate::config::Requirements;
    use crate::emptiers::{Greedy, SmoothedGreedy};
    use crate::game::new_game;
    use crate::rational::Rational;
    use crate::water::Resolution;
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
            seed: 5,
        }
    }

    fn universal(n: u64, p: u64) -> GameConfig {
        let sizes: Vec<u64> = (0..n / p).map(|k| n - k * p).collect();
        let req = Requirements { equal_split_sizes: sizes, ..Requirements::default() };
        let zero = Rational::zero();
        let d = minimal_resolution(GameVariant::UniversalEmptying, n, p, &zero, &zero, &req);
        GameConfig {
            variant: GameVariant::UniversalEmptying,
            n,
            p,
            epsilon: zero.clone(),
            delta: zero,
            resolution: d,
            seed: 5,
        }
    }

    /// Play `filler` against `emptier` for `steps` steps.
    fn play(
        c: &GameConfig,
        filler: &mut dyn Filler,
        emptier: &mut dyn Emptier,
        steps: u64,
    ) -> (GameState, Vec<FillerMove>) {
        let mut g = new_game(c, &[]).unwrap();
        let rules = g.rules().clone();
        let mut moves = Vec::new();
        for step in 1..=steps {
            let adaptive = filler.information_model() == InformationModel::Adaptive;
            let view =
                FillerView { step, config: c, rules: &rules, next_id: g.next_id(), state: adaptive.then_some(&g) };
            let mv = filler.next_move(&view).unwrap();
            let out = g.advance(&mv, emptier).unwrap();
            if adaptive {
                filler.observe(&g, &out.emptier_move);
            }
            moves.push(mv);
        }
        (g, moves)
    }

    fn fill_of(g: &GameState, id: u64) -> Rational {
        g.fill(CupId(id)).to_rational(&g.config().resolution)
    }

    /// Independent evaluation of the guaranteed fill by summing the
    /// per-step shares `(p/2) / (n - mp)` in rationals.
    fn oracle(n: u64, p: u64) -> Rational {
        (0..n / p - 1).map(|m| Rational::new(p as i64, 2 * (n - m * p) as i64).unwrap()).sum()
    }

    #[test]
    fn harmonic_first_steps() {
        let c = universal(8, 2);
        let mut f = AdaptiveHarmonic::new();
        let (g, moves) = play(&c, &mut f, &mut Greedy::new(), 1);
        let eighth = Rational::new(1, 8).unwrap();
        assert_eq!(moves[0].pours.len(), 8);
        assert!(moves[0].pours.iter().all(|(_, a)| a.to_rational(&c.resolution) == eighth));
        assert_eq!(g.cups().iter().filter(|c| c.fill.is_zero()).count(), 2);
    }

    #[test]
    fn harmonic_n8_p2_reaches_13_24() {
        let c = universal(8, 2);
        let mut f = AdaptiveHarmonic::new();
        let (g, moves) = play(&c, &mut f, &mut crate::emptiers::NullEmptier, 5);
        // the null emptier leaves all 8 cups untouched; the filler keeps the first 4
        let expect = Rational::new(13, 24).unwrap();
        assert_eq!(fill_of(&g, 0), expect);
        assert!(moves[3].is_empty() && moves[4].is_empty());
        let (g, _) = play(&c, &mut AdaptiveHarmonic::new(), &mut Greedy::new(), 3);
        let max = g.backlog().to_rational(&c.resolution);
        assert_eq!(max, expect);
        assert_eq!(oracle(8, 2), expect);
        assert_eq!(harmonic_lower_bound(8, 2), expect);
    }

    #[test]
    fn harmonic_bound_against_greedy_n64_p1() {
        let c = universal(64, 1);
        let (g, _) = play(&c, &mut AdaptiveHarmonic::new(), &mut Greedy::new(), 63);
        let bound: Rational = (2..=64).map(|j| Rational::new(1, 2 * j).unwrap()).sum();
        assert!(g.backlog().to_rational(&c.resolution) >= bound);
        assert_eq!(harmonic_lower_bound(64, 1), bound);
    }

    #[test]
    fn non_representable_split_is_reported() {
        let c = GameConfig { resolution: Resolution::from_u64(8).unwrap(), ..universal(8, 2) };
        let rules = c.rules().unwrap();
        let mut f = AdaptiveHarmonic::new();
        let view = FillerView { step: 1, config: &c, rules: &rules, next_id: 8, state: None };
        assert_eq!(f.next_move(&view), Err(FillerError::NonRepresentable { cups: 8 }));
    }

    #[test]
    fn guessing_shrinks_candidates() {
        let c = universal(8, 2);
        let rules = c.rules().unwrap();
        let mut f = ObliviousGuessing::new(8, 1, 0);
        for step in 1..=3 {
            let view = FillerView { step, config: &c, rules: &rules, next_id: 8, state: None };
            let mv = f.next_move(&view).unwrap();
            assert_eq!(mv.pours.len() as u64, 8 - 2 * (step - 1));
            assert_eq!(f.candidates().len() as u64, 8 - 2 * step);
        }
        let view = FillerView { step: 4, config: &c, rules: &rules, next_id: 8, state: None };
        assert!(f.next_move(&view).unwrap().is_empty());
        for g in f.guesses() {
            assert_eq!(g.len(), 2);
        }
    }

    /// When every guess matches the greedy emptier, the guessing filler's
    /// moves are exactly the adaptive filler's moves.
    #[test]
    fn correct_guesses_reproduce_adaptive_trace() {
        let c = universal(4, 1);
        let (_, adaptive) = play(&c, &mut AdaptiveHarmonic::new(), &mut Greedy::new(), 3);
        let mut hits = 0;
        for seed in 0..400 {
            let mut f = ObliviousGuessing::new(4, seed, 0);
            let mut e = Greedy::new();
            let mut g = new_game(&c, &[]).unwrap();
            let rules = g.rules().clone();
            let mut all = true;
            let mut moves = Vec::new();
            for step in 1..=3 {
                let view = FillerView { step, config: &c, rules: &rules, next_id: 4, state: None };
                let mv = f.next_move(&view).unwrap();
                let out = g.advance(&mv, &mut e).unwrap();
                let flushed: Vec<CupId> = out.emptier_move.removals.iter().map(|(id, _)| *id).collect();
                all &= flushed == f.guesses()[step as usize - 1];
                moves.push(mv);
            }
            if all {
                hits += 1;
                assert_eq!(moves, adaptive);
                assert_eq!(g.backlog().to_rational(&c.resolution), Rational::new(13, 24).unwrap());
            }
        }
        // success probability is 1/4 * 1/3 * 1/2 = 1/24 with candidate-set guessing
        assert!(hits > 0);
    }

    #[test]
    fn uniform_random_budgets() {
        let c = cfg(GameVariant::SingleProcessor, 1, 1, "1/4", "1/2", 8);
        let rules = c.rules().unwrap();
        let mut f = UniformRandom::new(1, 0, c.variant);
        let view = FillerView { step: 1, config: &c, rules: &rules, next_id: 1, state: None };
        let mv = f.next_move(&view).unwrap();
        assert_eq!(mv.pours, vec![(CupId(0), WaterAmount::from_u64(6))]);

        let c = cfg(GameVariant::RenormalizedMulti, 100, 8, "1/4", "1/8", 16);
        let rules = c.rules().unwrap();
        let mut f = UniformRandom::new(1, 0, c.variant);
        for step in 1..50 {
            let view = FillerView { step, config: &c, rules: &rules, next_id: 100, state: None };
            let mv = f.next_move(&view).unwrap();
            assert_eq!(mv.total().units(), &rules.pour_budget);
            assert!(mv.pours.iter().all(|(_, a)| a.units() <= &Units::from_u64(16)));
        }
    }

    proptest! {
        #[test]
        fn uniform_random_moves_are_valid(seed in 0u64..1000, n in 1u64..20, p in 1u64..6, e in 1i64..4) {
            let variant = GameVariant::MultiProcessor;
            let c = GameConfig {
                variant,
                n,
                p,
                epsilon: Rational::new(e, 4).unwrap(),
                delta: Rational::new(1, 4).unwrap(),
                resolution: Resolution::from_u64(16).unwrap(),
                seed,
            };
            let g = new_game(&c, &[]).unwrap();
            let rules = g.rules().clone();
            let mut f = UniformRandom::new(seed, 0, variant);
            for step in 1..5 {
                let view = FillerView { step, config: &c, rules: &rules, next_id: n, state: None };
                let mv = f.next_move(&view).unwrap();
                prop_assert!(g.validate_filler_move(&mv).is_ok());
            }
        }

        #[test]
        fn harmonic_guarantee_holds_against_any_emptier(seed in 0u64..200, n in 2u64..7, p in 1u64..3) {
            let n = n * p;
            let c = universal(n, p);
            let mut g = new_game(&c, &[]).unwrap();
            let rules = g.rules().clone();
            let mut f = AdaptiveHarmonic::new();
            let mut rng = RngStream::new(seed, "test-emptier", &[]);
            for step in 1..n / p {
                let view = FillerView { step, config: &c, rules: &rules, next_id: n, state: Some(&g) };
                let mv = f.next_move(&view).unwrap();
                g.validate_filler_move(&mv).unwrap();
                g.apply_pours(&mv);
                let mut ids: Vec<CupId> = g.cups().iter().filter(|c| !c.fill.is_zero()).map(|c| c.id).collect();
                let mut picks = Vec::new();
                for _ in 0..p.min(ids.len() as u64) {
                    let i = rng.below_u64(ids.len() as u64) as usize;
                    let id = ids.swap_remove(i);
                    picks.push((id, g.fill(id)));
                }
                let em = EmptierMove::from_removals(picks);
                g.apply_removals(&em);
                f.observe(&g, &em);
            }
            prop_assert!(g.backlog().to_rational(&c.resolution) >= oracle(n, p));
        }
    }

    #[test]
    fn single_target_and_round_robin() {
        let c = cfg(GameVariant::MultiProcessor, 5, 2, "1/4", "1/4", 8);
        let rules = c.rules().unwrap();
        let view = FillerView { step: 1, config: &c, rules: &rules, next_id: 5, state: None };
        let mv = SingleTarget { cup: CupId(3) }.next_move(&view).unwrap();
        assert_eq!(mv.pours, vec![(CupId(3), WaterAmount::from_u64(6))]);
        let mut rr = RoundRobin::new();
        let a = rr.next_move(&view).unwrap();
        let b = rr.next_move(&view).unwrap();
        assert_eq!(a.pours.iter().map(|(i, _)| i.0).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(b.pours.iter().map(|(i, _)| i.0).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(a.total().units(), &rules.pour_budget);
        let c = rr.next_move(&view).unwrap();
        assert_eq!(c.pours.iter().map(|(i, _)| i.0).collect::<Vec<_>>(), vec![0, 4]);
    }

    #[test]
    fn trace_marks_new_cups() {
        let c = cfg(GameVariant::DynamicSingle, 4, 1, "1/4", "1/2", 8);
        let rules = c.rules().unwrap();
        let mut t = Trace::new(vec![FillerMove::from_pours(vec![
            (CupId(0), WaterAmount::from_u64(2)),
            (CupId(2), WaterAmount::from_u64(2)),
        ])]);
        let view = FillerView { step: 1, config: &c, rules: &rules, next_id: 1, state: None };
        let mv = t.next_move(&view).unwrap();
        assert_eq!(mv.pours, vec![(CupId(0), WaterAmount::from_u64(2))]);
        assert_eq!(mv.new_cups, vec![(CupId(2), WaterAmount::from_u64(2))]);
        let view = FillerView { step: 2, ..view };
        assert!(t.next_move(&view).unwrap().is_empty());
    }

    #[test]
    fn simulated_adaptive_is_deterministic_and_rejects_randomized() {
        let c = universal(64, 1);
        let g = new_game(&c, &[]).unwrap();
        let make =
            || SimulatedAdaptive::new(g.clone(), Box::new(Greedy::new()), Box::new(AdaptiveHarmonic::new())).unwrap();
        let a = make().precompute(63).unwrap();
        let b = make().precompute(63).unwrap();
        assert_eq!(a, b);
        let mut replay = Trace::new(a);
        let (end, _) = play(&c, &mut replay, &mut Greedy::new(), 63);
        assert!(end.backlog().to_rational(&c.resolution) >= harmonic_lower_bound(64, 1));
        let smoothed = SmoothedGreedy::new(&g, 1, 0);
        let err = SimulatedAdaptive::new(g.clone(), Box::new(smoothed), Box::new(AdaptiveHarmonic::new())).unwrap_err();
        assert!(matches!(err, FillerError::Setup(_)));
    }

    #[test]
    fn stress_harmonic_runs_in_dynamic_game() {
        let c = cfg(GameVariant::DynamicSingle, 16, 1, "1/4", "1/2", 32);
        let (g, _) = play(&c, &mut AdaptiveHarmonic::new(), &mut Greedy::new(), 200);
        assert!(g.cups().iter().all(|c| !c.fill.is_zero()));
    }
}
