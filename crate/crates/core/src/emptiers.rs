//! Emptier strategies.
//!
//! An emptier sees the state after the filler's pour (and the pour itself)
//! and answers with an [`EmptierMove`]. None of them look ahead: they are
//! non-clairvoyant by construction.

use alloc::vec::Vec;

use crate::game::{CupId, EmptierMove, FillerMove, GameState};
use crate::rng::{labels, uniform_threshold};
use crate::thresholds::{surplus_of_step, CounterInit, OffsetSource, ThresholdError, ThresholdState};
use crate::units::Units;
use crate::verify::InvariantViolation;
use crate::water::WaterAmount;

/// Per-step figures an emptier exposes for step records.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmptierReport {
    /// Threshold crossings in the last step.
    pub crossings: u64,
    /// Crossings beyond `p` in the last step.
    pub surplus: u64,
    pub counter_sum: WaterAmount,
    /// Sum of whole units over virtual fills.
    pub virtual_integer_fill: Option<Units>,
    pub virtual_backlog: Option<WaterAmount>,
}

/// A strategy for the emptier.
pub trait Emptier {
    fn name(&self) -> &'static str;

    /// Whether the strategy uses private randomness.
    fn is_randomized(&self) -> bool {
        false
    }

    /// Choose removals for the post-pour `state`; `pours` is the move that
    /// produced it.
    fn respond(&mut self, state: &GameState, pours: &FillerMove) -> Result<EmptierMove, InvariantViolation>;

    fn report(&self) -> EmptierReport {
        EmptierReport::default()
    }

    fn as_smoothed(&self) -> Option<&SmoothedGreedy> {
        None
    }

    fn as_threshold_counter(&self) -> Option<&ThresholdCounter> {
        None
    }
}

/// Indices of the `k` fullest nonempty cups, fullest first, lowest id on ties.
fn fullest_nonempty(state: &GameState, k: usize) -> Vec<usize> {
    let cups = state.cups();
    if k == 1 {
        let mut best: Option<usize> = None;
        for (i, c) in cups.iter().enumerate() {
            if !c.fill.is_zero() && best.is_none_or(|b| c.fill > cups[b].fill) {
                best = Some(i);
            }
        }
        return best.into_iter().collect();
    }
    let mut idx: Vec<usize> = (0..cups.len()).filter(|&i| !cups[i].fill.is_zero()).collect();
    let order = |a: &usize, b: &usize| cups[*b].fill.cmp(&cups[*a].fill).then(a.cmp(b));
    if idx.len() > k {
        idx.select_nth_unstable_by(k - 1, order);
        idx.truncate(k);
    }
    idx.sort_by(order);
    idx
}

fn removal_amount(state: &GameState, fill: &WaterAmount) -> WaterAmount {
    match &state.rules().removal_cap {
        Some(cap) if fill.units() > cap => WaterAmount::from_units(cap.clone()),
        _ => fill.clone(),
    }
}

/// Greedy emptying: remove as much as allowed from the fullest cups.
///
/// In the single-processor games this is the classic greedy algorithm, in
/// the multi-processor games it empties the `p` fullest cups, and in the
/// flushing games it flushes the fullest cups.
#[derive(Clone, Debug, Default)]
pub struct Greedy;

impl Greedy {
    pub fn new() -> Self {
        Greedy
    }
}

impl Emptier for Greedy {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn respond(&mut self, state: &GameState, _pours: &FillerMove) -> Result<EmptierMove, InvariantViolation> {
        let k = state.rules().max_emptied_cups as usize;
        let cups = state.cups();
        let removals = fullest_nonempty(state, k)
            .into_iter()
            .map(|i| (cups[i].id, removal_amount(state, &cups[i].fill)))
            .collect();
        Ok(EmptierMove::from_removals(removals))
    }
}

/// Flushing with slack: flush the lowest-id cup whose fill is within
/// `slack` of the current maximum.
#[derive(Clone, Debug)]
pub struct FlushRelaxed {
    slack: Units,
}

impl FlushRelaxed {
    pub fn new(slack: WaterAmount) -> Self {
        FlushRelaxed { slack: slack.into_units() }
    }
}

impl Emptier for FlushRelaxed {
    fn name(&self) -> &'static str {
        "flush_relaxed"
    }

    fn respond(&mut self, state: &GameState, _pours: &FillerMove) -> Result<EmptierMove, InvariantViolation> {
        let cups = state.cups();
        let mut taken = alloc::vec![false; cups.len()];
        let mut removals = Vec::new();
        for _ in 0..state.rules().max_emptied_cups {
            let max = cups
                .iter()
                .enumerate()
                .filter(|(i, c)| !taken[*i] && !c.fill.is_zero())
                .map(|(_, c)| c.fill.units())
                .max();
            let Some(max) = max else { break };
            let floor = max.checked_sub(&self.slack).unwrap_or(Units::ZERO);
            let pick = cups
                .iter()
                .enumerate()
                .find(|(i, c)| !taken[*i] && !c.fill.is_zero() && c.fill.units() >= &floor)
                .map(|(i, _)| i)
                .expect("the maximum itself is eligible");
            taken[pick] = true;
            removals.push((cups[pick].id, removal_amount(state, &cups[pick].fill)));
        }
        Ok(EmptierMove::from_removals(removals))
    }
}

/// Smoothed greedy: each cup starts with a private random offset `r_j` in
/// `(0, 1)` that is simulated rather than poured.
///
/// In the single-processor game the emptier tracks virtual fills
/// `v_j = r_j + a_j - (whole units removed)`. If every virtual fill is below
/// one it does nothing; otherwise it takes exactly one unit off the largest
/// virtual fill and removes `min(1, f_j)` physically. Virtual fills therefore
/// only ever change by whole units, which keeps `v_j = r_j + a_j (mod 1)`.
///
/// In the flushing games it flushes the cups with the largest `f_j + r_j`.
#[derive(Clone, Debug)]
pub struct SmoothedGreedy {
    offsets: Vec<Units>,
    virtual_fills: Vec<Units>,
    virtual_integer_fill: Units,
    one: Units,
    flushing: bool,
}

impl SmoothedGreedy {
    /// Draw offsets for the cups of `state` (a fixed-cup game at step 0).
    pub fn new(state: &GameState, seed: u64, trial: u64) -> Self {
        let d = &state.config().resolution;
        let offsets: Vec<Units> = state
            .cups()
            .iter()
            .map(|c| uniform_threshold(seed, labels::SMOOTHED_OFFSET, &[trial, c.id.0], d).into_units())
            .collect();
        Self::with_offsets(state, offsets)
    }

    /// Use the given offsets, one per cup in id order.
    pub fn with_offsets(state: &GameState, offsets: Vec<Units>) -> Self {
        let one = state.config().resolution.units().clone();
        let virtual_fills: Vec<Units> = state.cups().iter().zip(&offsets).map(|(c, r)| r + c.fill.units()).collect();
        let virtual_integer_fill = virtual_fills.iter().map(|v| v.div_floor(&one)).sum::<Units>();
        SmoothedGreedy {
            offsets,
            virtual_fills,
            virtual_integer_fill,
            one,
            flushing: state.config().variant.is_flushing(),
        }
    }

    pub fn offset(&self, id: CupId) -> &Units {
        &self.offsets[id.0 as usize]
    }

    pub fn virtual_fill(&self, id: CupId) -> &Units {
        &self.virtual_fills[id.0 as usize]
    }

    pub fn virtual_fills(&self) -> &[Units] {
        &self.virtual_fills
    }

    fn add_virtual(&mut self, i: usize, amt: &Units) {
        let before = self.virtual_fills[i].div_floor(&self.one);
        self.virtual_fills[i] += amt;
        let after = self.virtual_fills[i].div_floor(&self.one);
        self.virtual_integer_fill += &(&after - &before);
    }

    fn respond_flushing(&mut self, state: &GameState, pours: &FillerMove) -> EmptierMove {
        let cups = state.cups();
        for (id, amt) in &pours.pours {
            self.virtual_fills[id.0 as usize] += amt.units();
        }
        let k = state.rules().max_emptied_cups as usize;
        let mut idx: Vec<usize> = (0..cups.len()).filter(|&i| !cups[i].fill.is_zero()).collect();
        let v = &self.virtual_fills;
        let order = |a: &usize, b: &usize| v[*b].cmp(&v[*a]).then(a.cmp(b));
        if idx.len() > k {
            idx.select_nth_unstable_by(k - 1, order);
            idx.truncate(k);
        }
        for &i in &idx {
            self.virtual_fills[i] = self.offsets[i].clone();
        }
        EmptierMove::from_removals(idx.into_iter().map(|i| (cups[i].id, cups[i].fill.clone())).collect())
    }
}

impl Emptier for SmoothedGreedy {
    fn name(&self) -> &'static str {
        "smoothed_greedy"
    }

    fn is_randomized(&self) -> bool {
        true
    }

    fn respond(&mut self, state: &GameState, pours: &FillerMove) -> Result<EmptierMove, InvariantViolation> {
        if self.flushing {
            return Ok(self.respond_flushing(state, pours));
        }
        for (id, amt) in &pours.pours {
            self.add_virtual(id.0 as usize, amt.units());
        }
        let mut best: Option<usize> = None;
        for (i, v) in self.virtual_fills.iter().enumerate() {
            if best.is_none_or(|b| v > &self.virtual_fills[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { return Ok(EmptierMove::empty()) };
        if self.virtual_fills[b] < self.one {
            return Ok(EmptierMove::empty());
        }
        self.virtual_fills[b] -= &self.one;
        self.virtual_integer_fill -= &Units::from_u64(1);
        let cup = &state.cups()[b];
        let amount = removal_amount(state, &cup.fill);
        Ok(EmptierMove::from_removals(alloc::vec![(cup.id, amount)]))
    }

    fn report(&self) -> EmptierReport {
        EmptierReport {
            virtual_integer_fill: (!self.flushing).then(|| self.virtual_integer_fill.clone()),
            virtual_backlog: self.virtual_fills.iter().max().cloned().map(WaterAmount::from_units),
            ..EmptierReport::default()
        }
    }

    fn as_smoothed(&self) -> Option<&SmoothedGreedy> {
        Some(self)
    }
}

/// Order of cups inside one priority class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum TieRule {
    /// Lowest id first.
    #[default]
    Arbitrary,
    /// Fullest first, then lowest id. This is the multi-processor smoothed
    /// greedy algorithm.
    Fullest,
}

/// Deliberate bugs for exercising the invariant checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fault {
    /// Remove water but leave the counters untouched.
    KeepCounters,
}

/// The threshold-counter emptier for the renormalized multi-processor game.
///
/// Each threshold crossing adds `1 + delta` to the cup's counter. Each step
/// the emptier picks up to `p + 1` cups, preferring counters of at least
/// `1 + delta`, then any nonzero counter, and takes `min(1 + 2 delta, w_j)`
/// from both the cup and its counter. Cups with zero counters are never
/// picked.
#[derive(Clone, Debug)]
pub struct ThresholdCounter {
    thresholds: ThresholdState,
    tie: TieRule,
    fault: Option<Fault>,
    p: u64,
    last_crossings: u64,
    last_surplus: u64,
}

impl ThresholdCounter {
    /// Counters for `state`, with random block offsets keyed by
    /// `(seed, trial)`. Water already in the cups is counted as poured.
    pub fn new(
        state: &GameState,
        seed: u64,
        trial: u64,
        tie: TieRule,
        init: CounterInit,
    ) -> Result<Self, ThresholdError> {
        Self::with_source(state, OffsetSource::Random { seed, trial }, tie, init)
    }

    pub fn with_source(
        state: &GameState,
        source: OffsetSource,
        tie: TieRule,
        init: CounterInit,
    ) -> Result<Self, ThresholdError> {
        let cfg = state.config();
        let mut thresholds = ThresholdState::new(&cfg.delta, &cfg.resolution, source)?;
        let initial: Vec<(u64, WaterAmount)> =
            state.cups().iter().filter(|c| !c.poured.is_zero()).map(|c| (c.id.0, c.poured.clone())).collect();
        thresholds.init_counters_from_initial_fill(&initial, init);
        Ok(ThresholdCounter { thresholds, tie, fault: None, p: cfg.p, last_crossings: 0, last_surplus: 0 })
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    pub fn thresholds(&self) -> &ThresholdState {
        &self.thresholds
    }

    pub fn tie_rule(&self) -> TieRule {
        self.tie
    }
}

impl Emptier for ThresholdCounter {
    fn name(&self) -> &'static str {
        match self.tie {
            TieRule::Arbitrary => "threshold_counter",
            TieRule::Fullest => "smoothed_greedy_multi",
        }
    }

    fn is_randomized(&self) -> bool {
        true
    }

    fn respond(&mut self, state: &GameState, pours: &FillerMove) -> Result<EmptierMove, InvariantViolation> {
        let mut k = 0;
        for (id, amt) in pours.pours.iter().chain(&pours.new_cups) {
            k += self.thresholds.record_pour(id.0, amt);
        }
        self.last_crossings = k;
        self.last_surplus = surplus_of_step(k, self.p);

        let high_bar = self.thresholds.increment().clone();
        let mut high: Vec<(CupId, Units)> = Vec::new();
        let mut low: Vec<(CupId, Units)> = Vec::new();
        for j in self.thresholds.nonzero() {
            let w = self.thresholds.counter(j);
            if w >= high_bar {
                high.push((CupId(j), w));
            } else {
                low.push((CupId(j), w));
            }
        }
        if self.tie == TieRule::Fullest {
            let by_fill =
                |a: &(CupId, Units), b: &(CupId, Units)| state.fill(b.0).cmp(&state.fill(a.0)).then(a.0.cmp(&b.0));
            high.sort_by(by_fill);
            low.sort_by(by_fill);
        }
        let limit = state.rules().max_emptied_cups as usize;
        let cap = state.rules().removal_cap.clone();
        let mut removals = Vec::with_capacity(limit);
        for (id, w) in high.into_iter().chain(low).take(limit) {
            let t = match &cap {
                Some(c) if &w > c => c.clone(),
                _ => w,
            };
            let fill = state.fill(id);
            if fill.units() < &t {
                return Err(InvariantViolation::new(
                    state.step() + 1,
                    "counter-sandwich",
                    alloc::format!("cup {id}: counter {} exceeds fill {}", self.thresholds.counter(id.0), fill.units()),
                ));
            }
            if self.fault != Some(Fault::KeepCounters) {
                self.thresholds.decrement(id.0, &t);
            }
            removals.push((id, WaterAmount::from_units(t)));
        }
        Ok(EmptierMove::from_removals(removals))
    }

    fn report(&self) -> EmptierReport {
        EmptierReport {
            crossings: self.last_crossings,
            surplus: self.last_surplus,
            counter_sum: WaterAmount::from_units(self.thresholds.counter_sum().clone()),
            ..EmptierReport::default()
        }
    }

    fn as_threshold_counter(&self) -> Option<&ThresholdCounter> {
        Some(self)
    }
}

/// Never removes anything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullEmptier;

impl Emptier for NullEmptier {
    fn name(&self) -> &'static str {
        "null"
    }

    fn respond(&mut self, _state: &GameState, _pours: &FillerMove) -> Result<EmptierMove, InvariantViolation> {
        Ok(EmptierMove::empty())
    }
}
