//! Rule engine: game state, move validation and the step transition.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::config::{ConfigViolation, GameConfig, Rules};
use crate::rational::Rational;
use crate::units::Units;
use crate::verify::InvariantViolation;
use crate::water::WaterAmount;

/// Identifier of a cup. Never reused within a game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CupId(pub u64);

impl fmt::Display for CupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One cup: current fill and everything ever poured into it, including any
/// water present at the start of the game.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cup {
    pub id: CupId,
    pub fill: WaterAmount,
    pub poured: WaterAmount,
}

/// Water poured by the filler in one step. Both lists are sorted by id and
/// hold only positive amounts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FillerMove {
    pub pours: Vec<(CupId, WaterAmount)>,
    /// Fresh cups introduced this step (dynamic variants only).
    pub new_cups: Vec<(CupId, WaterAmount)>,
}

impl FillerMove {
    pub fn empty() -> Self {
        FillerMove::default()
    }

    /// Build a move from unsorted pours, merging duplicates and dropping zeros.
    pub fn from_pours(mut pours: Vec<(CupId, WaterAmount)>) -> Self {
        pours.sort_by_key(|(id, _)| *id);
        let mut out: Vec<(CupId, WaterAmount)> = Vec::with_capacity(pours.len());
        for (id, amt) in pours {
            if amt.is_zero() {
                continue;
            }
            match out.last_mut() {
                Some((last, acc)) if *last == id => *acc += &amt,
                _ => out.push((id, amt)),
            }
        }
        FillerMove { pours: out, new_cups: Vec::new() }
    }

    pub fn total(&self) -> WaterAmount {
        self.pours.iter().chain(&self.new_cups).map(|(_, a)| a).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pours.is_empty() && self.new_cups.is_empty()
    }

    /// All pours, existing and new cups, merged in id order.
    pub fn all_pours(&self) -> Vec<(CupId, WaterAmount)> {
        let mut all: Vec<_> = self.pours.iter().chain(&self.new_cups).cloned().collect();
        all.sort_by_key(|(id, _)| *id);
        all
    }
}

/// Water removed by the emptier in one step, sorted by id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmptierMove {
    pub removals: Vec<(CupId, WaterAmount)>,
}

impl EmptierMove {
    pub fn empty() -> Self {
        EmptierMove::default()
    }

    pub fn from_removals(mut removals: Vec<(CupId, WaterAmount)>) -> Self {
        removals.sort_by_key(|(id, _)| *id);
        removals.retain(|(_, a)| !a.is_zero());
        EmptierMove { removals }
    }

    pub fn total(&self) -> WaterAmount {
        self.removals.iter().map(|(_, a)| a).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.removals.is_empty()
    }
}

/// A broken move constraint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MoveViolation {
    UnsortedOrDuplicate(CupId),
    UnknownCup(CupId),
    ZeroAmount(CupId),
    OddUnits(CupId),
    BudgetExceeded { total: Units, budget: Units },
    PerCupCap { cup: CupId, amount: Units, cap: Units },
    NewCupsNotAllowed,
    NewCupIdInUse(CupId),
    TooManyCups { count: usize, max: u64 },
    RemovalCap { cup: CupId, amount: Units, cap: Units },
    RemovalExceedsFill { cup: CupId, amount: Units, fill: Units },
    MustFlushEntirely { cup: CupId, amount: Units, fill: Units },
}

impl MoveViolation {
    /// Short name of the broken constraint.
    pub fn constraint(&self) -> &'static str {
        match self {
            MoveViolation::UnsortedOrDuplicate(_) => "distinct cups",
            MoveViolation::UnknownCup(_) => "unknown cup",
            MoveViolation::ZeroAmount(_) => "positive amounts",
            MoveViolation::OddUnits(_) => "even units",
            MoveViolation::BudgetExceeded { .. } => "pour budget",
            MoveViolation::PerCupCap { .. } => "per-cup cap",
            MoveViolation::NewCupsNotAllowed => "static cup set",
            MoveViolation::NewCupIdInUse(_) => "fresh cup id",
            MoveViolation::TooManyCups { .. } => "too many cups",
            MoveViolation::RemovalCap { .. } => "removal cap",
            MoveViolation::RemovalExceedsFill { .. } => "removal exceeds fill",
            MoveViolation::MustFlushEntirely { .. } => "must flush entirely",
        }
    }
}

impl fmt::Display for MoveViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.constraint())?;
        match self {
            MoveViolation::UnsortedOrDuplicate(c) => write!(f, "cup {c} out of order or repeated"),
            MoveViolation::UnknownCup(c) => write!(f, "cup {c} is not in the game"),
            MoveViolation::ZeroAmount(c) => write!(f, "zero amount for cup {c}"),
            MoveViolation::OddUnits(c) => write!(f, "pour into cup {c} is an odd number of units"),
            MoveViolation::BudgetExceeded { total, budget } => write!(f, "{total} units poured, budget {budget}"),
            MoveViolation::PerCupCap { cup, amount, cap } => write!(f, "cup {cup} receives {amount} units, cap {cap}"),
            MoveViolation::NewCupsNotAllowed => write!(f, "this variant has a fixed set of cups"),
            MoveViolation::NewCupIdInUse(c) => write!(f, "cup id {c} was already used"),
            MoveViolation::TooManyCups { count, max } => write!(f, "{count} cups selected, at most {max}"),
            MoveViolation::RemovalCap { cup, amount, cap } => write!(f, "{amount} units from cup {cup}, cap {cap}"),
            MoveViolation::RemovalExceedsFill { cup, amount, fill } => {
                write!(f, "{amount} units from cup {cup} holding {fill}")
            }
            MoveViolation::MustFlushEntirely { cup, amount, fill } => {
                write!(f, "{amount} units from cup {cup} holding {fill}")
            }
        }
    }
}

/// Errors from building or advancing a game.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GameError {
    InvalidConfig(Vec<ConfigViolation>),
    InvalidInitialFill(String),
    Filler(MoveViolation),
    /// The emptier strategy produced an illegal move.
    StrategyProtocol(MoveViolation),
    /// The emptier detected a broken invariant of its own bookkeeping.
    Invariant(InvariantViolation),
}

impl fmt::Display for GameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GameError::InvalidConfig(v) => {
                write!(f, "invalid configuration")?;
                for (i, x) in v.iter().enumerate() {
                    write!(f, "{} {x}", if i == 0 { ":" } else { ";" })?;
                }
                Ok(())
            }
            GameError::InvalidInitialFill(s) => write!(f, "invalid initial fill: {s}"),
            GameError::Filler(v) => write!(f, "illegal filler move: {v}"),
            GameError::StrategyProtocol(v) => write!(f, "emptier produced an illegal move: {v}"),
            GameError::Invariant(v) => write!(f, "{v}"),
        }
    }
}

/// The authoritative position of a game.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameState {
    config: GameConfig,
    rules: Rules,
    step: u64,
    cups: Vec<Cup>,
    next_id: u64,
}

/// Create a game at step 0. Fixed-cup variants get cups `0..n`; dynamic
/// variants start with exactly the cups named in `initial_fills`.
pub fn new_game(cfg: &GameConfig, initial_fills: &[(CupId, WaterAmount)]) -> Result<GameState, GameError> {
    let rules = cfg.rules().map_err(GameError::InvalidConfig)?;
    let mut initial: Vec<(CupId, WaterAmount)> = initial_fills.to_vec();
    initial.sort_by_key(|(id, _)| *id);
    for w in initial.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(GameError::InvalidInitialFill(alloc::format!("cup {} listed twice", w[0].0)));
        }
    }
    for (id, amt) in &initial {
        if amt.units().is_odd() {
            return Err(GameError::InvalidInitialFill(alloc::format!(
                "cup {id}: {} is an odd number of units",
                amt.units()
            )));
        }
    }
    let cups: Vec<Cup>;
    let next_id;
    if cfg.variant.is_dynamic() {
        if let Some((id, _)) = initial.iter().find(|(_, a)| a.is_zero()) {
            return Err(GameError::InvalidInitialFill(alloc::format!(
                "cup {id} is empty; empty cups cannot exist in a dynamic game"
            )));
        }
        cups = initial.iter().map(|(id, a)| Cup { id: *id, fill: a.clone(), poured: a.clone() }).collect();
        next_id = cups.last().map(|c| c.id.0 + 1).unwrap_or(0);
    } else {
        if let Some((id, _)) = initial.iter().find(|(id, _)| id.0 >= cfg.n) {
            return Err(GameError::InvalidInitialFill(alloc::format!(
                "cup {id} does not exist in a game with {} cups",
                cfg.n
            )));
        }
        let mut it = initial.iter().peekable();
        cups = (0..cfg.n)
            .map(|i| {
                let fill = match it.peek() {
                    Some((id, a)) if id.0 == i => {
                        let a = a.clone();
                        it.next();
                        a
                    }
                    _ => WaterAmount::ZERO,
                };
                Cup { id: CupId(i), poured: fill.clone(), fill }
            })
            .collect();
        next_id = cfg.n;
    }
    Ok(GameState { config: cfg.clone(), rules, step: 0, cups, next_id })
}

impl GameState {
    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn rules(&self) -> &Rules {
        &self.rules
    }

    /// Number of completed steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Cups in id order.
    pub fn cups(&self) -> &[Cup] {
        &self.cups
    }

    pub fn cup(&self, id: CupId) -> Option<&Cup> {
        self.index_of(id).map(|i| &self.cups[i])
    }

    pub fn index_of(&self, id: CupId) -> Option<usize> {
        self.cups.binary_search_by_key(&id, |c| c.id).ok()
    }

    pub fn fill(&self, id: CupId) -> WaterAmount {
        self.cup(id).map(|c| c.fill.clone()).unwrap_or_default()
    }

    /// The smallest id never used so far.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn total_fill(&self) -> WaterAmount {
        self.cups.iter().map(|c| &c.fill).sum()
    }

    /// The maximum fill over all cups; zero when there are none.
    pub fn backlog(&self) -> WaterAmount {
        backlog(self)
    }

    /// Id of the fullest cup, lowest id on ties.
    pub fn fullest(&self) -> Option<CupId> {
        let mut best: Option<&Cup> = None;
        for c in &self.cups {
            if best.is_none_or(|b| c.fill > b.fill) {
                best = Some(c);
            }
        }
        best.map(|c| c.id)
    }

    /// Check a filler move against the variant's pour rules.
    pub fn validate_filler_move(&self, mv: &FillerMove) -> Result<(), MoveViolation> {
        validate_filler_move(self, mv)
    }

    pub fn validate_emptier_move(&self, mv: &EmptierMove) -> Result<(), MoveViolation> {
        validate_emptier_move(self, mv)
    }

    /// Apply a validated filler move.
    pub fn apply_pours(&mut self, mv: &FillerMove) {
        let mut idx = 0usize;
        for (id, amt) in &mv.pours {
            while self.cups[idx].id < *id {
                idx += 1;
            }
            let cup = &mut self.cups[idx];
            cup.fill += amt;
            cup.poured += amt;
        }
        if !mv.new_cups.is_empty() {
            for (id, amt) in &mv.new_cups {
                self.cups.push(Cup { id: *id, fill: amt.clone(), poured: amt.clone() });
                self.next_id = self.next_id.max(id.0 + 1);
            }
            self.cups.sort_by_key(|c| c.id);
        }
    }

    /// Apply a validated emptier move. Returns ids of cups that left the game.
    pub fn apply_removals(&mut self, mv: &EmptierMove) -> Vec<CupId> {
        let mut idx = 0usize;
        for (id, amt) in &mv.removals {
            while self.cups[idx].id < *id {
                idx += 1;
            }
            self.cups[idx].fill -= amt;
        }
        let mut gone = Vec::new();
        if self.config.variant.is_dynamic() {
            for (id, _) in &mv.removals {
                if self.fill(*id).is_zero() {
                    gone.push(*id);
                }
            }
            if !gone.is_empty() {
                self.cups.retain(|c| !c.fill.is_zero());
            }
        }
        gone
    }

    /// Play one step: pour, let the emptier respond to the post-pour state,
    /// remove, then drop emptied cups in dynamic variants.
    pub fn advance<E: crate::emptiers::Emptier + ?Sized>(
        &mut self,
        filler_move: &FillerMove,
        emptier: &mut E,
    ) -> Result<StepOutcome, GameError> {
        self.validate_filler_move(filler_move).map_err(GameError::Filler)?;
        self.apply_pours(filler_move);
        let emptier_move = emptier.respond(self, filler_move).map_err(GameError::Invariant)?;
        self.validate_emptier_move(&emptier_move).map_err(GameError::StrategyProtocol)?;
        let removed_cups = self.apply_removals(&emptier_move);
        self.step += 1;
        Ok(StepOutcome { emptier_move, removed_cups })
    }

    /// Overwrite fills directly; intended for tests and fault injection.
    pub fn set_fill_unchecked(&mut self, id: CupId, fill: WaterAmount) {
        if let Some(i) = self.index_of(id) {
            self.cups[i].fill = fill;
        }
    }
}

/// The result of one call to [`GameState::advance`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub emptier_move: EmptierMove,
    /// Cups removed because they were emptied (dynamic variants).
    pub removed_cups: Vec<CupId>,
}

/// Potential value attached to a step record.
#[derive(Clone, Debug, PartialEq)]
pub enum Phi {
    Exact(Rational),
    Float(f64),
}

impl Phi {
    pub fn to_f64(&self) -> f64 {
        match self {
            Phi::Exact(r) => r.to_f64(),
            Phi::Float(x) => *x,
        }
    }

    pub fn to_decimal_string(&self) -> String {
        match self {
            Phi::Exact(r) => r.to_decimal_string(12),
            Phi::Float(x) => alloc::format!("{x:.12}"),
        }
    }
}

/// Everything observed in one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub filler_move: FillerMove,
    pub emptier_move: EmptierMove,
    /// Maximum physical fill after the step.
    pub backlog: WaterAmount,
    /// Sum of whole units over cups; taken over virtual fills when the
    /// emptier plays on virtual fills.
    pub integer_fill: Units,
    /// Threshold crossings beyond `p` this step; 0 without threshold counters.
    pub surplus: u64,
    /// Sum of threshold counters; 0 without threshold counters.
    pub counter_sum: WaterAmount,
    pub phi: Option<Phi>,
    /// Maximum virtual fill, for emptiers that play on virtual fills.
    pub virtual_backlog: Option<WaterAmount>,
}

/// Check a filler move against the pour rules of the state's variant.
pub fn validate_filler_move(state: &GameState, mv: &FillerMove) -> Result<(), MoveViolation> {
    let rules = &state.rules;
    let mut total = Units::ZERO;
    let check_amount = |id: CupId, amt: &WaterAmount| -> Result<(), MoveViolation> {
        if amt.is_zero() {
            return Err(MoveViolation::ZeroAmount(id));
        }
        if amt.units().is_odd() {
            return Err(MoveViolation::OddUnits(id));
        }
        if let Some(cap) = &rules.pour_cap {
            if amt.units() > cap {
                return Err(MoveViolation::PerCupCap { cup: id, amount: amt.units().clone(), cap: cap.clone() });
            }
        }
        Ok(())
    };
    let mut prev: Option<CupId> = None;
    let mut idx = 0usize;
    for (id, amt) in &mv.pours {
        if prev.is_some_and(|p| p >= *id) {
            return Err(MoveViolation::UnsortedOrDuplicate(*id));
        }
        prev = Some(*id);
        while idx < state.cups.len() && state.cups[idx].id < *id {
            idx += 1;
        }
        if idx == state.cups.len() || state.cups[idx].id != *id {
            return Err(MoveViolation::UnknownCup(*id));
        }
        check_amount(*id, amt)?;
        total += amt.units();
    }
    if !mv.new_cups.is_empty() {
        if !state.config.variant.is_dynamic() {
            return Err(MoveViolation::NewCupsNotAllowed);
        }
        let mut prev: Option<CupId> = None;
        for (id, amt) in &mv.new_cups {
            if prev.is_some_and(|p| p >= *id) {
                return Err(MoveViolation::UnsortedOrDuplicate(*id));
            }
            prev = Some(*id);
            if id.0 < state.next_id {
                return Err(MoveViolation::NewCupIdInUse(*id));
            }
            check_amount(*id, amt)?;
            total += amt.units();
        }
    }
    if total > rules.pour_budget {
        return Err(MoveViolation::BudgetExceeded { total, budget: rules.pour_budget.clone() });
    }
    Ok(())
}

/// Check an emptier move against the removal rules of the state's variant.
pub fn validate_emptier_move(state: &GameState, mv: &EmptierMove) -> Result<(), MoveViolation> {
    let rules = &state.rules;
    if mv.removals.len() as u64 > rules.max_emptied_cups {
        return Err(MoveViolation::TooManyCups { count: mv.removals.len(), max: rules.max_emptied_cups });
    }
    let mut prev: Option<CupId> = None;
    let mut idx = 0usize;
    for (id, amt) in &mv.removals {
        if prev.is_some_and(|p| p >= *id) {
            return Err(MoveViolation::UnsortedOrDuplicate(*id));
        }
        prev = Some(*id);
        while idx < state.cups.len() && state.cups[idx].id < *id {
            idx += 1;
        }
        if idx == state.cups.len() || state.cups[idx].id != *id {
            return Err(MoveViolation::UnknownCup(*id));
        }
        if amt.is_zero() {
            return Err(MoveViolation::ZeroAmount(*id));
        }
        let fill = &state.cups[idx].fill;
        if amt > fill {
            return Err(MoveViolation::RemovalExceedsFill {
                cup: *id,
                amount: amt.units().clone(),
                fill: fill.units().clone(),
            });
        }
        match &rules.removal_cap {
            Some(cap) => {
                if amt.units() > cap {
                    return Err(MoveViolation::RemovalCap { cup: *id, amount: amt.units().clone(), cap: cap.clone() });
                }
            }
            None => {
                if amt != fill {
                    return Err(MoveViolation::MustFlushEntirely {
                        cup: *id,
                        amount: amt.units().clone(),
                        fill: fill.units().clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Maximum fill over all cups; zero for no cups.
pub fn backlog(state: &GameState) -> WaterAmount {
    state.cups.iter().map(|c| &c.fill).max().cloned().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GameVariant;
    use crate::emptiers::{Greedy, NullEmptier};
    use crate::water::Resolution;

    fn cfg(variant: GameVariant, n: u64, p: u64, eps: &str, delta: &str, d: u64) -> GameConfig {
        GameConfig {
            variant,
            n,
            p,
            epsilon: eps.parse().unwrap(),
            delta: delta.parse().unwrap(),
            resolution: Resolution::from_u64(d).unwrap(),
            seed: 1,
        }
    }

    fn w(u: u64) -> WaterAmount {
        WaterAmount::from_u64(u)
    }

    #[test]
    fn fresh_game_is_empty() {
        let g = new_game(&cfg(GameVariant::SingleProcessor, 3, 1, "1/4", "0", 8), &[]).unwrap();
        assert_eq!(g.cups().len(), 3);
        assert!(g.cups().iter().all(|c| c.fill.is_zero()));
        assert_eq!(g.backlog(), WaterAmount::ZERO);
    }

    #[test]
    fn initial_fill_sets_backlog() {
        let c = cfg(GameVariant::SingleProcessor, 3, 1, "1/4", "0", 8);
        let g = new_game(&c, &[(CupId(0), w(6))]).unwrap();
        assert_eq!(g.backlog(), w(6));
        assert_eq!(g.cup(CupId(0)).unwrap().poured, w(6));
    }

    #[test]
    fn dynamic_game_rejects_empty_initial_cup() {
        let c = cfg(GameVariant::DynamicSingle, 3, 1, "1/4", "0", 8);
        assert!(matches!(new_game(&c, &[(CupId(0), WaterAmount::ZERO)]), Err(GameError::InvalidInitialFill(_))));
    }

    #[test]
    fn single_processor_budget() {
        let c = cfg(GameVariant::SingleProcessor, 3, 1, "1/4", "0", 8);
        let g = new_game(&c, &[]).unwrap();
        let ok = FillerMove::from_pours(alloc::vec![(CupId(0), w(4)), (CupId(1), w(2))]);
        assert_eq!(g.validate_filler_move(&ok), Ok(()));
        let over = FillerMove::from_pours(alloc::vec![(CupId(0), w(4)), (CupId(1), w(4))]);
        assert_eq!(g.validate_filler_move(&over).unwrap_err().constraint(), "pour budget");
        let odd = FillerMove::from_pours(alloc::vec![(CupId(0), w(3))]);
        assert_eq!(g.validate_filler_move(&odd).unwrap_err().constraint(), "even units");
    }

    #[test]
    fn multi_processor_per_cup_cap() {
        let c = cfg(GameVariant::MultiProcessor, 4, 2, "1/4", "1/8", 16);
        let g = new_game(&c, &[]).unwrap();
        let mv = FillerMove::from_pours(alloc::vec![(CupId(0), w(30))]);
        assert_eq!(g.validate_filler_move(&mv).unwrap_err().constraint(), "per-cup cap");
    }

    #[test]
    fn universal_budget_is_half_p() {
        let c = cfg(GameVariant::UniversalEmptying, 4, 2, "1/2", "0", 8);
        let g = new_game(&c, &[]).unwrap();
        let mv = FillerMove::from_pours(alloc::vec![(CupId(0), w(4)), (CupId(3), w(4))]);
        assert_eq!(g.validate_filler_move(&mv), Ok(()));
    }

    #[test]
    fn renormalized_allows_p_plus_one_cups() {
        let c = cfg(GameVariant::RenormalizedMulti, 4, 2, "1/4", "1/4", 8);
        let fills: Vec<_> = (0..3).map(|i| (CupId(i), w(12))).collect();
        let g = new_game(&c, &fills).unwrap();
        let mv = EmptierMove::from_removals((0..3).map(|i| (CupId(i), w(12))).collect());
        assert_eq!(g.validate_emptier_move(&mv), Ok(()));
        let too_much = EmptierMove::from_removals(alloc::vec![(CupId(0), w(12)), (CupId(3), w(2))]);
        assert_eq!(g.validate_emptier_move(&too_much).unwrap_err().constraint(), "removal exceeds fill");
    }

    #[test]
    fn single_processor_rejects_two_cups() {
        let c = cfg(GameVariant::SingleProcessor, 3, 1, "1/4", "0", 8);
        let g = new_game(&c, &[(CupId(0), w(4)), (CupId(1), w(4))]).unwrap();
        let mv = EmptierMove::from_removals(alloc::vec![(CupId(0), w(2)), (CupId(1), w(2))]);
        assert_eq!(g.validate_emptier_move(&mv).unwrap_err().constraint(), "too many cups");
    }

    #[test]
    fn flushing_must_remove_everything() {
        let c = cfg(GameVariant::CupFlushing, 3, 1, "0", "0", 8);
        let g = new_game(&c, &[(CupId(0), w(10))]).unwrap();
        let mv = EmptierMove::from_removals(alloc::vec![(CupId(0), w(8))]);
        assert_eq!(g.validate_emptier_move(&mv).unwrap_err().constraint(), "must flush entirely");
    }

    #[test]
    fn zero_move_against_greedy_is_a_fixed_point() {
        let c = cfg(GameVariant::SingleProcessor, 3, 1, "1/4", "0", 8);
        let mut g = new_game(&c, &[]).unwrap();
        let before = g.clone();
        let mut e = Greedy::new();
        let out = g.advance(&FillerMove::empty(), &mut e).unwrap();
        assert!(out.emptier_move.is_empty());
        assert_eq!(g.cups(), before.cups());
        assert_eq!(g.step(), 1);
    }

    #[test]
    fn greedy_empties_half_pour() {
        let c = cfg(GameVariant::SingleProcessor, 1, 1, "1/4", "0", 8);
        let mut g = new_game(&c, &[]).unwrap();
        let mut e = Greedy::new();
        let out = g.advance(&FillerMove::from_pours(alloc::vec![(CupId(0), w(4))]), &mut e).unwrap();
        assert_eq!(out.emptier_move.removals, alloc::vec![(CupId(0), w(4))]);
        assert!(g.fill(CupId(0)).is_zero());
    }

    #[test]
    fn dynamic_emptied_cup_leaves() {
        let c = cfg(GameVariant::DynamicSingle, 4, 1, "1/4", "0", 8);
        let mut g = new_game(&c, &[(CupId(0), w(2))]).unwrap();
        let mut e = Greedy::new();
        let mv = FillerMove { pours: Vec::new(), new_cups: alloc::vec![(CupId(1), w(2))] };
        let out = g.advance(&mv, &mut e).unwrap();
        assert_eq!(out.removed_cups, alloc::vec![CupId(0)]);
        assert_eq!(g.cups().len(), 1);
        assert_eq!(g.cups()[0].id, CupId(1));
        let reuse = FillerMove { pours: Vec::new(), new_cups: alloc::vec![(CupId(0), w(2))] };
        assert_eq!(g.validate_filler_move(&reuse).unwrap_err().constraint(), "fresh cup id");
    }

    #[test]
    fn backlog_is_max_fill() {
        let c = cfg(GameVariant::SingleProcessor, 3, 1, "1/4", "0", 8);
        let g = new_game(&c, &[(CupId(0), w(4)), (CupId(1), w(14)), (CupId(2), w(10))]).unwrap();
        assert_eq!(backlog(&g), w(14));
        let same = new_game(&c, &[(CupId(0), w(6)), (CupId(1), w(6)), (CupId(2), w(6))]).unwrap();
        assert_eq!(backlog(&same), w(6));
        let dynamic = new_game(&cfg(GameVariant::DynamicSingle, 3, 1, "1/4", "0", 8), &[]).unwrap();
        assert_eq!(backlog(&dynamic), WaterAmount::ZERO);
        let mut null = NullEmptier;
        let mut g2 = g.clone();
        g2.advance(&FillerMove::empty(), &mut null).unwrap();
        assert_eq!(backlog(&g2), w(14));
    }
}
