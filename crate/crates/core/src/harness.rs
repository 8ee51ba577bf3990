//! One seeded trial: build the game and strategies, play, check, summarise.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::config::{validate_config, ConfigViolation, GameConfig, GameVariant, Requirements};
use crate::emptiers::{Emptier, Fault, FlushRelaxed, Greedy, NullEmptier, SmoothedGreedy, ThresholdCounter, TieRule};
use crate::fillers::{
    AdaptiveHarmonic, Filler, FillerError, FillerView, InformationModel, ObliviousGuessing, RoundRobin,
    SimulatedAdaptive, SingleTarget, Trace, UniformRandom, ZeroFiller,
};
use crate::game::{new_game, CupId, FillerMove, GameError, GameState, Phi, StepRecord};
use crate::metrics::{integer_fill, potential_phi, potential_phi_f64, StepFigures, Summarizer, TraceSummary};
use crate::rational::Rational;
use crate::thresholds::CounterInit;
use crate::units::Units;
use crate::verify::{InvariantViolation, Verifier, VerifyLevel};
use crate::water::WaterAmount;

/// Which filler to play, with its parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FillerSpec {
    AdaptiveHarmonic,
    ObliviousGuessing {
        k: u64,
    },
    UniformRandom,
    SingleTarget {
        cup: CupId,
    },
    RoundRobin,
    Trace {
        moves: Vec<FillerMove>,
    },
    /// The adaptive harmonic filler pre-simulated against `against`.
    SimulatedAdaptive {
        against: EmptierSpec,
    },
    Zero,
}

impl FillerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            FillerSpec::AdaptiveHarmonic => "adaptive_harmonic",
            FillerSpec::ObliviousGuessing { .. } => "oblivious_guessing",
            FillerSpec::UniformRandom => "uniform_random",
            FillerSpec::SingleTarget { .. } => "single_target",
            FillerSpec::RoundRobin => "round_robin",
            FillerSpec::Trace { .. } => "trace",
            FillerSpec::SimulatedAdaptive { .. } => "simulated_adaptive",
            FillerSpec::Zero => "zero",
        }
    }

    pub fn information_model(&self, variant: GameVariant) -> InformationModel {
        match self {
            FillerSpec::AdaptiveHarmonic => InformationModel::Adaptive,
            FillerSpec::UniformRandom if variant.is_dynamic() => InformationModel::Adaptive,
            _ => InformationModel::Oblivious,
        }
    }

    /// Equal-split sizes the filler needs to be exact.
    fn split_sizes(&self, cfg: &GameConfig) -> Vec<u64> {
        let p = cfg.p.max(1);
        match self {
            FillerSpec::AdaptiveHarmonic if cfg.variant == GameVariant::UniversalEmptying => {
                (0..cfg.n / p).map(|m| cfg.n - m * p).filter(|&s| s >= 2 * p).collect()
            }
            FillerSpec::ObliviousGuessing { k } => (0..k / p).map(|m| k - m * p).filter(|&s| s >= 2 * p).collect(),
            _ => Vec::new(),
        }
    }
}

/// Which emptier to play, with its parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EmptierSpec {
    GreedySingle,
    SmoothedGreedySingle,
    GreedyMulti,
    ThresholdCounter,
    SmoothedGreedyMulti,
    FlushGreedy,
    FlushRelaxed { slack: WaterAmount },
    Null,
}

impl EmptierSpec {
    pub const NAMES: [&'static str; 8] = [
        "greedy_single",
        "smoothed_greedy_single",
        "greedy_multi",
        "threshold_counter",
        "smoothed_greedy_multi",
        "flush_greedy",
        "flush_relaxed",
        "null",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EmptierSpec::GreedySingle => "greedy_single",
            EmptierSpec::SmoothedGreedySingle => "smoothed_greedy_single",
            EmptierSpec::GreedyMulti => "greedy_multi",
            EmptierSpec::ThresholdCounter => "threshold_counter",
            EmptierSpec::SmoothedGreedyMulti => "smoothed_greedy_multi",
            EmptierSpec::FlushGreedy => "flush_greedy",
            EmptierSpec::FlushRelaxed { .. } => "flush_relaxed",
            EmptierSpec::Null => "null",
        }
    }

    pub fn is_randomized(&self) -> bool {
        matches!(
            self,
            EmptierSpec::SmoothedGreedySingle | EmptierSpec::ThresholdCounter | EmptierSpec::SmoothedGreedyMulti
        )
    }

    /// The variants this emptier can play.
    pub fn supported_variants(&self) -> &'static [GameVariant] {
        use GameVariant::*;
        match self {
            EmptierSpec::GreedySingle => &[SingleProcessor, DynamicSingle],
            EmptierSpec::SmoothedGreedySingle => &[SingleProcessor, CupFlushing, UniversalEmptying],
            EmptierSpec::GreedyMulti => &[MultiProcessor, DynamicMulti, RenormalizedMulti, UniversalEmptying],
            EmptierSpec::ThresholdCounter | EmptierSpec::SmoothedGreedyMulti => &[RenormalizedMulti],
            EmptierSpec::FlushGreedy | EmptierSpec::FlushRelaxed { .. } => &[CupFlushing, UniversalEmptying],
            EmptierSpec::Null => &GameVariant::ALL,
        }
    }
}

/// Where the water of a recovery start goes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Placement {
    OneCup(CupId),
    /// Equal even shares over all cups, remainder two units at a time from
    /// the lowest id.
    Uniform,
}

/// Start from a bad state holding `total` water.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecoverySpec {
    pub total: WaterAmount,
    pub placement: Placement,
    pub counter_init: CounterInit,
}

/// How the potential is reported per step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum PhiMode {
    #[default]
    Off,
    Float,
    Exact,
}

/// Everything needed to run a batch of trials.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub config: GameConfig,
    pub filler: FillerSpec,
    pub emptier: EmptierSpec,
    pub steps: u64,
    pub trials: u64,
    /// Steps after which every cup's fill is recorded.
    pub checkpoints: Vec<u64>,
    pub verify: VerifyLevel,
    pub recovery: Option<RecoverySpec>,
    pub phi: PhiMode,
    /// Report the integer fill every step (virtual fills for smoothed greedy).
    pub integer_fill: bool,
    /// Backlog levels whose exceedance frequencies are summarised.
    pub tail_thresholds: Vec<Rational>,
    /// Refuse adaptive fillers.
    pub oblivious_only: bool,
    /// Deliberate emptier bug, for exercising the checks.
    pub fault: Option<Fault>,
}

impl ExperimentSpec {
    /// A spec with one trial, invariant checking on and no extras.
    pub fn new(config: GameConfig, filler: FillerSpec, emptier: EmptierSpec, steps: u64) -> Self {
        ExperimentSpec {
            config,
            filler,
            emptier,
            steps,
            trials: 1,
            checkpoints: Vec::new(),
            verify: VerifyLevel::Invariants,
            recovery: None,
            phi: PhiMode::Off,
            integer_fill: false,
            tail_thresholds: Vec::new(),
            oblivious_only: false,
            fault: None,
        }
    }

    /// Configuration requirements implied by the chosen strategies.
    pub fn requirements(&self) -> Requirements {
        let cfg = &self.config;
        let counters = matches!(self.emptier, EmptierSpec::ThresholdCounter | EmptierSpec::SmoothedGreedyMulti);
        let mut sizes = self.filler.split_sizes(cfg);
        if let FillerSpec::SimulatedAdaptive { .. } = self.filler {
            sizes = FillerSpec::AdaptiveHarmonic.split_sizes(cfg);
        }
        let n_multiple_of_p =
            matches!(self.filler, FillerSpec::AdaptiveHarmonic | FillerSpec::SimulatedAdaptive { .. })
                && cfg.variant == GameVariant::UniversalEmptying;
        Requirements { threshold_counters: counters, equal_split_sizes: sizes, n_multiple_of_p }
    }

    /// Check the spec without running it.
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.trials == 0 {
            return Err(SpecError::Invalid("trials must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(SpecError::Invalid("steps must be at least 1".into()));
        }
        let violations = validate_config(&self.config, &self.requirements());
        if !violations.is_empty() {
            return Err(SpecError::Config(violations));
        }
        let variant = self.config.variant;
        check_emptier_variant(&self.emptier, variant)?;
        if let FillerSpec::SimulatedAdaptive { against } = &self.filler {
            check_emptier_variant(against, variant)?;
            if against.is_randomized() {
                return Err(SpecError::Incompatible(alloc::format!(
                    "simulated_adaptive needs a deterministic emptier to simulate, {} is randomized",
                    against.name()
                )));
            }
        }
        let n = self.config.n;
        match &self.filler {
            FillerSpec::ObliviousGuessing { k } => {
                let p = self.config.p;
                if variant != GameVariant::UniversalEmptying || *k < 2 * p || *k > n || k % p != 0 {
                    return Err(SpecError::Incompatible(alloc::format!(
                        "oblivious_guessing needs the universal_emptying game with 2p <= k <= n and k a multiple of p (k = {k}, p = {p}, n = {n})"
                    )));
                }
            }
            FillerSpec::SingleTarget { cup } if variant.is_dynamic() || cup.0 >= n => {
                return Err(SpecError::Incompatible(alloc::format!(
                    "single_target needs a static game and a cup below n = {n}"
                )));
            }
            FillerSpec::RoundRobin if variant.is_dynamic() => {
                return Err(SpecError::Incompatible("round_robin needs a static game".into()));
            }
            _ => {}
        }
        if self.oblivious_only && self.filler.information_model(variant) == InformationModel::Adaptive {
            return Err(SpecError::Incompatible(alloc::format!(
                "{} is an adaptive filler and only oblivious fillers are allowed",
                self.filler.name()
            )));
        }
        if let Some(r) = &self.recovery {
            if !(variant.is_single_processor() && !variant.is_flushing() || variant == GameVariant::RenormalizedMulti) {
                return Err(SpecError::Incompatible(alloc::format!(
                    "recovery starts are supported for single_processor, dynamic_single and renormalized_multi, not {variant}"
                )));
            }
            if let Placement::OneCup(c) = r.placement {
                if c.0 >= n {
                    return Err(SpecError::Incompatible(alloc::format!("recovery cup {c} is not below n = {n}")));
                }
            }
            if !r.total.units().is_even() {
                return Err(SpecError::Invalid("recovery total must be an even number of units".into()));
            }
        }
        if self.fault.is_some()
            && !matches!(self.emptier, EmptierSpec::ThresholdCounter | EmptierSpec::SmoothedGreedyMulti)
        {
            return Err(SpecError::Incompatible("faults can only be injected into threshold-counter emptiers".into()));
        }
        Ok(())
    }

    /// Initial fills for a recovery start; empty without recovery.
    pub fn initial_fills(&self) -> Vec<(CupId, WaterAmount)> {
        let Some(r) = &self.recovery else { return Vec::new() };
        if r.total.is_zero() {
            return Vec::new();
        }
        match r.placement {
            Placement::OneCup(c) => alloc::vec![(c, r.total.clone())],
            Placement::Uniform => {
                let n = self.config.n;
                let pairs = r.total.units().half();
                let (q, rem) = pairs.div_rem(&Units::from_u64(n));
                let rem = rem.to_u64().expect("remainder below n");
                (0..n)
                    .map(|i| {
                        let mut u = q.mul_u64(2);
                        if i < rem {
                            u += &Units::from_u64(2);
                        }
                        (CupId(i), WaterAmount::from_units(u))
                    })
                    .filter(|(_, a)| !a.is_zero())
                    .collect()
            }
        }
    }
}

fn check_emptier_variant(e: &EmptierSpec, variant: GameVariant) -> Result<(), SpecError> {
    if e.supported_variants().contains(&variant) {
        return Ok(());
    }
    let names: Vec<&str> = e.supported_variants().iter().map(|v| v.name()).collect();
    Err(SpecError::Incompatible(alloc::format!(
        "emptier {} does not play the {variant} game (supported: {})",
        e.name(),
        names.join(", ")
    )))
}

/// A spec that cannot be run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SpecError {
    Config(Vec<ConfigViolation>),
    Incompatible(String),
    Invalid(String),
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecError::Config(v) => {
                write!(f, "invalid configuration")?;
                for (i, x) in v.iter().enumerate() {
                    write!(f, "{} {x}", if i == 0 { ":" } else { ";" })?;
                }
                Ok(())
            }
            SpecError::Incompatible(s) | SpecError::Invalid(s) => f.write_str(s),
        }
    }
}

/// Why a trial stopped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TrialErrorKind {
    Spec(SpecError),
    Filler(FillerError),
    /// A strategy broke the rules of the game.
    Protocol(GameError),
    Invariant(InvariantViolation),
}

/// A failed trial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialError {
    pub trial: u64,
    pub kind: TrialErrorKind,
}

impl TrialError {
    pub fn invariant(&self) -> Option<&InvariantViolation> {
        match &self.kind {
            TrialErrorKind::Invariant(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for TrialError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "trial {}: ", self.trial)?;
        match &self.kind {
            TrialErrorKind::Spec(e) => write!(f, "{e}"),
            TrialErrorKind::Filler(e) => write!(f, "{e}"),
            TrialErrorKind::Protocol(e) => write!(f, "{e}"),
            TrialErrorKind::Invariant(e) => write!(f, "{e}"),
        }
    }
}

/// Fills of every cup after a checkpoint step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Checkpoint {
    pub step: u64,
    pub fills: Vec<(CupId, WaterAmount)>,
}

/// Result of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutput {
    pub trial: u64,
    pub summary: TraceSummary,
    pub checkpoints: Vec<Checkpoint>,
    pub emptier: &'static str,
    pub filler: &'static str,
}

/// Build the emptier named by `spec` for a game at its initial position.
pub fn build_emptier(
    spec: &EmptierSpec,
    state: &GameState,
    trial: u64,
    init: CounterInit,
    fault: Option<Fault>,
) -> Result<Box<dyn Emptier>, SpecError> {
    let seed = state.config().seed;
    let counter = |tie| {
        ThresholdCounter::new(state, seed, trial, tie, init)
            .map(|e| match fault {
                Some(f) => e.with_fault(f),
                None => e,
            })
            .map_err(|e| SpecError::Invalid(alloc::format!("{e}")))
    };
    Ok(match spec {
        EmptierSpec::GreedySingle | EmptierSpec::GreedyMulti | EmptierSpec::FlushGreedy => Box::new(Greedy::new()),
        EmptierSpec::SmoothedGreedySingle => Box::new(SmoothedGreedy::new(state, seed, trial)),
        EmptierSpec::ThresholdCounter => Box::new(counter(TieRule::Arbitrary)?),
        EmptierSpec::SmoothedGreedyMulti => Box::new(counter(TieRule::Fullest)?),
        EmptierSpec::FlushRelaxed { slack } => Box::new(FlushRelaxed::new(slack.clone())),
        EmptierSpec::Null => Box::new(NullEmptier),
    })
}

/// Build the filler named by `spec` for a game at its initial position.
pub fn build_filler(spec: &FillerSpec, state: &GameState, trial: u64) -> Result<Box<dyn Filler>, TrialErrorKind> {
    let cfg = state.config();
    Ok(match spec {
        FillerSpec::AdaptiveHarmonic => Box::new(AdaptiveHarmonic::new()),
        FillerSpec::ObliviousGuessing { k } => Box::new(ObliviousGuessing::new(*k, cfg.seed, trial)),
        FillerSpec::UniformRandom => Box::new(UniformRandom::new(cfg.seed, trial, cfg.variant)),
        FillerSpec::SingleTarget { cup } => Box::new(SingleTarget { cup: *cup }),
        FillerSpec::RoundRobin => Box::new(RoundRobin::new()),
        FillerSpec::Trace { moves } => Box::new(Trace::new(moves.clone())),
        FillerSpec::SimulatedAdaptive { against } => {
            let emptier =
                build_emptier(against, state, trial, CounterInit::Scaled, None).map_err(TrialErrorKind::Spec)?;
            Box::new(
                SimulatedAdaptive::new(state.clone(), emptier, Box::new(AdaptiveHarmonic::new()))
                    .map_err(TrialErrorKind::Filler)?,
            )
        }
        FillerSpec::Zero => Box::new(ZeroFiller),
    })
}

/// Play trial `trial` of `spec`. `sink`, if given, receives every step
/// record in order.
pub fn run_trial(
    spec: &ExperimentSpec,
    trial: u64,
    mut sink: Option<&mut dyn FnMut(&StepRecord)>,
) -> Result<TrialOutput, TrialError> {
    let err = |kind| TrialError { trial, kind };
    spec.validate().map_err(|e| err(TrialErrorKind::Spec(e)))?;
    let cfg = &spec.config;
    let mut game = new_game(cfg, &spec.initial_fills()).map_err(|e| err(TrialErrorKind::Protocol(e)))?;
    let init = spec.recovery.as_ref().map(|r| r.counter_init).unwrap_or_default();
    let mut emptier =
        build_emptier(&spec.emptier, &game, trial, init, spec.fault).map_err(|e| err(TrialErrorKind::Spec(e)))?;
    let mut filler = build_filler(&spec.filler, &game, trial).map_err(err)?;
    let adaptive = filler.information_model() == InformationModel::Adaptive;
    let rules = game.rules().clone();
    let mut verifier = Verifier::new(spec.verify, &game);
    let mut summarizer = Summarizer::new(&cfg.resolution, &spec.tail_thresholds);
    let mut checkpoints = Vec::new();
    let eps_f64 = cfg.epsilon.to_f64();

    for step in 1..=spec.steps {
        let view =
            FillerView { step, config: cfg, rules: &rules, next_id: game.next_id(), state: adaptive.then_some(&game) };
        let filler_move = filler.next_move(&view).map_err(|e| err(TrialErrorKind::Filler(e)))?;
        let outcome = match game.advance(&filler_move, emptier.as_mut()) {
            Ok(o) => o,
            Err(GameError::Invariant(v)) => return Err(err(TrialErrorKind::Invariant(v))),
            Err(e) => return Err(err(TrialErrorKind::Protocol(e))),
        };
        verifier
            .check_step(&game, &filler_move, &outcome, emptier.as_ref())
            .map_err(|v| err(TrialErrorKind::Invariant(v)))?;
        if adaptive {
            filler.observe(&game, &outcome.emptier_move);
        }

        let report = emptier.report();
        let backlog = game.backlog();
        let integer = spec.integer_fill.then(|| match &report.virtual_integer_fill {
            Some(v) => v.clone(),
            None => integer_fill(game.cups().iter().map(|c| c.fill.units()), &cfg.resolution),
        });
        let phi = match spec.phi {
            PhiMode::Off => None,
            PhiMode::Float => Some(Phi::Float(potential_phi_f64(
                game.cups().iter().map(|c| c.fill.units()),
                eps_f64,
                &cfg.resolution,
            ))),
            PhiMode::Exact => Some(Phi::Exact(potential_phi(
                game.cups().iter().map(|c| c.fill.units()),
                &cfg.epsilon,
                &cfg.resolution,
            ))),
        };
        summarizer.push(StepFigures {
            step,
            backlog: &backlog,
            integer_fill: integer.as_ref(),
            surplus: report.surplus,
            counter_sum: &report.counter_sum,
            phi: phi.as_ref().map(Phi::to_f64),
            virtual_backlog: report.virtual_backlog.as_ref(),
        });
        if spec.checkpoints.contains(&step) {
            checkpoints.push(Checkpoint { step, fills: game.cups().iter().map(|c| (c.id, c.fill.clone())).collect() });
        }
        if let Some(sink) = sink.as_deref_mut() {
            sink(&StepRecord {
                step,
                filler_move,
                emptier_move: outcome.emptier_move,
                backlog,
                integer_fill: integer.unwrap_or_default(),
                surplus: report.surplus,
                counter_sum: report.counter_sum,
                phi,
                virtual_backlog: report.virtual_backlog,
            });
        }
    }
    Ok(TrialOutput {
        trial,
        summary: summarizer.finish(),
        checkpoints,
        emptier: spec.emptier.name(),
        filler: spec.filler.name(),
    })
}
