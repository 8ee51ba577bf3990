//! Exact-arithmetic engines for cup games.
//!
//! Water is counted in integer units of `1/D` for a global even resolution
//! `D`. Filler pours are even unit counts and random thresholds are odd unit
//! counts, so a pour can never land exactly on a threshold.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod emptiers;
pub mod error;
pub mod fillers;
pub mod game;
pub mod harness;
pub mod metrics;
pub mod rational;
pub mod rng;
pub mod thresholds;
pub mod units;
pub mod verify;
pub mod water;

pub use config::{validate_config, ConfigViolation, GameConfig, GameVariant, Requirements, Rules};
pub use emptiers::{Emptier, EmptierReport, Fault, TieRule};
pub use error::CoreError;
pub use fillers::{Filler, FillerError, FillerView, InformationModel};
pub use game::{new_game, CupId, EmptierMove, FillerMove, GameError, GameState, StepRecord};
pub use harness::{
    run_trial, EmptierSpec, ExperimentSpec, FillerSpec, PhiMode, Placement, RecoverySpec, TrialError, TrialOutput,
};
pub use metrics::TraceSummary;
pub use rational::Rational;
pub use units::Units;
pub use verify::{InvariantViolation, VerifyLevel};
pub use water::{to_units, Resolution, WaterAmount};
