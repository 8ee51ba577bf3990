//! Game variants, parameters and configuration validation.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;

use crate::rational::Rational;
use crate::units::Units;
use crate::water::{scale, Resolution, WaterAmount};

/// Which rule set a game is played under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GameVariant {
    /// Filler pours up to `1 - eps`; emptier removes up to 1 from one cup.
    SingleProcessor,
    /// Filler pours up to `(1 - eps) p`, at most `1 - delta` per cup;
    /// emptier removes up to 1 from each of up to `p` cups.
    MultiProcessor,
    /// Filler pours up to `(1 - eps) p`, at most 1 per cup; emptier removes
    /// up to `1 + 2 delta` from each of up to `p + 1` cups.
    RenormalizedMulti,
    /// Single-processor rules; new cups may arrive, empty cups leave.
    DynamicSingle,
    /// Multi-processor rules; new cups may arrive, empty cups leave.
    DynamicMulti,
    /// Filler pours up to 1; emptier empties one cup completely.
    CupFlushing,
    /// Filler pours up to `p / 2`; emptier empties up to `p` cups completely.
    UniversalEmptying,
}

impl GameVariant {
    pub const ALL: [GameVariant; 7] = [
        GameVariant::SingleProcessor,
        GameVariant::MultiProcessor,
        GameVariant::RenormalizedMulti,
        GameVariant::DynamicSingle,
        GameVariant::DynamicMulti,
        GameVariant::CupFlushing,
        GameVariant::UniversalEmptying,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GameVariant::SingleProcessor => "single_processor",
            GameVariant::MultiProcessor => "multi_processor",
            GameVariant::RenormalizedMulti => "renormalized_multi",
            GameVariant::DynamicSingle => "dynamic_single",
            GameVariant::DynamicMulti => "dynamic_multi",
            GameVariant::CupFlushing => "cup_flushing",
            GameVariant::UniversalEmptying => "universal_emptying",
        }
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, GameVariant::DynamicSingle | GameVariant::DynamicMulti)
    }

    /// Variants in which the emptier must remove the whole content of a cup.
    pub fn is_flushing(self) -> bool {
        matches!(self, GameVariant::CupFlushing | GameVariant::UniversalEmptying)
    }

    pub fn is_single_processor(self) -> bool {
        matches!(self, GameVariant::SingleProcessor | GameVariant::DynamicSingle | GameVariant::CupFlushing)
    }

    pub fn uses_epsilon(self) -> bool {
        !self.is_flushing()
    }

    pub fn uses_delta(self) -> bool {
        matches!(self, GameVariant::MultiProcessor | GameVariant::DynamicMulti | GameVariant::RenormalizedMulti)
    }
}

impl fmt::Display for GameVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GameVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        GameVariant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == norm)
            .ok_or_else(|| alloc::format!("unknown game variant `{s}`"))
    }
}

/// All parameters of one game.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameConfig {
    pub variant: GameVariant,
    /// Number of cups. In dynamic variants this is the batch size used by
    /// fillers that introduce cups, not a bound on the population.
    pub n: u64,
    pub p: u64,
    pub epsilon: Rational,
    pub delta: Rational,
    pub resolution: Resolution,
    pub seed: u64,
}

/// Extra constraints a configuration must satisfy for particular strategies.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Requirements {
    /// The threshold-counter emptier is in use, so `1/delta` must be integral.
    pub threshold_counters: bool,
    /// Sizes of cup sets over which the filler splits its budget evenly.
    pub equal_split_sizes: Vec<u64>,
    /// The filler needs `n` to be a multiple of `p`.
    pub n_multiple_of_p: bool,
}

/// One failed configuration constraint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigViolation {
    NoCups,
    NoProcessors,
    SingleProcessorNeedsP1 { p: u64 },
    EpsilonOutOfRange(Rational),
    DeltaOutOfRange(Rational),
    NotDivisibleByDenominator { field: &'static str, denominator: String },
    InverseDeltaNotIntegral(Rational),
    EqualSplitNotRepresentable { cups: u64 },
    NNotMultipleOfP { n: u64, p: u64 },
}

impl ConfigViolation {
    /// The configuration field the violation is about.
    pub fn field(&self) -> &'static str {
        match self {
            ConfigViolation::NoCups | ConfigViolation::NNotMultipleOfP { .. } => "n",
            ConfigViolation::NoProcessors | ConfigViolation::SingleProcessorNeedsP1 { .. } => "p",
            ConfigViolation::EpsilonOutOfRange(_) => "epsilon",
            ConfigViolation::DeltaOutOfRange(_) | ConfigViolation::InverseDeltaNotIntegral(_) => "delta",
            ConfigViolation::NotDivisibleByDenominator { .. } | ConfigViolation::EqualSplitNotRepresentable { .. } => {
                "D"
            }
        }
    }
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigViolation::NoCups => write!(f, "n must be positive"),
            ConfigViolation::NoProcessors => write!(f, "p must be positive"),
            ConfigViolation::SingleProcessorNeedsP1 { p } => {
                write!(f, "single-processor variants require p = 1, got {p}")
            }
            ConfigViolation::EpsilonOutOfRange(e) => write!(f, "epsilon not in (0,1): {e}"),
            ConfigViolation::DeltaOutOfRange(d) => write!(f, "delta not in [0,1): {d}"),
            ConfigViolation::NotDivisibleByDenominator { field, denominator } => {
                write!(f, "D not divisible by denominator of {field} ({denominator})")
            }
            ConfigViolation::InverseDeltaNotIntegral(d) => {
                write!(f, "1/delta must be a positive integer, got delta = {d}")
            }
            ConfigViolation::EqualSplitNotRepresentable { cups } => {
                write!(f, "D does not allow the pour budget to be split evenly over {cups} cups in even units")
            }
            ConfigViolation::NNotMultipleOfP { n, p } => write!(f, "n = {n} is not a multiple of p = {p}"),
        }
    }
}

/// Per-variant move limits, all in units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rules {
    /// Largest total pour per step.
    pub pour_budget: Units,
    /// Largest pour into one cup per step, if tighter than the budget.
    pub pour_cap: Option<Units>,
    /// Largest number of cups the emptier may touch per step.
    pub max_emptied_cups: u64,
    /// Largest removal from one cup; `None` means the whole cup is flushed.
    pub removal_cap: Option<Units>,
}

impl GameConfig {
    /// Pour budget per step as a rational amount of water.
    pub fn pour_budget(&self) -> Rational {
        let one = Rational::one();
        let p = Rational::integer(self.p as i64);
        match self.variant {
            GameVariant::SingleProcessor | GameVariant::DynamicSingle => &one - &self.epsilon,
            GameVariant::MultiProcessor | GameVariant::DynamicMulti | GameVariant::RenormalizedMulti => {
                &(&one - &self.epsilon) * &p
            }
            GameVariant::CupFlushing => one,
            GameVariant::UniversalEmptying => &p / &Rational::integer(2),
        }
    }

    /// Per-cup pour cap as a rational amount of water, if any.
    pub fn pour_cap(&self) -> Option<Rational> {
        match self.variant {
            GameVariant::MultiProcessor | GameVariant::DynamicMulti => Some(&Rational::one() - &self.delta),
            GameVariant::RenormalizedMulti => Some(Rational::one()),
            _ => None,
        }
    }

    /// The per-step limits in units, or the list of violations if the
    /// configuration is not valid.
    pub fn rules(&self) -> Result<Rules, Vec<ConfigViolation>> {
        let violations = validate_config(self, &Requirements::default());
        if !violations.is_empty() {
            return Err(violations);
        }
        let d = &self.resolution;
        let even_floor = |u: Units| if u.is_odd() { u.checked_sub(&Units::from_u64(1)).unwrap() } else { u };
        let budget = even_floor(scale(&self.pour_budget(), d).expect("validated representable"));
        let cap = self.pour_cap().map(|c| even_floor(scale(&c, d).expect("validated representable")));
        let (max_cups, removal_cap) = match self.variant {
            GameVariant::SingleProcessor | GameVariant::DynamicSingle => (1, Some(d.units().clone())),
            GameVariant::MultiProcessor | GameVariant::DynamicMulti => (self.p, Some(d.units().clone())),
            GameVariant::RenormalizedMulti => {
                let cap = &Rational::one() + &(&Rational::integer(2) * &self.delta);
                (self.p + 1, Some(scale(&cap, d).expect("validated representable")))
            }
            GameVariant::CupFlushing => (1, None),
            GameVariant::UniversalEmptying => (self.p, None),
        };
        Ok(Rules { pour_budget: budget, pour_cap: cap, max_emptied_cups: max_cups, removal_cap })
    }

    /// `delta * D`, the unit in which threshold counters move.
    pub fn delta_units(&self) -> Option<Units> {
        scale(&self.delta, &self.resolution)
    }

    pub fn one(&self) -> WaterAmount {
        self.resolution.one()
    }
}

fn denom_biguint(r: &Rational) -> BigUint {
    r.denom().magnitude().clone()
}

/// Check every configuration constraint; an empty list means valid.
pub fn validate_config(cfg: &GameConfig, req: &Requirements) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    if cfg.n == 0 {
        out.push(ConfigViolation::NoCups);
    }
    if cfg.p == 0 {
        out.push(ConfigViolation::NoProcessors);
    }
    if cfg.variant.is_single_processor() && cfg.p != 1 {
        out.push(ConfigViolation::SingleProcessorNeedsP1 { p: cfg.p });
    }
    let d = cfg.resolution.units().to_biguint();
    let zero = Rational::zero();
    let one = Rational::one();
    if cfg.variant.uses_epsilon() {
        if cfg.epsilon <= zero || cfg.epsilon >= one {
            out.push(ConfigViolation::EpsilonOutOfRange(cfg.epsilon.clone()));
        }
        let den = denom_biguint(&cfg.epsilon);
        if !d.is_multiple_of(&den) {
            out.push(ConfigViolation::NotDivisibleByDenominator { field: "epsilon", denominator: den.to_string() });
        }
    }
    if cfg.variant.uses_delta() {
        if cfg.delta < zero || cfg.delta >= one {
            out.push(ConfigViolation::DeltaOutOfRange(cfg.delta.clone()));
        }
        let den = denom_biguint(&cfg.delta);
        if !d.is_multiple_of(&den) {
            out.push(ConfigViolation::NotDivisibleByDenominator { field: "delta", denominator: den.to_string() });
        }
    }
    if req.threshold_counters {
        let ok = cfg.delta.is_positive() && cfg.delta.recip().map(|r| r.is_integer()).unwrap_or(false);
        if !ok {
            out.push(ConfigViolation::InverseDeltaNotIntegral(cfg.delta.clone()));
        }
    }
    if req.n_multiple_of_p && cfg.p > 0 && !cfg.n.is_multiple_of(cfg.p) {
        out.push(ConfigViolation::NNotMultipleOfP { n: cfg.n, p: cfg.p });
    }
    if out.is_empty() && !req.equal_split_sizes.is_empty() {
        let budget = scale(&cfg.pour_budget(), &cfg.resolution);
        let cap = cfg.pour_cap().and_then(|c| scale(&c, &cfg.resolution));
        for &u in &req.equal_split_sizes {
            if u == 0 {
                continue;
            }
            let ok = match &budget {
                Some(b) => match b.exact_div_u64(u) {
                    Some(share) => share.is_even() || cap.as_ref().is_some_and(|c| &share > c),
                    None => cap.as_ref().is_some_and(|c| b.div_floor(&Units::from_u64(u)) >= *c),
                },
                None => false,
            };
            if !ok {
                out.push(ConfigViolation::EqualSplitNotRepresentable { cups: u });
            }
        }
    }
    out
}

/// The smallest resolution satisfying the standard construction
/// `D = 2 lcm(den eps, den delta, n^2, p)` together with the even-split
/// requirements of `req`.
pub fn minimal_resolution(
    variant: GameVariant,
    n: u64,
    p: u64,
    epsilon: &Rational,
    delta: &Rational,
    req: &Requirements,
) -> Resolution {
    let mut d = BigUint::one();
    if variant.uses_epsilon() {
        d = d.lcm(&denom_biguint(epsilon));
    }
    if variant.uses_delta() {
        d = d.lcm(&denom_biguint(delta));
    }
    d = d.lcm(&(BigUint::from(n.max(1)) * BigUint::from(n.max(1))));
    d = d.lcm(&BigUint::from(p.max(1)));
    d *= 2u32;
    if !req.equal_split_sizes.is_empty() {
        // need budget * D / u to be an even integer: with budget = a/b in
        // lowest terms, D must be a multiple of 2bu / gcd(a, 2bu).
        let probe = GameConfig {
            variant,
            n,
            p,
            epsilon: epsilon.clone(),
            delta: delta.clone(),
            resolution: Resolution::from_u64(2).expect("2 is even"),
            seed: 0,
        };
        let budget = probe.pour_budget();
        let a = budget.numer().magnitude().clone();
        let b = budget.denom().magnitude().clone();
        for &u in &req.equal_split_sizes {
            if u == 0 {
                continue;
            }
            let m = &b * BigUint::from(u) * 2u32;
            let g = a.gcd(&m);
            d = d.lcm(&(m / g));
        }
    }
    Resolution::new(Units::from_biguint(d)).expect("constructed even")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(variant: GameVariant, eps: &str, delta: &str, d: u64) -> GameConfig {
        GameConfig {
            variant,
            n: 10,
            p: if variant.is_single_processor() { 1 } else { 4 },
            epsilon: eps.parse().unwrap(),
            delta: delta.parse().unwrap(),
            resolution: Resolution::from_u64(d).unwrap(),
            seed: 0,
        }
    }

    #[test]
    fn renormalized_quarter_delta_with_thresholds_is_ok() {
        let c = cfg(GameVariant::RenormalizedMulti, "1/4", "1/4", 8);
        let req = Requirements { threshold_counters: true, ..Default::default() };
        assert!(validate_config(&c, &req).is_empty());
    }

    #[test]
    fn third_delta_with_d8_names_divisibility() {
        let c = cfg(GameVariant::MultiProcessor, "1/4", "1/3", 8);
        let v = validate_config(&c, &Requirements::default());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field(), "D");
        assert!(v[0].to_string().contains("D not divisible by denominator of delta"));
    }

    #[test]
    fn zero_epsilon_is_out_of_range() {
        let c = cfg(GameVariant::SingleProcessor, "0", "0", 8);
        let v = validate_config(&c, &Requirements::default());
        assert!(v.iter().any(|x| x.to_string().starts_with("epsilon not in (0,1)")));
    }

    #[test]
    fn non_integral_inverse_delta_rejected_for_thresholds() {
        let c = cfg(GameVariant::RenormalizedMulti, "1/4", "2/5", 40);
        let req = Requirements { threshold_counters: true, ..Default::default() };
        let v = validate_config(&c, &req);
        assert!(matches!(v[..], [ConfigViolation::InverseDeltaNotIntegral(_)]));
    }

    #[test]
    fn rules_per_variant() {
        let r = cfg(GameVariant::RenormalizedMulti, "1/4", "1/8", 16).rules().unwrap();
        assert_eq!(r.pour_budget, Units::from_u64(48));
        assert_eq!(r.pour_cap, Some(Units::from_u64(16)));
        assert_eq!(r.max_emptied_cups, 5);
        assert_eq!(r.removal_cap, Some(Units::from_u64(20)));
        let u = cfg(GameVariant::UniversalEmptying, "1/2", "0", 4).rules().unwrap();
        assert_eq!(u.pour_budget, Units::from_u64(8));
        assert_eq!(u.removal_cap, None);
    }

    #[test]
    fn minimal_resolution_covers_harmonic_splits() {
        let sizes: Vec<u64> = (1..=31).map(|m| 64 - 2 * (m - 1)).collect();
        let req = Requirements { equal_split_sizes: sizes, n_multiple_of_p: true, ..Default::default() };
        let zero = Rational::zero();
        let d = minimal_resolution(GameVariant::UniversalEmptying, 64, 2, &zero, &zero, &req);
        let c = GameConfig {
            variant: GameVariant::UniversalEmptying,
            n: 64,
            p: 2,
            epsilon: zero.clone(),
            delta: zero,
            resolution: d,
            seed: 0,
        };
        assert!(validate_config(&c, &req).is_empty());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in GameVariant::ALL {
            assert_eq!(v.name().parse::<GameVariant>().unwrap(), v);
        }
        assert!("cups".parse::<GameVariant>().is_err());
    }
}
