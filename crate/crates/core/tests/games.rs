use cupgame_core::config::minimal_resolution;
use cupgame_core::{
    run_trial, EmptierSpec, ExperimentSpec, FillerSpec, GameConfig, GameVariant, Rational, Resolution, VerifyLevel,
};
use proptest::prelude::*;

fn spec(variant: GameVariant, n: u64, p: u64, filler: FillerSpec, emptier: EmptierSpec, steps: u64) -> ExperimentSpec {
    let (epsilon, delta) = match variant {
        GameVariant::UniversalEmptying | GameVariant::CupFlushing => (Rational::zero(), Rational::zero()),
        _ => (Rational::new(1, 4).unwrap(), Rational::new(1, 8).unwrap()),
    };
    let config = GameConfig { variant, n, p, epsilon, delta, resolution: Resolution::from_u64(2).unwrap(), seed: 11 };
    let mut s = ExperimentSpec::new(config, filler, emptier, steps);
    let c = &s.config;
    s.config.resolution = minimal_resolution(c.variant, c.n, c.p, &c.epsilon, &c.delta, &s.requirements());
    s.verify = VerifyLevel::Full;
    s
}

fn half_harmonic(n: u64, p: u64) -> Rational {
    let mut sum = Rational::zero();
    for k in 2..=n / p {
        sum = &sum + &Rational::new(1, k as i64).unwrap();
    }
    &sum / &Rational::integer(2)
}

#[test]
fn zero_filler_leaves_backlog_at_zero() {
    let s = spec(GameVariant::SingleProcessor, 8, 1, FillerSpec::Zero, EmptierSpec::GreedySingle, 50);
    let o = run_trial(&s, 0, None).unwrap();
    assert!(o.summary.max_backlog.is_zero());
}

#[test]
fn trials_are_reproducible_and_seeded_apart() {
    let s = spec(GameVariant::RenormalizedMulti, 24, 4, FillerSpec::UniformRandom, EmptierSpec::ThresholdCounter, 200);
    let a = run_trial(&s, 3, None).unwrap();
    let b = run_trial(&s, 3, None).unwrap();
    assert_eq!(a, b);
    let mut record_a = Vec::new();
    let mut record_b = Vec::new();
    run_trial(&s, 0, Some(&mut |r| record_a.push(r.clone()))).unwrap();
    run_trial(&s, 1, Some(&mut |r| record_b.push(r.clone()))).unwrap();
    assert_ne!(record_a, record_b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adaptive_filler_reaches_half_harmonic_against_greedy(k in 2u64..24, p in 1u64..4) {
        let n = k * p;
        let s = spec(GameVariant::UniversalEmptying, n, p, FillerSpec::AdaptiveHarmonic, EmptierSpec::GreedyMulti, k - 1);
        let o = run_trial(&s, 0, None).unwrap();
        let fin = o.summary.final_backlog.to_rational(&s.config.resolution);
        prop_assert!(fin >= half_harmonic(n, p), "n={} p={}: {} < {}", n, p, fin, half_harmonic(n, p));
    }

    #[test]
    fn greedy_keeps_random_single_processor_backlog_bounded(n in 2u64..32, seed in 0u64..1000) {
        let mut s = spec(GameVariant::SingleProcessor, n, 1, FillerSpec::UniformRandom, EmptierSpec::GreedySingle, 100);
        s.config.seed = seed;
        let o = run_trial(&s, 0, None).unwrap();
        let max = o.summary.max_backlog.to_rational(&s.config.resolution);
        let h = half_harmonic(n, 1);
        prop_assert!(max <= &(&h + &h) + &Rational::integer(2), "n={}: max backlog {}", n, max);
    }
}
