//! The ten acceptance criteria as runnable checks.
//!
//! Every criterion runs at a `Full` scale (the stated sizes and tolerances)
//! or a `Fast` scale (smaller runs, tolerances widened in proportion).

use std::fmt;
use std::time::{Duration, Instant};

use cupgame_core::config::minimal_resolution;
use cupgame_core::fillers::harmonic_lower_bound;
use cupgame_core::harness::{TrialErrorKind, TrialOutput};
use cupgame_core::metrics::backlog_witness_exists;
use cupgame_core::rng::{labels, uniform_threshold};
use cupgame_core::thresholds::{CounterInit, OffsetSource, ThresholdState};
use cupgame_core::{
    run_trial, CupId, EmptierSpec, ExperimentSpec, Fault, FillerSpec, GameConfig, GameVariant, InvariantViolation,
    Placement, Rational, RecoverySpec, Resolution, StepRecord, TrialError, VerifyLevel, WaterAmount,
};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Fast,
    Full,
}

impl std::str::FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast" => Ok(Scale::Fast),
            "full" => Ok(Scale::Full),
            other => Err(format!("unknown suite `{other}` (expected fast or full)")),
        }
    }
}

/// An exact comparison made by a criterion: `measured >= bound`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactCheck {
    pub label: String,
    pub n: u64,
    pub p: u64,
    pub measured: Rational,
    pub bound: Rational,
}

/// Outcome of one criterion.
#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    /// The first invariant violation met, if any.
    pub violation: Option<InvariantViolation>,
    pub exact: Vec<ExactCheck>,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<28} {}  {} ({:.1}s)",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

/// Runs the criteria. `fault` is planted in every threshold-counter emptier.
#[derive(Clone, Debug)]
pub struct Suite {
    pub scale: Scale,
    pub workers: usize,
    pub fault: Option<Fault>,
    witness: WitnessTally,
}

/// Backlog-witness tallies gathered from threshold-counter traces.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WitnessTally {
    pub traces: u64,
    pub steps: u64,
    pub positive_counter_steps: u64,
    pub missing: u64,
    pub first_missing: Option<(u64, u64)>,
}

impl WitnessTally {
    fn absorb(&mut self, other: &WitnessTally) {
        self.traces += other.traces;
        self.steps += other.steps;
        self.positive_counter_steps += other.positive_counter_steps;
        self.missing += other.missing;
        if self.first_missing.is_none() {
            self.first_missing = other.first_missing;
        }
    }
}

fn pick<T>(scale: Scale, fast: T, full: T) -> T {
    match scale {
        Scale::Fast => fast,
        Scale::Full => full,
    }
}

fn rat(s: &str) -> Rational {
    s.parse().expect("literal rational")
}

/// A spec at the smallest resolution its strategies accept.
fn make_spec(
    variant: GameVariant,
    (n, p): (u64, u64),
    (eps, delta): (&str, &str),
    seed: u64,
    filler: FillerSpec,
    emptier: EmptierSpec,
    steps: u64,
) -> ExperimentSpec {
    let (epsilon, delta) = (rat(eps), rat(delta));
    let probe = Resolution::from_u64(2).expect("even");
    let config = GameConfig { variant, n, p, epsilon, delta, resolution: probe, seed };
    let mut spec = ExperimentSpec::new(config, filler, emptier, steps);
    let c = &spec.config;
    spec.config.resolution = minimal_resolution(c.variant, c.n, c.p, &c.epsilon, &c.delta, &spec.requirements());
    spec
}

/// Binomial tolerance used by the crossing-probability check: 3.4 standard
/// errors of a proportion near 0.3, i.e. 0.005 at 10^5 samples.
pub fn crossing_tolerance(samples: u64) -> f64 {
    3.4 * (0.3f64 * 0.7 / samples as f64).sqrt()
}

struct Runs<T> {
    outputs: Vec<(TrialOutput, T)>,
    error: Option<TrialError>,
}

/// Run every trial, feeding its step records to a fresh collector.
fn run_all<T: Send, C>(spec: &ExperimentSpec, workers: usize, collector: C) -> Runs<T>
where
    C: Fn(u64) -> Collector<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
    let results: Vec<Result<(TrialOutput, T), TrialError>> = pool.install(|| {
        (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let mut collect = collector(t);
                let mut sink = |r: &StepRecord| {
                    collect(Some(r));
                };
                let out = run_trial(spec, t, Some(&mut sink))?;
                let extra = collect(None).expect("collector yields on finish");
                Ok((out, extra))
            })
            .collect()
    });
    let mut outputs = Vec::new();
    let mut error = None;
    for r in results {
        match r {
            Ok(o) => outputs.push(o),
            Err(e) if error.is_none() => error = Some(e),
            Err(_) => {}
        }
    }
    Runs { outputs, error }
}

/// Sees each step record, then `None` at the end of the trial to yield its result.
type Collector<T> = Box<dyn FnMut(Option<&StepRecord>) -> Option<T> + Send>;

fn no_collect(_: u64) -> Collector<()> {
    Box::new(|r| r.is_none().then_some(()))
}

/// Checks every threshold-counter step with positive counters for a
/// height-0 backlog witness, using the direct scan over recorded surplus.
fn witness_collector(delta: Rational) -> impl Fn(u64) -> Collector<WitnessTally> + Sync {
    move |trial| {
        let delta = delta.clone();
        let mut surplus: Vec<u64> = Vec::new();
        let mut tally = WitnessTally { traces: 1, ..Default::default() };
        Box::new(move |r| match r {
            Some(r) => {
                surplus.push(r.surplus);
                tally.steps += 1;
                if !r.counter_sum.is_zero() {
                    tally.positive_counter_steps += 1;
                    if backlog_witness_exists(&surplus, &Rational::zero(), &delta).is_none() {
                        tally.missing += 1;
                        tally.first_missing.get_or_insert((trial, r.step));
                    }
                }
                None
            }
            None => Some(std::mem::take(&mut tally)),
        })
    }
}

fn failure_detail(e: &TrialError) -> String {
    match &e.kind {
        TrialErrorKind::Invariant(v) => format!("trial {}: {v}", e.trial),
        _ => e.to_string(),
    }
}

fn finish(
    id: u8,
    name: &'static str,
    start: Instant,
    error: Option<&TrialError>,
    passed: bool,
    detail: String,
) -> CriterionReport {
    let violation = error.and_then(|e| e.invariant().cloned());
    let (passed, detail) = match error {
        Some(e) => (false, failure_detail(e)),
        None => (passed, detail),
    };
    CriterionReport { id, name, passed, detail, elapsed: start.elapsed(), violation, exact: Vec::new() }
}

fn median(mut xs: Vec<Rational>) -> Rational {
    xs.sort();
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2].clone()
    } else {
        &(&xs[k / 2 - 1] + &xs[k / 2]) / &Rational::integer(2)
    }
}

impl Suite {
    pub fn new(scale: Scale, workers: usize) -> Self {
        Suite { scale, workers, fault: None, witness: WitnessTally::default() }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    /// Run all ten criteria in order, calling `each` after every one.
    pub fn run(&mut self, mut each: impl FnMut(&CriterionReport)) -> Vec<CriterionReport> {
        let mut out = Vec::new();
        for id in 1..=10 {
            let r = self.criterion(id);
            each(&r);
            out.push(r);
        }
        out
    }

    /// Run one criterion. Criterion 8 reads the traces of criteria 1 and 6
    /// and reports nothing useful unless those ran first.
    pub fn criterion(&mut self, id: u8) -> CriterionReport {
        match id {
            1 => self.counter_sandwich(),
            2 => self.mod_one(),
            3 => self.harmonic_bound(),
            4 => self.lower_bound(),
            5 => self.crossing_probability(),
            6 => self.constant_backlog(),
            7 => self.potential_case_1(),
            8 => self.backlog_witness(),
            9 => self.recovery(),
            10 => self.separation(),
            _ => panic!("no criterion {id}"),
        }
    }

    fn threshold_spec(&self, n: u64, p: u64, delta: &str, steps: u64, trials: u64) -> ExperimentSpec {
        let mut spec = make_spec(
            GameVariant::RenormalizedMulti,
            (n, p),
            ("1/4", delta),
            1,
            FillerSpec::UniformRandom,
            EmptierSpec::ThresholdCounter,
            steps,
        );
        spec.trials = trials;
        spec.fault = self.fault;
        spec
    }

    fn counter_sandwich(&mut self) -> CriterionReport {
        let start = Instant::now();
        let (trials, steps) = pick(self.scale, (20, 500), (200, 2000));
        let mut spec = self.threshold_spec(100, 8, "1/8", steps, trials);
        spec.verify = VerifyLevel::Full;
        let runs = run_all(&spec, self.workers, witness_collector(spec.config.delta.clone()));
        let mut crossings = 0;
        for (_, w) in &runs.outputs {
            self.witness.absorb(w);
        }
        for (o, _) in &runs.outputs {
            crossings += o.summary.total_surplus;
        }
        let elapsed = start.elapsed();
        let limit = Duration::from_secs(120);
        let passed = elapsed < limit;
        let detail = format!(
            "{} trials x {} steps, every cup checked every step, {} surplus crossings seen, runtime {:.1}s (limit {}s)",
            trials,
            steps,
            crossings,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
        finish(1, "counter sandwich", start, runs.error.as_ref(), passed, detail)
    }

    fn mod_one(&mut self) -> CriterionReport {
        let start = Instant::now();
        let (trials, steps) = pick(self.scale, (10, 500), (50, 1000));
        let mut total = 0;
        for filler in [FillerSpec::AdaptiveHarmonic, FillerSpec::UniformRandom] {
            let mut spec = make_spec(
                GameVariant::SingleProcessor,
                (64, 1),
                ("1/4", "0"),
                2,
                filler,
                EmptierSpec::SmoothedGreedySingle,
                steps,
            );
            spec.trials = trials;
            spec.verify = VerifyLevel::Full;
            let runs = run_all(&spec, self.workers, no_collect);
            if runs.error.is_some() {
                return finish(2, "mod-one invariance", start, runs.error.as_ref(), false, String::new());
            }
            total += runs.outputs.iter().map(|(o, _)| o.summary.steps).sum::<u64>();
        }
        let detail = format!("{total} steps over adversarial and random fillers, every cup checked, zero violations");
        finish(2, "mod-one invariance", start, None, true, detail)
    }

    fn harmonic_bound(&mut self) -> CriterionReport {
        let start = Instant::now();
        let (n, trials, steps) = pick(self.scale, (256, 2, 1000), (1024, 4, 5000));
        let mut peak = 0usize;
        let mut total = 0;
        for filler in [FillerSpec::UniformRandom, FillerSpec::AdaptiveHarmonic] {
            let mut spec = make_spec(
                GameVariant::DynamicSingle,
                (n, 1),
                ("1/4", "0"),
                3,
                filler,
                EmptierSpec::GreedySingle,
                steps,
            );
            spec.trials = trials;
            spec.verify = VerifyLevel::Full;
            let runs = run_all(&spec, self.workers, |_| {
                let mut peak = 0usize;
                Box::new(move |r: Option<&StepRecord>| match r {
                    Some(r) => {
                        peak = peak.max(r.filler_move.new_cups.len());
                        None
                    }
                    None => Some(peak),
                })
            });
            if runs.error.is_some() {
                return finish(3, "harmonic average bound", start, runs.error.as_ref(), false, String::new());
            }
            total += runs.outputs.iter().map(|(o, _)| o.summary.steps).sum::<u64>();
            peak = peak.max(runs.outputs.iter().map(|(_, p)| *p).max().unwrap_or(0));
        }
        let detail = format!(
            "{total} steps, n = {n}, up to {peak} cups arriving in one step, bound checked at j = 1, 2, 4, ..., n_i"
        );
        finish(3, "harmonic average bound", start, None, true, detail)
    }

    fn lower_bound_case(&self, n: u64, p: u64) -> Result<ExactCheck, TrialError> {
        let spec = make_spec(
            GameVariant::UniversalEmptying,
            (n, p),
            ("0", "0"),
            4,
            FillerSpec::AdaptiveHarmonic,
            EmptierSpec::GreedyMulti,
            n / p - 1,
        );
        let out = run_trial(&spec, 0, None)?;
        Ok(ExactCheck {
            label: format!("adaptive harmonic vs greedy, n={n}, p={p}"),
            n,
            p,
            measured: out.summary.final_backlog.to_rational(&spec.config.resolution),
            bound: harmonic_lower_bound(n, p),
        })
    }

    fn lower_bound(&mut self) -> CriterionReport {
        let start = Instant::now();
        let mut checks = Vec::new();
        for (n, p) in [(64, 2), (8, 2)] {
            match self.lower_bound_case(n, p) {
                Ok(c) => checks.push(c),
                Err(e) => return finish(4, "adaptive lower bound", start, Some(&e), false, String::new()),
            }
        }
        let passed = checks.iter().all(|c| c.measured >= c.bound);
        let detail = checks
            .iter()
            .map(|c| format!("n={} p={}: final backlog {} >= {}", c.n, c.p, c.measured, c.bound))
            .collect::<Vec<_>>()
            .join("; ");
        let mut r = finish(4, "adaptive lower bound", start, None, passed, detail);
        r.exact = checks;
        r
    }

    fn crossing_probability(&mut self) -> CriterionReport {
        let start = Instant::now();
        let samples: u64 = pick(self.scale, 20_000, 100_000);
        let tol = crossing_tolerance(samples);
        // D = 2000 keeps 0.3 an even unit count and 1/8 a whole one.
        let d = Resolution::from_u64(2000).expect("even");
        let pour = WaterAmount::from_u64(600);
        let delta = rat("1/8");
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.workers).build().expect("thread pool");
        let (offset_hits, collection_hits) = pool.install(|| {
            (0..samples)
                .into_par_iter()
                .map(|seed| {
                    // Smoothed-greedy offset: the cup starts at r in (0, 1).
                    let r = uniform_threshold(seed, labels::SMOOTHED_OFFSET, &[0, 0], &d).into_units();
                    let after = &r + pour.units();
                    let a = (r.div_floor(d.units()) != after.div_floor(d.units())) as u64;
                    // Threshold collection: the cup sits at 2, the start of the first collection's span.
                    let mut ts =
                        ThresholdState::new(&delta, &d, OffsetSource::Random { seed, trial: 0 }).expect("valid delta");
                    ts.init_counters_from_initial_fill(&[(0, WaterAmount::from_u64(4000))], CounterInit::Scaled);
                    let b = ts.record_pour(0, &pour);
                    (a, b)
                })
                .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1))
        });
        let f_offset = offset_hits as f64 / samples as f64;
        let f_coll = collection_hits as f64 / samples as f64;
        let passed = (f_offset - 0.3).abs() <= tol && (f_coll - 0.3).abs() <= tol;
        let detail = format!(
            "{samples} seeds, pour 0.3: offset crossing {f_offset:.5}, collection crossing {f_coll:.5}, tolerance +/-{tol:.4}"
        );
        finish(5, "crossing probability", start, None, passed, detail)
    }

    fn constant_backlog(&mut self) -> CriterionReport {
        let start = Instant::now();
        let (small, large, trials, steps) = pick(self.scale, (16, 64, 10, 2000), (16, 256, 100, 10_000));
        let three = Rational::integer(3);
        let mut fractions = Vec::new();
        for p in [small, large] {
            let mut spec = self.threshold_spec(4 * p, p, "1/16", steps, trials);
            spec.tail_thresholds = vec![three.clone()];
            let runs = run_all(&spec, self.workers, witness_collector(spec.config.delta.clone()));
            for (_, w) in &runs.outputs {
                self.witness.absorb(w);
            }
            if runs.error.is_some() {
                return finish(6, "constant backlog", start, runs.error.as_ref(), false, String::new());
            }
            let hits: f64 =
                runs.outputs.iter().map(|(o, _)| o.summary.tail_fractions[0].1 * o.summary.steps as f64).sum();
            let total: u64 = runs.outputs.iter().map(|(o, _)| o.summary.steps).sum();
            let max = runs
                .outputs
                .iter()
                .map(|(o, _)| o.summary.max_backlog.to_f64(&spec.config.resolution))
                .fold(0.0, f64::max);
            fractions.push((p, hits / total as f64, max));
        }
        let (f_small, f_large) = (fractions[0].1, fractions[1].1);
        let passed = f_large <= 1e-3 && f_large <= f_small;
        let detail = fractions
            .iter()
            .map(|(p, f, m)| format!("p={p}: frac(backlog > 3) = {f:.2e}, max {m:.3}"))
            .collect::<Vec<_>>()
            .join("; ");
        finish(6, "constant backlog", start, None, passed, format!("{trials} trials x {steps} steps; {detail}"))
    }

    fn potential_case_1(&mut self) -> CriterionReport {
        let start = Instant::now();
        let steps = pick(self.scale, 2000, 10_000);
        let mut parts = Vec::new();
        for filler in [FillerSpec::AdaptiveHarmonic, FillerSpec::UniformRandom] {
            let name = filler.name();
            let mut spec = make_spec(
                GameVariant::MultiProcessor,
                (128, 8),
                ("1/4", "1/16"),
                7,
                filler,
                EmptierSpec::GreedyMulti,
                steps,
            );
            spec.verify = VerifyLevel::Full;
            let d = spec.config.resolution.units().clone();
            let p = spec.config.p as usize;
            let runs = run_all(&spec, self.workers, move |_| {
                let d = d.clone();
                let mut count = 0u64;
                Box::new(move |r: Option<&StepRecord>| match r {
                    Some(r) => {
                        let rm = &r.emptier_move.removals;
                        count += (rm.len() == p && rm.iter().all(|(_, a)| a.units() == &d)) as u64;
                        None
                    }
                    None => Some(count),
                })
            });
            if runs.error.is_some() {
                return finish(7, "potential case 1", start, runs.error.as_ref(), false, String::new());
            }
            parts.push(format!("{name}: {} case-1 steps", runs.outputs[0].1));
        }
        let detail = format!("{steps} steps each, exact potential, zero increases; {}", parts.join(", "));
        finish(7, "potential case 1", start, None, true, detail)
    }

    fn backlog_witness(&mut self) -> CriterionReport {
        let start = Instant::now();
        let w = &self.witness;
        let passed = w.traces > 0 && w.missing == 0;
        let mut detail = format!(
            "{} traces, {} steps, {} with positive counters, {} without a witness",
            w.traces, w.steps, w.positive_counter_steps, w.missing
        );
        if let Some((t, s)) = w.first_missing {
            detail.push_str(&format!(" (first: trial {t}, step {s})"));
        }
        if w.traces == 0 {
            detail = "no threshold-counter traces recorded; run criteria 1 and 6 first".into();
        }
        finish(8, "backlog witness", start, None, passed, detail)
    }

    fn recovery(&mut self) -> CriterionReport {
        let start = Instant::now();
        let trials = pick(self.scale, 20, 100);
        let mut spec = make_spec(
            GameVariant::SingleProcessor,
            (64, 1),
            ("1/4", "0"),
            9,
            FillerSpec::SingleTarget { cup: CupId(0) },
            EmptierSpec::SmoothedGreedySingle,
            100,
        );
        spec.trials = trials;
        spec.integer_fill = true;
        spec.verify = VerifyLevel::Full;
        spec.recovery = Some(RecoverySpec {
            total: WaterAmount::from_units(spec.config.resolution.units().mul_u64(16)),
            placement: Placement::OneCup(CupId(0)),
            counter_init: CounterInit::Scaled,
        });
        let runs = run_all(&spec, self.workers, no_collect);
        if runs.error.is_some() {
            return finish(9, "recovery", start, runs.error.as_ref(), false, String::new());
        }
        let limit = 64;
        let firsts: Vec<Option<u64>> = runs.outputs.iter().map(|(o, _)| o.summary.first_zero_integer_fill).collect();
        let late = firsts.iter().filter(|f| f.is_none_or(|s| s > limit)).count();
        let worst = firsts.iter().map(|f| f.unwrap_or(u64::MAX)).max().unwrap_or(0);
        let detail = format!(
            "b = 16 in cup 0, {trials} trials: latest first zero integer fill at step {}, {late} trials after step {limit}",
            if worst == u64::MAX { "never".to_string() } else { worst.to_string() }
        );
        finish(9, "recovery", start, None, late == 0, detail)
    }

    fn separation(&mut self) -> CriterionReport {
        let start = Instant::now();
        let (n, seeds) = pick(self.scale, (512, 10), (4096, 50));
        let against = EmptierSpec::FlushGreedy;
        let filler = FillerSpec::SimulatedAdaptive { against: against.clone() };
        let det = make_spec(GameVariant::UniversalEmptying, (n, 1), ("0", "0"), 0, filler.clone(), against, n - 1);
        let d = det.config.resolution.clone();
        let mut moves = Vec::new();
        let mut record = |r: &StepRecord| moves.push(r.filler_move.clone());
        let det_out = match run_trial(&det, 0, Some(&mut record)) {
            Ok(o) => o,
            Err(e) => return finish(10, "separation", start, Some(&e), false, String::new()),
        };
        let det_final = det_out.summary.final_backlog.to_rational(&d);
        let bound = harmonic_lower_bound(n, 1);

        let mut smoothed = det.clone();
        smoothed.emptier = EmptierSpec::SmoothedGreedySingle;
        smoothed.filler = FillerSpec::Trace { moves };
        let maxima: Vec<Result<Rational, TrialError>> = (0..seeds)
            .map(|seed| {
                let mut s = smoothed.clone();
                s.config.seed = seed;
                run_trial(&s, 0, None).map(|o| o.summary.max_backlog.to_rational(&d))
            })
            .collect();
        let maxima = match maxima.into_iter().collect::<Result<Vec<_>, _>>() {
            Ok(m) => m,
            Err(e) => return finish(10, "separation", start, Some(&e), false, String::new()),
        };
        let med = median(maxima);
        let half = &det_final / &Rational::integer(2);
        let passed = det_final >= bound && med < half;
        let detail = format!(
            "n={n}, p=1: greedy final backlog {:.4} (bound {:.4}); smoothed greedy median max backlog {:.4} over {seeds} seeds (half of greedy {:.4})",
            det_final.to_f64(),
            bound.to_f64(),
            med.to_f64(),
            half.to_f64()
        );
        let mut r = finish(10, "separation", start, None, passed, detail);
        r.exact = vec![ExactCheck {
            label: format!("simulated adaptive vs greedy, n={n}, p=1"),
            n,
            p: 1,
            measured: det_final,
            bound,
        }];
        r
    }
}

/// Exit status for a finished suite: 0 all passed, 2 if any criterion met an
/// invariant violation, 1 otherwise.
pub fn exit_code(reports: &[CriterionReport]) -> i32 {
    if reports.iter().all(|r| r.passed) {
        0
    } else if reports.iter().any(|r| r.violation.is_some()) {
        2
    } else {
        1
    }
}
