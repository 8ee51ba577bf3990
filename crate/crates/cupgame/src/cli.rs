//! The `cupgame` command line.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 when a
//! run hits an invariant violation or a strategy breaks the rules.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use cupgame_core::{ExperimentSpec, Fault, GameVariant};
use serde_json::{json, Value};

use crate::experiment::{
    run_experiment, trace_path, write_summary_csv_file, ExperimentError, ExperimentResult, TraceOutput,
};
use crate::spec_file::{EmptierSection, FillerSection, GameSection, SpecFile, SpecFileError, WaterField};
use crate::suite::{exit_code, Scale, Suite};
use crate::trace::{TraceFile, TraceWriter};

#[derive(Debug, Parser)]
#[command(name = "cupgame", version, about = "Simulate cup games between fillers and emptiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a spec file.
    Simulate(SimulateArgs),
    /// Play one named filler against one named emptier.
    Duel(DuelArgs),
    /// Run a spec once per value of one parameter.
    Sweep(SweepArgs),
    /// Run the acceptance suite (`fast` or `full`).
    Verify(VerifyArgs),
    /// Re-run a recorded trace, or play its pours against another emptier.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    /// Override a spec field, e.g. `--set game.p=16`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Same as `--set game.seed=N`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the spec with every default filled in, then exit.
    #[arg(long)]
    pub print_effective_spec: bool,
}

impl SpecArgs {
    fn apply(&self, spec: SpecFile) -> Result<SpecFile, SpecFileError> {
        let mut all = self.overrides.clone();
        if let Some(s) = self.seed {
            all.push(format!("game.seed={s}"));
        }
        spec.with_overrides(&all)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Directory for `summary.csv` and traces.
    #[arg(long, short, default_value = "cupgame-out")]
    pub out: PathBuf,
    /// Write a JSONL trace per trial under `<out>/traces`.
    #[arg(long)]
    pub traces: bool,
    /// Worker threads for trials (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub spec: PathBuf,
    #[command(flatten)]
    pub spec_args: SpecArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct DuelArgs {
    /// Filler: adaptive_harmonic, oblivious_guessing, uniform_random,
    /// single_target, round_robin, trace, simulated_adaptive or zero.
    #[arg(long)]
    pub filler: String,
    /// Emptier: greedy, smoothed_greedy, greedy_single, greedy_multi,
    /// smoothed_greedy_single, smoothed_greedy_multi, threshold_counter,
    /// flush_greedy, flush_relaxed or null.
    #[arg(long)]
    pub emptier: String,
    #[arg(long)]
    pub variant: String,
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = 1)]
    pub p: u64,
    #[arg(long, default_value = "0")]
    pub epsilon: String,
    #[arg(long, default_value = "0")]
    pub delta: String,
    /// Units per unit of water; the smallest valid value if omitted.
    #[arg(long)]
    pub resolution: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to n/p - 1 in the universal game and 1000 otherwise.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
    /// Guess-set size of the oblivious guessing filler.
    #[arg(long)]
    pub k: Option<u64>,
    /// Target cup of the single-target filler.
    #[arg(long, default_value_t = 0)]
    pub cup: u64,
    /// Trace file for the trace filler.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Emptier simulated by the simulated-adaptive filler; defaults to the
    /// dueling emptier.
    #[arg(long)]
    pub against: Option<String>,
    /// Slack of flush_relaxed, in units or as "a/b" water.
    #[arg(long)]
    pub slack: Option<String>,
    /// Backlog level whose exceedance frequency is reported. Repeatable.
    #[arg(long = "tail", value_name = "C")]
    pub tails: Vec<String>,
    #[arg(long, default_value = "invariants")]
    pub verify: String,
    /// Refuse adaptive fillers.
    #[arg(long)]
    pub oblivious_only: bool,
    /// Print results as JSON.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub print_effective_spec: bool,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub spec: PathBuf,
    /// Dotted spec field to vary, e.g. `game.p`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values for the field.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    #[command(flatten)]
    pub spec_args: SpecArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// `fast` or `full`.
    pub suite: String,
    /// Run only these criteria (comma-separated ids).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u8>,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub trace: PathBuf,
    /// Play the recorded pours against this emptier instead of re-running
    /// the recorded trial.
    #[arg(long)]
    pub emptier: Option<String>,
    /// Write the replayed trace here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError { code: 1, error: e.into() }
    }
}

fn violation(error: anyhow::Error) -> CliError {
    CliError { code: 2, error }
}

fn experiment_error(e: ExperimentError) -> CliError {
    let code = if e.is_violation() { 2 } else { 1 };
    CliError { code, error: e.into() }
}

/// Parse arguments and run; returns the exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match run(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {:#}", e.error);
            e.code
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Duel(a) => duel(a, out),
        Command::Sweep(a) => sweep(a, out),
        Command::Verify(a) => verify(a, out, err),
        Command::Replay(a) => replay(a, out),
    }
}

/// Resolve defaults and validate; config problems exit with 1.
fn prepare(file: &SpecFile) -> Result<(SpecFile, ExperimentSpec), CliError> {
    let effective = file.effective()?;
    let spec = effective.to_spec()?;
    spec.validate().map_err(|e| anyhow!("{e}"))?;
    Ok((effective, spec))
}

fn run_and_write(
    file: &SpecFile,
    spec: &ExperimentSpec,
    run: &RunArgs,
    out_dir: &Path,
) -> Result<ExperimentResult, CliError> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let traces = if run.traces {
        let dir = out_dir.join("traces");
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Some(TraceOutput { dir, spec: file })
    } else {
        None
    };
    let result = run_experiment(spec, run.workers, traces.as_ref()).map_err(experiment_error)?;
    write_summary_csv_file(spec, &result, &out_dir.join("summary.csv"))?;
    Ok(result)
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = a.spec_args.apply(SpecFile::load(&a.spec)?)?;
    let (effective, spec) = prepare(&file)?;
    if a.spec_args.print_effective_spec {
        writeln!(out, "{}", effective.to_json_pretty())?;
        return Ok(0);
    }
    let result = run_and_write(&effective, &spec, &a.run, &a.run.out)?;
    write_table(out, &spec, &result)?;
    writeln!(out, "summary: {}", a.run.out.join("summary.csv").display())?;
    Ok(0)
}

fn duel_spec(a: &DuelArgs) -> Result<SpecFile, CliError> {
    let variant = GameVariant::from_str(&a.variant).map_err(|e| anyhow!(e))?;
    let slack = a.slack.as_deref().map(water_field);
    let emptier = EmptierSection::from_name(&a.emptier, variant, slack.clone())
        .ok_or_else(|| anyhow!("unknown emptier `{}`", a.emptier))?;
    let filler = match a.filler.trim().replace('-', "_").as_str() {
        "adaptive_harmonic" => FillerSection::AdaptiveHarmonic,
        "oblivious_guessing" => FillerSection::ObliviousGuessing { k: a.k.unwrap_or(a.n) },
        "uniform_random" => FillerSection::UniformRandom,
        "single_target" => FillerSection::SingleTarget { cup: a.cup },
        "round_robin" => FillerSection::RoundRobin,
        "trace" => {
            FillerSection::Trace { path: a.trace.clone().ok_or_else(|| anyhow!("the trace filler needs --trace"))? }
        }
        "simulated_adaptive" => FillerSection::SimulatedAdaptive {
            against: match &a.against {
                Some(name) => EmptierSection::from_name(name, variant, slack)
                    .ok_or_else(|| anyhow!("unknown emptier `{name}`"))?,
                None => emptier.clone(),
            },
        },
        "zero" => FillerSection::Zero,
        other => return Err(anyhow!("unknown filler `{other}`").into()),
    };
    let steps = a.steps.unwrap_or(if variant == GameVariant::UniversalEmptying {
        (a.n / a.p.max(1)).saturating_sub(1).max(1)
    } else {
        1000
    });
    let resolution = match &a.resolution {
        Some(r) => Some(r.parse().map_err(|_| anyhow!("--resolution must be an integer, got {r}"))?),
        None => None,
    };
    Ok(SpecFile {
        game: GameSection {
            variant: variant.name().into(),
            n: a.n,
            p: a.p,
            epsilon: a.epsilon.clone(),
            delta: a.delta.clone(),
            resolution,
            seed: a.seed,
        },
        filler,
        emptier,
        steps,
        trials: a.trials,
        checkpoints: Vec::new(),
        verify: a.verify.clone(),
        recovery: None,
        phi: "off".into(),
        integer_fill: false,
        tail_thresholds: a.tails.clone(),
        oblivious_only: a.oblivious_only,
        fault: None,
    })
}

fn water_field(s: &str) -> WaterField {
    match s.parse() {
        Ok(n) => WaterField::Units(n),
        Err(_) => WaterField::Rational(s.to_string()),
    }
}

fn duel(a: DuelArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = duel_spec(&a)?;
    let (effective, spec) = prepare(&file)?;
    if a.print_effective_spec {
        writeln!(out, "{}", effective.to_json_pretty())?;
        return Ok(0);
    }
    let result = run_experiment(&spec, a.workers, None).map_err(experiment_error)?;
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&result_json(&spec, &result))?)?;
    } else {
        write_table(out, &spec, &result)?;
    }
    Ok(0)
}

fn sweep(a: SweepArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let base = a.spec_args.apply(SpecFile::load(&a.spec)?)?;
    let mut rows = Vec::new();
    for (i, v) in a.values.iter().enumerate() {
        let file = base.with_overrides(&[format!("{}={v}", a.param)])?;
        let (effective, spec) = prepare(&file)?;
        let dir = a.run.out.join(format!("{i:03}"));
        let result = run_and_write(&effective, &spec, &a.run, &dir)?;
        writeln!(out, "{} = {v}", a.param)?;
        write_table(out, &spec, &result)?;
        rows.push((v.clone(), spec, result));
    }
    let path = a.run.out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["value", "trials", "mean_max_backlog", "max_max_backlog", "mean_final_backlog"])?;
    for (v, spec, result) in &rows {
        let d = &spec.config.resolution;
        let maxes: Vec<f64> = result.trials.iter().map(|t| t.summary.max_backlog.to_f64(d)).collect();
        let finals: Vec<f64> = result.trials.iter().map(|t| t.summary.final_backlog.to_f64(d)).collect();
        w.write_record([
            v.clone(),
            result.trials.len().to_string(),
            mean(&maxes).to_string(),
            maxes.iter().cloned().fold(0.0, f64::max).to_string(),
            mean(&finals).to_string(),
        ])?;
    }
    w.flush()?;
    writeln!(out, "sweep: {}", path.display())?;
    Ok(0)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn verify(a: VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let scale = Scale::from_str(&a.suite).map_err(|e| anyhow!(e))?;
    let mut suite = Suite::new(scale, a.workers);
    match a.inject_fault.as_deref() {
        None => {}
        Some("keep_counters") => suite = suite.with_fault(Fault::KeepCounters),
        Some(other) => return Err(anyhow!("unknown fault `{other}`").into()),
    }
    let ids: Vec<u8> = if a.only.is_empty() { (1..=10).collect() } else { a.only.clone() };
    if let Some(bad) = ids.iter().find(|&&i| !(1..=10).contains(&i)) {
        return Err(anyhow!("no criterion {bad}; criteria are numbered 1 to 10").into());
    }
    let mut reports = Vec::new();
    for id in ids {
        let r = suite.criterion(id);
        writeln!(out, "{}", r.line())?;
        if let Some(v) = &r.violation {
            writeln!(err, "criterion {id}: {v}")?;
        }
        reports.push(r);
    }
    let code = exit_code(&reports);
    let passed = reports.iter().filter(|r| r.passed).count();
    writeln!(out, "{passed}/{} criteria passed", reports.len())?;
    if code == 2 {
        return Err(violation(anyhow!(
            "invariant violated: {}",
            reports.iter().find_map(|r| r.violation.as_ref()).expect("code 2 has a violation")
        )));
    }
    Ok(code)
}

fn replay(a: ReplayArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let recorded = TraceFile::read(&a.trace).with_context(|| format!("reading {}", a.trace.display()))?;
    let header_spec = recorded.spec.clone().ok_or_else(|| anyhow!("trace has no header with a spec"))?;
    let trial = recorded.trial.unwrap_or(0);
    let mut file = header_spec.clone();
    if let Some(s) = a.seed {
        file.game.seed = s;
    }
    let identity = a.emptier.is_none() && a.seed.is_none();
    if let Some(name) = &a.emptier {
        let variant = GameVariant::from_str(&file.game.variant).map_err(|e| anyhow!(e))?;
        file.emptier =
            EmptierSection::from_name(name, variant, None).ok_or_else(|| anyhow!("unknown emptier `{name}`"))?;
        file.filler = FillerSection::Trace { path: a.trace.clone() };
        file.steps = recorded.steps.len() as u64;
        file.trials = 1;
        file.fault = None;
    }
    let (effective, mut spec) = prepare(&file)?;
    if !identity {
        spec.trials = 1;
    }
    let replay_trial = if identity { trial } else { 0 };
    let mut buf = Vec::new();
    let mut writer = TraceWriter::new(&mut buf, &effective, &spec.config.resolution, replay_trial)?;
    let mut io_err = None;
    let mut sink = |r: &cupgame_core::StepRecord| {
        if let Err(e) = writer.write(r) {
            io_err.get_or_insert(e);
        }
    };
    let result = cupgame_core::run_trial(&spec, replay_trial, Some(&mut sink));
    if let Some(e) = io_err {
        return Err(e.into());
    }
    writer.finish()?;
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            let code = if matches!(e.kind, cupgame_core::harness::TrialErrorKind::Spec(_)) { 1 } else { 2 };
            return Err(CliError { code, error: anyhow!("{e}") });
        }
    };
    if let Some(path) = &a.out {
        std::fs::write(path, &buf).with_context(|| format!("writing {}", path.display()))?;
    }
    let d = &spec.config.resolution;
    writeln!(
        out,
        "replayed {} steps: max backlog {}, final backlog {}",
        output.summary.steps,
        output.summary.max_backlog.to_f64(d),
        output.summary.final_backlog.to_f64(d)
    )?;
    if identity {
        let original = std::fs::read(&a.trace)?;
        if original == buf {
            writeln!(out, "trace reproduced byte for byte")?;
        } else {
            let line = first_difference(&original, &buf);
            return Err(violation(anyhow!("replay differs from the recorded trace at line {line}")));
        }
    }
    Ok(0)
}

fn first_difference(a: &[u8], b: &[u8]) -> usize {
    let (a, b) = (String::from_utf8_lossy(a), String::from_utf8_lossy(b));
    let mut al = a.lines();
    let mut bl = b.lines();
    let mut i = 1;
    loop {
        match (al.next(), bl.next()) {
            (Some(x), Some(y)) if x == y => i += 1,
            (None, None) => return i,
            _ => return i,
        }
    }
}

fn write_table(out: &mut dyn Write, spec: &ExperimentSpec, result: &ExperimentResult) -> std::io::Result<()> {
    let d = &spec.config.resolution;
    let c = &spec.config;
    writeln!(
        out,
        "{} vs {} on {} (n={}, p={}, eps={}, delta={}, D={}), {} steps x {} trials, {} workers, {:.2}s",
        spec.filler.name(),
        spec.emptier.name(),
        c.variant,
        c.n,
        c.p,
        c.epsilon,
        c.delta,
        d,
        spec.steps,
        spec.trials,
        result.workers,
        result.wall_clock.as_secs_f64()
    )?;
    writeln!(
        out,
        "{:>6} {:>14} {:>14} {:>10} {:>10} {:>10}",
        "trial", "max_backlog", "final_backlog", "p50", "p90", "p99"
    )?;
    for t in &result.trials {
        let s = &t.summary;
        writeln!(
            out,
            "{:>6} {:>14.6} {:>14.6} {:>10.4} {:>10.4} {:>10.4}",
            t.trial,
            s.max_backlog.to_f64(d),
            s.final_backlog.to_f64(d),
            s.backlog_p50,
            s.backlog_p90,
            s.backlog_p99
        )?;
    }
    if result.trials.len() == 1 {
        let s = &result.trials[0].summary;
        writeln!(out, "final backlog (exact): {}", s.final_backlog.to_rational(d))?;
    }
    for t in &result.tails {
        writeln!(
            out,
            "Pr[final backlog > {}] = {:.6} +/- {:.6}; fraction of steps above: {:.6}",
            t.threshold, t.final_fraction, t.final_std_error, t.step_fraction
        )?;
    }
    Ok(())
}

fn result_json(spec: &ExperimentSpec, result: &ExperimentResult) -> Value {
    let d = &spec.config.resolution;
    json!({
        "filler": spec.filler.name(),
        "emptier": spec.emptier.name(),
        "variant": spec.config.variant.name(),
        "n": spec.config.n,
        "p": spec.config.p,
        "resolution": d.units().to_string(),
        "steps": spec.steps,
        "wall_clock_seconds": result.wall_clock.as_secs_f64(),
        "trials": result.trials.iter().map(|t| {
            let s = &t.summary;
            json!({
                "trial": t.trial,
                "max_backlog": s.max_backlog.to_f64(d),
                "max_backlog_exact": s.max_backlog.to_rational(d).to_string(),
                "final_backlog": s.final_backlog.to_f64(d),
                "final_backlog_exact": s.final_backlog.to_rational(d).to_string(),
                "backlog_p50": s.backlog_p50,
                "backlog_p90": s.backlog_p90,
                "backlog_p99": s.backlog_p99,
                "total_surplus": s.total_surplus,
                "tail_fractions": s.tail_fractions.iter().map(|(c, f)| json!({"threshold": c.to_string(), "fraction_of_steps": f})).collect::<Vec<_>>(),
            })
        }).collect::<Vec<_>>(),
        "tails": result.tails.iter().map(|t| json!({
            "threshold": t.threshold.to_string(),
            "final_fraction": t.final_fraction,
            "final_std_error": t.final_std_error,
            "step_fraction": t.step_fraction,
        })).collect::<Vec<_>>(),
    })
}

/// Path of trial `trial`'s trace under a run's output directory.
pub fn run_trace_path(out_dir: &Path, trial: u64) -> PathBuf {
    trace_path(&out_dir.join("traces"), trial)
}
