//! Parallel trial runner, tail estimates and CSV summaries.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use cupgame_core::harness::TrialErrorKind;
use cupgame_core::{run_trial, ExperimentSpec, Rational, TrialError, TrialOutput};
use rayon::prelude::*;

use crate::spec_file::SpecFile;
use crate::trace::{TraceError, TraceWriter};

/// Estimate of `Pr[backlog > c]` across trials.
#[derive(Clone, Debug, PartialEq)]
pub struct TailEstimate {
    pub threshold: Rational,
    /// Fraction of trials whose final backlog exceeds the threshold.
    pub final_fraction: f64,
    /// Binomial standard error of `final_fraction`.
    pub final_std_error: f64,
    /// Fraction of all steps, over all trials, with backlog above the threshold.
    pub step_fraction: f64,
}

/// Outcome of a batch of trials.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub trials: Vec<TrialOutput>,
    pub tails: Vec<TailEstimate>,
    pub wall_clock: Duration,
    pub workers: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Trial(TrialError),
    #[error("trial {trial}: trace: {source}")]
    Trace { trial: u64, source: TraceError },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

impl ExperimentError {
    /// True for invariant violations and rule-breaking strategies.
    pub fn is_violation(&self) -> bool {
        matches!(
            self,
            ExperimentError::Trial(TrialError { kind: TrialErrorKind::Invariant(_) | TrialErrorKind::Protocol(_), .. })
        )
    }
}

/// Where to write per-trial JSONL traces.
#[derive(Clone, Debug)]
pub struct TraceOutput<'a> {
    pub dir: PathBuf,
    pub spec: &'a SpecFile,
}

pub fn trace_path(dir: &Path, trial: u64) -> PathBuf {
    dir.join(format!("trial-{trial:06}.jsonl"))
}

/// Run every trial of `spec` on `workers` threads (0 = all cores). Results
/// are ordered by trial and do not depend on the worker count; on failure
/// the error of the lowest-numbered failing trial is returned.
pub fn run_experiment(
    spec: &ExperimentSpec,
    workers: usize,
    traces: Option<&TraceOutput<'_>>,
) -> Result<ExperimentResult, ExperimentError> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let outputs: Vec<Result<TrialOutput, ExperimentError>> =
        pool.install(|| (0..spec.trials).into_par_iter().map(|t| run_one(spec, t, traces)).collect());
    let trials = outputs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let tails = tail_estimates(spec, &trials);
    Ok(ExperimentResult { trials, tails, wall_clock: start.elapsed(), workers: pool.current_num_threads() })
}

fn run_one(
    spec: &ExperimentSpec,
    trial: u64,
    traces: Option<&TraceOutput<'_>>,
) -> Result<TrialOutput, ExperimentError> {
    let Some(out) = traces else {
        return run_trial(spec, trial, None).map_err(ExperimentError::Trial);
    };
    let trace_err = |source| ExperimentError::Trace { trial, source };
    let mut writer = TraceWriter::create(&trace_path(&out.dir, trial), out.spec, &spec.config.resolution, trial)
        .map_err(trace_err)?;
    let mut io_error = None;
    let mut sink = |r: &cupgame_core::StepRecord| {
        if io_error.is_none() {
            if let Err(e) = writer.write(r) {
                io_error = Some(e);
            }
        }
    };
    let result = run_trial(spec, trial, Some(&mut sink));
    if let Some(e) = io_error {
        return Err(trace_err(e));
    }
    writer.finish().map_err(trace_err)?;
    result.map_err(ExperimentError::Trial)
}

fn tail_estimates(spec: &ExperimentSpec, trials: &[TrialOutput]) -> Vec<TailEstimate> {
    let d = &spec.config.resolution;
    let n = trials.len() as f64;
    spec.tail_thresholds
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let above = trials.iter().filter(|t| &t.summary.final_backlog.to_rational(d) > c).count() as f64;
            let p = if n > 0.0 { above / n } else { 0.0 };
            let total_steps: u64 = trials.iter().map(|t| t.summary.steps).sum();
            let step_hits: f64 = trials.iter().map(|t| t.summary.tail_fractions[k].1 * t.summary.steps as f64).sum();
            TailEstimate {
                threshold: c.clone(),
                final_fraction: p,
                final_std_error: if n > 0.0 { (p * (1.0 - p) / n).sqrt() } else { 0.0 },
                step_fraction: if total_steps > 0 { step_hits / total_steps as f64 } else { 0.0 },
            }
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Column names of the summary CSV.
pub fn csv_header(spec: &ExperimentSpec) -> Vec<String> {
    let mut h: Vec<String> = [
        "trial",
        "filler",
        "emptier",
        "steps",
        "max_backlog",
        "max_backlog_units",
        "final_backlog",
        "final_backlog_units",
        "backlog_p50",
        "backlog_p90",
        "backlog_p99",
        "total_surplus",
        "max_counter_sum_units",
        "phi_min",
        "phi_max",
        "max_virtual_backlog_units",
        "first_zero_integer_fill",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(spec.tail_thresholds.iter().map(|c| format!("frac_steps_backlog_gt_{c}")));
    h
}

/// Write one row per trial, with a header row.
pub fn write_summary_csv<W: Write>(spec: &ExperimentSpec, result: &ExperimentResult, out: W) -> csv::Result<()> {
    let d = &spec.config.resolution;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(spec))?;
    for t in &result.trials {
        let s = &t.summary;
        let mut row = vec![
            t.trial.to_string(),
            t.filler.to_string(),
            t.emptier.to_string(),
            s.steps.to_string(),
            s.max_backlog.to_f64(d).to_string(),
            s.max_backlog.units().to_string(),
            s.final_backlog.to_f64(d).to_string(),
            s.final_backlog.units().to_string(),
            s.backlog_p50.to_string(),
            s.backlog_p90.to_string(),
            s.backlog_p99.to_string(),
            s.total_surplus.to_string(),
            s.max_counter_sum.units().to_string(),
            opt(s.phi_min),
            opt(s.phi_max),
            opt(s.max_virtual_backlog.as_ref().map(|v| v.units().to_string())),
            opt(s.first_zero_integer_fill),
        ];
        row.extend(s.tail_fractions.iter().map(|(_, f)| f.to_string()));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv_file(spec: &ExperimentSpec, result: &ExperimentResult, path: &Path) -> anyhow::Result<()> {
    let file = std::fs::File::create(path)?;
    write_summary_csv(spec, result, std::io::BufWriter::new(file))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(trials: u64) -> ExperimentSpec {
        let f = SpecFile::from_json(&format!(
            r#"{{"game":{{"variant":"renormalized_multi","n":24,"p":4,"epsilon":"1/4","delta":"1/8","seed":9}},
                "filler":{{"kind":"uniform_random"}},"emptier":{{"kind":"threshold_counter"}},
                "steps":60,"trials":{trials},"tail_thresholds":["1","3"]}}"#
        ))
        .unwrap();
        f.to_spec().unwrap()
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = spec(6);
        let a = run_experiment(&s, 1, None).unwrap();
        let b = run_experiment(&s, 3, None).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.tails, b.tails);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        write_summary_csv(&s, &a, &mut ca).unwrap();
        write_summary_csv(&s, &b, &mut cb).unwrap();
        assert_eq!(ca, cb);
        let text = String::from_utf8(ca).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("trial,filler,emptier,steps,max_backlog,"));
        assert!(text.lines().next().unwrap().ends_with("frac_steps_backlog_gt_1,frac_steps_backlog_gt_3"));
    }

    #[test]
    fn more_trials_keep_earlier_summaries() {
        let a = run_experiment(&spec(3), 2, None).unwrap();
        let b = run_experiment(&spec(6), 2, None).unwrap();
        assert_eq!(a.trials[..], b.trials[..3]);
    }

    #[test]
    fn single_trial_aggregate_matches_summary() {
        let r = run_experiment(&spec(1), 1, None).unwrap();
        let s = &r.trials[0].summary;
        for (k, t) in r.tails.iter().enumerate() {
            assert_eq!(t.step_fraction, s.tail_fractions[k].1);
            assert_eq!(t.final_std_error, 0.0);
        }
    }

    #[test]
    fn traces_are_byte_identical_on_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let f = SpecFile::from_json(
            r#"{"game":{"variant":"multi_processor","n":16,"p":2,"epsilon":"1/4","delta":"1/8","seed":4},
                "filler":{"kind":"uniform_random"},"emptier":{"kind":"greedy_multi"},"steps":40,"trials":2,
                "phi":"exact","integer_fill":true}"#,
        )
        .unwrap();
        let s = f.to_spec().unwrap();
        let mut runs = Vec::new();
        for sub in ["a", "b"] {
            let out = TraceOutput { dir: dir.path().join(sub), spec: &f };
            std::fs::create_dir_all(&out.dir).unwrap();
            run_experiment(&s, 2, Some(&out)).unwrap();
            runs.push(std::fs::read(trace_path(&out.dir, 1)).unwrap());
        }
        assert_eq!(runs[0], runs[1]);
        assert_eq!(String::from_utf8(runs[0].clone()).unwrap().lines().count(), 41);
    }
}
