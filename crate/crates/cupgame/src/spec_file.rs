//! JSON experiment specs.
//!
//! Unit counts are JSON integers (any size). Water amounts may also be
//! given as rational strings such as `"1/2"`, converted with the game's
//! resolution. `epsilon` and `delta` are rational strings. A missing
//! `resolution` is filled with the smallest valid one.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use cupgame_core::config::minimal_resolution;
use cupgame_core::harness::{EmptierSpec, ExperimentSpec, FillerSpec, PhiMode, Placement, RecoverySpec};
use cupgame_core::thresholds::CounterInit;
use cupgame_core::{CupId, Fault, GameConfig, GameVariant, Rational, Resolution, Units, VerifyLevel, WaterAmount};
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::trace::read_trace_moves;

/// Problems reading or converting a spec file.
#[derive(Debug, thiserror::Error)]
pub enum SpecFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed spec: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid value for {field}: {message}")]
    Value { field: &'static str, message: String },
    #[error("bad override `{0}`: expected key=value")]
    OverrideSyntax(String),
    #[error("bad override `{key}`: {message}")]
    Override { key: String, message: String },
    #[error("cannot load trace {path}: {message}")]
    Trace { path: PathBuf, message: String },
}

fn value_err(field: &'static str, message: impl Into<String>) -> SpecFileError {
    SpecFileError::Value { field, message: message.into() }
}

/// A water amount as written in a spec: integer units or a rational string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WaterField {
    Units(Number),
    Rational(String),
}

impl WaterField {
    pub fn units(u: &Units) -> Self {
        WaterField::Units(units_number(u))
    }

    fn resolve(&self, field: &'static str, d: &Resolution) -> Result<WaterAmount, SpecFileError> {
        match self {
            WaterField::Units(n) => parse_units(field, n).map(WaterAmount::from_units),
            WaterField::Rational(s) => {
                let r = Rational::from_str(s).map_err(|e| value_err(field, e.to_string()))?;
                cupgame_core::to_units(&r, d).map_err(|e| value_err(field, e.to_string()))
            }
        }
    }
}

/// A JSON integer holding `u` exactly.
pub fn units_number(u: &Units) -> Number {
    Number::from_str(&u.to_string()).expect("digits form a JSON number")
}

fn parse_units(field: &'static str, n: &Number) -> Result<Units, SpecFileError> {
    Units::from_str(&n.to_string()).map_err(|_| value_err(field, format!("expected a non-negative integer, got {n}")))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub variant: String,
    pub n: u64,
    #[serde(default = "one")]
    pub p: u64,
    #[serde(default = "zero_string")]
    pub epsilon: String,
    #[serde(default = "zero_string")]
    pub delta: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Number>,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> u64 {
    1
}

fn zero_string() -> String {
    "0".into()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FillerSection {
    AdaptiveHarmonic,
    ObliviousGuessing { k: u64 },
    UniformRandom,
    SingleTarget { cup: u64 },
    RoundRobin,
    Trace { path: PathBuf },
    SimulatedAdaptive { against: EmptierSection },
    Zero,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmptierSection {
    GreedySingle,
    SmoothedGreedySingle,
    GreedyMulti,
    ThresholdCounter,
    SmoothedGreedyMulti,
    FlushGreedy,
    FlushRelaxed { slack: WaterField },
    Null,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PlacementSection {
    OneCup(u64),
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySection {
    pub total: WaterField,
    pub placement: PlacementSection,
    #[serde(default = "scaled")]
    pub counter_init: String,
}

fn scaled() -> String {
    "scaled".into()
}

/// The on-disk form of an [`ExperimentSpec`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub game: GameSection,
    pub filler: FillerSection,
    pub emptier: EmptierSection,
    pub steps: u64,
    #[serde(default = "one")]
    pub trials: u64,
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    #[serde(default = "default_verify")]
    pub verify: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoverySection>,
    #[serde(default = "default_phi")]
    pub phi: String,
    #[serde(default)]
    pub integer_fill: bool,
    #[serde(default)]
    pub tail_thresholds: Vec<String>,
    #[serde(default)]
    pub oblivious_only: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

fn default_verify() -> String {
    "invariants".into()
}

fn default_phi() -> String {
    "off".into()
}

impl SpecFile {
    pub fn from_json(text: &str) -> Result<Self, SpecFileError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, SpecFileError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| SpecFileError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Apply `key=value` overrides. Keys are dotted paths into the JSON
    /// form. Values are parsed as JSON, falling back to a plain string; a
    /// field that currently holds a string always takes the raw text.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, SpecFileError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o.split_once('=').ok_or_else(|| SpecFileError::OverrideSyntax(o.to_string()))?;
            set_path(&mut doc, key, raw)
                .map_err(|message| SpecFileError::Override { key: key.to_string(), message })?;
        }
        serde_json::from_value(doc).map_err(|e| SpecFileError::Override {
            key: overrides.iter().map(|o| o.as_ref().to_string()).collect::<Vec<_>>().join(", "),
            message: e.to_string(),
        })
    }

    /// The same spec with `resolution` filled in.
    pub fn effective(&self) -> Result<Self, SpecFileError> {
        let spec = self.to_spec()?;
        let mut out = self.clone();
        out.game.resolution = Some(units_number(spec.config.resolution.units()));
        Ok(out)
    }

    /// Convert to the runnable form, loading trace files as needed.
    pub fn to_spec(&self) -> Result<ExperimentSpec, SpecFileError> {
        let g = &self.game;
        let variant = GameVariant::from_str(&g.variant).map_err(|e| value_err("game.variant", e))?;
        let epsilon = Rational::from_str(&g.epsilon).map_err(|e| value_err("game.epsilon", e.to_string()))?;
        let delta = Rational::from_str(&g.delta).map_err(|e| value_err("game.delta", e.to_string()))?;
        let filler = self.filler_spec()?;
        let emptier_needs_d = matches!(self.emptier, EmptierSection::FlushRelaxed { slack: WaterField::Rational(_) });
        let probe_d = Resolution::from_u64(2).expect("even");
        let emptier = if emptier_needs_d { EmptierSpec::Null } else { emptier_spec(&self.emptier, &probe_d)? };
        let mut spec = ExperimentSpec::new(
            GameConfig { variant, n: g.n, p: g.p, epsilon, delta, resolution: probe_d, seed: g.seed },
            filler,
            emptier,
            self.steps,
        );
        let resolution = match &g.resolution {
            Some(n) => Resolution::new(parse_units("game.resolution", n)?)
                .map_err(|e| value_err("game.resolution", e.to_string()))?,
            None => {
                let probe = ExperimentSpec { emptier: emptier_spec_for_requirements(&self.emptier), ..spec.clone() };
                let c = &probe.config;
                minimal_resolution(c.variant, c.n, c.p, &c.epsilon, &c.delta, &probe.requirements())
            }
        };
        spec.config.resolution = resolution.clone();
        spec.emptier = emptier_spec(&self.emptier, &resolution)?;
        spec.trials = self.trials;
        spec.checkpoints = self.checkpoints.clone();
        spec.verify = VerifyLevel::from_str(&self.verify).map_err(|e| value_err("verify", e))?;
        spec.phi = match self.phi.as_str() {
            "off" => PhiMode::Off,
            "float" => PhiMode::Float,
            "exact" => PhiMode::Exact,
            other => return Err(value_err("phi", format!("unknown mode {other:?} (expected off, float or exact)"))),
        };
        spec.integer_fill = self.integer_fill;
        spec.tail_thresholds = self
            .tail_thresholds
            .iter()
            .map(|s| Rational::from_str(s).map_err(|e| value_err("tail_thresholds", e.to_string())))
            .collect::<Result<_, _>>()?;
        spec.oblivious_only = self.oblivious_only;
        spec.fault = match self.fault.as_deref() {
            None => None,
            Some("keep_counters") => Some(Fault::KeepCounters),
            Some(other) => return Err(value_err("fault", format!("unknown fault {other:?} (expected keep_counters)"))),
        };
        if let Some(r) = &self.recovery {
            spec.recovery = Some(RecoverySpec {
                total: r.total.resolve("recovery.total", &resolution)?,
                placement: match r.placement {
                    PlacementSection::OneCup(c) => Placement::OneCup(CupId(c)),
                    PlacementSection::Uniform => Placement::Uniform,
                },
                counter_init: match r.counter_init.as_str() {
                    "scaled" => CounterInit::Scaled,
                    "literal" => CounterInit::Literal,
                    other => {
                        return Err(value_err(
                            "recovery.counter_init",
                            format!("unknown mode {other:?} (expected scaled or literal)"),
                        ))
                    }
                },
            });
        }
        Ok(spec)
    }

    fn filler_spec(&self) -> Result<FillerSpec, SpecFileError> {
        Ok(match &self.filler {
            FillerSection::AdaptiveHarmonic => FillerSpec::AdaptiveHarmonic,
            FillerSection::ObliviousGuessing { k } => FillerSpec::ObliviousGuessing { k: *k },
            FillerSection::UniformRandom => FillerSpec::UniformRandom,
            FillerSection::SingleTarget { cup } => FillerSpec::SingleTarget { cup: CupId(*cup) },
            FillerSection::RoundRobin => FillerSpec::RoundRobin,
            FillerSection::Trace { path } => FillerSpec::Trace {
                moves: read_trace_moves(path)
                    .map_err(|e| SpecFileError::Trace { path: path.clone(), message: e.to_string() })?,
            },
            FillerSection::SimulatedAdaptive { against } => {
                FillerSpec::SimulatedAdaptive { against: emptier_spec_for_requirements(against) }
            }
            FillerSection::Zero => FillerSpec::Zero,
        })
    }
}

/// Emptier spec ignoring parameters that need the resolution.
fn emptier_spec_for_requirements(e: &EmptierSection) -> EmptierSpec {
    let d = Resolution::from_u64(2).expect("even");
    emptier_spec(e, &d).unwrap_or(EmptierSpec::FlushRelaxed { slack: WaterAmount::ZERO })
}

fn emptier_spec(e: &EmptierSection, d: &Resolution) -> Result<EmptierSpec, SpecFileError> {
    Ok(match e {
        EmptierSection::GreedySingle => EmptierSpec::GreedySingle,
        EmptierSection::SmoothedGreedySingle => EmptierSpec::SmoothedGreedySingle,
        EmptierSection::GreedyMulti => EmptierSpec::GreedyMulti,
        EmptierSection::ThresholdCounter => EmptierSpec::ThresholdCounter,
        EmptierSection::SmoothedGreedyMulti => EmptierSpec::SmoothedGreedyMulti,
        EmptierSection::FlushGreedy => EmptierSpec::FlushGreedy,
        EmptierSection::FlushRelaxed { slack } => {
            EmptierSpec::FlushRelaxed { slack: slack.resolve("emptier.slack", d)? }
        }
        EmptierSection::Null => EmptierSpec::Null,
    })
}

impl EmptierSection {
    /// Parse a strategy name. `greedy` and `smoothed_greedy` resolve to the
    /// form that plays `variant`; `flush_relaxed` takes the given slack.
    pub fn from_name(name: &str, variant: GameVariant, slack: Option<WaterField>) -> Option<Self> {
        let norm = name.trim().to_ascii_lowercase().replace('-', "_");
        let multi =
            matches!(variant, GameVariant::MultiProcessor | GameVariant::DynamicMulti | GameVariant::RenormalizedMulti);
        Some(match norm.as_str() {
            "greedy" if variant.is_flushing() => EmptierSection::FlushGreedy,
            "greedy" if multi => EmptierSection::GreedyMulti,
            "greedy" | "greedy_single" => EmptierSection::GreedySingle,
            "smoothed_greedy" if multi => EmptierSection::SmoothedGreedyMulti,
            "smoothed_greedy" | "smoothed_greedy_single" => EmptierSection::SmoothedGreedySingle,
            "greedy_multi" => EmptierSection::GreedyMulti,
            "threshold_counter" => EmptierSection::ThresholdCounter,
            "smoothed_greedy_multi" => EmptierSection::SmoothedGreedyMulti,
            "flush_greedy" => EmptierSection::FlushGreedy,
            "flush_relaxed" => {
                EmptierSection::FlushRelaxed { slack: slack.unwrap_or_else(|| WaterField::Units(Number::from(0u64))) }
            }
            "null" => EmptierSection::Null,
            _ => return None,
        })
    }
}

fn set_path(doc: &mut Value, key: &str, raw: &str) -> Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or("empty key")?;
    let mut cur = doc;
    for part in parts {
        let obj = cur.as_object_mut().ok_or_else(|| format!("`{part}` is not inside an object"))?;
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = cur.as_object_mut().ok_or_else(|| format!("cannot set `{last}` on a non-object"))?;
    let value = match (obj.get(last), serde_json::from_str::<Value>(raw)) {
        (Some(Value::String(_)), Ok(v)) if !v.is_string() => Value::String(raw.to_string()),
        (_, Ok(v)) => v,
        (_, Err(_)) => Value::String(raw.to_string()),
    };
    obj.insert(last.to_string(), value);
    Ok(())
}
