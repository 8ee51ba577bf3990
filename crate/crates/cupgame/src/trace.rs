//! JSONL step traces.
//!
//! The first line is a header `{"type":"header","D":..,"trial":..,"spec":..}`.
//! Every following line is one step with the fields `step`, `pours`,
//! `removals`, `backlog_units`, `integer_fill`, `surplus_T`,
//! `counter_sum_units` and, when tracked, `phi`. Pour and removal maps are
//! keyed by cup id; pours into brand-new cups appear there too. Unit counts
//! are JSON integers of any size.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use cupgame_core::game::Phi;
use cupgame_core::{CupId, FillerMove, Resolution, StepRecord, Units, WaterAmount};
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use serde_json::{Map, Value};

use crate::spec_file::{units_number, SpecFile};

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

struct UnitsJson<'a>(&'a Units);

impl Serialize for UnitsJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        units_number(self.0).serialize(s)
    }
}

struct AmountMap<'a>(&'a [&'a [(CupId, WaterAmount)]]);

impl Serialize for AmountMap<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut all: Vec<&(CupId, WaterAmount)> = self.0.iter().flat_map(|p| p.iter()).collect();
        all.sort_by_key(|(id, _)| *id);
        let mut map = s.serialize_map(Some(all.len()))?;
        for (id, amount) in all {
            map.serialize_entry(&id.0.to_string(), &UnitsJson(amount.units()))?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct Header<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(rename = "D")]
    d: UnitsJson<'a>,
    trial: u64,
    spec: &'a SpecFile,
}

#[derive(Serialize)]
struct StepLine<'a> {
    step: u64,
    pours: AmountMap<'a>,
    removals: AmountMap<'a>,
    backlog_units: UnitsJson<'a>,
    integer_fill: Option<UnitsJson<'a>>,
    #[serde(rename = "surplus_T")]
    surplus_t: u64,
    counter_sum_units: UnitsJson<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi: Option<String>,
}

/// Digits after the point for exact potentials.
const PHI_DIGITS: usize = 20;

fn phi_string(phi: &Phi) -> String {
    match phi {
        Phi::Exact(r) => r.to_decimal_string(PHI_DIGITS),
        Phi::Float(x) => format!("{x:?}"),
    }
}

/// Writes one trial's trace.
pub struct TraceWriter<W: Write> {
    out: W,
    integer_fill: bool,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: &Path, spec: &SpecFile, d: &Resolution, trial: u64) -> Result<Self, TraceError> {
        Self::new(BufWriter::new(File::create(path)?), spec, d, trial)
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, spec: &SpecFile, d: &Resolution, trial: u64) -> Result<Self, TraceError> {
        let header = Header { kind: "header", d: UnitsJson(d.units()), trial, spec };
        serde_json::to_writer(&mut out, &header).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
        Ok(TraceWriter { out, integer_fill: spec.integer_fill })
    }

    pub fn write(&mut self, r: &StepRecord) -> Result<(), TraceError> {
        let line = StepLine {
            step: r.step,
            pours: AmountMap(&[&r.filler_move.pours, &r.filler_move.new_cups]),
            removals: AmountMap(&[&r.emptier_move.removals]),
            backlog_units: UnitsJson(r.backlog.units()),
            integer_fill: self.integer_fill.then_some(UnitsJson(&r.integer_fill)),
            surplus_t: r.surplus,
            counter_sum_units: UnitsJson(r.counter_sum.units()),
            phi: r.phi.as_ref().map(phi_string),
        };
        serde_json::to_writer(&mut self.out, &line).map_err(std::io::Error::other)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, TraceError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// One parsed step line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub step: u64,
    pub pours: Vec<(CupId, WaterAmount)>,
    pub removals: Vec<(CupId, WaterAmount)>,
    pub backlog_units: Units,
    pub integer_fill: Option<Units>,
    pub surplus: u64,
    pub counter_sum_units: Units,
    pub phi: Option<String>,
}

/// A parsed trace file.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceFile {
    pub resolution: Option<Units>,
    pub trial: Option<u64>,
    pub spec: Option<SpecFile>,
    pub steps: Vec<TraceStep>,
}

impl TraceFile {
    pub fn read(path: &Path) -> Result<Self, TraceError> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, TraceError> {
        let mut out = TraceFile { resolution: None, trial: None, spec: None, steps: Vec::new() };
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fail = |message: String| TraceError::Format { line: i + 1, message };
            let value: Value = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
            let obj = value.as_object().ok_or_else(|| fail("expected an object".into()))?;
            if obj.get("type").and_then(Value::as_str) == Some("header") {
                out.resolution = obj.get("D").map(|d| units_of(d).map_err(&fail)).transpose()?;
                out.trial = obj.get("trial").and_then(Value::as_u64);
                out.spec = match obj.get("spec") {
                    Some(s) => Some(serde_json::from_value(s.clone()).map_err(|e| fail(e.to_string()))?),
                    None => None,
                };
                continue;
            }
            out.steps.push(parse_step(obj).map_err(fail)?);
        }
        Ok(out)
    }

    /// The filler's moves, ready for the trace filler.
    pub fn filler_moves(&self) -> Vec<FillerMove> {
        self.steps.iter().map(|s| FillerMove::from_pours(s.pours.clone())).collect()
    }
}

/// Load the filler moves of a trace file.
pub fn read_trace_moves(path: &Path) -> Result<Vec<FillerMove>, TraceError> {
    Ok(TraceFile::read(path)?.filler_moves())
}

fn units_of(v: &Value) -> Result<Units, String> {
    match v {
        Value::Number(n) => Units::from_str(&n.to_string()).map_err(|_| format!("expected a unit count, got {n}")),
        other => Err(format!("expected a unit count, got {other}")),
    }
}

fn amounts(v: Option<&Value>, field: &str) -> Result<Vec<(CupId, WaterAmount)>, String> {
    let obj = v.and_then(Value::as_object).ok_or_else(|| format!("missing object `{field}`"))?;
    let mut out = Vec::with_capacity(obj.len());
    for (k, v) in obj {
        let id = k.parse::<u64>().map_err(|_| format!("bad cup id {k:?} in `{field}`"))?;
        out.push((CupId(id), WaterAmount::from_units(units_of(v)?)));
    }
    out.sort_by_key(|(id, _)| *id);
    Ok(out)
}

fn parse_step(obj: &Map<String, Value>) -> Result<TraceStep, String> {
    let units_field = |f: &str| obj.get(f).ok_or_else(|| format!("missing `{f}`")).and_then(units_of);
    Ok(TraceStep {
        step: obj.get("step").and_then(Value::as_u64).ok_or("missing `step`")?,
        pours: amounts(obj.get("pours"), "pours")?,
        removals: amounts(obj.get("removals"), "removals")?,
        backlog_units: units_field("backlog_units")?,
        integer_fill: match obj.get("integer_fill") {
            None | Some(Value::Null) => None,
            Some(v) => Some(units_of(v)?),
        },
        surplus: obj.get("surplus_T").and_then(Value::as_u64).ok_or("missing `surplus_T`")?,
        counter_sum_units: units_field("counter_sum_units")?,
        phi: obj.get("phi").and_then(Value::as_str).map(str::to_string),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cupgame_core::{EmptierMove, Rational};

    fn spec() -> SpecFile {
        SpecFile::from_json(
            r#"{"game":{"variant":"dynamic_single","n":4,"epsilon":"1/2"},"filler":{"kind":"round_robin"},
                "emptier":{"kind":"greedy_single"},"steps":2,"integer_fill":true,"phi":"exact"}"#,
        )
        .unwrap()
    }

    fn record() -> StepRecord {
        let big = Units::from_str("340282366920938463463374607431768211456").unwrap();
        StepRecord {
            step: 3,
            filler_move: FillerMove {
                pours: vec![(CupId(2), WaterAmount::from_u64(4))],
                new_cups: vec![(CupId(10), WaterAmount::from_units(big.clone()))],
            },
            emptier_move: EmptierMove { removals: vec![(CupId(2), WaterAmount::from_u64(32))] },
            backlog: WaterAmount::from_units(big),
            integer_fill: Units::from_u64(7),
            surplus: 1,
            counter_sum: WaterAmount::from_u64(0),
            phi: Some(Phi::Exact(Rational::new(1, 3).unwrap())),
            virtual_backlog: None,
        }
    }

    #[test]
    fn step_line_has_exact_fields() {
        let d = Resolution::from_u64(32).unwrap();
        let mut w = TraceWriter::new(Vec::new(), &spec(), &d, 5).unwrap();
        w.write(&record()).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with(r#"{"type":"header","D":32,"trial":5,"spec":"#), "{}", lines[0]);
        assert_eq!(
            lines[1],
            r#"{"step":3,"pours":{"2":4,"10":340282366920938463463374607431768211456},"removals":{"2":32},"backlog_units":340282366920938463463374607431768211456,"integer_fill":7,"surplus_T":1,"counter_sum_units":0,"phi":"0.33333333333333333333"}"#
        );
    }

    #[test]
    fn round_trip() {
        let d = Resolution::from_u64(32).unwrap();
        let mut w = TraceWriter::new(Vec::new(), &spec(), &d, 5).unwrap();
        w.write(&record()).unwrap();
        let bytes = w.finish().unwrap();
        let t = TraceFile::from_reader(&bytes[..]).unwrap();
        assert_eq!(t.resolution, Some(Units::from_u64(32)));
        assert_eq!(t.trial, Some(5));
        assert_eq!(t.spec, Some(spec()));
        let s = &t.steps[0];
        assert_eq!(s.pours.len(), 2);
        assert_eq!(s.pours[1].0, CupId(10));
        assert_eq!(s.integer_fill, Some(Units::from_u64(7)));
        assert_eq!(t.filler_moves()[0].pours.len(), 2);
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let err = TraceFile::from_reader(&b"{\"type\":\"header\",\"D\":8}\n{\"step\":1}\n"[..]).unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
    }
}
