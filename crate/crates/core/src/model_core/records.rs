use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// One simulated subject: optional treatment start, exit time and whether
/// the exit is a death (otherwise administrative censoring at `t_max`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: u64,
    pub u_init: Option<f64>,
    pub t_event: f64,
    pub event: bool,
    /// Simulation diagnostic only; never passed on to estimators.
    pub frailty: Option<f64>,
}

impl Trajectory {
    pub fn validate(&self, t_max: f64) -> Result<()> {
        let bad = |reason: String| Error::MalformedTrajectory { id: self.id, reason };
        if let Some(u) = self.u_init {
            if !(u >= 0.0 && u <= self.t_event) {
                return Err(bad(format!("u_init {u} outside [0, t_event={}]", self.t_event)));
            }
        }
        if !(self.t_event >= 0.0 && self.t_event <= t_max + 1e-12) {
            return Err(bad(format!("t_event {} outside [0, {t_max}]", self.t_event)));
        }
        if !self.event && (self.t_event - t_max).abs() > 1e-12 {
            return Err(bad(format!("censored before t_max at {}", self.t_event)));
        }
        Ok(())
    }
}

/// An at-risk interval `(start, stop]` in counting-process format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountingRow {
    pub id: u64,
    pub start: f64,
    pub stop: f64,
    pub treat: u8,
    pub event: bool,
}

/// Checks the per-subject invariants: positive-length intervals that are
/// contiguous from 0, non-decreasing binary treatment and at most one event,
/// on the last row.
pub fn validate_rows(rows: &[CountingRow]) -> Result<()> {
    for (id, mut subject) in group_by_id(rows) {
        subject.sort_by(|a, b| a.start.total_cmp(&b.start));
        let bad = |reason: String| Error::MalformedRows { id, reason };
        let mut expected_start = 0.0;
        let mut prev_treat = 0u8;
        for (i, r) in subject.iter().enumerate() {
            if !(r.start < r.stop) {
                return Err(bad(format!("start {} not below stop {}", r.start, r.stop)));
            }
            if (r.start - expected_start).abs() > 1e-9 {
                return Err(bad(format!(
                    "interval starts at {} but previous ended at {expected_start}",
                    r.start
                )));
            }
            if r.treat > 1 {
                return Err(bad(format!("treatment level {} is not binary", r.treat)));
            }
            if r.treat < prev_treat {
                return Err(bad("treatment switched off".into()));
            }
            if r.event && i + 1 != subject.len() {
                return Err(bad("event flagged before the last interval".into()));
            }
            expected_start = r.stop;
            prev_treat = r.treat;
        }
    }
    Ok(())
}

pub(crate) fn group_by_id(rows: &[CountingRow]) -> BTreeMap<u64, Vec<CountingRow>> {
    let mut map: BTreeMap<u64, Vec<CountingRow>> = BTreeMap::new();
    for r in rows {
        map.entry(r.id).or_default().push(*r);
    }
    map
}

pub fn write_rows_csv<W: Write>(out: W, rows: &[CountingRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "start", "stop", "treat", "event"])?;
    for r in rows {
        w.write_record([
            r.id.to_string(),
            format!("{:.6}", r.start),
            format!("{:.6}", r.stop),
            r.treat.to_string(),
            u8::from(r.event).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(input: R) -> Result<Vec<CountingRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let expected = ["id", "start", "stop", "treat", "event"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::InvalidParameter(format!(
            "expected header {}, got {}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parse_err = |what: &str| {
            Error::InvalidParameter(format!("line {}: cannot parse {what}", line + 2))
        };
        let event = match field(4) {
            "0" => false,
            "1" => true,
            _ => return Err(parse_err("event")),
        };
        rows.push(CountingRow {
            id: field(0).parse().map_err(|_| parse_err("id"))?,
            start: field(1).parse().map_err(|_| parse_err("start"))?,
            stop: field(2).parse().map_err(|_| parse_err("stop"))?,
            treat: field(3).parse().map_err(|_| parse_err("treat"))?,
            event,
        });
    }
    validate_rows(&rows)?;
    Ok(rows)
}
