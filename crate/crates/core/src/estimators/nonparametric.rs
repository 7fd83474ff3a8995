use crate::error::{Error, Result};
use crate::model_core::{validate_rows, CountingRow};

use super::StepFunction;

/// A pair of estimates indexed by treatment level.
#[derive(Debug, Clone, PartialEq)]
pub struct ByTreatment<T> {
    pub untreated: T,
    pub treated: T,
}

impl<T> ByTreatment<T> {
    pub fn level(&self, a: u8) -> &T {
        if a == 0 { &self.untreated } else { &self.treated }
    }
}

/// Event counts `ΔN_a(t)` and risk sets `Y_a(t)` at each distinct event
/// time. A row `(start, stop]` is at risk at `t` when `start < t <= stop`;
/// the level of an event is the level of the row it occurs on.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    pub times: Vec<f64>,
    pub events: Vec<[u64; 2]>,
    pub at_risk: Vec<[u64; 2]>,
}

struct LevelIntervals {
    starts: Vec<f64>,
    stops: Vec<f64>,
}

impl LevelIntervals {
    fn count(&self, t: f64) -> u64 {
        (self.starts.partition_point(|&s| s < t) - self.stops.partition_point(|&s| s < t)) as u64
    }
}

fn intervals(rows: &[CountingRow]) -> [LevelIntervals; 2] {
    [0u8, 1].map(|a| {
        let mut starts: Vec<f64> = rows.iter().filter(|r| r.treat == a).map(|r| r.start).collect();
        let mut stops: Vec<f64> = rows.iter().filter(|r| r.treat == a).map(|r| r.stop).collect();
        starts.sort_by(f64::total_cmp);
        stops.sort_by(f64::total_cmp);
        LevelIntervals { starts, stops }
    })
}

impl RiskTable {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn total_events(&self) -> u64 {
        self.events.iter().map(|[a, b]| a + b).sum()
    }
}

pub fn risk_table(rows: &[CountingRow]) -> Result<RiskTable> {
    validate_rows(rows)?;
    let mut ev: Vec<(f64, u8)> = rows.iter().filter(|r| r.event).map(|r| (r.stop, r.treat)).collect();
    ev.sort_by(|a, b| a.0.total_cmp(&b.0));
    let levels = intervals(rows);
    let mut table = RiskTable { times: Vec::new(), events: Vec::new(), at_risk: Vec::new() };
    for (t, a) in ev {
        if table.times.last() != Some(&t) {
            table.times.push(t);
            table.events.push([0, 0]);
            table.at_risk.push([levels[0].count(t), levels[1].count(t)]);
        }
        table.events.last_mut().expect("pushed above")[a as usize] += 1;
    }
    Ok(table)
}

/// `R̂_a(t) = ∫ J_a / Y_a dN_a`. Empty strata give a flat zero.
pub fn nelson_aalen_by_treatment(rows: &[CountingRow]) -> Result<ByTreatment<StepFunction>> {
    let table = risk_table(rows)?;
    let level = |a: usize| {
        let (mut times, mut values, mut acc) = (Vec::new(), Vec::new(), 0.0);
        for k in 0..table.len() {
            let (d, y) = (table.events[k][a], table.at_risk[k][a]);
            if d > 0 && y > 0 {
                acc += d as f64 / y as f64;
                times.push(table.times[k]);
                values.push(acc);
            }
        }
        StepFunction::new(times, values, 0.0)
    };
    Ok(ByTreatment { untreated: level(0)?, treated: level(1)? })
}

/// `Ŝ_a(t) = ∏ (1 - ΔN_a / Y_a)` over event times up to `t`. Once a level
/// reaches zero it stays there.
pub fn extended_km(rows: &[CountingRow]) -> Result<ByTreatment<StepFunction>> {
    let table = risk_table(rows)?;
    let level = |a: usize| {
        let (mut times, mut values, mut s) = (Vec::new(), Vec::new(), 1.0f64);
        for k in 0..table.len() {
            let (d, y) = (table.events[k][a], table.at_risk[k][a]);
            if d > 0 && y > 0 && s > 0.0 {
                s *= 1.0 - d as f64 / y as f64;
                times.push(table.times[k]);
                values.push(s);
            }
        }
        StepFunction::new(times, values, 1.0)
    };
    Ok(ByTreatment { untreated: level(0)?, treated: level(1)? })
}

/// `log s1(t) / log s0(t)`.
pub fn log_surv_ratio(s1: &StepFunction, s0: &StepFunction, t: f64) -> Result<f64> {
    let (a, b) = (s1.eval(t), s0.eval(t));
    for (name, v) in [("s1", a), ("s0", b)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::UndefinedRatio(format!("{name}({t}) = {v} is not in (0, 1)")));
        }
    }
    Ok(a.ln() / b.ln())
}
