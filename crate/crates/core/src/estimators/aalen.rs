use crate::error::Result;
use crate::model_core::CountingRow;

use super::{nelson_aalen_by_treatment, risk_table, StepFunction};

/// Cumulative regression functions of the additive rate model
/// `dN_i = (dB0 + A_i dB1) Y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AalenFit {
    pub b0: StepFunction,
    pub b1: StepFunction,
    /// Event times whose design is rank deficient (`Y0 = 0` or `Y1 = 0`);
    /// no increment is taken there.
    pub singular_times: Vec<f64>,
}

/// Least-squares increments at each event time from the normal equations of
/// the design with rows `(1, A_i)` over the risk set.
pub fn aalen_additive(rows: &[CountingRow]) -> Result<AalenFit> {
    let table = risk_table(rows)?;
    let (mut times, mut b0, mut b1, mut singular) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut c0, mut c1) = (0.0, 0.0);
    for k in 0..table.len() {
        let [y0, y1] = table.at_risk[k].map(|v| v as f64);
        let [d0, d1] = table.events[k].map(|v| v as f64);
        // X'X = [[Y, Y1], [Y1, Y1]], X'dN = [dN, dN1]
        let (y, dn) = (y0 + y1, d0 + d1);
        let det = y * y1 - y1 * y1;
        if det == 0.0 {
            singular.push(table.times[k]);
            continue;
        }
        c0 += (y1 * dn - y1 * d1) / det;
        c1 += (y * d1 - y1 * dn) / det;
        times.push(table.times[k]);
        b0.push(c0);
        b1.push(c1);
    }
    Ok(AalenFit {
        b0: StepFunction::new(times.clone(), b0, 0.0)?,
        b1: StepFunction::new(times, b1, 0.0)?,
        singular_times: singular,
    })
}

/// Largest deviation between the additive increments and the
/// Nelson–Aalen ones (`dB0 = dR0`, `dB1 = dR1 - dR0`) over the event times
/// with a full-rank design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub max_abs_dev: f64,
    pub compared: usize,
    pub singular: usize,
}

impl IdentityCheck {
    pub fn compute(rows: &[CountingRow]) -> Result<Self> {
        let fit = aalen_additive(rows)?;
        let na = nelson_aalen_by_treatment(rows)?;
        let jump = |s: &StepFunction, t: f64| {
            let k = s.jump_times().partition_point(|&x| x < t);
            match s.jump_times().get(k) {
                Some(&x) if x == t => s.values()[k] - if k == 0 { s.initial() } else { s.values()[k - 1] },
                _ => 0.0,
            }
        };
        let mut max_abs_dev = 0.0f64;
        let inc1: Vec<(f64, f64)> = fit.b1.increments().collect();
        for (k, (t, db0)) in fit.b0.increments().enumerate() {
            let (dr0, dr1) = (jump(&na.untreated, t), jump(&na.treated, t));
            max_abs_dev = max_abs_dev.max((db0 - dr0).abs()).max((inc1[k].1 - (dr1 - dr0)).abs());
        }
        Ok(Self { max_abs_dev, compared: inc1.len(), singular: fit.singular_times.len() })
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_abs_dev <= tol
    }
}
