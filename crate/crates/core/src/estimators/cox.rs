use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model_core::{validate_rows, CountingRow};
use crate::numerics::{newton_scalar, SolverConfig};

/// Covariates entering the partial likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoxCovariates {
    /// `A(t)`.
    CurrentLevel,
    /// `A(t)` and `d(t) = A(t) (t - u_init)`.
    CurrentLevelPlusDuration,
}

impl CoxCovariates {
    pub fn dim(self) -> usize {
        match self {
            Self::CurrentLevel => 1,
            Self::CurrentLevelPlusDuration => 2,
        }
    }
}

/// Log partial likelihood, score and observed information at one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxEval {
    pub loglik: f64,
    pub score: Vec<f64>,
    /// Row-major `dim × dim`.
    pub info: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub covariates: CoxCovariates,
    /// `β̂`, followed by `γ̂` for the duration model.
    pub coef: Vec<f64>,
    pub model_se: Vec<f64>,
    pub robust_se: Vec<f64>,
    pub score: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
}

impl CoxFit {
    pub fn beta(&self) -> f64 {
        self.coef[0]
    }

    pub fn gamma(&self) -> Option<f64> {
        self.coef.get(1).copied()
    }
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    start: f64,
    stop: f64,
    /// Initiation time for treated rows.
    u: Option<f64>,
    event: bool,
    subject: usize,
}

/// Breslow partial likelihood over counting-process rows, evaluated by one
/// sweep over the distinct event times per call.
#[derive(Debug, Clone)]
pub struct CoxObjective {
    covariates: CoxCovariates,
    intervals: Vec<Interval>,
    by_start: Vec<usize>,
    by_stop: Vec<usize>,
    times: Vec<f64>,
    deaths: Vec<f64>,
    /// Events on treated rows and the sum of their durations, per time.
    treated_deaths: Vec<f64>,
    duration_sum: Vec<f64>,
    subjects: usize,
}

/// Risk-set sums at one event time: `S0`, `S1` and `S2` (packed ββ, βγ, γγ).
#[derive(Debug, Clone, Copy)]
struct RiskSums {
    s0: f64,
    s1: [f64; 2],
    s2: [f64; 3],
    /// `exp(β + γ t)`, the treated weight before the `exp(-γ u)` factor.
    wt: f64,
}

impl CoxObjective {
    pub fn new(rows: &[CountingRow], covariates: CoxCovariates) -> Result<Self> {
        validate_rows(rows)?;
        let mut u_init: BTreeMap<u64, f64> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.treat == 1) {
            let e = u_init.entry(r.id).or_insert(r.start);
            *e = e.min(r.start);
        }
        let mut subject_index: BTreeMap<u64, usize> = BTreeMap::new();
        for r in rows {
            let next = subject_index.len();
            subject_index.entry(r.id).or_insert(next);
        }
        let intervals: Vec<Interval> = rows
            .iter()
            .map(|r| Interval {
                start: r.start,
                stop: r.stop,
                u: (r.treat == 1).then(|| u_init[&r.id]),
                event: r.event,
                subject: subject_index[&r.id],
            })
            .collect();
        let mut by_start: Vec<usize> = (0..intervals.len()).collect();
        by_start.sort_by(|&a, &b| intervals[a].start.total_cmp(&intervals[b].start));
        let mut by_stop: Vec<usize> = (0..intervals.len()).collect();
        by_stop.sort_by(|&a, &b| intervals[a].stop.total_cmp(&intervals[b].stop));

        let (mut times, mut deaths, mut treated_deaths, mut duration_sum) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for &i in &by_stop {
            let iv = &intervals[i];
            if !iv.event {
                continue;
            }
            if times.last() != Some(&iv.stop) {
                times.push(iv.stop);
                deaths.push(0.0);
                treated_deaths.push(0.0);
                duration_sum.push(0.0);
            }
            let k = times.len() - 1;
            deaths[k] += 1.0;
            if let Some(u) = iv.u {
                treated_deaths[k] += 1.0;
                duration_sum[k] += iv.stop - u;
            }
        }
        if times.is_empty() {
            return Err(Error::InvalidParameter("no events".into()));
        }
        let obj = Self {
            covariates,
            intervals,
            by_start,
            by_stop,
            times,
            deaths,
            treated_deaths,
            duration_sum,
            subjects: subject_index.len(),
        };
        obj.check_identifiable()?;
        Ok(obj)
    }

    pub fn dim(&self) -> usize {
        self.covariates.dim()
    }

    /// Treatment effect is unbounded when, at every event time with both
    /// levels at risk, all events fall on one level.
    fn check_identifiable(&self) -> Result<()> {
        let (mut treated, mut untreated) = (0.0, 0.0);
        self.sweep(&[0.0, 0.0], |k, sums| {
            let n1 = sums.s1[0];
            if n1 > 0.0 && sums.s0 - n1 > 0.0 {
                treated += self.treated_deaths[k];
                untreated += self.deaths[k] - self.treated_deaths[k];
            }
        });
        if treated == 0.0 || untreated == 0.0 {
            return Err(Error::MonotoneLikelihood(format!(
                "{treated} treated and {untreated} untreated events at times with both levels at risk"
            )));
        }
        Ok(())
    }

    /// Visits each event time in order with the risk-set sums at `theta`.
    fn sweep(&self, theta: &[f64; 2], mut visit: impl FnMut(usize, RiskSums)) {
        let [beta, gamma] = *theta;
        // untreated count and Σ e^{-γu}, Σ u e^{-γu}, Σ u² e^{-γu} over treated rows
        let mut acc = [0.0f64; 4];
        let update = |acc: &mut [f64; 4], iv: &Interval, sign: f64| match iv.u {
            None => acc[0] += sign,
            Some(u) => {
                let w = (-gamma * u).exp();
                acc[1] += sign * w;
                acc[2] += sign * u * w;
                acc[3] += sign * u * u * w;
            }
        };
        let (mut next_in, mut next_out) = (0, 0);
        for (k, &t) in self.times.iter().enumerate() {
            while next_in < self.by_start.len() && self.intervals[self.by_start[next_in]].start < t {
                update(&mut acc, &self.intervals[self.by_start[next_in]], 1.0);
                next_in += 1;
            }
            while next_out < self.by_stop.len() && self.intervals[self.by_stop[next_out]].stop < t {
                update(&mut acc, &self.intervals[self.by_stop[next_out]], -1.0);
                next_out += 1;
            }
            let [n0, a, b, c] = acc;
            let wt = (beta + gamma * t).exp();
            let (ta, tb) = (t * a - b, t * t * a - 2.0 * t * b + c);
            visit(
                k,
                RiskSums { s0: n0 + wt * a, s1: [wt * a, wt * ta], s2: [wt * a, wt * ta, wt * tb], wt },
            );
        }
    }

    fn full_theta(&self, theta: &[f64]) -> [f64; 2] {
        [theta[0], if self.dim() == 2 { theta[1] } else { 0.0 }]
    }

    pub fn evaluate(&self, theta: &[f64]) -> CoxEval {
        let th = self.full_theta(theta);
        let (mut ll, mut u, mut i) = (0.0, [0.0; 2], [0.0; 3]);
        self.sweep(&th, |k, s| {
            let d = self.deaths[k];
            let zbar = [s.s1[0] / s.s0, s.s1[1] / s.s0];
            ll += th[0] * self.treated_deaths[k] + th[1] * self.duration_sum[k] - d * s.s0.ln();
            u[0] += self.treated_deaths[k] - d * zbar[0];
            u[1] += self.duration_sum[k] - d * zbar[1];
            i[0] += d * (s.s2[0] / s.s0 - zbar[0] * zbar[0]);
            i[1] += d * (s.s2[1] / s.s0 - zbar[0] * zbar[1]);
            i[2] += d * (s.s2[2] / s.s0 - zbar[1] * zbar[1]);
        });
        match self.dim() {
            1 => CoxEval { loglik: ll, score: vec![u[0]], info: vec![i[0]] },
            _ => CoxEval { loglik: ll, score: u.to_vec(), info: vec![i[0], i[1], i[1], i[2]] },
        }
    }

    /// Per-subject score residuals at `theta`, summed over each subject's
    /// rows.
    pub fn score_residuals(&self, theta: &[f64]) -> Vec<[f64; 2]> {
        let th = self.full_theta(theta);
        let gamma = th[1];
        let m = self.times.len();
        // prefix sums over event times of z̄ dΛ and of the treated weights
        let (mut q, mut p1, mut p2, mut p3) =
            (vec![[0.0; 2]; m + 1], vec![0.0; m + 1], vec![0.0; m + 1], vec![0.0; m + 1]);
        let mut zbars = vec![[0.0; 2]; m];
        self.sweep(&th, |k, s| {
            let t = self.times[k];
            let dl = self.deaths[k] / s.s0;
            let zbar = [s.s1[0] / s.s0, s.s1[1] / s.s0];
            zbars[k] = zbar;
            q[k + 1] = [q[k][0] + zbar[0] * dl, q[k][1] + zbar[1] * dl];
            p1[k + 1] = p1[k] + s.wt * (1.0 - zbar[0]) * dl;
            p2[k + 1] = p2[k] + s.wt * (t - zbar[1]) * dl;
            p3[k + 1] = p3[k] + s.wt * dl;
        });
        let mut res = vec![[0.0; 2]; self.subjects];
        for iv in &self.intervals {
            let lo = self.times.partition_point(|&t| t <= iv.start);
            let hi = self.times.partition_point(|&t| t <= iv.stop);
            let r = &mut res[iv.subject];
            match iv.u {
                None => {
                    r[0] += q[hi][0] - q[lo][0];
                    r[1] += q[hi][1] - q[lo][1];
                }
                Some(u) => {
                    let w = (-gamma * u).exp();
                    r[0] -= w * (p1[hi] - p1[lo]);
                    r[1] -= w * ((p2[hi] - p2[lo]) - u * (p3[hi] - p3[lo]));
                }
            }
            if iv.event {
                let k = hi - 1;
                let z = match iv.u {
                    None => [0.0, 0.0],
                    Some(u) => [1.0, iv.stop - u],
                };
                r[0] += z[0] - zbars[k][0];
                r[1] += z[1] - zbars[k][1];
            }
        }
        if self.dim() == 1 {
            res.iter_mut().for_each(|r| r[1] = 0.0);
        }
        res
    }
}

fn invert(info: &[f64], dim: usize) -> Result<Vec<f64>> {
    let singular = || Error::InvalidParameter("singular information matrix".into());
    if dim == 1 {
        if !(info[0] > 0.0) {
            return Err(singular());
        }
        return Ok(vec![1.0 / info[0]]);
    }
    let det = info[0] * info[3] - info[1] * info[2];
    if !(det > 0.0) {
        return Err(singular());
    }
    Ok(vec![info[3] / det, -info[1] / det, -info[2] / det, info[0] / det])
}

/// Beyond this the likelihood is treated as monotone.
const DIVERGENCE: f64 = 50.0;

pub fn cox_fit(rows: &[CountingRow], covariates: CoxCovariates) -> Result<CoxFit> {
    cox_fit_with(rows, covariates, &SolverConfig::new(1e-9, 50, 1.0)?)
}

/// Newton–Raphson on the score. The one-parameter model uses the scalar
/// solver; the two-parameter model halves steps that lower the likelihood.
pub fn cox_fit_with(rows: &[CountingRow], covariates: CoxCovariates, cfg: &SolverConfig) -> Result<CoxFit> {
    let obj = CoxObjective::new(rows, covariates)?;
    let dim = obj.dim();
    let (theta, iterations) = if dim == 1 {
        let out = newton_scalar(
            |b| {
                let e = obj.evaluate(&[b]);
                (e.score[0], -e.info[0])
            },
            0.0,
            cfg,
        )?;
        (vec![out.root], out.iterations)
    } else {
        newton_2d(&obj, cfg)?
    };
    if theta.iter().any(|v| v.abs() > DIVERGENCE) {
        return Err(Error::MonotoneLikelihood(format!("estimate {theta:?} diverged")));
    }
    let at = obj.evaluate(&theta);
    let inv = invert(&at.info, dim)?;
    let model_se = (0..dim).map(|j| inv[j * dim + j].sqrt()).collect();
    // sandwich I⁻¹ (Σ UᵢUᵢᵀ) I⁻¹
    let mut meat = vec![0.0; dim * dim];
    for r in obj.score_residuals(&theta) {
        for a in 0..dim {
            for b in 0..dim {
                meat[a * dim + b] += r[a] * r[b];
            }
        }
    }
    let robust_se = (0..dim)
        .map(|j| {
            let mut v = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    v += inv[j * dim + a] * meat[a * dim + b] * inv[b * dim + j];
                }
            }
            v.sqrt()
        })
        .collect();
    Ok(CoxFit { covariates, coef: theta, model_se, robust_se, score: at.score, loglik: at.loglik, iterations })
}

fn newton_2d(obj: &CoxObjective, cfg: &SolverConfig) -> Result<(Vec<f64>, usize)> {
    let mut theta = vec![0.0, 0.0];
    let mut cur = obj.evaluate(&theta);
    for iter in 0..cfg.max_iter {
        let resid = cur.score.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if resid < cfg.tol {
            return Ok((theta, iter));
        }
        let inv = invert(&cur.info, 2)?;
        let step = [
            inv[0] * cur.score[0] + inv[1] * cur.score[1],
            inv[2] * cur.score[0] + inv[3] * cur.score[1],
        ];
        let mut scale = cfg.damping;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = vec![theta[0] + scale * step[0], theta[1] + scale * step[1]];
            let e = obj.evaluate(&cand);
            if e.loglik.is_finite() && e.loglik >= cur.loglik - 1e-12 * cur.loglik.abs() {
                accepted = Some((cand, e));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, e)) = accepted else {
            return Err(Error::NonConvergence { iterations: iter + 1, residual: resid });
        };
        if cand.iter().any(|v| v.abs() > DIVERGENCE) {
            return Err(Error::MonotoneLikelihood(format!("estimate {cand:?} diverged")));
        }
        theta = cand;
        cur = e;
    }
    let resid = cur.score.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if resid < cfg.tol {
        return Ok((theta, cfg.max_iter));
    }
    Err(Error::NonConvergence { iterations: cfg.max_iter, residual: resid })
}
