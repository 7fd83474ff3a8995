//! Fixed-point construction of an untreated death hazard `λ02` that makes
//! the rates proportional, `r12(t) = e^β λ02(t)`, for a given initiation
//! hazard and history-dependent treated kernel.
//!
//! Each round computes `r12` for the current `λ02` and replaces `λ02` by
//! `r12 e^{-β}` (optionally blended with the previous iterate). No general
//! convergence guarantee is known, so the full iteration history is kept.

use crate::error::{Error, Result};
use crate::model_core::{GridFunction, HazardKernel, IllnessDeathModel};
use crate::numerics::SolverConfig;
use crate::rate_engine::rate_treated;

/// Diagnostics for one iterate `λ02⁽ʲ⁾`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `sup over (0, t_max] of |r12/λ02 - e^β|`.
    pub sup_deviation: f64,
    pub lambda02: GridFunction,
    pub r12: GridFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildReport {
    /// The last iterate, i.e. the one whose rate ratio was checked.
    pub lambda02: GridFunction,
    pub r12: GridFunction,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl BuildReport {
    pub fn final_deviation(&self) -> f64 {
        self.iterations.last().map_or(f64::INFINITY, |r| r.sup_deviation)
    }

    /// Index of the first iterate whose deviation is below `tol`.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.iterations.iter().find(|r| r.sup_deviation < tol).map(|r| r.iter)
    }

    pub fn deviations_strictly_decrease(&self) -> bool {
        self.iterations.windows(2).all(|w| w[1].sup_deviation < w[0].sup_deviation)
    }
}

/// Pointwise `r12 / λ02`; fails if `λ02 < 1e-12` anywhere.
pub fn rate_ratio(model: &IllnessDeathModel) -> Result<GridFunction> {
    ratio_of(&rate_treated(model), model.lambda02())
}

fn ratio_of(num: &GridFunction, den: &GridFunction) -> Result<GridFunction> {
    let bad: Vec<usize> = den
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < 1e-12)
        .map(|(k, _)| k)
        .collect();
    if let Some(&first) = bad.first() {
        return Err(Error::DivisionByZero { count: bad.len(), first_t: den.node(first) });
    }
    num.zip_with(den, |a, b| a / b)
}

fn sup_deviation(ratio: &GridFunction, target: f64) -> f64 {
    ratio.values()[1..]
        .iter()
        .fold(0.0, |acc, &v| f64::max(acc, (v - target).abs()))
}

pub fn build(
    lambda01: &GridFunction,
    lambda12: &HazardKernel,
    beta: f64,
    init_lambda02: &GridFunction,
    cfg: &SolverConfig,
) -> Result<BuildReport> {
    lambda01.check_same_grid(init_lambda02)?;
    if init_lambda02.values().iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidParameter("initial λ02 must be positive".into()));
    }
    let target = beta.exp();
    let inv = (-beta).exp();
    let d = cfg.damping;
    let mut lambda02 = init_lambda02.clone();
    let mut iterations = Vec::new();

    for iter in 0..=cfg.max_iter {
        let model = IllnessDeathModel::new(lambda01.clone(), lambda02.clone(), lambda12.clone())?;
        let r12 = rate_treated(&model);
        let ratio = ratio_of(&r12, &lambda02)?;
        let sup_deviation = sup_deviation(&ratio, target);
        iterations.push(IterationRecord {
            iter,
            sup_deviation,
            lambda02: lambda02.clone(),
            r12: r12.clone(),
        });
        if sup_deviation < cfg.tol || iter == cfg.max_iter {
            return Ok(BuildReport {
                lambda02,
                r12,
                converged: sup_deviation < cfg.tol,
                iterations,
            });
        }
        let next = lambda02.zip_with(&r12, |old, r| (1.0 - d) * old + d * r * inv)?;
        assert!(next.is_nonnegative(), "λ02 iterate went negative");
        lambda02 = next;
    }
    unreachable!("loop returns on the last iteration")
}

/// Parameters of a constant initiation hazard with a two-level treated
/// kernel: `early` for the first `lag` time units on treatment, `late`
/// afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaggedKernelSetup {
    pub lambda01: f64,
    pub early: f64,
    pub late: f64,
    pub lag: f64,
    pub beta: f64,
    pub t_max: f64,
    pub step: f64,
}

impl Default for LaggedKernelSetup {
    fn default() -> Self {
        Self {
            lambda01: 0.3,
            early: 0.4,
            late: 0.2,
            lag: 1.0,
            beta: (2.0f64 / 3.0).ln(),
            t_max: 3.0,
            step: 0.005,
        }
    }
}

impl LaggedKernelSetup {
    pub fn lambda01_grid(&self) -> Result<GridFunction> {
        GridFunction::constant(self.t_max, self.step, self.lambda01)
    }

    pub fn kernel(&self) -> Result<HazardKernel> {
        HazardKernel::two_piece(self.early, self.late, self.lag)
    }

    /// Runs the builder from `λ02⁽⁰⁾ ≡ 1`.
    pub fn build(&self, cfg: &SolverConfig) -> Result<BuildReport> {
        let init = GridFunction::constant(self.t_max, self.step, 1.0)?;
        build(&self.lambda01_grid()?, &self.kernel()?, self.beta, &init, cfg)
    }

    /// Builds and assembles the converged model.
    pub fn construct(&self, cfg: &SolverConfig) -> Result<(IllnessDeathModel, BuildReport)> {
        let report = self.build(cfg)?;
        let model = IllnessDeathModel::new(self.lambda01_grid()?, report.lambda02.clone(), self.kernel()?)?;
        Ok((model, report))
    }
}

/// Evidence that a model is non-Markov yet has proportional rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonMarkovCertificate {
    /// Largest `|λ12(t | u1) - λ12(t | u2)|` over sampled `u1 < u2 <= t`.
    pub history_gap: f64,
    /// `sup |r12/λ02 - e^β|`.
    pub rate_ratio_deviation: f64,
}

impl NonMarkovCertificate {
    pub fn holds(&self, tol: f64) -> bool {
        self.history_gap > tol && self.rate_ratio_deviation < tol
    }
}

pub fn certify(model: &IllnessDeathModel, beta: f64) -> Result<NonMarkovCertificate> {
    let ratio = rate_ratio(model)?;
    let kernel = model.lambda12();
    let n = model.lambda01().len();
    let mut gap: f64 = 0.0;
    for k in (0..n).step_by(10) {
        let t = k as f64 * model.step();
        for j in (0..=k).step_by(10) {
            let u = j as f64 * model.step();
            gap = gap.max((kernel.eval(t, u) - kernel.eval(t, 0.0)).abs());
        }
    }
    Ok(NonMarkovCertificate {
        history_gap: gap,
        rate_ratio_deviation: sup_deviation(&ratio, beta.exp()),
    })
}
