//! Interventional survival under static regimes, the rate-based survival
//! transform, and the duration-model log-survival ratio.

use crate::error::{Error, Result};
use crate::model_core::{cumulative, survival_from_cumulative, GridFunction, IllnessDeathModel};
use crate::numerics::trapz;
use crate::rate_engine::{rate_treated, rate_untreated};

/// A static treatment strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// Treated from time 0.
    Always,
    /// Never treated.
    Never,
    /// Treatment forced to start at `u`.
    InitiateAt(f64),
}

pub fn potential_survival(model: &IllnessDeathModel, regime: Regime) -> Result<GridFunction> {
    let cum02 = cumulative(model.lambda02());
    let kernel = model.lambda12();
    match regime {
        Regime::Never => Ok(survival_from_cumulative(&cum02)),
        Regime::Always => {
            GridFunction::from_fn(model.t_max(), model.step(), |t| (-kernel.cumulative_unchecked(0.0, t)).exp())
        }
        Regime::InitiateAt(u) => {
            if !(0.0..=model.t_max()).contains(&u) {
                return Err(Error::InvalidParameter(format!(
                    "initiation time {u} outside [0, {}]",
                    model.t_max()
                )));
            }
            let before = trapz(model.lambda02(), 0.0, u)?;
            let values = cum02
                .nodes()
                .map(|(t, c)| {
                    if t <= u {
                        (-c).exp()
                    } else {
                        (-(before + kernel.cumulative_unchecked(u, t))).exp()
                    }
                })
                .collect();
            GridFunction::new(model.t_max(), model.step(), values)
        }
    }
}

/// `exp(-∫₀ᵗ rate)`: what one reports by treating a rate as a hazard.
pub fn rate_based_survival(rate: &GridFunction) -> GridFunction {
    survival_from_cumulative(&cumulative(rate))
}

/// `λ12(t | 0) / λ02(t)`, the hazard ratio between always- and
/// never-treat.
pub fn causal_hazard_ratio(model: &IllnessDeathModel) -> Result<GridFunction> {
    let l02 = model.lambda02();
    if let Some(k) = l02.values().iter().position(|&v| v < 1e-12) {
        let count = l02.values().iter().filter(|&&v| v < 1e-12).count();
        return Err(Error::DivisionByZero { count, first_t: l02.node(k) });
    }
    let kernel = model.lambda12();
    let values = l02.nodes().map(|(t, v)| kernel.eval(t, 0.0) / v).collect();
    GridFunction::new(model.t_max(), model.step(), values)
}

/// `∫ₐᵇ (f0 + (f1 - f0)(s - a)/(b - a)) e^{γ s} ds`.
fn linear_times_exp(a: f64, b: f64, f0: f64, f1: f64, gamma: f64) -> f64 {
    let h = b - a;
    if h <= 0.0 {
        return 0.0;
    }
    let x = gamma * h;
    // e1 = ∫₀ʰ e^{γs} ds, e2 = ∫₀ʰ s e^{γs} ds
    let (e1, e2) = if x.abs() < 1e-4 {
        (
            h * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0),
            h * h * (0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0),
        )
    } else {
        let ex = x.exp();
        ((ex - 1.0) / gamma, h * ex / gamma - (ex - 1.0) / (gamma * gamma))
    };
    (gamma * a).exp() * (f0 * e1 + (f1 - f0) / h * e2)
}

/// `∫₀ᵗ f(u) e^{γu} du`, exact for the linear interpolant of `f`.
pub fn integrate_with_exp(f: &GridFunction, gamma: f64, t: f64) -> f64 {
    let h = f.step();
    let (k, frac) = f.locate(t);
    let v = f.values();
    let mut acc = 0.0;
    for j in 0..k {
        acc += linear_times_exp(j as f64 * h, (j + 1) as f64 * h, v[j], v[j + 1], gamma);
    }
    if frac > 0.0 {
        let a = k as f64 * h;
        acc += linear_times_exp(a, t, v[k], f.eval(t), gamma);
    }
    acc
}

/// Log-survival ratio between always- and never-treat under a Cox model
/// with current treatment and time since initiation:
/// `e^β ∫₀ᵗ λ0(u) e^{γu} du / Λ0(t)`.
pub fn duration_model_ratio(lambda0: &GridFunction, beta: f64, gamma: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= lambda0.t_max() + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "t must lie in (0, {}], got {t}",
            lambda0.t_max()
        )));
    }
    let base = integrate_with_exp(lambda0, 0.0, t);
    if base <= 0.0 {
        return Err(Error::UndefinedRatio(format!("Λ0({t}) = 0")));
    }
    Ok(beta.exp() * integrate_with_exp(lambda0, gamma, t) / base)
}

/// Curves comparing true interventional survival with the rate-based
/// transform, plus both hazard ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastTable {
    pub s_always_true: GridFunction,
    pub s_never_true: GridFunction,
    pub s_treated_ratebased: GridFunction,
    pub s_untreated_ratebased: GridFunction,
    pub causal_hr: GridFunction,
    pub rate_ratio: GridFunction,
}

impl ContrastTable {
    pub fn compute(model: &IllnessDeathModel) -> Result<Self> {
        let r12 = rate_treated(model);
        let r02 = rate_untreated(model);
        Ok(Self {
            s_always_true: potential_survival(model, Regime::Always)?,
            s_never_true: potential_survival(model, Regime::Never)?,
            s_treated_ratebased: rate_based_survival(&r12),
            s_untreated_ratebased: rate_based_survival(&r02),
            causal_hr: causal_hazard_ratio(model)?,
            rate_ratio: crate::builder::rate_ratio(model)?,
        })
    }

    /// `P(T^always > t) - P(T^never > t)`.
    pub fn causal_contrast(&self, t: f64) -> f64 {
        self.s_always_true.eval(t) - self.s_never_true.eval(t)
    }

    /// The same difference computed from the rate-based curves.
    pub fn rate_based_contrast(&self, t: f64) -> f64 {
        self.s_treated_ratebased.eval(t) - self.s_untreated_ratebased.eval(t)
    }

    pub fn rows(&self) -> impl Iterator<Item = [f64; 7]> + '_ {
        (0..self.s_always_true.len()).map(move |k| {
            [
                self.s_always_true.node(k),
                self.s_always_true.values()[k],
                self.s_never_true.values()[k],
                self.s_treated_ratebased.values()[k],
                self.s_untreated_ratebased.values()[k],
                self.causal_hr.values()[k],
                self.rate_ratio.values()[k],
            ]
        })
    }
}
