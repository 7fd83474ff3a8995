//! State occupation and the death rate among the treated for an
//! [`IllnessDeathModel`].
//!
//! With `w(u, t) = P00(0, u) λ01(u) P11(u, t | u)` the rate is the
//! `w`-weighted average of `λ12(t | u)` over initiation times `u ∈ [0, t]`:
//!
//! ```text
//! r12(t) = ∫ w(u, t) λ12(t | u) du / ∫ w(u, t) du
//! ```
//!
//! Both integrals use the trapezoid rule on the model grid. Kernels that are
//! discontinuous in `u` contribute their one-sided limits to each segment,
//! which keeps the rule second order across the jump.

use rayon::prelude::*;

use crate::error::Result;
use crate::model_core::{cumulative, GridFunction, IllnessDeathModel};
use crate::numerics::integral_to;

/// Below this occupation probability the treated risk set is vacuous.
pub const VACUOUS_P01: f64 = 1e-12;

/// Occupation of the treated state at time `t`, resolved by initiation time.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationSlice {
    pub t: f64,
    /// `w(u, t)` on the grid nodes `u <= t`.
    pub weights: GridFunction,
    /// `P01(0, t)`.
    pub p01: f64,
}

struct Prepared<'a> {
    model: &'a IllnessDeathModel,
    cum01: Vec<f64>,
    cum02: Vec<f64>,
    p00: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(model: &'a IllnessDeathModel) -> Self {
        let cum01 = cumulative(model.lambda01()).into_values();
        let cum02 = cumulative(model.lambda02()).into_values();
        let p00 = cum01.iter().zip(&cum02).map(|(a, b)| (-(a + b)).exp()).collect();
        Self { model, cum01, cum02, p00 }
    }

    fn p00_at(&self, u: f64) -> f64 {
        let a = integral_to(self.model.lambda01(), &self.cum01, u);
        let b = integral_to(self.model.lambda02(), &self.cum02, u);
        (-(a + b)).exp()
    }

    fn weight(&self, j: usize, t: f64) -> f64 {
        let u = j as f64 * self.model.step();
        let kc = self.model.lambda12().cumulative_unchecked(u, t);
        self.p00[j] * self.model.lambda01().values()[j] * (-kc).exp()
    }

    /// `(∫ w λ12, ∫ w)` at grid node `k`.
    fn slice(&self, k: usize) -> (f64, f64) {
        let h = self.model.step();
        let t = k as f64 * h;
        let kernel = self.model.lambda12();
        let mut num = 0.0;
        let mut den = 0.0;
        let mut w_prev = self.weight(0, t);
        for j in 0..k {
            let w_next = self.weight(j + 1, t);
            let u0 = j as f64 * h;
            let u1 = (j + 1) as f64 * h;
            den += 0.5 * h * (w_prev + w_next);
            num += 0.5 * h * (w_prev * kernel.eval(t, u0) + w_next * kernel.eval_u_from_below(t, u1));
            w_prev = w_next;
        }
        (num, den)
    }

    fn slices(&self) -> Vec<(f64, f64)> {
        (0..self.model.lambda01().len())
            .into_par_iter()
            .map(|k| self.slice(k))
            .collect()
    }
}

/// `P00(0, u) = exp(-(Λ01(u) + Λ02(u)))`.
pub fn p00(model: &IllnessDeathModel, u: f64) -> f64 {
    Prepared::new(model).p00_at(u)
}

/// `P11(u, t | u) = exp(-∫ᵤᵗ λ12(s | u) ds)`.
pub fn p11(model: &IllnessDeathModel, u: f64, t: f64) -> Result<f64> {
    Ok((-model.lambda12().cumulative(u, t)?).exp())
}

pub fn occupation(model: &IllnessDeathModel, t: f64) -> Result<OccupationSlice> {
    let prep = Prepared::new(model);
    let h = model.step();
    let t = t.clamp(0.0, model.t_max());
    let probe = GridFunction::constant(t, h, 0.0)?;
    let m = probe.len() - 1;
    let weights: Vec<f64> = (0..=m).map(|j| prep.weight(j, t)).collect();
    let mut p01: f64 = weights.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
    let u_last = m as f64 * h;
    if t - u_last > 1e-12 {
        let w_end = prep.p00_at(t) * model.lambda01().eval(t);
        p01 += 0.5 * (t - u_last) * (weights[m] + w_end);
    }
    Ok(OccupationSlice {
        t,
        weights: GridFunction::new(t, h, weights)?,
        p01: p01.clamp(0.0, 1.0),
    })
}

/// `P01(0, t)` at every grid node.
pub fn occupation_curve(model: &IllnessDeathModel) -> GridFunction {
    let values = Prepared::new(model).slices().into_iter().map(|(_, d)| d).collect();
    GridFunction::new(model.t_max(), model.step(), values).expect("finite occupation")
}

/// Death rate among the treated together with the nodes whose treated risk
/// set was vacuous (`P01 < 1e-12`). Those nodes carry `λ12(t | t)`.
pub fn rate_treated_detailed(model: &IllnessDeathModel) -> (GridFunction, Vec<usize>) {
    let h = model.step();
    let mut vacuous = Vec::new();
    let values = Prepared::new(model)
        .slices()
        .into_iter()
        .enumerate()
        .map(|(k, (num, den))| {
            if den < VACUOUS_P01 {
                vacuous.push(k);
                let t = k as f64 * h;
                model.lambda12().eval(t, t)
            } else {
                num / den
            }
        })
        .collect();
    let rate = GridFunction::new(model.t_max(), h, values).expect("finite rate");
    (rate, vacuous)
}

/// `r12(t) = E[λ12(t | U) | X(t) = 1]`.
pub fn rate_treated(model: &IllnessDeathModel) -> GridFunction {
    rate_treated_detailed(model).0
}

/// Only one history leads to the untreated state, so its rate is `λ02`.
pub fn rate_untreated(model: &IllnessDeathModel) -> GridFunction {
    model.lambda02().clone()
}

/// Residual of `P01' + e^β λ02 P01 - P00 λ01` with central differences on
/// `P01`. Vanishes exactly when `r12 = e^β λ02`.
pub fn ode_residual(model: &IllnessDeathModel, beta: f64) -> GridFunction {
    let prep = Prepared::new(model);
    let p01: Vec<f64> = prep.slices().into_iter().map(|(_, d)| d).collect();
    let h = model.step();
    let n = p01.len();
    let lam01 = model.lambda01().values();
    let lam02 = model.lambda02().values();
    let rr = beta.exp();
    let values = (0..n)
        .map(|k| {
            let d = if n < 3 {
                if n == 2 { (p01[1] - p01[0]) / h } else { 0.0 }
            } else if k == 0 {
                (-3.0 * p01[0] + 4.0 * p01[1] - p01[2]) / (2.0 * h)
            } else if k == n - 1 {
                (3.0 * p01[k] - 4.0 * p01[k - 1] + p01[k - 2]) / (2.0 * h)
            } else {
                (p01[k + 1] - p01[k - 1]) / (2.0 * h)
            };
            d + rr * lam02[k] * p01[k] - prep.p00[k] * lam01[k]
        })
        .collect();
    GridFunction::new(model.t_max(), h, values).expect("finite residual")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::HazardKernel;

    fn grid(c: f64) -> GridFunction {
        GridFunction::constant(3.0, 0.005, c).unwrap()
    }

    fn section5_with(lambda02: GridFunction) -> IllnessDeathModel {
        IllnessDeathModel::new(grid(0.3), lambda02, HazardKernel::two_piece(0.4, 0.2, 1.0).unwrap())
            .unwrap()
    }

    #[test]
    fn p00_examples() {
        let m = section5_with(grid(0.6));
        assert_eq!(p00(&m, 0.0), 1.0);
        assert!((p00(&m, 1.0) - (-0.9f64).exp()).abs() < 1e-12);
        let still = IllnessDeathModel::new(grid(0.0), grid(0.0), HazardKernel::two_piece(0.4, 0.2, 1.0).unwrap())
            .unwrap();
        assert_eq!(p00(&still, 2.2), 1.0);
    }

    #[test]
    fn p11_examples() {
        let m = section5_with(grid(0.6));
        assert_eq!(p11(&m, 1.0, 1.0).unwrap(), 1.0);
        assert!((p11(&m, 0.0, 1.0).unwrap() - (-0.4f64).exp()).abs() < 1e-12);
        assert!((p11(&m, 0.0, 2.0).unwrap() - (-0.6f64).exp()).abs() < 1e-12);
        assert!(p11(&m, 2.0, 1.0).is_err());
    }

    #[test]
    fn occupation_at_zero_is_empty() {
        let m = section5_with(grid(0.6));
        assert_eq!(occupation(&m, 0.0).unwrap().p01, 0.0);
    }

    #[test]
    fn occupation_without_deaths() {
        let m = IllnessDeathModel::new(grid(0.3), grid(0.0), HazardKernel::two_piece(0.0, 0.0, 1.0).unwrap())
            .unwrap();
        for t in [0.5, 1.0, 2.345, 3.0] {
            let s = occupation(&m, t).unwrap();
            let exact = 1.0 - (-0.3 * t).exp();
            assert!((s.p01 - exact).abs() < 1e-6, "t={t}: {} vs {exact}", s.p01);
            let tr = crate::numerics::trapz(&s.weights, 0.0, s.weights.node(s.weights.len() - 1)).unwrap();
            assert!(s.p01 >= tr - 1e-15);
        }
    }

    #[test]
    fn markov_kernel_rate_equals_kernel() {
        let l12 = GridFunction::from_fn(3.0, 0.005, |t| 0.25 + 0.1 * t).unwrap();
        let m = IllnessDeathModel::new(grid(0.3), grid(0.5), HazardKernel::markov(l12.clone()).unwrap())
            .unwrap();
        let r = rate_treated(&m);
        assert!(r.sup_abs_diff(&l12) < 1e-9);
    }

    #[test]
    fn early_slice_is_exactly_early_level() {
        let m = section5_with(grid(1.0));
        let r = rate_treated(&m);
        for (t, v) in r.nodes() {
            if t <= 1.0 {
                assert!((v - 0.4).abs() < 1e-9, "t={t} r={v}");
            }
        }
    }

    #[test]
    fn rate_stays_within_kernel_range() {
        let m = section5_with(GridFunction::from_fn(3.0, 0.005, |t| 0.5 + 0.2 * t).unwrap());
        let r = rate_treated(&m);
        assert!(r.values().iter().all(|&v| (0.2 - 1e-12..=0.4 + 1e-12).contains(&v)));
        assert!(r.values().iter().any(|&v| v < 0.39));
    }

    #[test]
    fn vacuous_node_uses_continuity() {
        let m = section5_with(grid(0.6));
        let (r, vacuous) = rate_treated_detailed(&m);
        assert_eq!(vacuous, vec![0]);
        assert_eq!(r.values()[0], 0.4);
    }

    #[test]
    fn rate_untreated_is_lambda02() {
        let l02 = GridFunction::from_fn(3.0, 0.005, |t| 0.6 + 0.01 * t).unwrap();
        let m = section5_with(l02.clone());
        assert_eq!(rate_untreated(&m), l02);
        let z = section5_with(grid(0.0));
        assert!(rate_untreated(&z).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ode_residual_markov_proportional() {
        let beta = (2.0f64 / 3.0).ln();
        let l02 = GridFunction::from_fn(3.0, 0.005, |t| 0.5 + 0.1 * t).unwrap();
        let l12 = l02.map(|v| v * beta.exp()).unwrap();
        let m = IllnessDeathModel::new(grid(0.3), l02, HazardKernel::markov(l12).unwrap()).unwrap();
        let res = ode_residual(&m, beta);
        let sup = res.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(sup < 1e-4, "sup residual {sup}");
    }

    #[test]
    fn ode_residual_detects_non_proportional_model() {
        let m = section5_with(grid(1.0));
        let res = ode_residual(&m, (2.0f64 / 3.0).ln());
        let sup = res.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(sup > 0.01, "sup residual {sup}");
    }
}
