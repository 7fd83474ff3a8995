use crate::error::{Error, Result};
use crate::model_core::grid::{cumulative, node_count, GridFunction};
use crate::numerics::{integral_to, invert_monotone_nodes};

/// Tolerance on `t - u == lag` when deciding which piece applies.
const LAG_EPS: f64 = 1e-9;

/// A transition hazard `λ(t | u)` depending on the current time and the
/// time `u` at which treatment started. Defined for `0 <= u <= t`.
#[derive(Debug, Clone, PartialEq)]
pub enum HazardKernel {
    /// `early` while `t - u <= lag`, `late` afterwards.
    TwoPiece { early: f64, late: f64, lag: f64 },
    /// No dependence on `u`: `λ(t | u) = rate(t)`.
    Markov(MarkovKernel),
    /// Tabulated over the square `(t_k, u_j)`; only `u_j <= t_k` is used.
    Grid(KernelGrid),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovKernel {
    rate: GridFunction,
    cum: Vec<f64>,
}

impl MarkovKernel {
    pub fn rate(&self) -> &GridFunction {
        &self.rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    t_max: f64,
    step: f64,
    n: usize,
    /// Row-major: `values[k * n + j] = λ(t_k | u_j)`.
    values: Vec<f64>,
}

impl KernelGrid {
    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    fn at(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.n + j.min(k)]
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let last = self.n - 1;
        if x <= 0.0 {
            return (0, 0.0);
        }
        let y = x / self.step;
        let r = y.round();
        if (y - r).abs() < 1e-9 {
            return ((r as usize).min(last), 0.0);
        }
        let k = y.floor() as usize;
        if k >= last {
            (last, 0.0)
        } else {
            (k, y - k as f64)
        }
    }

    fn eval(&self, t: f64, u: f64) -> f64 {
        let (k, ft) = self.locate(t);
        let (j, fu) = self.locate(u.min(t));
        let k1 = (k + 1).min(self.n - 1);
        let j1 = (j + 1).min(self.n - 1);
        let a = self.at(k, j) + fu * (self.at(k, j1) - self.at(k, j));
        let b = self.at(k1, j) + fu * (self.at(k1, j1) - self.at(k1, j));
        a + ft * (b - a)
    }
}

impl HazardKernel {
    pub fn two_piece(early: f64, late: f64, lag: f64) -> Result<Self> {
        if !(early >= 0.0 && late >= 0.0 && early.is_finite() && late.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel levels must be non-negative, got {early} and {late}"
            )));
        }
        if !(lag >= 0.0 && lag.is_finite()) {
            return Err(Error::InvalidParameter(format!("lag must be non-negative, got {lag}")));
        }
        Ok(Self::TwoPiece { early, late, lag })
    }

    pub fn markov(rate: GridFunction) -> Result<Self> {
        if !rate.is_nonnegative() {
            return Err(Error::InvalidParameter("Markov kernel must be non-negative".into()));
        }
        let cum = cumulative(&rate).into_values();
        Ok(Self::Markov(MarkovKernel { rate, cum }))
    }

    /// Tabulates `f(t, u)` for `u <= t` on the given grid.
    pub fn grid_from_fn(t_max: f64, step: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        // validates the grid parameters
        GridFunction::constant(t_max, step, 0.0)?;
        let n = node_count(t_max, step);
        let mut values = vec![0.0; n * n];
        for k in 0..n {
            for j in 0..=k {
                let v = f(k as f64 * step, j as f64 * step);
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "kernel value {v} at t={}, u={} is not a finite non-negative number",
                        k as f64 * step,
                        j as f64 * step
                    )));
                }
                values[k * n + j] = v;
            }
        }
        Ok(Self::Grid(KernelGrid { t_max, step, n, values }))
    }

    /// `(t_max, step)` of a grid-backed kernel.
    pub fn grid_dims(&self) -> Option<(f64, f64)> {
        match self {
            Self::TwoPiece { .. } => None,
            Self::Markov(m) => Some((m.rate.t_max(), m.rate.step())),
            Self::Grid(g) => Some((g.t_max, g.step)),
        }
    }

    /// `λ(t | u)`. On the two-piece boundary `t - u == lag` the early level
    /// applies.
    pub fn eval(&self, t: f64, u: f64) -> f64 {
        match self {
            Self::TwoPiece { early, late, lag } => {
                if t - u <= lag + LAG_EPS {
                    *early
                } else {
                    *late
                }
            }
            Self::Markov(m) => m.rate.eval(t),
            Self::Grid(g) => g.eval(t, u),
        }
    }

    /// Limit of `λ(t | u')` as `u'` increases to `u`.
    pub(crate) fn eval_u_from_below(&self, t: f64, u: f64) -> f64 {
        match self {
            Self::TwoPiece { early, late, lag } => {
                if t - u < lag - LAG_EPS {
                    *early
                } else {
                    *late
                }
            }
            _ => self.eval(t, u),
        }
    }

    /// `∫ᵤᵗ λ(s | u) ds`.
    pub fn cumulative(&self, u: f64, t: f64) -> Result<f64> {
        if u > t {
            return Err(Error::InvalidInterval { lower: u, upper: t });
        }
        Ok(self.cumulative_unchecked(u, t))
    }

    pub(crate) fn cumulative_unchecked(&self, u: f64, t: f64) -> f64 {
        match self {
            Self::TwoPiece { early, late, lag } => {
                let d = (t - u).max(0.0);
                early * d.min(*lag) + late * (d - lag).max(0.0)
            }
            Self::Markov(m) => integral_to(&m.rate, &m.cum, t) - integral_to(&m.rate, &m.cum, u),
            Self::Grid(g) => {
                // s ↦ λ(s | u) is linear between s-nodes for fixed u
                let (ka, _) = g.locate(u);
                let (kb, _) = g.locate(t);
                let mut acc = 0.0;
                let mut s_prev = u;
                let mut v_prev = g.eval(u, u);
                for k in ka + 1..=kb {
                    let s = k as f64 * g.step;
                    if s >= t {
                        break;
                    }
                    let v = g.eval(s, u);
                    acc += 0.5 * (s - s_prev) * (v + v_prev);
                    s_prev = s;
                    v_prev = v;
                }
                acc + 0.5 * (t - s_prev) * (g.eval(t, u) + v_prev)
            }
        }
    }

    /// Smallest `t >= u` with `∫ᵤᵗ λ(s | u) ds >= e`, if reached by `t_max`.
    pub fn inverse_cumulative(&self, u: f64, e: f64, t_max: f64) -> Option<f64> {
        if e <= 0.0 {
            return Some(u);
        }
        let t = match self {
            Self::TwoPiece { early, late, lag } => {
                let first = early * lag;
                if e <= first {
                    if *early > 0.0 {
                        u + e / early
                    } else {
                        return self.inverse_late_only(u, e, *lag, *late, t_max);
                    }
                } else if *late > 0.0 {
                    u + lag + (e - first) / late
                } else {
                    return None;
                }
            }
            Self::Markov(m) => {
                let target = integral_to(&m.rate, &m.cum, u) + e;
                invert_monotone_nodes(m.cum.len(), m.rate.step(), |k| m.cum[k], target)?
                    .max(u)
            }
            Self::Grid(g) => {
                let (ju, _) = g.locate(u);
                let start = ju + 1;
                if start >= g.n {
                    return None;
                }
                let t_at = |k: usize| (start + k) as f64 * g.step;
                let node = |k: usize| self.cumulative_unchecked(u, t_at(k));
                let m = g.n - start;
                match invert_monotone_nodes(m, g.step, node, e) {
                    None => return None,
                    Some(0.0) => {
                        // reached inside (u, t_start]
                        let c = self.cumulative_unchecked(u, t_at(0));
                        u + (t_at(0) - u) * (e / c)
                    }
                    Some(x) => start as f64 * g.step + x,
                }
            }
        };
        (t <= t_max + 1e-12).then_some(t.min(t_max))
    }

    fn inverse_late_only(&self, u: f64, e: f64, lag: f64, late: f64, t_max: f64) -> Option<f64> {
        if late <= 0.0 {
            return None;
        }
        let t = u + lag + e / late;
        (t <= t_max + 1e-12).then_some(t.min(t_max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section5() -> HazardKernel {
        HazardKernel::two_piece(0.4, 0.2, 1.0).unwrap()
    }

    #[test]
    fn two_piece_cumulative_examples() {
        let k = section5();
        assert!((k.cumulative(0.0, 0.5).unwrap() - 0.2).abs() < 1e-15);
        assert!((k.cumulative(0.0, 2.0).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(k.cumulative(1.3, 1.3).unwrap(), 0.0);
        assert!(matches!(k.cumulative(2.0, 1.0), Err(Error::InvalidInterval { .. })));
    }

    #[test]
    fn boundary_takes_early_level() {
        let k = section5();
        assert_eq!(k.eval(1.0, 0.0), 0.4);
        assert_eq!(k.eval(1.5, 0.5), 0.4);
        assert_eq!(k.eval(1.5, 0.0), 0.2);
        assert_eq!(k.eval(1.5, 1.0), 0.4);
        assert_eq!(k.eval_u_from_below(1.5, 0.5), 0.2);
    }

    #[test]
    fn markov_kernel_cumulative_matches_grid_integral() {
        let rate = GridFunction::from_fn(3.0, 0.005, |t| 0.2 + 0.1 * t).unwrap();
        let k = HazardKernel::markov(rate).unwrap();
        let exact = |a: f64, b: f64| 0.2 * (b - a) + 0.05 * (b * b - a * a);
        assert!((k.cumulative(0.3, 2.1).unwrap() - exact(0.3, 2.1)).abs() < 1e-12);
        assert!((k.cumulative(0.3012, 2.1).unwrap() - exact(0.3012, 2.1)).abs() < 1e-9);
        assert_eq!(k.cumulative(1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn grid_kernel_agrees_with_closed_form_on_smooth_kernel() {
        let f = |t: f64, u: f64| 0.3 + 0.1 * (t - u);
        let k = HazardKernel::grid_from_fn(3.0, 0.01, f).unwrap();
        let exact = |u: f64, t: f64| 0.3 * (t - u) + 0.05 * (t - u).powi(2);
        for (u, t) in [(0.0, 1.0), (0.5, 2.5), (0.5, 1.777)] {
            assert!((k.cumulative(u, t).unwrap() - exact(u, t)).abs() < 1e-9, "{u} {t}");
        }
        // off-node u: the cell straddling the diagonal is clamped
        assert!((k.cumulative(0.123, 1.777).unwrap() - exact(0.123, 1.777)).abs() < 1e-5);
        assert!((k.eval(1.234, 0.5) - f(1.234, 0.5)).abs() < 1e-12);
    }

    #[test]
    fn inverse_cumulative_round_trips() {
        let kernels = vec![
            section5(),
            HazardKernel::markov(GridFunction::from_fn(3.0, 0.005, |t| 0.2 + 0.1 * t).unwrap())
                .unwrap(),
            HazardKernel::grid_from_fn(3.0, 0.01, |t, u| 0.3 + 0.1 * (t - u)).unwrap(),
        ];
        for k in &kernels {
            for (u, e) in [(0.0, 0.1), (0.4, 0.3), (0.77, 0.5), (1.2, 0.01)] {
                let t = k.inverse_cumulative(u, e, 3.0).expect("reached");
                assert!((k.cumulative(u, t).unwrap() - e).abs() < 1e-5, "{k:?} {u} {e}");
            }
            assert_eq!(k.inverse_cumulative(2.9, 5.0, 3.0), None);
        }
    }

    #[test]
    fn rejects_negative_levels() {
        assert!(HazardKernel::two_piece(-0.1, 0.2, 1.0).is_err());
        assert!(HazardKernel::grid_from_fn(1.0, 0.1, |_, _| -1.0).is_err());
    }
}
