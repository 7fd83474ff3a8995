//! Quadrature, scalar Newton iteration and inverse-cumulative sampling on
//! the uniform grid.

use crate::error::{Error, Result};
use crate::model_core::grid::SNAP_EPS;
use crate::model_core::GridFunction;

/// Convergence settings shared by the Newton and fixed-point solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Fixed-point blending factor in (0, 1]; 1 means undamped.
    pub damping: f64,
}

impl SolverConfig {
    pub fn new(tol: f64, max_iter: usize, damping: f64) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
        }
        if max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if !(damping > 0.0 && damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in (0, 1], got {damping}"
            )));
        }
        Ok(Self { tol, max_iter, damping })
    }

    pub fn newton_default() -> Self {
        Self { tol: 1e-10, max_iter: 50, damping: 1.0 }
    }

    pub fn fixed_point_default() -> Self {
        Self { tol: 1e-6, max_iter: 50, damping: 1.0 }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::fixed_point_default()
    }
}

/// Integral of the piecewise-linear interpolant from node `k` to
/// `k + frac` (in units of the step).
#[inline]
fn partial_segment(values: &[f64], step: f64, k: usize, frac: f64) -> f64 {
    if frac == 0.0 {
        return 0.0;
    }
    let f0 = values[k];
    let f1 = values[k + 1];
    step * frac * (f0 + 0.5 * frac * (f1 - f0))
}

/// Exact integral of the linear interpolant of `f` over `[a, b]`.
pub fn trapz(f: &GridFunction, a: f64, b: f64) -> Result<f64> {
    if a > b {
        return Err(Error::InvalidInterval { lower: a, upper: b });
    }
    let slack = SNAP_EPS * f.step().max(1.0);
    if a < -slack || b > f.t_max() + slack {
        return Err(Error::InvalidParameter(format!(
            "integration bounds [{a}, {b}] outside [0, {}]",
            f.t_max()
        )));
    }
    Ok(trapz_unchecked(f, a, b))
}

pub(crate) fn trapz_unchecked(f: &GridFunction, a: f64, b: f64) -> f64 {
    let v = f.values();
    let h = f.step();
    let (ka, fa) = f.locate(a);
    let (kb, fb) = f.locate(b);
    if ka == kb {
        return partial_segment(v, h, kb, fb) - partial_segment(v, h, ka, fa);
    }
    let mut acc = -partial_segment(v, h, ka, fa);
    for k in ka..kb {
        acc += 0.5 * h * (v[k] + v[k + 1]);
    }
    acc + partial_segment(v, h, kb, fb)
}

/// `∫₀ˣ f` given the node cumulative of `f`.
pub(crate) fn integral_to(f: &GridFunction, cum: &[f64], x: f64) -> f64 {
    let (k, frac) = f.locate(x);
    cum[k] + partial_segment(f.values(), f.step(), k, frac)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOutcome {
    pub root: f64,
    pub iterations: usize,
}

/// Scalar Newton iteration on `g(x) -> (value, derivative)`.
///
/// Stops as soon as `|g(x)| < cfg.tol`; `iterations` counts the updates
/// taken.
pub fn newton_scalar(
    g: impl Fn(f64) -> (f64, f64),
    x0: f64,
    cfg: &SolverConfig,
) -> Result<NewtonOutcome> {
    let mut x = x0;
    let mut last = f64::INFINITY;
    for it in 0..=cfg.max_iter {
        let (value, deriv) = g(x);
        if !value.is_finite() {
            return Err(Error::NonConvergence { iterations: it, residual: value });
        }
        last = value.abs();
        if last < cfg.tol {
            return Ok(NewtonOutcome { root: x, iterations: it });
        }
        if it == cfg.max_iter {
            break;
        }
        if deriv.abs() < 1e-14 {
            return Err(Error::FlatDerivative { x, derivative: deriv.abs() });
        }
        x -= value / deriv;
    }
    Err(Error::NonConvergence { iterations: cfg.max_iter, residual: last })
}

/// Smallest `t` with `node(t) >= e` for a non-decreasing node sequence,
/// linearly interpolated between the bracketing nodes.
pub(crate) fn invert_monotone_nodes(
    n: usize,
    step: f64,
    node: impl Fn(usize) -> f64,
    e: f64,
) -> Option<f64> {
    if n == 0 || node(n - 1) < e {
        return None;
    }
    if node(0) >= e {
        return Some(0.0);
    }
    // invariant: node(lo) < e <= node(hi)
    let (mut lo, mut hi) = (0usize, n - 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if node(mid) >= e {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (l0, l1) = (node(lo), node(hi));
    let frac = if l1 > l0 { (e - l0) / (l1 - l0) } else { 1.0 };
    Some((lo as f64 + frac) * step)
}

/// First time the non-decreasing cumulative `cum` reaches `e`, or `None`
/// when the horizon is survived.
pub fn inverse_cdf_sample(cum: &GridFunction, e: f64) -> Option<f64> {
    let v = cum.values();
    invert_monotone_nodes(v.len(), cum.step(), |k| v[k], e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::from_fn(3.0, 0.005, f).unwrap()
    }

    #[test]
    fn trapz_examples() {
        let one = grid(|_| 1.0);
        assert!((trapz(&one, 0.0, 2.0).unwrap() - 2.0).abs() < 1e-12);
        let lin = grid(|t| 2.0 * t);
        assert!((trapz(&lin, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-6);
        let c = grid(|_| 0.3);
        assert!((trapz(&c, 0.25, 0.75).unwrap() - 0.15).abs() < 1e-12);
        let off = GridFunction::from_fn(3.0, 0.3, |_| 0.3).unwrap();
        assert!((trapz(&off, 0.25, 0.75).unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn trapz_rejects_reversed_bounds() {
        let one = grid(|_| 1.0);
        assert!(matches!(trapz(&one, 1.0, 0.5), Err(Error::InvalidInterval { .. })));
    }

    #[test]
    fn trapz_is_exact_for_piecewise_linear_off_grid() {
        let f = GridFunction::from_fn(1.0, 0.1, |t| 3.0 * t + 1.0).unwrap();
        let exact = |a: f64, b: f64| 1.5 * (b * b - a * a) + (b - a);
        for (a, b) in [(0.03, 0.07), (0.05, 0.95), (0.1, 0.2), (0.0, 1.0)] {
            assert!((trapz(&f, a, b).unwrap() - exact(a, b)).abs() < 1e-12);
        }
    }

    #[test]
    fn newton_examples() {
        let cfg = SolverConfig::newton_default();
        let lin = newton_scalar(|x| (x - 1.0, 1.0), 0.0, &cfg).unwrap();
        assert_eq!(lin.root, 1.0);
        assert_eq!(lin.iterations, 1);

        let sq = newton_scalar(|x| (x * x - 2.0, 2.0 * x), 1.0, &cfg).unwrap();
        assert!((sq.root - 2f64.sqrt()).abs() < 1e-10);

        let ex = newton_scalar(|x| (x.exp() - 1.0, x.exp()), 5.0, &cfg).unwrap();
        assert!(ex.root.abs() < 1e-10);
    }

    #[test]
    fn newton_errors() {
        let cfg = SolverConfig::new(1e-12, 3, 1.0).unwrap();
        assert!(matches!(
            newton_scalar(|x| (x.exp() - 1.0, x.exp()), 5.0, &cfg),
            Err(Error::NonConvergence { .. })
        ));
        let cfg = SolverConfig::newton_default();
        assert!(matches!(
            newton_scalar(|x| (x * x + 1.0, 2.0 * x), 0.0, &cfg),
            Err(Error::FlatDerivative { .. })
        ));
    }

    #[test]
    fn solver_config_validation() {
        assert!(SolverConfig::new(0.0, 10, 1.0).is_err());
        assert!(SolverConfig::new(1e-6, 0, 1.0).is_err());
        assert!(SolverConfig::new(1e-6, 10, 0.0).is_err());
        assert!(SolverConfig::new(1e-6, 10, 1.5).is_err());
    }

    #[test]
    fn inverse_cdf_examples() {
        let id = grid(|t| t);
        assert!((inverse_cdf_sample(&id, 0.7).unwrap() - 0.7).abs() < 1e-9);
        let slow = grid(|t| 0.3 * t);
        assert_eq!(inverse_cdf_sample(&slow, 2.0), None);
        let l = grid(|t| 0.6 * t);
        assert!((inverse_cdf_sample(&l, 0.6).unwrap() - 1.0).abs() < 1e-9);
    }
}
