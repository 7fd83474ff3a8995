use crate::error::{Error, Result};

/// Relative slack used when snapping a time onto the grid.
pub(crate) const SNAP_EPS: f64 = 1e-9;

/// A real-valued function sampled on the uniform grid `k * step`,
/// `k = 0..=floor(t_max / step)`, linearly interpolated between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    t_max: f64,
    step: f64,
    values: Vec<f64>,
}

/// Number of nodes of the grid `(t_max, step)`.
pub fn node_count(t_max: f64, step: f64) -> usize {
    (t_max / step + SNAP_EPS).floor() as usize + 1
}

impl GridFunction {
    pub fn new(t_max: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        check_grid_params(t_max, step)?;
        let n = node_count(t_max, step);
        if values.len() != n {
            return Err(Error::InvalidGrid(format!(
                "expected {n} values for t_max={t_max}, step={step}, got {}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "non-finite value at node {k} (t={})",
                k as f64 * step
            )));
        }
        Ok(Self { t_max, step, values })
    }

    pub fn from_fn(t_max: f64, step: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        check_grid_params(t_max, step)?;
        let n = node_count(t_max, step);
        let values = (0..n).map(|k| f(k as f64 * step)).collect();
        Self::new(t_max, step, values)
    }

    pub fn constant(t_max: f64, step: f64, c: f64) -> Result<Self> {
        Self::from_fn(t_max, step, |_| c)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            t_max: self.t_max,
            step: self.step,
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &v)| (k as f64 * self.step, v))
    }

    /// Segment index and fractional position of `t`, snapping onto nodes.
    /// Times outside `[0, last node]` are clamped.
    pub(crate) fn locate(&self, t: f64) -> (usize, f64) {
        let last = self.values.len() - 1;
        if t <= 0.0 {
            return (0, 0.0);
        }
        let x = t / self.step;
        let r = x.round();
        if (x - r).abs() < SNAP_EPS {
            let k = (r as usize).min(last);
            return (k, 0.0);
        }
        let k = x.floor() as usize;
        if k >= last {
            return (last, 0.0);
        }
        (k, x - k as f64)
    }

    /// Linear interpolation between nodes; constant beyond the last node.
    pub fn eval(&self, t: f64) -> f64 {
        let (k, frac) = self.locate(t);
        if frac == 0.0 {
            self.values[k]
        } else {
            self.values[k] + frac * (self.values[k + 1] - self.values[k])
        }
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.values.len() == other.values.len()
            && ((self.step - other.step).abs() <= 1e-12 * self.step)
            && ((self.t_max - other.t_max).abs() <= 1e-12 * self.t_max.max(1.0))
    }

    pub fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected_t_max: self.t_max,
                expected_step: self.step,
                t_max: other.t_max,
                step: other.step,
            })
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Self::new(self.t_max, self.step, values)
    }

    /// Pointwise combination of two functions on the same grid.
    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.t_max, self.step, values)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn sup_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_grid_params(t_max: f64, step: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidGrid(format!("step must be positive, got {step}")));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidGrid(format!("t_max must be non-negative, got {t_max}")));
    }
    Ok(())
}

/// Trapezoidal running integral `∫₀ᵗ f`, evaluated at every node.
pub fn cumulative(f: &GridFunction) -> GridFunction {
    let h = f.step;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(f.values.len());
    out.push(0.0);
    for w in f.values.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    GridFunction {
        t_max: f.t_max,
        step: f.step,
        values: out,
    }
}

/// Cumulative integral checked against the caller's expected grid.
pub fn cumulative_on(f: &GridFunction, expected: &GridFunction) -> Result<GridFunction> {
    expected.check_same_grid(f)?;
    Ok(cumulative(f))
}

/// Pointwise `exp(-L)`.
pub fn survival_from_cumulative(cumulative: &GridFunction) -> GridFunction {
    GridFunction {
        t_max: cumulative.t_max,
        step: cumulative.step,
        values: cumulative.values.iter().map(|&l| (-l).exp()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_count_matches_floor() {
        assert_eq!(node_count(3.0, 0.005), 601);
        assert_eq!(node_count(1.0, 0.3), 4);
        assert_eq!(node_count(0.0, 0.1), 1);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridFunction::new(1.0, 0.0, vec![0.0]).is_err());
        assert!(GridFunction::new(1.0, 0.5, vec![0.0, 1.0]).is_err());
        assert!(GridFunction::new(1.0, 0.5, vec![0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn cumulative_of_zero_is_zero() {
        let f = GridFunction::constant(3.0, 0.005, 0.0).unwrap();
        assert!(cumulative(&f).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cumulative_of_constant() {
        let f = GridFunction::constant(3.0, 0.005, 0.3).unwrap();
        let c = cumulative(&f);
        assert!((c.eval(2.0) - 0.6).abs() < 1e-12);
        assert_eq!(c.values()[0], 0.0);
    }

    #[test]
    fn cumulative_of_identity() {
        let f = GridFunction::from_fn(1.0, 0.01, |t| t).unwrap();
        let c = cumulative(&f);
        assert!((c.eval(1.0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn cumulative_grid_mismatch() {
        let f = GridFunction::constant(3.0, 0.005, 0.3).unwrap();
        let g = GridFunction::constant(3.0, 0.01, 0.3).unwrap();
        assert!(matches!(cumulative_on(&f, &g), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn survival_examples() {
        let zero = GridFunction::constant(3.0, 0.005, 0.0).unwrap();
        assert!(survival_from_cumulative(&zero).values().iter().all(|&v| v == 1.0));

        let l = GridFunction::from_fn(3.0, 0.005, |t| 0.6 * t).unwrap();
        let s = survival_from_cumulative(&l);
        assert!((s.eval(1.0) - (-0.6f64).exp()).abs() < 1e-12);
        assert!((s.eval(1.0) - 0.5488).abs() < 1e-4);
    }

    #[test]
    fn eval_interpolates_and_snaps() {
        let f = GridFunction::from_fn(1.0, 0.1, |t| 2.0 * t).unwrap();
        assert!((f.eval(0.25) - 0.5).abs() < 1e-12);
        assert_eq!(f.locate(0.3), (3, 0.0));
        assert_eq!(f.eval(5.0), f.values()[10]);
    }
}
