//! Domain types shared by every module: grid-sampled functions, hazard
//! kernels, the illness-death model, trajectories and counting-process rows.

pub mod grid;
pub mod kernel;
pub mod laplace;
pub mod records;

pub use grid::{cumulative, survival_from_cumulative, GridFunction};
pub use kernel::HazardKernel;
pub use laplace::FrailtySpec;
pub use records::{read_rows_csv, validate_rows, write_rows_csv, CountingRow, Trajectory};

use crate::error::{Error, Result};

/// Irreversible illness-death model: untreated (0) → treated (1) → dead (2),
/// with direct death from the untreated state.
#[derive(Debug, Clone, PartialEq)]
pub struct IllnessDeathModel {
    lambda01: GridFunction,
    lambda02: GridFunction,
    lambda12: HazardKernel,
}

impl IllnessDeathModel {
    pub fn new(lambda01: GridFunction, lambda02: GridFunction, lambda12: HazardKernel) -> Result<Self> {
        lambda01.check_same_grid(&lambda02)?;
        if !lambda01.is_nonnegative() || !lambda02.is_nonnegative() {
            return Err(Error::InvalidParameter(
                "transition hazards must be non-negative".into(),
            ));
        }
        if let Some((t_max, step)) = lambda12.grid_dims() {
            let probe = GridFunction::constant(t_max, step, 0.0)?;
            lambda01.check_same_grid(&probe)?;
        }
        Ok(Self { lambda01, lambda02, lambda12 })
    }

    pub fn lambda01(&self) -> &GridFunction {
        &self.lambda01
    }

    pub fn lambda02(&self) -> &GridFunction {
        &self.lambda02
    }

    pub fn lambda12(&self) -> &HazardKernel {
        &self.lambda12
    }

    pub fn t_max(&self) -> f64 {
        self.lambda01.t_max()
    }

    pub fn step(&self) -> f64 {
        self.lambda01.step()
    }

    /// Same model with a different untreated death hazard.
    pub fn with_lambda02(&self, lambda02: GridFunction) -> Result<Self> {
        Self::new(self.lambda01.clone(), lambda02, self.lambda12.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_requires_common_grid() {
        let a = GridFunction::constant(3.0, 0.005, 0.3).unwrap();
        let b = GridFunction::constant(3.0, 0.01, 0.6).unwrap();
        let k = HazardKernel::two_piece(0.4, 0.2, 1.0).unwrap();
        assert!(IllnessDeathModel::new(a.clone(), b, k.clone()).is_err());
        let neg = GridFunction::constant(3.0, 0.005, -0.1).unwrap();
        assert!(IllnessDeathModel::new(a.clone(), neg, k.clone()).is_err());
        let kg = HazardKernel::grid_from_fn(2.0, 0.005, |_, _| 0.1).unwrap();
        assert!(IllnessDeathModel::new(a.clone(), a.clone(), kg).is_err());
        assert!(IllnessDeathModel::new(a.clone(), a, k).is_ok());
    }
}
