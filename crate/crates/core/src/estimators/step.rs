use crate::error::{Error, Result};

/// Right-continuous step function: `initial` before the first jump,
/// `values[k]` on `[jump_times[k], jump_times[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    jump_times: Vec<f64>,
    values: Vec<f64>,
    initial: f64,
}

impl StepFunction {
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>, initial: f64) -> Result<Self> {
        if jump_times.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "{} jump times but {} values",
                jump_times.len(),
                values.len()
            )));
        }
        if jump_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("jump times must be strictly increasing".into()));
        }
        Ok(Self { jump_times, values, initial })
    }

    pub fn constant(initial: f64) -> Self {
        Self { jump_times: Vec::new(), values: Vec::new(), initial }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.jump_times.partition_point(|&s| s <= t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    /// Jump sizes `values[k] - values[k-1]`, paired with their times.
    pub fn increments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.jump_times.iter().enumerate().map(move |(k, &t)| {
            let prev = if k == 0 { self.initial } else { self.values[k - 1] };
            (t, self.values[k] - prev)
        })
    }
}
