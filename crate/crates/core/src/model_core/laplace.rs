use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Distribution of a positive multiplicative frailty `Z`, represented by its
/// Laplace transform `φ(s) = E[exp(-Z s)]`.
#[derive(Clone)]
pub enum FrailtySpec {
    /// Point mass at `c`.
    Degenerate { c: f64 },
    /// Gamma with mean 1 and the given variance.
    Gamma { variance: f64 },
    /// Caller-supplied `φ`, `φ'` and `φ⁻¹`.
    Custom {
        phi: ScalarFn,
        dphi: ScalarFn,
        phi_inv: ScalarFn,
    },
}

impl fmt::Debug for FrailtySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Degenerate { c } => write!(f, "Degenerate {{ c: {c} }}"),
            Self::Gamma { variance } => write!(f, "Gamma {{ variance: {variance} }}"),
            Self::Custom { .. } => f.write_str("Custom { .. }"),
        }
    }
}

impl FrailtySpec {
    pub fn degenerate(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "degenerate frailty needs c > 0, got {c}"
            )));
        }
        Ok(Self::Degenerate { c })
    }

    /// Gamma frailty with mean 1. A zero variance is rejected; use
    /// [`FrailtySpec::degenerate`] instead.
    pub fn gamma(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma frailty needs variance > 0, got {variance}"
            )));
        }
        Ok(Self::Gamma { variance })
    }

    /// Custom transform. `φ(0) = 1`, monotonicity, `φ'` against central
    /// differences and `φ⁻¹ ∘ φ` are spot-checked at ten points.
    pub fn custom(
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dphi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        phi_inv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if (phi(0.0) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("φ(0) must be 1, got {}", phi(0.0))));
        }
        let mut prev = 1.0;
        for i in 1..=10 {
            let s = 0.5 * i as f64;
            let v = phi(s);
            if !(v > 0.0 && v < prev) {
                return Err(Error::InvalidParameter(format!(
                    "φ must be positive and strictly decreasing; φ({s}) = {v}"
                )));
            }
            prev = v;
            let eps = 1e-5;
            let fd = (phi(s + eps) - phi(s - eps)) / (2.0 * eps);
            let d = dphi(s);
            if (d - fd).abs() > 1e-6 * d.abs().max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "φ'({s}) = {d} disagrees with finite difference {fd}"
                )));
            }
            let back = phi_inv(v);
            if (back - s).abs() > 1e-6 * s.max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "φ⁻¹(φ({s})) = {back}, expected {s}"
                )));
            }
        }
        Ok(Self::Custom {
            phi: Arc::new(phi),
            dphi: Arc::new(dphi),
            phi_inv: Arc::new(phi_inv),
        })
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Self::Degenerate { .. })
    }

    pub fn laplace(&self, s: f64) -> f64 {
        match self {
            Self::Degenerate { c } => (-c * s).exp(),
            Self::Gamma { variance: v } => (1.0 + v * s).powf(-1.0 / v),
            Self::Custom { phi, .. } => phi(s),
        }
    }

    pub fn laplace_deriv(&self, s: f64) -> f64 {
        match self {
            Self::Degenerate { c } => -c * (-c * s).exp(),
            Self::Gamma { variance: v } => -(1.0 + v * s).powf(-1.0 / v - 1.0),
            Self::Custom { dphi, .. } => dphi(s),
        }
    }

    /// `φ⁻¹(p)` for `p ∈ (0, 1]`.
    pub fn laplace_inverse(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InverseDomain(p));
        }
        Ok(match self {
            Self::Degenerate { c } => -p.ln() / c,
            Self::Gamma { variance: v } => (p.powf(-v) - 1.0) / v,
            Self::Custom { phi_inv, .. } => phi_inv(p),
        })
    }

    /// `-φ'(s) / φ(s)`, the factor turning `h` into the marginal hazard.
    /// `t` only labels the error.
    pub fn hazard_multiplier(&self, s: f64, t: f64) -> Result<f64> {
        match self {
            Self::Degenerate { c } => Ok(*c),
            Self::Gamma { variance: v } => Ok(1.0 / (1.0 + v * s)),
            Self::Custom { phi, dphi, .. } => {
                let p = phi(s);
                if !(p > f64::MIN_POSITIVE) {
                    return Err(Error::LaplaceUnderflow { t, argument: s });
                }
                Ok(-dphi(s) / p)
            }
        }
    }
}
