//! Frailty-marginal hazards along treatment paths, the inverse map from a
//! target rate to a history-dependent conditional hazard, and the exact
//! two-period collider enumeration.
//!
//! With complete-data hazard `Z h(t, A(t))` and exposure independent of `Z`,
//! the observed hazard along a path `ā` is
//!
//! ```text
//! λ(t | ā) = -φ'(H(t, ā)) / φ(H(t, ā)) · h(t, a(t)),   H(t, ā) = ∫₀ᵗ h(s, a(s)) ds
//! ```
//!
//! which depends on the path only through `a(t)` iff `Z` is degenerate.

use crate::error::{Error, Result};
use crate::model_core::{cumulative, FrailtySpec, GridFunction};
use crate::numerics::integral_to;

/// Irreversible binary treatment path: treated from `u_init` onwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreatmentPath {
    pub u_init: Option<f64>,
}

impl TreatmentPath {
    pub fn never() -> Self {
        Self { u_init: None }
    }

    pub fn from(u: f64) -> Self {
        Self { u_init: Some(u) }
    }

    pub fn level(&self, t: f64) -> u8 {
        match self.u_init {
            Some(u) if t >= u => 1,
            _ => 0,
        }
    }
}

/// A pair of grid functions indexed by treatment level. Used both for the
/// conditional hazard `h(t, a)` and for target rates `r(t | a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCurves {
    pub untreated: GridFunction,
    pub treated: GridFunction,
}

/// `h(t, a)`: conditional hazard given frailty, current level only.
pub type ConditionalHazardSpec = LevelCurves;

impl LevelCurves {
    pub fn new(untreated: GridFunction, treated: GridFunction) -> Result<Self> {
        untreated.check_same_grid(&treated)?;
        if !untreated.is_nonnegative() || !treated.is_nonnegative() {
            return Err(Error::InvalidParameter("level curves must be non-negative".into()));
        }
        Ok(Self { untreated, treated })
    }

    pub fn constant(t_max: f64, step: f64, untreated: f64, treated: f64) -> Result<Self> {
        Self::new(
            GridFunction::constant(t_max, step, untreated)?,
            GridFunction::constant(t_max, step, treated)?,
        )
    }

    pub fn level(&self, a: u8) -> &GridFunction {
        if a == 0 { &self.untreated } else { &self.treated }
    }
}

/// A hazard along one treatment path, stored as two smooth pieces so the
/// jump at the initiation time is integrated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PathHazard {
    before: GridFunction,
    after: GridFunction,
    u_init: Option<f64>,
    cum_before: Vec<f64>,
    cum_after: Vec<f64>,
}

impl PathHazard {
    pub fn new(before: GridFunction, after: GridFunction, path: TreatmentPath) -> Result<Self> {
        before.check_same_grid(&after)?;
        if let Some(u) = path.u_init {
            if !(0.0..=before.t_max()).contains(&u) {
                return Err(Error::InvalidParameter(format!(
                    "initiation time {u} outside [0, {}]",
                    before.t_max()
                )));
            }
        }
        let cum_before = cumulative(&before).into_values();
        let cum_after = cumulative(&after).into_values();
        Ok(Self { before, after, u_init: path.u_init, cum_before, cum_after })
    }

    pub fn along(spec: &LevelCurves, path: TreatmentPath) -> Result<Self> {
        Self::new(spec.untreated.clone(), spec.treated.clone(), path)
    }

    pub fn path(&self) -> TreatmentPath {
        TreatmentPath { u_init: self.u_init }
    }

    pub fn t_max(&self) -> f64 {
        self.before.t_max()
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.path().level(t) {
            0 => self.before.eval(t),
            _ => self.after.eval(t),
        }
    }

    /// `∫₀ᵗ` of the path hazard.
    pub fn cumulative(&self, t: f64) -> f64 {
        match self.u_init {
            Some(u) if t > u => {
                integral_to(&self.before, &self.cum_before, u)
                    + integral_to(&self.after, &self.cum_after, t)
                    - integral_to(&self.after, &self.cum_after, u)
            }
            _ => integral_to(&self.before, &self.cum_before, t),
        }
    }

    /// Node values along the path (the jump node takes the treated piece).
    pub fn to_grid(&self) -> GridFunction {
        let values = self.before.nodes().map(|(t, _)| self.value(t)).collect();
        GridFunction::new(self.before.t_max(), self.before.step(), values).expect("finite path hazard")
    }
}

pub fn marginal_hazard_at(h: &PathHazard, frailty: &FrailtySpec, t: f64) -> Result<f64> {
    let big_h = h.cumulative(t);
    Ok(frailty.hazard_multiplier(big_h, t)? * h.value(t))
}

/// Observed hazard along a path for any path-specific conditional hazard.
pub fn marginal_hazard_path(h: &PathHazard, frailty: &FrailtySpec) -> Result<GridFunction> {
    let values = h
        .before
        .nodes()
        .map(|(t, _)| marginal_hazard_at(h, frailty, t))
        .collect::<Result<Vec<_>>>()?;
    GridFunction::new(h.before.t_max(), h.before.step(), values)
}

pub fn marginal_hazard(
    spec: &ConditionalHazardSpec,
    frailty: &FrailtySpec,
    path: TreatmentPath,
) -> Result<GridFunction> {
    marginal_hazard_path(&PathHazard::along(spec, path)?, frailty)
}

/// `|λ(t | path from u1) - λ(t | path from u2)|` for two paths both treated
/// at `t`.
pub fn markov_violation_gap(
    spec: &ConditionalHazardSpec,
    frailty: &FrailtySpec,
    t: f64,
    u1: f64,
    u2: f64,
) -> Result<f64> {
    for u in [u1, u2] {
        if u > t {
            return Err(Error::InvalidParameter(format!(
                "path starting at {u} is not treated at t={t}"
            )));
        }
    }
    let a = marginal_hazard_at(&PathHazard::along(spec, TreatmentPath::from(u1))?, frailty, t)?;
    let b = marginal_hazard_at(&PathHazard::along(spec, TreatmentPath::from(u2))?, frailty, t)?;
    Ok((a - b).abs())
}

/// History-dependent conditional hazard `h̃` whose frailty-marginal hazard
/// along `path` equals the target rate:
/// `h̃(t) = d/dt φ⁻¹(exp(-R(t)))` with `R` the cumulative target rate along
/// the path, evaluated as `-r(t) p / φ'(φ⁻¹(p))`, `p = exp(-R(t))`.
pub fn invert_rate_to_h(
    target_rate: &LevelCurves,
    frailty: &FrailtySpec,
    path: TreatmentPath,
) -> Result<PathHazard> {
    let along = PathHazard::along(target_rate, path)?;
    let grid = &target_rate.untreated;
    let solve = |r: f64, big_r: f64| -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        let p = (-big_r).exp();
        let s = frailty.laplace_inverse(p)?;
        let d = frailty.laplace_deriv(s);
        if !(d < 0.0) {
            return Err(Error::InverseDomain(p));
        }
        Ok(-r * p / d)
    };
    let before = grid
        .nodes()
        .map(|(t, r)| solve(r, along.cum_before[grid.locate(t).0]))
        .collect::<Result<Vec<_>>>()?;
    let after = match path.u_init {
        None => vec![0.0; grid.len()],
        Some(u) => {
            let r_u = integral_to(&along.before, &along.cum_before, u);
            let c_u = integral_to(&along.after, &along.cum_after, u);
            target_rate
                .treated
                .nodes()
                .enumerate()
                .map(|(k, (_, r))| {
                    // smooth continuation below u; only the node just
                    // below u is ever interpolated against
                    let big_r = (r_u + along.cum_after[k] - c_u).max(0.0);
                    solve(r, big_r)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    PathHazard::new(
        GridFunction::new(grid.t_max(), grid.step(), before)?,
        GridFunction::new(grid.t_max(), grid.step(), after)?,
        path,
    )
}

/// Two-period discrete setting: frailty `Z`, treatments `A1, A2`, death
/// indicators `N1, N2`. Treatment is assigned independently of `Z`, so its
/// distribution cancels from every conditional probability below. The
/// per-period death probability is `z · p1 · effect^a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColliderScenario {
    pub p1: f64,
    pub effect: f64,
    /// `(z, P(Z = z))`.
    pub frailty_levels: Vec<(f64, f64)>,
}

impl ColliderScenario {
    fn death_prob(&self, z: f64, a: u8) -> f64 {
        z * self.p1 * if a == 1 { self.effect } else { 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(0.0..=1.0).contains(&self.p1) {
            return bad(format!("p1 = {} is not a probability", self.p1));
        }
        if !(self.effect >= 0.0 && self.effect.is_finite()) {
            return bad(format!("effect must be non-negative, got {}", self.effect));
        }
        if self.frailty_levels.is_empty() {
            return bad("no frailty levels".into());
        }
        let total: f64 = self.frailty_levels.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("frailty probabilities sum to {total}"));
        }
        for &(z, p) in &self.frailty_levels {
            if !(z > 0.0) || !(0.0..=1.0).contains(&p) {
                return bad(format!("invalid frailty level ({z}, {p})"));
            }
            for a in [0, 1] {
                let q = self.death_prob(z, a);
                if q > 1.0 {
                    return bad(format!("death probability {q} for z={z}, a={a} exceeds 1"));
                }
            }
        }
        Ok(())
    }
}

/// `P(N2 = n2 | N1 = 0, A1 = a1, A2 = a2)`, indexed `[a1][a2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColliderTable {
    pub death: [[f64; 2]; 2],
    pub survival: [[f64; 2]; 2],
}

impl ColliderTable {
    /// `P(N2=1 | N1=0, A1=1, a2) - P(N2=1 | N1=0, A1=0, a2)` for `a2 = 0, 1`.
    pub fn a1_dependence(&self) -> [f64; 2] {
        [0, 1].map(|a2| self.death[1][a2] - self.death[0][a2])
    }
}

/// Exact conditional probabilities by enumerating every `(z, n1, n2)`
/// outcome for each treatment pair. Conditioning on `N1 = 0` reweights the
/// frailty distribution; the result is the mixture of second-period
/// outcomes under that posterior.
pub fn collider_table(s: &ColliderScenario) -> Result<ColliderTable> {
    s.validate()?;
    let bern = |p: f64, x: u8| if x == 1 { p } else { 1.0 - p };
    let mut death = [[0.0; 2]; 2];
    let mut survival = [[0.0; 2]; 2];
    for a1 in 0..2u8 {
        for a2 in 0..2u8 {
            // joint mass of (z, n1 = 0) and of (z, n1 = 0, n2)
            let mut alive_1 = vec![0.0; s.frailty_levels.len()];
            let mut outcome = vec![[0.0; 2]; s.frailty_levels.len()];
            for (i, &(z, pz)) in s.frailty_levels.iter().enumerate() {
                for n1 in 0..2u8 {
                    for n2 in 0..2u8 {
                        // death is absorbing
                        if n1 == 1 {
                            continue;
                        }
                        let m = pz * bern(s.death_prob(z, a1), n1);
                        if n2 == 0 {
                            alive_1[i] += m;
                        }
                        outcome[i][n2 as usize] = bern(s.death_prob(z, a2), n2);
                    }
                }
            }
            let total: f64 = alive_1.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "conditioning event N1=0, A1={a1} has probability zero"
                )));
            }
            let (mut dead, mut alive) = (0.0, 0.0);
            for (w, [o0, o1]) in alive_1.iter().zip(&outcome) {
                let post = w / total;
                alive += post * o0;
                dead += post * o1;
            }
            debug_assert!((dead + alive - 1.0).abs() < 1e-14);
            death[a1 as usize][a2 as usize] = dead;
            // complement so each row sums to one exactly
            survival[a1 as usize][a2 as usize] = 1.0 - dead;
        }
    }
    Ok(ColliderTable { death, survival })
}
