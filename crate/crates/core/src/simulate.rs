//! Monte Carlo draws from an [`IllnessDeathModel`], from frailty cohorts and
//! from static treatment regimes, plus the conversion to counting-process
//! rows.
//!
//! Every subject gets its own ChaCha8 stream: the generator is seeded with
//! `SimConfig::seed` and the stream number is the subject id, so results do
//! not depend on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;

use crate::contrast::Regime;
use crate::error::{Error, Result};
use crate::frailty::ConditionalHazardSpec;
use crate::model_core::records::group_by_id;
use crate::model_core::{
    cumulative, validate_rows, CountingRow, FrailtySpec, GridFunction, IllnessDeathModel,
    Trajectory,
};
use crate::numerics::{integral_to, inverse_cdf_sample};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    /// Administrative censoring time.
    pub t_max: f64,
    pub frailty: Option<FrailtySpec>,
}

impl SimConfig {
    pub fn new(n: usize, seed: u64, t_max: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("censoring time {t_max} must be positive")));
        }
        Ok(Self { n, seed, t_max, frailty: None })
    }

    pub fn with_frailty(mut self, frailty: FrailtySpec) -> Self {
        self.frailty = Some(frailty);
        self
    }

    fn check_horizon(&self, grid_t_max: f64) -> Result<()> {
        if self.t_max > grid_t_max + 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "censoring time {} beyond the model horizon {grid_t_max}",
                self.t_max
            )));
        }
        Ok(())
    }
}

/// The random stream of subject `id`.
pub fn subject_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn unit_exp<R: Rng>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Precomputed cumulative hazards for repeated draws from one model.
#[derive(Debug, Clone)]
pub struct TrajectorySampler<'a> {
    model: &'a IllnessDeathModel,
    t_max: f64,
    cum_exit: GridFunction,
    cum02: GridFunction,
}

impl<'a> TrajectorySampler<'a> {
    pub fn new(model: &'a IllnessDeathModel, t_max: f64) -> Result<Self> {
        if !(t_max > 0.0 && t_max <= model.t_max() + 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "censoring time {t_max} outside (0, {}]",
                model.t_max()
            )));
        }
        let total = model.lambda01().zip_with(model.lambda02(), |a, b| a + b)?;
        Ok(Self { model, t_max, cum_exit: cumulative(&total), cum02: cumulative(model.lambda02()) })
    }

    fn censored(&self, id: u64, u_init: Option<f64>) -> Trajectory {
        Trajectory { id, u_init, t_event: self.t_max, event: false, frailty: None }
    }

    /// Death after entering the treated state at `u`, drawn from the kernel.
    fn after_initiation(&self, id: u64, u: f64, e: f64) -> Trajectory {
        match self.model.lambda12().inverse_cumulative(u, e, self.model.t_max()) {
            Some(t) if t <= self.t_max => Trajectory { id, u_init: Some(u), t_event: t, event: true, frailty: None },
            _ => self.censored(id, Some(u)),
        }
    }

    /// One subject starting untreated at time 0.
    pub fn sample<R: Rng>(&self, id: u64, rng: &mut R) -> Trajectory {
        let first = match inverse_cdf_sample(&self.cum_exit, unit_exp(rng)) {
            Some(t) if t <= self.t_max => t,
            _ => return self.censored(id, None),
        };
        let l01 = self.model.lambda01().eval(first);
        let l02 = self.model.lambda02().eval(first);
        let to_treated = if l01 + l02 > 0.0 { rng.random::<f64>() * (l01 + l02) < l01 } else { l01 > 0.0 };
        if !to_treated {
            return Trajectory { id, u_init: None, t_event: first, event: true, frailty: None };
        }
        let e = unit_exp(rng);
        self.after_initiation(id, first, e)
    }

    /// One subject with treatment forced by `regime`.
    pub fn sample_regime<R: Rng>(&self, id: u64, regime: Regime, rng: &mut R) -> Trajectory {
        let e = unit_exp(rng);
        let untreated_death = |e: f64| match inverse_cdf_sample(&self.cum02, e) {
            Some(t) if t <= self.t_max => Trajectory { id, u_init: None, t_event: t, event: true, frailty: None },
            _ => self.censored(id, None),
        };
        match regime {
            Regime::Never => untreated_death(e),
            Regime::Always => self.after_initiation(id, 0.0, e),
            Regime::InitiateAt(u) => {
                if u >= self.t_max {
                    return untreated_death(e);
                }
                let before = integral_to(self.model.lambda02(), self.cum02.values(), u);
                if e <= before {
                    untreated_death(e)
                } else {
                    self.after_initiation(id, u, e - before)
                }
            }
        }
    }
}

/// Single draw for subject `id` on its own stream.
pub fn sample_trajectory(model: &IllnessDeathModel, cfg: &SimConfig, id: u64) -> Result<Trajectory> {
    let sampler = TrajectorySampler::new(model, cfg.t_max)?;
    Ok(sampler.sample(id, &mut subject_rng(cfg.seed, id)))
}

/// `cfg.n` subjects with ids `0..n`.
pub fn simulate(model: &IllnessDeathModel, cfg: &SimConfig) -> Result<Vec<Trajectory>> {
    cfg.check_horizon(model.t_max())?;
    let sampler = TrajectorySampler::new(model, cfg.t_max)?;
    Ok((0..cfg.n as u64)
        .into_par_iter()
        .map(|id| sampler.sample(id, &mut subject_rng(cfg.seed, id)))
        .collect())
}

/// `cfg.n` subjects with treatment forced by `regime`.
pub fn simulate_regime(model: &IllnessDeathModel, regime: Regime, cfg: &SimConfig) -> Result<Vec<Trajectory>> {
    cfg.check_horizon(model.t_max())?;
    if let Regime::InitiateAt(u) = regime {
        if !(0.0..=model.t_max()).contains(&u) {
            return Err(Error::InvalidParameter(format!("initiation time {u} outside [0, {}]", model.t_max())));
        }
    }
    let sampler = TrajectorySampler::new(model, cfg.t_max)?;
    Ok((0..cfg.n as u64)
        .into_par_iter()
        .map(|id| sampler.sample_regime(id, regime, &mut subject_rng(cfg.seed, id)))
        .collect())
}

fn draw_frailty<R: Rng>(frailty: &FrailtySpec, rng: &mut R) -> Result<f64> {
    match frailty {
        FrailtySpec::Degenerate { c } => Ok(*c),
        FrailtySpec::Gamma { variance } => {
            let g = Gamma::new(1.0 / variance, *variance)
                .map_err(|e| Error::InvalidParameter(format!("gamma frailty: {e}")))?;
            Ok(g.sample(rng))
        }
        FrailtySpec::Custom { .. } => {
            Err(Error::Unsupported("sampling from a frailty given only by its Laplace transform".into()))
        }
    }
}

/// Cohort with frailty `Z`, exposure initiation from `lambda_a` independent
/// of `Z`, and death hazard `Z h(t, a(t))`. The frailty used by `cfg` is
/// `frailty`; `cfg.frailty` is ignored.
pub fn sample_frailty_cohort(
    spec: &ConditionalHazardSpec,
    frailty: &FrailtySpec,
    lambda_a: &GridFunction,
    cfg: &SimConfig,
) -> Result<Vec<Trajectory>> {
    spec.untreated.check_same_grid(lambda_a)?;
    cfg.check_horizon(lambda_a.t_max())?;
    let cum_a = cumulative(lambda_a);
    let h0 = cumulative(&spec.untreated);
    let h1 = cumulative(&spec.treated);
    let t_max = cfg.t_max;
    (0..cfg.n as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = subject_rng(cfg.seed, id);
            let z = draw_frailty(frailty, &mut rng)?;
            let u = inverse_cdf_sample(&cum_a, unit_exp(&mut rng)).filter(|&u| u < t_max);
            // Z·H(T) = E along the realised path
            let target = unit_exp(&mut rng) / z;
            let death = match u {
                Some(u) if integral_to(&spec.untreated, h0.values(), u) < target => {
                    let shifted = target - integral_to(&spec.untreated, h0.values(), u)
                        + integral_to(&spec.treated, h1.values(), u);
                    inverse_cdf_sample(&h1, shifted).map(|t| t.max(u))
                }
                _ => inverse_cdf_sample(&h0, target),
            };
            let (t_event, event) = match death {
                Some(t) if t <= t_max => (t, true),
                _ => (t_max, false),
            };
            let u_init = u.filter(|&u| u < t_event);
            Ok(Trajectory { id, u_init, t_event, event, frailty: Some(z) })
        })
        .collect()
}

/// Untreated-then-treated split at `u_init`. A treated interval of zero
/// length (initiation at the exit time) is dropped.
pub fn to_counting_rows(trajs: &[Trajectory]) -> Result<Vec<CountingRow>> {
    let mut rows = Vec::with_capacity(trajs.len() * 2);
    for tr in trajs {
        let bad = |reason: String| Error::MalformedTrajectory { id: tr.id, reason };
        if !(tr.t_event > 0.0 && tr.t_event.is_finite()) {
            return Err(bad(format!("exit time {} must be positive", tr.t_event)));
        }
        let row = |start, stop, treat, event| CountingRow { id: tr.id, start, stop, treat, event };
        match tr.u_init {
            Some(u) if u > tr.t_event || u < 0.0 => {
                return Err(bad(format!("u_init {u} outside [0, t_event={}]", tr.t_event)));
            }
            Some(u) if u == tr.t_event => rows.push(row(0.0, tr.t_event, 0, tr.event)),
            Some(0.0) => rows.push(row(0.0, tr.t_event, 1, tr.event)),
            Some(u) => {
                rows.push(row(0.0, u, 0, false));
                rows.push(row(u, tr.t_event, 1, tr.event));
            }
            None => rows.push(row(0.0, tr.t_event, 0, tr.event)),
        }
    }
    Ok(rows)
}

/// Inverse of [`to_counting_rows`]; the frailty diagnostic is not recoverable.
pub fn from_counting_rows(rows: &[CountingRow]) -> Result<Vec<Trajectory>> {
    validate_rows(rows)?;
    Ok(group_by_id(rows)
        .into_iter()
        .map(|(id, mut subject)| {
            subject.sort_by(|a, b| a.start.total_cmp(&b.start));
            let last = subject[subject.len() - 1];
            let u_init = subject.iter().find(|r| r.treat == 1).map(|r| r.start);
            Trajectory { id, u_init, t_event: last.stop, event: last.event, frailty: None }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::HazardKernel;

    fn model(l01: f64, l02: f64, l12: f64) -> IllnessDeathModel {
        IllnessDeathModel::new(
            GridFunction::constant(3.0, 0.005, l01).unwrap(),
            GridFunction::constant(3.0, 0.005, l02).unwrap(),
            HazardKernel::two_piece(l12, l12, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn no_initiation_without_lambda01() {
        let trajs = simulate(&model(0.0, 0.5, 0.3), &SimConfig::new(2000, 3, 3.0).unwrap()).unwrap();
        assert!(trajs.iter().all(|t| t.u_init.is_none()));
    }

    #[test]
    fn no_death_hazard_means_all_censored() {
        let trajs = simulate(&model(0.4, 0.0, 0.0), &SimConfig::new(2000, 3, 3.0).unwrap()).unwrap();
        assert!(trajs.iter().all(|t| !t.event && t.t_event == 3.0));
        assert!(trajs.iter().any(|t| t.u_init.is_some()));
    }

    #[test]
    fn deterministic_given_seed() {
        let m = model(0.3, 0.5, 0.4);
        let cfg = SimConfig::new(500, 42, 3.0).unwrap();
        assert_eq!(simulate(&m, &cfg).unwrap(), simulate(&m, &cfg).unwrap());
        let other = SimConfig::new(500, 43, 3.0).unwrap();
        assert_ne!(simulate(&m, &cfg).unwrap(), simulate(&m, &other).unwrap());
    }

    #[test]
    fn row_examples() {
        let tr = |u_init, t_event, event| Trajectory { id: 7, u_init, t_event, event, frailty: None };
        let r = |start, stop, treat, event| CountingRow { id: 7, start, stop, treat, event };
        assert_eq!(to_counting_rows(&[tr(None, 1.2, true)]).unwrap(), vec![r(0.0, 1.2, 0, true)]);
        assert_eq!(
            to_counting_rows(&[tr(Some(0.5), 3.0, false)]).unwrap(),
            vec![r(0.0, 0.5, 0, false), r(0.5, 3.0, 1, false)]
        );
        assert_eq!(
            to_counting_rows(&[tr(Some(0.5), 2.0, true)]).unwrap(),
            vec![r(0.0, 0.5, 0, false), r(0.5, 2.0, 1, true)]
        );
        assert!(matches!(
            to_counting_rows(&[tr(Some(2.5), 2.0, true)]),
            Err(Error::MalformedTrajectory { id: 7, .. })
        ));
    }

    #[test]
    fn gamma_limit_rejected() {
        assert!(FrailtySpec::gamma(0.0).is_err());
    }

    #[test]
    fn custom_frailty_cannot_be_sampled() {
        let f = FrailtySpec::custom(
            |s: f64| 1.0 / (1.0 + s),
            |s: f64| -1.0 / ((1.0 + s) * (1.0 + s)),
            |p: f64| 1.0 / p - 1.0,
        )
        .unwrap();
        let spec = ConditionalHazardSpec::constant(3.0, 0.005, 0.3, 0.5).unwrap();
        let la = GridFunction::constant(3.0, 0.005, 0.2).unwrap();
        let cfg = SimConfig::new(10, 1, 3.0).unwrap();
        assert!(matches!(sample_frailty_cohort(&spec, &f, &la, &cfg), Err(Error::Unsupported(_))));
    }
}
