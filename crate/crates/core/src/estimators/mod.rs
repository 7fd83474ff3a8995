//! Counting-process estimators over [`CountingRow`](crate::CountingRow)
//! data: treatment-specific Nelson–Aalen and Kaplan–Meier, Aalen additive
//! least squares and the Cox partial likelihood with time-varying
//! covariates.

mod aalen;
mod cox;
mod nonparametric;
mod step;

pub use aalen::{aalen_additive, AalenFit, IdentityCheck};
pub use cox::{cox_fit, cox_fit_with, CoxCovariates, CoxEval, CoxFit, CoxObjective};
pub use nonparametric::{
    extended_km, log_surv_ratio, nelson_aalen_by_treatment, risk_table, ByTreatment, RiskTable,
};
pub use step::StepFunction;
