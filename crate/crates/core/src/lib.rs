//! Hazards versus rates for time-varying treatments.
//!
//! The crate builds, simulates and estimates survival models in which the
//! treatment is an irreversible binary process. It separates the *hazard*
//! (conditional on the whole treatment history) from the *rate*
//! (conditional on the current treatment level only), and provides:
//!
//! - an illness-death engine that turns transition hazards into the death
//!   rate among the treated ([`rate_engine`]),
//! - a fixed-point builder for non-Markov models with proportional rates
//!   ([`builder`]),
//! - closed-form frailty-marginal hazards and the discrete collider
//!   enumeration ([`frailty`]),
//! - a reproducible simulator ([`simulate`]) and counting-process
//!   estimators ([`estimators`]),
//! - exact interventional survival curves versus rate-based curves
//!   ([`contrast`]).

// NaN must fail parameter checks, so `!(x > 0.0)` is intended
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builder;
pub mod cli;
pub mod contrast;
pub mod error;
pub mod estimators;
pub mod frailty;
pub mod model_core;
pub mod numerics;
pub mod rate_engine;
pub mod simulate;

pub use error::{Error, Result};
pub use model_core::{
    CountingRow, FrailtySpec, GridFunction, HazardKernel, IllnessDeathModel, Trajectory,
};
pub use numerics::SolverConfig;
