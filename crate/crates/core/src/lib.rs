//! Single-species fishery harvesting with a density-dependent fishing effort.
//!
//! Fishing effort falls when the stock is growing quickly and rises when it
//! is shrinking, `E = alpha - beta (dN/dt)/N`. Six management policies are
//! provided (constant, proportional, capped proportional, proportional above
//! a protected threshold, seasonal and rotational), together with a
//! fixed-step RK4 integrator, equilibrium and yield analysis, and a registry
//! of ready-made experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod integrator;
pub mod model;
pub mod output;
pub mod par;
pub mod scenarios;
pub mod schedule;

pub use analysis::{
    attractor_period, bifurcation_scan, convergence_time, equilibria_proportional,
    equilibria_restricted, equilibria_threshold, sustainable_yield_curve, AttractorSummary,
    Control, EquilibriumReport, Stability, YieldCurve,
};
pub use integrator::{integrate, EventKind, IntegrationConfig, Sample, Trajectory};
pub use model::{Coefficient, HarvestSystem, ModelError, ModelParams, Regime, Strategy};
pub use par::Execution;
pub use schedule::Schedule;
