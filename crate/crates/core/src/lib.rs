//! # dde-stability
//!
//! Simulation and stability analysis of scalar delay differential equations
//! with a distributed delay,
//!
//! ```text
//! x'(t) = r(t) [ ∫ f(x(s)) dR(t,s)  −  x(t) ],
//! ```
//!
//! where the production nonlinearity `f` has a single positive fixed point
//! `K` and the delay kernel `R(t,·)` is a probability measure over past
//! times with finite memory. Concentrated lags, absolutely continuous
//! kernels, mixtures of both, and piecewise-frozen sampling schedules are
//! supported.
//!
//! The crate provides:
//!
//! - [`reproduction`]: production nonlinearities (Ricker/Nicholson type,
//!   Hill/Mackey-Glass type, user-supplied) and their analytic descriptors —
//!   equilibrium, Lipschitz constants, extrema, Schwarzian derivative.
//! - [`measure`]: delay kernels and evaluation of the history integral
//!   against a queryable trajectory.
//! - [`integrator`]: fixed-step method-of-steps Runge-Kutta integration
//!   with cubic Hermite dense output.
//! - [`analysis`]: the discrete-map stability toolbox — permanence bounds,
//!   two-sided bound sequences, the second-iterate fixed-point test,
//!   attracting intervals, small-delay thresholds, and model reports with
//!   Hopf delays for the two built-in population models.
//! - [`counterexample`]: constructive realization of a prescribed
//!   attracting interval via a piecewise-frozen delay schedule, with
//!   simulation-backed validation.
//! - [`acceptance`]: the end-to-end verification suite used by the CLI
//!   `verify` command and the integration tests.
//!
//! ## Example
//!
//! A globally stable Nicholson model converges to its equilibrium
//! `K = ln 5` for any delay:
//!
//! ```
//! use dde_stability::{
//!     integrate, tail_statistics, DelayMeasure, InitialHistory,
//!     IntegrateOptions, ModelInstance, Rate, ReproductionFunction,
//! };
//!
//! let model = ModelInstance::new(
//!     ReproductionFunction::nicholson(5.0, 1.0, 1.0)?,
//!     Rate::constant(1.0)?,
//!     DelayMeasure::single_lag(1.0)?,
//! );
//! let phi = InitialHistory::constant(0.3)?;
//! let traj = integrate(&model, &phi, 60.0, &IntegrateOptions::default())?;
//! let tail = tail_statistics(&traj, 0.25, 1e-4)?;
//! assert!(tail.converged);
//! assert!((tail.limit_est.unwrap() - 5.0f64.ln()).abs() < 1e-4);
//! # Ok::<(), dde_stability::Error>(())
//! ```

pub mod acceptance;
pub mod analysis;
pub mod counterexample;
mod error;
pub mod integrator;
pub mod measure;
pub mod reproduction;
pub(crate) mod search;

pub use error::{Error, Result};

pub use analysis::{
    attracting_interval, bound_sequences, check_overshoot_return, coppel_global_attractivity,
    difference_orbit, mackey_glass_report, nicholson_hopf_delays, nicholson_report,
    permanence_bounds, small_delay_threshold, stability_report, two_cycle_scan, BoundSequence,
    CoppelResult, OvershootReturn, PermanenceBounds, Regime, SmallDelayThresholds, StabilityReport,
};
pub use counterexample::{
    construct as construct_counterexample, validate as validate_counterexample, CounterexampleSpec,
    DelaySchedule, ValidationOutcome,
};
pub use integrator::{
    exact_linear_relaxation, integrate, tail_statistics, FnHistory, History, InitialHistory,
    IntegrateOptions, Method, ModelInstance, Rate, StepStats, TailStatistics, Trajectory,
};
pub use measure::{DelayMeasure, KernelShape};
pub use reproduction::{ExtremumMode, ExtremumTie, ReproductionFunction};
