//! Multi-fidelity Bayesian optimization toolkit.
//!
//! The crate is organized around four layers:
//!
//! * [`gp`] / [`mvgp`] — exact Gaussian-process regression (single- and
//!   multi-output) with maximum-likelihood hyperparameter training;
//! * [`surrogates`] — multi-fidelity models built on those GPs: two-level
//!   co-Kriging, the recursive auto-regressive chain, hierarchical Kriging,
//!   the linear model of coregionalization, a graphical (DAG) recursive
//!   model, and fidelity-augmented-input GPs;
//! * [`acquisition`] / [`maximizer`] / [`driver`] — acquisition functions
//!   (PI, EI, WEI, GP-LCB, KG, CEI, Thompson sampling) with multi-fidelity
//!   wrappers, multistart maximization, and the optimization-loop drivers,
//!   including constrained variants;
//! * [`benchmarks`] / [`harness`] — built-in test problems, airfoil geometry
//!   generators, an external-evaluator subprocess protocol, and the seeded
//!   multi-trial experiment runner.
//!
//! Everything is deterministic given explicit seeds; fitted models are
//! immutable and safe to share across threads.

pub mod acquisition;
mod ascent;
pub mod benchmarks;
pub mod domain;
pub mod driver;
pub mod error;
pub mod gp;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod maximizer;
pub mod mvgp;
pub mod seed;
pub mod surrogates;
pub mod ts;

pub use domain::BoxDomain;
pub use error::{MfboError, Result};
pub use gp::{FitOptions, GpModel, NoiseSetting};
pub use kernel::KernelSpec;
pub use mvgp::MvGpModel;

