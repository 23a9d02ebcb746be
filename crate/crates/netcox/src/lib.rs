//! Kernel-localized maximum likelihood for time-varying-coefficient
//! Cox-type intensity models on dynamic network interaction events.
//!
//! The crate fits per-pair counting-process intensities of the form
//! `C_ij(t) * exp(theta(t)' X_ij(t))` by maximizing a kernel-localized
//! log-likelihood at each evaluation time, with plug-in asymptotic
//! covariance and confidence bands, data-driven one-sided cross-validation
//! bandwidth selection, event simulation (per-piece Poisson and thinning),
//! and simulation-based goodness-of-fit on graph statistics.

pub mod bandwidth;
pub mod config;
pub mod estimator;
pub mod features;
pub mod ingest;
pub mod io;
pub mod kernel;
pub mod likelihood;
pub mod model;
pub mod netstats;
pub mod numeric;
pub mod simulate;

pub use estimator::{fit_at, fit_curve, SolverConfig};
pub use kernel::Kernel;
pub use likelihood::LocalLikContext;
pub use model::{EventStream, FitResult, ModelSpec, Panel, ParameterCurve};
