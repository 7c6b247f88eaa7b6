//! Numerical toolkit for random periodic solutions of time-periodic SDEs and
//! functional SDEs with finite or infinite memory.
//!
//! The crate is organized around five pieces:
//!
//! * [`rates`] — τ-periodic rate functions (trig polynomials, piecewise
//!   constants) with exact one-period integrals.
//! * [`certificates`] — the contraction-hypothesis constants and inequality
//!   checks for all three model classes, emitted as machine-readable
//!   [`certificates::Certificate`]s.
//! * [`coupling`] — the concave comparison function φ used as the reflection
//!   coupling Lyapunov metric, built by quadrature from its defining rate γ.
//! * [`noise`] / [`sde`] / [`delay`] — a seeded, counter-keyed two-sided
//!   Brownian grid with the Wiener shift, and Euler–Maruyama integrators for
//!   plain, reflection-coupled, and segment-valued (delay) dynamics.
//! * [`analysis`] — pull-back construction, empirical Wasserstein distances,
//!   contraction-rate fits with bootstrap intervals, periodicity tests, and
//!   moment probes.
//!
//! All simulation output is a pure function of (model, initial data, seed):
//! noise increments are keyed by absolute grid index so the Wiener shift is
//! exact index translation, and ensembles reduce in fixed index order.

// Validation guards use `!(x > 0.0)` so NaN is rejected along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod certificates;
pub mod coupling;
pub mod delay;
pub mod error;
pub mod noise;
pub mod presets;
pub mod rates;
pub mod sde;

pub use analysis::{PeriodicityMode, PeriodicityReport, PullbackResult, W1Estimate, W1Method};
pub use certificates::{Certificate, CertificateKind, Check, HHParams, RateTriple};
pub use coupling::CouplingMetric;
pub use delay::{DelayModel, Memory, SegmentNorm, SegmentState};
pub use error::{Error, Result};
pub use noise::NoiseGrid;
pub use rates::{PeriodicRate, RateForm, SignClass};
pub use sde::{CoupledRun, SdeModel};
