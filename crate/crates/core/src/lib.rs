//! Multiscale FitzHugh-Nagumo network solvers with strong local coupling.
//!
//! The crate solves three tiers of the same neural-network model on a
//! spatial domain `K = [0, 1]`:
//!
//! * [`particles`] — the stochastic n-neuron system, with an optional
//!   common-noise companion process for coupling diagnostics,
//! * [`kinetic`] — the mean-field density equation on a `(v, w)` grid per
//!   spatial node, with a splitting scheme that stays stable uniformly in
//!   the local-interaction strength `epsilon`,
//! * [`macroscopic`] — the limiting reaction system for the averaged
//!   voltage/adaptation pair together with a quantile transport of the
//!   adaptation marginal.
//!
//! [`metrics`] provides exact discrete Wasserstein-2 distances (1D quantile
//! matching, assignment and network-simplex solvers in 2D) and the entropy /
//! moment functionals used as diagnostics, and [`harness`] orchestrates
//! epsilon sweeps, slope fits and report emission for the CLI.

pub mod harness;
pub mod kinetic;
pub mod macroscopic;
pub mod metrics;
pub mod model;
pub mod particles;
pub mod util;
