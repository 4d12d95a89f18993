//! Federated discrete-time survival learning with differential privacy.
//!
//! The crate is organised around the pieces of a federated time-to-default
//! experiment:
//!
//! - [`survival`]: time grids, indicator targets, the hazard network and its
//!   per-sample gradients, optimizers.
//! - [`dp`]: gradient clipping and noising, the subsampled-Gaussian RDP
//!   accountant and the Monte-Carlo Bayesian-DP accountant.
//! - [`federation`]: clients, local private training, weighted averaging and
//!   the round loop.
//! - [`metrics`]: Kaplan-Meier, time-dependent C-index, IPCW Brier score,
//!   integrated Brier score, calibration curves and expected credit loss.
//! - [`data`]: CSV ingestion, encoding, standardization, regional
//!   partitioning, splits and a synthetic generator.
//! - [`experiment`]: config-driven runs that write result bundles, plus the
//!   budget calculator behind the `accountant` command.
//!
//! Data-parallel inner loops (per-sample gradients, Monte-Carlo sensitivity
//! draws, client updates, metric evaluation) run on rayon when the `parallel`
//! feature is enabled. Every reduction happens in a fixed order, so results
//! are bit-identical between [`Execution::Parallel`] and
//! [`Execution::Sequential`].

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dp;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod federation;
pub mod metrics;
pub mod rng;
pub mod survival;

pub use error::{Error, Result};
pub use exec::Execution;
