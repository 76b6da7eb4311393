//! Trajectory-aided RSS localization of a UAV from multiple base stations.
//!
//! A UAV flying a known trajectory measures the received signal strength of
//! `N` base stations at `K` points. Because the displacement between points
//! is known, every measurement constrains the single unknown starting
//! position `u1`. This crate provides
//!
//! * [`model`]: scenario geometry, the log-distance path-loss model and
//!   seeded measurement synthesis;
//! * [`estimators`]: grid-search joint ML, the two separable low-complexity
//!   estimators (LCSL-BST, LCSL-TBS) and a single-snapshot baseline;
//! * [`crlb`]: the Fisher information matrix and the miss-distance bound of
//!   the joint estimator;
//! * [`montecarlo`]: reproducible trial batches, σ/γ sweeps and CEP maps;
//! * [`cli`]: the `uavloc` command-line front end.
//!
//! Grid evaluation and Monte Carlo trials run on rayon when the `parallel`
//! feature is enabled (the default). Results do not depend on the number of
//! threads.

pub mod cli;
pub mod crlb;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod model;
pub mod montecarlo;

pub use error::{Error, Result};
pub use exec::Execution;
