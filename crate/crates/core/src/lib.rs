//! Neural optimal stopping boundaries for Bermudan problems.
//!
//! A stopping rule is described by a boundary `f(t, xi)` in latent
//! coordinates `(xi, alpha)` of the state: the process stops the first time
//! `alpha(X_t)` crosses `f(t, xi(X_t))`. Boundaries can be tabular, analytic
//! or small neural networks trained by stochastic gradient ascent on a
//! relaxed (randomized) version of the stopping value. Exact lattice and
//! scenario-tree dynamic programming provide reference values.

pub mod boundary;
pub mod error;
pub mod geometry;
pub mod market;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod run;
pub mod stopping;
pub mod train;

pub use error::{Error, Result};
pub use geometry::{CoordinateSystem, FuzzyWidth, Orientation};
pub use market::{MarketParams, Payoff, PayoffKind, PathBatch, PathSimulator, TimeGrid};
pub use stopping::{StoppingProblem, ValueEstimate};
pub use train::{TrainConfig, TrainLog};
