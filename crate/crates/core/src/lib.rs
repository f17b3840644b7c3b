//! Simulation, estimation and analytics for the generalized lattice market.
//!
//! Each asset returns one of two values per period, `u_i > 0` or `d_i < 0`,
//! with an up-move probability that is affine in the asset's own last `m`
//! returns and in every other asset's previous return. On top of that model
//! this crate provides:
//!
//! * [`lattice`]: the market itself, path sampling and exact enumeration;
//! * [`policy`]: multi-double linear (simultaneous long/short) account dynamics;
//! * [`estimation`]: geometric-mean movement factors, correlation and a
//!   constrained least-squares fit of the Markov coefficients;
//! * [`analytics`]: worst-case expected gain-loss bounds and positive
//!   expectation certificates;
//! * [`montecarlo`]: seeded, worker-count independent gain-loss statistics
//!   and weight frontiers;
//! * [`backtest`]: price ingestion and out-of-sample policy execution.

pub mod analytics;
pub mod backtest;
pub mod error;
pub mod estimation;
pub mod lattice;
pub mod montecarlo;
pub mod policy;
pub mod rng;

pub use error::{LatticeError, Result};
pub use lattice::{LatticeMarketSpec, ProbabilitySchedule, ReturnPath};
pub use policy::{AccountTrajectory, PolicyTriple};

/// Absolute tolerance used when checking probabilities against [0, 1].
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;
