//! Fitting a lattice market from historical returns.
//!
//! The pipeline is: geometric-mean movement factors per asset, a
//! zero-diagonal Pearson correlation matrix, sign binarization, and finally a
//! least-squares fit of each asset's Markov coefficients restricted to the
//! polyhedron on which every conditional probability stays in [0, 1].

mod constraints;
mod factors;
mod fit;
pub mod qp;

pub use constraints::{build_constraints, feasibility_check, FeasibilityReport, PolyhedronConstraint};
pub use factors::{binarize_returns, estimate_asset_correlation, estimate_movement_factors, ReturnSample};
pub use fit::{estimate_spec, fit_markov_coefficients, AssetFit, FitReport, MarkovFit};
