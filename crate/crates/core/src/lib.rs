//! Spatial generalized functional linear models for binary responses on
//! lattices.
//!
//! The crate covers the whole pipeline: trigonometric basis expansion of
//! functional covariates, simulation of centered autologistic fields by Gibbs
//! sampling, maximum composite likelihood fitting with truncation selection by
//! AIC, sandwich (Godambe) inference for the dependence parameter and the
//! regression function, and a seeded Monte Carlo harness.

pub mod basis;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod inference;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod simulate;

pub use basis::{
    center_covariates, make_trig_basis, project, quad_inner_product, reconstruct, BasisSet,
    FunctionGrid, GridSpec, ScoreVector,
};
pub use error::{Result, SgflmError};
pub use fit::{
    adjust_intercept_for_centering, fit_gflm, fit_sgflm, select_p_aic, FitConfig, FitResult, ModelKind,
};
pub use inference::{band_beta, ci_eta, sandwich, ConfidenceBand, SandwichMatrices};
pub use lattice::{build_lattice, Lattice, LatticeSpec, NeighborhoodKind};
pub use model::{
    composite_loglik, composite_loglik_derivatives, conditional_probability, kappa,
    natural_parameter, CLDerivatives, Dataset, DatasetMeta, Theta,
};
