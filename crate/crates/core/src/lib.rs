//! Spatio-temporal latent Gaussian models on the sphere.
//!
//! The crate builds sparse Gaussian Markov random fields from the Matern
//! SPDE discretized on a triangulated sphere, extends them in time with a
//! first-order autoregression via Kronecker products, fits Bernoulli and
//! Poisson hierarchical regressions by nested Laplace approximation, and
//! extracts credible-interval hot-spots on a latitude-longitude grid.
//!
//! Module map:
//! - [`geo`], [`mesh`], [`project`]: spherical geometry, icosphere
//!   triangulations, barycentric observation projectors.
//! - [`fem`], [`spde`]: finite-element mass/stiffness assembly and the
//!   Matern precision operator with its parameter conversions.
//! - [`spacetime`]: AR(1) temporal precision and separable space-time
//!   Kronecker structure.
//! - [`likelihood`], [`model`], [`optim`], [`inference`]: the hierarchical
//!   model, inner Newton optimization, hyperparameter exploration, posterior
//!   summaries and information criteria.
//! - [`surface`]: grid prediction, hot-spot thresholding and labeling.
//! - [`data`]: event ingestion, raster sampling, standardization,
//!   count aggregation.
//! - [`sim`]: forward simulation and a random-walk Metropolis oracle.

pub mod data;
pub mod error;
pub mod fem;
pub mod geo;
pub mod inference;
pub mod likelihood;
pub mod mesh;
pub mod model;
pub mod optim;
pub mod project;
pub mod rng;
pub mod sim;
pub mod spacetime;
pub mod sparse;
pub mod spde;
pub mod surface;

mod bessel;

pub use error::{Error, Result};
