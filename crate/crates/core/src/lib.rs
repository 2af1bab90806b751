//! Sparse Bayesian linear regression with Student-t shrinkage priors.
//!
//! The main entry point is [`vb::fit`], a coordinate-ascent variational
//! algorithm over a Normal–Gamma mean-field family. A blockwise Gibbs sampler
//! under the same prior ([`gibbs`]), a stochastic optimiser for the marginal
//! variational objective ([`marginal_kl`]) and a seeded simulation harness
//! ([`harness`]) are provided for comparison.

pub mod error;
pub mod gibbs;
pub mod harness;
pub mod linalg;
pub mod marginal_kl;
pub mod model;
pub mod posterior;
pub mod rng;
pub mod special_fn;
pub mod vb;

pub use error::{Error, Result};
pub use model::{Dataset, Hyperparameters, NoiseMode, PriorPreset, VariationalState};
