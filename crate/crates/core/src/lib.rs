//! Estimation of signal-strength, transient-error and measurement-error
//! components for longitudinal Likert-scale data.
//!
//! Each latent response follows
//! `X_ijt = sigma_j * Z_i + tau_j * e_it + gamma_j * eps_ijt` with standard
//! normal `Z`, `e` and `eps`, and the observed response is the category of
//! `X_ijt` relative to the item's cut points. Two estimators are provided:
//!
//! * correlation reconstruction ([`reconstruction`]): pairwise polychoric
//!   correlations assembled into a `JT x JT` matrix and fitted to the block
//!   structure by Frobenius minimum distance;
//! * maximum likelihood through a stochastic EM algorithm ([`stem`]).
//!
//! [`study`] and [`diagnostics`] drive Monte Carlo RMSE studies and chain
//! autocorrelation summaries.

pub mod cutpoints;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod model;
mod optim;
pub mod polychoric;
pub mod reconstruction;
pub mod rng;
pub mod stats;
pub mod stem;
pub mod study;

pub use error::{Error, Result};
pub use model::{CutPointSet, LatentDataset, LikertDataset, ModelParams};
