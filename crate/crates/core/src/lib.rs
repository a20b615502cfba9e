//! Estimators for bivariate binary models with endogenous sample selection
//! ("selective labels"): a selection equation `D = 1{z0 + Z'δ - U > 0}` and an
//! outcome equation `Y = D · 1{x0 + X'β - V > 0}` whose outcome is only
//! recorded when `D = 1`.
//!
//! The crate is `no_std` and needs only `alloc`. It provides
//!
//! * [`model`]: the observed-sample container and index computations,
//! * [`basis`]: orthonormal shifted-Legendre sieves and sieve least squares,
//! * [`stage1`]: sieve-based batched gradient descent for `δ` and `F_U`,
//! * [`stage2`]: nearest-neighbour matching and bivariate sieve gradient
//!   descent for `β`,
//! * [`parametric`]: bivariate-normal two-step NLS and joint MLE baselines,
//! * [`simlab`]: simulation designs and bias/RMSE aggregation,
//! * [`multichoice`]: matching gradient descent for a two-alternative
//!   multinomial choice model.
//!
//! IO, configuration, threading and timing live in the companion `sellab`
//! crate.

#![no_std]

extern crate alloc;

pub mod basis;
pub mod error;
pub mod knn;
pub mod linalg;
pub mod model;
pub mod multichoice;
pub mod parametric;
pub mod simlab;
pub mod stage1;
pub mod stage2;

pub use error::{Error, Result};
pub use model::{Dataset, IndexPair, ParameterPoint};
