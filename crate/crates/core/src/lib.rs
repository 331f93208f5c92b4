//! Coupled sequential Monte Carlo.
//!
//! The crate estimates differences of predictor expectations `η^f(φ) − η^c(φ)`
//! for two close Feynman–Kac models by running particle filters on the product
//! space. Four coupled resampling schemes are provided (independent pairs,
//! maximally coupled indices, maximal coupling of the predictive laws and the
//! one-dimensional quantile coupling), together with
//!
//! * Euler–Maruyama level pairs for partially observed diffusions,
//! * a multilevel Monte Carlo estimator built on the coupled filters,
//! * exact finite-state recursions for the limiting couplings and the
//!   asymptotic variances of every scheme,
//! * a replicate/sweep layer that turns runs into variance and rate statistics.
//!
//! Replicates, sweep grid points and MLMC levels are evaluated with rayon when
//! the default `parallel` feature is enabled and sequentially otherwise. All
//! randomness is derived from explicit seeds, so results do not depend on the
//! thread count.

pub mod couplings;
pub mod diffusion;
pub mod error;
pub mod filter;
pub mod fk;
pub mod mlmc;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod stats;

pub use couplings::SchemeId;
pub use error::{Result, SmcError};
pub use fk::{CoupledCloud, FeynmanKacModel, Side, TestFunction};
pub use rng::SmcRng;
