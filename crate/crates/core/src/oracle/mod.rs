//! Exact finite-state ground truth: predictors, the limiting coupling of each
//! scheme, the semigroup operators and the asymptotic variances.

pub mod exact;
pub mod finite;
pub mod operators;

pub use exact::{
    exact_coupled, exact_coupled_ir, exact_coupled_mc, exact_coupled_mcr, exact_coupled_w, exact_predictor,
    CouplingMatrix,
};
pub use finite::{build, FiniteModel, FiniteModelParts, MAX_ATOMS};
pub use operators::{
    clt_variance, d_function, exact_filt_difference, exact_pred_difference, h_and_s, q_operator, AtomFunction,
    CltVariance, HsTerms,
};
