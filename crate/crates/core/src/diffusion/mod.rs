//! Euler–Maruyama levels for partially observed diffusions.

pub mod euler;
pub mod gauss_transform;
pub mod model;
pub mod ou;

pub use euler::{
    euler_coupled_unit_step, euler_unit_step, strong_error_probe, weak_error_probe, DiffusionSpec, LevelParams,
    ProbeEstimate,
};
pub use model::{EulerDiffusionModel, Potential};
pub use ou::{
    ou_transition_density, ou_transition_params, synthesize_observations, KernelMode, OuModel, OuParams, OuPotential,
    OuSetup, OU_RATE,
};
