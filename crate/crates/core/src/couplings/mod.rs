//! Coupled resampling/propagation operators, one filter step each.
//!
//! | scheme | ancestor selection | propagation |
//! |--------|--------------------|-------------|
//! | `IR`   | independent indices per marginal | coupled kernel |
//! | `MCR`  | maximal coupling of the index laws | coupled kernel |
//! | `MC`   | none: exact maximal coupling of the two predictive mixtures | (included) |
//! | `W`    | common uniform through both weighted inverse CDFs (d = 1) | coupled kernel |

pub mod categorical;
pub mod ir;
pub mod mc;
pub mod mcr;
pub mod wasserstein;

use std::fmt;
use std::str::FromStr;

pub use categorical::{maximal_couple_categorical, Categorical, MaximalIndexCoupling};
pub use ir::ircpf_step;
pub use mc::{mcpf_init, mcpf_step, predictive_mixture_density, RejectionStats};
pub use mcr::mcrpf_step;
pub use wasserstein::{wcpf_step, weighted_quantile, QuantileTable};

use crate::error::{Result, SmcError};
use crate::fk::{require_dim, CoupledCloud, FeynmanKacModel};
use crate::rng::SmcRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeId {
    /// Independent pair resampling.
    IR,
    /// Maximally coupled (index) resampling.
    MCR,
    /// Maximal coupling of the predictive laws.
    MC,
    /// Wasserstein (quantile) coupled resampling.
    W,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [SchemeId::IR, SchemeId::MCR, SchemeId::MC, SchemeId::W];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::IR => "IR",
            SchemeId::MCR => "MCR",
            SchemeId::MC => "MC",
            SchemeId::W => "W",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "IR" => Ok(SchemeId::IR),
            "MCR" => Ok(SchemeId::MCR),
            "MC" => Ok(SchemeId::MC),
            "W" => Ok(SchemeId::W),
            other => Err(format!("unknown scheme {other:?} (expected IR, MCR, MC or W)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOptions {
    /// Per-pair cap on second-stage proposals of the MC rejection sampler.
    pub max_rejection_iterations: u64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            max_rejection_iterations: mc::DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    /// MC only.
    pub rejection: Option<RejectionStats>,
    /// MCR only: fraction of pairs whose ancestor indices were coupled.
    pub coupled_index_fraction: Option<f64>,
}

/// Fails fast when a model lacks a capability the scheme needs.
pub fn check_capabilities<M: FeynmanKacModel + ?Sized>(scheme: SchemeId, model: &M) -> Result<()> {
    match scheme {
        SchemeId::MC if model.densities().is_none() => Err(SmcError::MissingDensity("MC scheme")),
        SchemeId::W => require_dim(model, 1),
        _ => Ok(()),
    }
}

pub(crate) fn check_step_time(cloud: &CoupledCloud, n: usize) -> Result<()> {
    if n == 0 || cloud.time() + 1 != n {
        return Err(SmcError::TimeMismatch {
            expected: n.saturating_sub(1),
            found: cloud.time(),
        });
    }
    Ok(())
}

/// Advances `cloud` from time `n-1` to `n` with the given scheme.
pub fn scheme_step<M: FeynmanKacModel + ?Sized>(
    scheme: SchemeId,
    cloud: &CoupledCloud,
    model: &M,
    n: usize,
    rng: &mut SmcRng,
    opts: &StepOptions,
) -> Result<(CoupledCloud, StepDiagnostics)> {
    check_capabilities(scheme, model)?;
    match scheme {
        SchemeId::IR => Ok((ircpf_step(cloud, model, n, rng)?, StepDiagnostics::default())),
        SchemeId::MCR => {
            let (next, fraction) = mcrpf_step(cloud, model, n, rng)?;
            Ok((
                next,
                StepDiagnostics {
                    coupled_index_fraction: Some(fraction),
                    ..Default::default()
                },
            ))
        }
        SchemeId::MC => {
            let (next, stats) = mcpf_step(cloud, model, n, rng, opts.max_rejection_iterations)?;
            Ok((
                next,
                StepDiagnostics {
                    rejection: Some(stats),
                    ..Default::default()
                },
            ))
        }
        SchemeId::W => Ok((wcpf_step(cloud, model, n, rng)?, StepDiagnostics::default())),
    }
}
