//! Level pairs of a general Euler-discretized diffusion.

use std::fmt;
use std::sync::Arc;

use crate::diffusion::euler::{euler_coupled_unit_step_into, euler_unit_step_into, DiffusionSpec, LevelParams};
use crate::error::{Result, SmcError};
use crate::fk::{FeynmanKacModel, Side};
use crate::rng::SmcRng;

type PotentialFn = dyn Fn(usize, &[f64]) -> f64 + Send + Sync;

/// Time-indexed potential `G_n(x)` with a declared bound.
#[derive(Clone)]
pub struct Potential {
    bound: f64,
    horizon: Option<usize>,
    f: Arc<PotentialFn>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("bound", &self.bound)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl Potential {
    /// `horizon` is the number of time indices at which `f` is defined.
    pub fn new<F>(bound: f64, horizon: Option<usize>, f: F) -> Result<Self>
    where
        F: Fn(usize, &[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(SmcError::InvalidModel(format!(
                "potential bound {bound} must be finite and positive"
            )));
        }
        Ok(Potential {
            bound,
            horizon,
            f: Arc::new(f),
        })
    }

    pub fn constant() -> Self {
        Potential {
            bound: 1.0,
            horizon: None,
            f: Arc::new(|_, _| 1.0),
        }
    }

    pub fn eval(&self, n: usize, x: &[f64]) -> f64 {
        let g = (self.f)(n, x);
        debug_assert!(
            (0.0..=self.bound).contains(&g),
            "potential {g} at time {n} outside [0, {}]",
            self.bound
        );
        g
    }
}

/// Fine model at level `l`, coarse model at level `l − 1`, coupled through
/// shared Brownian increments. Initial laws are `M^l(x*, ·)`.
///
/// No transition densities are exposed, so the maximal-coupling scheme is
/// unavailable.
#[derive(Clone, Debug)]
pub struct EulerDiffusionModel {
    spec: DiffusionSpec,
    potential: Potential,
    fine: LevelParams,
    coarse: LevelParams,
}

impl EulerDiffusionModel {
    /// `l = 0` gives the diagonal pair `(0, 0)` driven by common noise.
    pub fn level_pair(spec: DiffusionSpec, potential: Potential, l: u32) -> Result<Self> {
        Ok(EulerDiffusionModel {
            spec,
            potential,
            fine: LevelParams::new(l)?,
            coarse: LevelParams::new(l.saturating_sub(1))?,
        })
    }

    pub fn single_level(spec: DiffusionSpec, potential: Potential, l: u32) -> Result<Self> {
        let level = LevelParams::new(l)?;
        Ok(EulerDiffusionModel {
            spec,
            potential,
            fine: level,
            coarse: level,
        })
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    fn level(&self, side: Side) -> LevelParams {
        match side {
            Side::Fine => self.fine,
            Side::Coarse => self.coarse,
        }
    }

    // Non-finite endpoints are left in place; the filter rejects them.
    fn step(&self, side: Side, out: &mut [f64], rng: &mut SmcRng) {
        let _ = euler_unit_step_into(out, self.level(side), &self.spec, rng);
    }

    fn coupled(&self, out_f: &mut [f64], out_c: &mut [f64], rng: &mut SmcRng) {
        if self.fine == self.coarse {
            let mut twin = rng.clone();
            self.step(Side::Fine, out_f, rng);
            self.step(Side::Coarse, out_c, &mut twin);
        } else {
            let _ = euler_coupled_unit_step_into(out_f, out_c, self.fine, &self.spec, rng);
        }
    }
}

impl FeynmanKacModel for EulerDiffusionModel {
    fn state_dim(&self) -> usize {
        self.spec.dim()
    }

    fn potential_bound(&self) -> f64 {
        self.potential.bound
    }

    fn potential(&self, n: usize, x: &[f64]) -> f64 {
        self.potential.eval(n, x)
    }

    fn sample_init(&self, side: Side, rng: &mut SmcRng, out: &mut [f64]) {
        out.copy_from_slice(self.spec.start());
        self.step(side, out, rng);
    }

    fn sample_init_coupled(&self, rng: &mut SmcRng, out_f: &mut [f64], out_c: &mut [f64]) {
        out_f.copy_from_slice(self.spec.start());
        out_c.copy_from_slice(self.spec.start());
        self.coupled(out_f, out_c, rng);
    }

    fn sample_kernel(&self, side: Side, _n: usize, x: &[f64], rng: &mut SmcRng, out: &mut [f64]) {
        out.copy_from_slice(x);
        self.step(side, out, rng);
    }

    fn sample_kernel_coupled(
        &self,
        _n: usize,
        x_f: &[f64],
        x_c: &[f64],
        rng: &mut SmcRng,
        out_f: &mut [f64],
        out_c: &mut [f64],
    ) {
        out_f.copy_from_slice(x_f);
        out_c.copy_from_slice(x_c);
        self.coupled(out_f, out_c, rng);
    }

    fn name(&self) -> &str {
        "diffusion"
    }

    fn horizon_limit(&self) -> Option<usize> {
        self.potential.horizon
    }
}
