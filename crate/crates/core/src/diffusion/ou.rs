//! Ornstein–Uhlenbeck example: `dZ = −θ Z dt + dW` observed through a
//! Bernoulli-logistic potential at unit times.
//!
//! The Euler transition at level `l` is exactly `N(α_l x, β_l)` with
//! `α_l = (1 − θΔ_l)^{1/Δ_l}` and `β_l = Δ_l Σ_{k<2^l} (1 − θΔ_l)^{2k}`. The
//! synchronously coupled pair of levels `(l, l−1)` is jointly Gaussian, so
//! both kernels can be sampled in closed form with two variates per pair
//! instead of `2^l`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffusion::euler::{euler_coupled_unit_step_into, euler_unit_step_into, DiffusionSpec, LevelParams};
use crate::diffusion::gauss_transform::GaussMixture;
use crate::error::{Result, SmcError};
use crate::fk::{DensityView, FeynmanKacModel, MixtureDensity, Side};
use crate::rng::SmcRng;

/// Drift rate of the reference example.
pub const OU_RATE: f64 = 1.5;

/// Mean factor and variance of a Gaussian unit-time transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuParams {
    pub alpha: f64,
    pub beta: f64,
}

/// Euler transition of `dZ = −rate·Z dt + dW` at `level`.
pub fn ou_params(rate: f64, level: LevelParams) -> OuParams {
    let dt = level.step();
    let a = 1.0 - rate * dt;
    let steps = level.steps_per_unit() as i32;
    let alpha = a.powi(steps);
    let beta = if (1.0 - a * a).abs() < 1e-300 {
        dt * steps as f64
    } else {
        dt * (1.0 - a.powi(2 * steps)) / (1.0 - a * a)
    };
    OuParams { alpha, beta }
}

/// `(α_l, β_l)` of the reference example (`θ = 3/2`).
pub fn ou_transition_params(level: u32) -> OuParams {
    ou_params(OU_RATE, LevelParams::new(level).expect("level in range"))
}

pub fn gaussian_density(mean: f64, variance: f64, y: f64) -> f64 {
    (-(y - mean) * (y - mean) / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt()
}

/// Density of `N(α_l x, β_l)` at `y`.
pub fn ou_transition_density(x: f64, y: f64, level: u32) -> f64 {
    let p = ou_transition_params(level);
    gaussian_density(p.alpha * x, p.beta, y)
}

/// The continuous-time transition over one unit of time.
pub fn ou_exact_unit(rate: f64) -> OuParams {
    OuParams {
        alpha: (-rate).exp(),
        beta: (1.0 - (-2.0 * rate).exp()) / (2.0 * rate),
    }
}

/// Covariance of the noise parts of the synchronously coupled endpoints
/// at levels `l` and `l − 1` (`l ≥ 1`).
pub fn ou_coupled_covariance(rate: f64, fine: LevelParams) -> f64 {
    let dt = fine.step();
    let steps = fine.steps_per_unit() as i64;
    let a_f = 1.0 - rate * dt;
    let a_c = 1.0 - rate * 2.0 * dt;
    let half = steps / 2;
    // fine coefficient of increment k (1-based): a_f^{steps−k}·√dt
    // coarse coefficient:                          a_c^{half−⌈k/2⌉}·√dt
    (1..=steps)
        .map(|k| a_f.powi((steps - k) as i32) * a_c.powi((half - (k + 1) / 2) as i32) * dt)
        .sum()
}

/// Observation model for the unit-time potentials.
#[derive(Clone, Debug, PartialEq)]
pub enum OuPotential {
    /// `G ≡ 1`.
    Constant,
    /// `G_n(x) = p(x)^{y_n} (1 − p(x))^{1−y_n}` with
    /// `p(x) = (b eˣ + a)/(1 + eˣ)`, `0 < a < b < 1`.
    Logistic { a: f64, b: f64, ys: Arc<[u8]> },
}

impl OuPotential {
    pub fn logistic(a: f64, b: f64, ys: Vec<u8>) -> Result<Self> {
        if !(0.0 < a && a < b && b < 1.0) {
            return Err(SmcError::InvalidModel(format!(
                "need 0 < a < b < 1, got a = {a}, b = {b}"
            )));
        }
        if ys.iter().any(|&y| y > 1) {
            return Err(SmcError::InvalidModel("observations must be 0 or 1".into()));
        }
        Ok(OuPotential::Logistic { a, b, ys: ys.into() })
    }

    /// Number of potentials available (`None` when unlimited).
    pub fn horizon_limit(&self) -> Option<usize> {
        match self {
            OuPotential::Constant => None,
            OuPotential::Logistic { ys, .. } => Some(ys.len()),
        }
    }

    #[inline]
    pub fn eval(&self, n: usize, x: f64) -> f64 {
        match self {
            OuPotential::Constant => 1.0,
            OuPotential::Logistic { a, b, ys } => {
                let y = *ys
                    .get(n)
                    .unwrap_or_else(|| panic!("no observation at time {n} ({} available)", ys.len()));
                let p = logistic_probability(*a, *b, x);
                if y == 1 {
                    p
                } else {
                    1.0 - p
                }
            }
        }
    }
}

/// `(b eˣ + a)/(1 + eˣ)`, evaluated without overflow.
pub fn logistic_probability(a: f64, b: f64, x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    a + (b - a) * s
}

/// Binary observations `y_0, …, y_{count−1}` of a hidden path simulated with
/// the exact transition (`Z_0` drawn from the exact unit transition out of
/// `start`).
pub fn synthesize_observations(rate: f64, start: f64, count: usize, a: f64, b: f64, rng: &mut SmcRng) -> Vec<u8> {
    let exact = ou_exact_unit(rate);
    let sd = exact.beta.sqrt();
    let mut z = start;
    (0..count)
        .map(|_| {
            z = exact.alpha * z + sd * rng.sample::<f64, _>(StandardNormal);
            u8::from(rng.random::<f64>() < logistic_probability(a, b, z))
        })
        .collect()
}

/// How kernels are sampled. Both give the same laws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelMode {
    /// Gaussian draws with the closed-form (joint) moments.
    ClosedForm,
    /// Explicit Euler paths with `2^l` steps.
    Euler,
}

/// Shared description of the OU level family.
#[derive(Clone, Debug, PartialEq)]
pub struct OuSetup {
    pub rate: f64,
    pub start: f64,
    pub potential: OuPotential,
    pub mode: KernelMode,
}

impl OuSetup {
    pub fn new(potential: OuPotential) -> Self {
        OuSetup {
            rate: OU_RATE,
            start: 0.0,
            potential,
            mode: KernelMode::ClosedForm,
        }
    }
}

/// Feynman–Kac pair with the level-`l` model as fine side and level `l − 1`
/// as coarse side (both level 0 when `l = 0`).
#[derive(Clone, Debug)]
pub struct OuModel {
    setup: OuSetup,
    levels: [LevelParams; 2],
    params: [OuParams; 2],
    /// Noise loading of the coarse endpoint on the fine variate, and its
    /// independent remainder.
    load: f64,
    rest: f64,
    spec: DiffusionSpec,
}

impl OuModel {
    /// Coupled pair `(l, l − 1)`; the diagonal pair `(0, 0)` at `l = 0`.
    pub fn level_pair(setup: OuSetup, l: u32) -> Result<Self> {
        let fine = LevelParams::new(l)?;
        let coarse = LevelParams::new(l.saturating_sub(1))?;
        Self::build(setup, fine, coarse)
    }

    /// Both sides at level `l`, driven by common noise.
    pub fn single_level(setup: OuSetup, l: u32) -> Result<Self> {
        let level = LevelParams::new(l)?;
        Self::build(setup, level, level)
    }

    fn build(setup: OuSetup, fine: LevelParams, coarse: LevelParams) -> Result<Self> {
        if !(setup.rate.is_finite() && setup.start.is_finite()) {
            return Err(SmcError::InvalidModel("rate and start must be finite".into()));
        }
        let params = [ou_params(setup.rate, fine), ou_params(setup.rate, coarse)];
        let (load, rest) = if fine == coarse {
            (params[1].beta.sqrt(), 0.0)
        } else {
            let cov = ou_coupled_covariance(setup.rate, fine);
            let load = cov / params[0].beta.sqrt();
            (load, (params[1].beta - load * load).max(0.0).sqrt())
        };
        let spec = DiffusionSpec::ornstein_uhlenbeck(setup.rate, vec![setup.start])?;
        Ok(OuModel {
            setup,
            levels: [fine, coarse],
            params,
            load,
            rest,
            spec,
        })
    }

    pub fn params(&self, side: Side) -> OuParams {
        self.params[side as usize]
    }

    pub fn level(&self, side: Side) -> LevelParams {
        self.levels[side as usize]
    }

    pub fn setup(&self) -> &OuSetup {
        &self.setup
    }

    /// Correlation of the two coupled endpoints given common start points.
    pub fn endpoint_correlation(&self) -> f64 {
        self.load / self.params[1].beta.sqrt()
    }

    fn coupled_from(&self, x_f: f64, x_c: f64, rng: &mut SmcRng) -> (f64, f64) {
        match self.setup.mode {
            KernelMode::ClosedForm => {
                let z1: f64 = rng.sample(StandardNormal);
                let [pf, pc] = self.params;
                let fine = pf.alpha * x_f + pf.beta.sqrt() * z1;
                let coarse = if self.rest > 0.0 {
                    let z2: f64 = rng.sample(StandardNormal);
                    pc.alpha * x_c + self.load * z1 + self.rest * z2
                } else {
                    pc.alpha * x_c + self.load * z1
                };
                (fine, coarse)
            }
            KernelMode::Euler => {
                let (mut f, mut c) = ([x_f], [x_c]);
                if self.levels[0] == self.levels[1] {
                    let mut twin = rng.clone();
                    self.euler(Side::Fine, &mut f, rng);
                    self.euler(Side::Coarse, &mut c, &mut twin);
                } else {
                    // Non-finite states are caught by the filter's state check.
                    let _ = euler_coupled_unit_step_into(&mut f, &mut c, self.levels[0], &self.spec, rng);
                }
                (f[0], c[0])
            }
        }
    }

    fn euler(&self, side: Side, x: &mut [f64; 1], rng: &mut SmcRng) {
        let _ = euler_unit_step_into(x, self.levels[side as usize], &self.spec, rng);
    }

    fn single(&self, side: Side, x: f64, rng: &mut SmcRng) -> f64 {
        match self.setup.mode {
            KernelMode::ClosedForm => {
                let p = self.params[side as usize];
                p.alpha * x + p.beta.sqrt() * rng.sample::<f64, _>(StandardNormal)
            }
            KernelMode::Euler => {
                let mut s = [x];
                self.euler(side, &mut s, rng);
                s[0]
            }
        }
    }
}

impl FeynmanKacModel for OuModel {
    fn state_dim(&self) -> usize {
        1
    }

    fn potential_bound(&self) -> f64 {
        1.0
    }

    fn potential(&self, n: usize, x: &[f64]) -> f64 {
        self.setup.potential.eval(n, x[0])
    }

    fn sample_init(&self, side: Side, rng: &mut SmcRng, out: &mut [f64]) {
        out[0] = self.single(side, self.setup.start, rng);
    }

    fn sample_init_coupled(&self, rng: &mut SmcRng, out_f: &mut [f64], out_c: &mut [f64]) {
        let (f, c) = self.coupled_from(self.setup.start, self.setup.start, rng);
        out_f[0] = f;
        out_c[0] = c;
    }

    fn sample_kernel(&self, side: Side, _n: usize, x: &[f64], rng: &mut SmcRng, out: &mut [f64]) {
        out[0] = self.single(side, x[0], rng);
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
        let (f, c) = self.coupled_from(x_f[0], x_c[0], rng);
        out_f[0] = f;
        out_c[0] = c;
    }

    fn densities(&self) -> Option<&dyn DensityView> {
        Some(self)
    }

    fn name(&self) -> &str {
        "ou"
    }

    fn horizon_limit(&self) -> Option<usize> {
        self.setup.potential.horizon_limit()
    }
}

struct FastMixture(GaussMixture);

impl MixtureDensity for FastMixture {
    fn eval(&self, y: &[f64]) -> f64 {
        self.0.eval(y[0])
    }
}

impl DensityView for OuModel {
    fn init_density(&self, side: Side, y: &[f64]) -> f64 {
        let p = self.params[side as usize];
        gaussian_density(p.alpha * self.setup.start, p.beta, y[0])
    }

    fn kernel_density(&self, side: Side, _n: usize, x: &[f64], y: &[f64]) -> f64 {
        let p = self.params[side as usize];
        gaussian_density(p.alpha * x[0], p.beta, y[0])
    }

    fn mixture<'a>(
        &'a self,
        side: Side,
        _n: usize,
        _dim: usize,
        points: &[f64],
        weights: &[f64],
    ) -> Box<dyn MixtureDensity + 'a> {
        let p = self.params[side as usize];
        let means: Vec<f64> = points.iter().map(|x| p.alpha * x).collect();
        Box::new(FastMixture(GaussMixture::new(&means, weights, p.beta)))
    }
}
