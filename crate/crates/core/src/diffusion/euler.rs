//! Euler–Maruyama unit-time transitions and the synchronous level coupling.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SmcError};
use crate::fk::TestFunction;
use crate::rng::SmcRng;

type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// `dZ = a(Z) dt + b(Z) dW` in `R^d`, started at `x*`.
///
/// `drift(z, out)` writes `a(z)` (length `d`); `diffusion(z, out)` writes
/// `b(z)` row-major (length `d²`).
#[derive(Clone)]
pub struct DiffusionSpec {
    dim: usize,
    start: Vec<f64>,
    drift: VectorField,
    diffusion: VectorField,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("dim", &self.dim)
            .field("start", &self.start)
            .finish_non_exhaustive()
    }
}

impl DiffusionSpec {
    pub fn new<A, B>(start: Vec<f64>, drift: A, diffusion: B) -> Result<Self>
    where
        A: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        B: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if start.is_empty() || start.iter().any(|x| !x.is_finite()) {
            return Err(SmcError::InvalidModel(
                "start point must be a finite nonempty vector".into(),
            ));
        }
        Ok(DiffusionSpec {
            dim: start.len(),
            start,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
        })
    }

    /// `dZ = −rate·Z dt + dW` in `R^d`.
    pub fn ornstein_uhlenbeck(rate: f64, start: Vec<f64>) -> Result<Self> {
        let d = start.len();
        Self::new(
            start,
            move |z, out| {
                for (o, x) in out.iter_mut().zip(z) {
                    *o = -rate * x;
                }
            },
            move |_, out| identity_into(d, out),
        )
    }

    /// `dZ = dW`.
    pub fn brownian(start: Vec<f64>) -> Result<Self> {
        let d = start.len();
        Self::new(start, |_, out| out.fill(0.0), move |_, out| identity_into(d, out))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn drift(&self, z: &[f64], out: &mut [f64]) {
        (self.drift)(z, out)
    }

    pub fn diffusion(&self, z: &[f64], out: &mut [f64]) {
        (self.diffusion)(z, out)
    }
}

fn identity_into(d: usize, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..d {
        out[i * d + i] = 1.0;
    }
}

/// Dyadic discretization level: `Δ_l = 2^{-l}`, `2^l` steps per unit time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelParams {
    level: u32,
}

impl LevelParams {
    /// Levels above 30 are rejected (`2^l` steps no longer fit the counters).
    pub fn new(level: u32) -> Result<Self> {
        if level > 30 {
            return Err(SmcError::InvalidModel(format!(
                "level {level} is out of range (0..=30)"
            )));
        }
        Ok(LevelParams { level })
    }

    pub fn level(self) -> u32 {
        self.level
    }

    pub fn step(self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn steps_per_unit(self) -> u64 {
        1u64 << self.level
    }
}

/// Reusable buffers for Euler stepping.
struct Scratch {
    drift: Vec<f64>,
    diff: Vec<f64>,
    noise: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Scratch {
            drift: vec![0.0; d],
            diff: vec![0.0; d * d],
            noise: vec![0.0; d],
        }
    }
}

/// `x ← x + a(x)·dt + b(x)·dw`.
fn euler_increment(spec: &DiffusionSpec, x: &mut [f64], dt: f64, dw: &[f64], scratch: &mut Scratch) {
    let d = spec.dim;
    spec.drift(x, &mut scratch.drift);
    spec.diffusion(x, &mut scratch.diff);
    for (i, (xi, a)) in x.iter_mut().zip(&scratch.drift).enumerate() {
        let noise: f64 = scratch.diff[i * d..(i + 1) * d]
            .iter()
            .zip(dw)
            .map(|(b, w)| b * w)
            .sum();
        *xi += a * dt + noise;
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SmcError::NonFiniteState)
    }
}

/// One draw from `M^l(x, ·)`: `2^l` Euler steps of size `Δ_l`, consuming
/// `2^l·d` standard normal variates.
pub fn euler_unit_step(x: &[f64], level: LevelParams, spec: &DiffusionSpec, rng: &mut SmcRng) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    euler_unit_step_into(&mut out, level, spec, rng)?;
    Ok(out)
}

/// In-place form of [`euler_unit_step`].
pub fn euler_unit_step_into(x: &mut [f64], level: LevelParams, spec: &DiffusionSpec, rng: &mut SmcRng) -> Result<()> {
    let d = spec.dim;
    let dt = level.step();
    let sqrt_dt = dt.sqrt();
    let mut scratch = Scratch::new(d);
    let mut dw = vec![0.0; d];
    for _ in 0..level.steps_per_unit() {
        for w in dw.iter_mut() {
            *w = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        }
        euler_increment(spec, x, dt, &dw, &mut scratch);
    }
    check_finite(x)
}

/// Synchronously coupled draw from `M^l(x_f, ·) ⊗ M^{l-1}(x_c, ·)`.
///
/// The fine path takes `2^l` steps; each coarse step uses the sum of the two
/// fine Brownian increments it spans. Exactly `2^l·d` variates are consumed.
pub fn euler_coupled_unit_step(
    x_f: &[f64],
    x_c: &[f64],
    level: LevelParams,
    spec: &DiffusionSpec,
    rng: &mut SmcRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut f, mut c) = (x_f.to_vec(), x_c.to_vec());
    euler_coupled_unit_step_into(&mut f, &mut c, level, spec, rng)?;
    Ok((f, c))
}

/// In-place form of [`euler_coupled_unit_step`].
pub fn euler_coupled_unit_step_into(
    x_f: &mut [f64],
    x_c: &mut [f64],
    level: LevelParams,
    spec: &DiffusionSpec,
    rng: &mut SmcRng,
) -> Result<()> {
    if level.level == 0 {
        return Err(SmcError::InvalidModel("the coupled Euler step needs l ≥ 1".into()));
    }
    let d = spec.dim;
    let dt = level.step();
    let sqrt_dt = dt.sqrt();
    let mut scratch = Scratch::new(d);
    let mut coarse_dw = vec![0.0; d];
    for k in 0..level.steps_per_unit() {
        for i in 0..d {
            scratch.noise[i] = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        }
        let dw = std::mem::take(&mut scratch.noise);
        euler_increment(spec, x_f, dt, &dw, &mut scratch);
        for (acc, w) in coarse_dw.iter_mut().zip(&dw) {
            *acc += w;
        }
        scratch.noise = dw;
        if k % 2 == 1 {
            euler_increment(spec, x_c, 2.0 * dt, &coarse_dw, &mut scratch);
            coarse_dw.fill(0.0);
        }
    }
    check_finite(x_f)?;
    check_finite(x_c)
}

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl ProbeEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        ProbeEstimate {
            mean,
            std_error: (var / n).sqrt(),
            samples: values.len(),
        }
    }
}

/// `E[φ(X^l) − φ(X^{l−1})]` for one coupled unit step from the start point.
pub fn weak_error_probe(
    spec: &DiffusionSpec,
    level: LevelParams,
    phi: &TestFunction,
    samples: usize,
    rng: &mut SmcRng,
) -> Result<ProbeEstimate> {
    let values = coupled_samples(spec, level, samples, rng, |f, c| phi.eval(f) - phi.eval(c))?;
    Ok(ProbeEstimate::from_samples(&values))
}

/// `E‖X^l − X^{l−1}‖²` for one coupled unit step from the start point.
pub fn strong_error_probe(
    spec: &DiffusionSpec,
    level: LevelParams,
    samples: usize,
    rng: &mut SmcRng,
) -> Result<ProbeEstimate> {
    let values = coupled_samples(spec, level, samples, rng, |f, c| {
        f.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
    })?;
    Ok(ProbeEstimate::from_samples(&values))
}

fn coupled_samples(
    spec: &DiffusionSpec,
    level: LevelParams,
    samples: usize,
    rng: &mut SmcRng,
    stat: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<Vec<f64>> {
    let mut f = vec![0.0; spec.dim];
    let mut c = vec![0.0; spec.dim];
    (0..samples)
        .map(|_| {
            f.copy_from_slice(&spec.start);
            c.copy_from_slice(&spec.start);
            euler_coupled_unit_step_into(&mut f, &mut c, level, spec, rng)?;
            Ok(stat(&f, &c))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn level(l: u32) -> LevelParams {
        LevelParams::new(l).unwrap()
    }

    #[test]
    fn dyadic_step_times_count_is_one() {
        for l in 0..=30 {
            let p = level(l);
            assert_eq!(p.step() * p.steps_per_unit() as f64, 1.0);
        }
        assert!(LevelParams::new(31).is_err());
    }

    #[test]
    fn identity_dynamics() {
        let spec = DiffusionSpec::new(vec![0.3, -1.0], |_, o| o.fill(0.0), |_, o| o.fill(0.0)).unwrap();
        let mut rng = rng_from_seed(1);
        assert_eq!(
            euler_unit_step(&[0.3, -1.0], level(4), &spec, &mut rng).unwrap(),
            vec![0.3, -1.0]
        );
    }

    #[test]
    fn one_deterministic_step() {
        let spec = DiffusionSpec::new(vec![0.0], |z, o| o[0] = -1.5 * z[0], |_, o| o.fill(0.0)).unwrap();
        let mut rng = rng_from_seed(2);
        assert_eq!(euler_unit_step(&[2.0], level(0), &spec, &mut rng).unwrap(), vec![-1.0]);
    }

    #[test]
    fn brownian_paths_share_increments() {
        let spec = DiffusionSpec::brownian(vec![0.0, 0.0]).unwrap();
        let mut rng = rng_from_seed(3);
        let (f, c) = euler_coupled_unit_step(&[1.0, 2.0], &[1.0, 2.0], level(5), &spec, &mut rng).unwrap();
        for (a, b) in f.iter().zip(&c) {
            assert!((a - b).abs() < 1e-12);
        }
        let (f, c) = euler_coupled_unit_step(&[1.0, 2.0], &[0.5, -1.0], level(5), &spec, &mut rng).unwrap();
        assert!((f[0] - c[0] - 0.5).abs() < 1e-12);
        assert!((f[1] - c[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn coupled_step_consumes_fine_variates_only() {
        let spec = DiffusionSpec::ornstein_uhlenbeck(1.5, vec![0.0, 0.0, 0.0]).unwrap();
        for l in 1..6 {
            let mut a = rng_from_seed(4);
            let mut b = rng_from_seed(4);
            euler_coupled_unit_step(&[0.1; 3], &[0.2; 3], level(l), &spec, &mut a).unwrap();
            for _ in 0..(1u64 << l) * 3 {
                let _: f64 = b.sample(StandardNormal);
            }
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn fine_path_matches_single_level_path() {
        let spec = DiffusionSpec::ornstein_uhlenbeck(1.5, vec![0.0]).unwrap();
        let mut a = rng_from_seed(5);
        let mut b = rng_from_seed(5);
        let (f, _) = euler_coupled_unit_step(&[0.7], &[0.7], level(4), &spec, &mut a).unwrap();
        assert_eq!(f, euler_unit_step(&[0.7], level(4), &spec, &mut b).unwrap());
    }

    #[test]
    fn blow_up_is_reported() {
        let spec = DiffusionSpec::new(vec![1.0], |z, o| o[0] = z[0] * z[0] * 1e200, |_, o| o.fill(0.0)).unwrap();
        let mut rng = rng_from_seed(6);
        assert_eq!(
            euler_unit_step(&[1.0], level(3), &spec, &mut rng),
            Err(SmcError::NonFiniteState)
        );
    }

    #[test]
    fn constant_test_function_has_zero_weak_error() {
        let spec = DiffusionSpec::ornstein_uhlenbeck(1.5, vec![0.0]).unwrap();
        let mut rng = rng_from_seed(7);
        let est = weak_error_probe(&spec, level(3), &TestFunction::constant(2.0), 1000, &mut rng).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn zero_drift_levels_agree_in_mean() {
        let spec = DiffusionSpec::brownian(vec![0.4]).unwrap();
        let mut rng = rng_from_seed(8);
        let est = weak_error_probe(&spec, level(3), &TestFunction::identity(), 2000, &mut rng).unwrap();
        assert!(est.mean.abs() <= 3.0 * est.std_error + 1e-12);
    }
}
