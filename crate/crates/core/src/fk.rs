//! Feynman–Kac model abstraction and the particle-population primitives
//! shared by every coupled scheme.

use std::fmt;
use std::sync::Arc;

use crate::couplings::mc::DirectMixture;
use crate::error::{Result, SmcError};
use crate::rng::SmcRng;

/// Which of the two models a quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Fine,
    Coarse,
}

/// A pair of Feynman–Kac models sharing the potentials `G_n`, with a coupled
/// transition and a coupled initial law.
///
/// States are `state_dim()`-long slices of `f64`. Kernels are indexed by the
/// time `n ≥ 1` of the state they produce; potentials by the time of the
/// state they weight.
///
/// Implementations are immutable and shared across threads.
pub trait FeynmanKacModel: Send + Sync {
    fn state_dim(&self) -> usize;

    /// Declared bound on `sup_n ‖G_n‖`.
    fn potential_bound(&self) -> f64;

    fn potential(&self, n: usize, x: &[f64]) -> f64;

    fn sample_init(&self, side: Side, rng: &mut SmcRng, out: &mut [f64]);

    /// Draw from the coupling of the two initial laws.
    fn sample_init_coupled(&self, rng: &mut SmcRng, out_f: &mut [f64], out_c: &mut [f64]);

    fn sample_kernel(&self, side: Side, n: usize, x: &[f64], rng: &mut SmcRng, out: &mut [f64]);

    /// Draw from the coupled kernel at `(x_f, x_c)`. Its first coordinate
    /// must follow the fine kernel at `x_f`, the second the coarse kernel at
    /// `x_c`.
    fn sample_kernel_coupled(
        &self,
        n: usize,
        x_f: &[f64],
        x_c: &[f64],
        rng: &mut SmcRng,
        out_f: &mut [f64],
        out_c: &mut [f64],
    );

    /// Pointwise densities, when the model has them.
    fn densities(&self) -> Option<&dyn DensityView> {
        None
    }

    /// Short model name used in reports.
    fn name(&self) -> &str {
        "model"
    }

    /// Number of time indices with a defined potential, when finite.
    fn horizon_limit(&self) -> Option<usize> {
        None
    }
}

/// Pointwise density capability (required by the maximal-coupling scheme).
pub trait DensityView: Sync {
    fn init_density(&self, side: Side, y: &[f64]) -> f64;

    fn kernel_density(&self, side: Side, n: usize, x: &[f64], y: &[f64]) -> f64;

    /// Evaluator for `y ↦ Σ_i w_i M_n^s(x_i, y)`.
    ///
    /// The default sums the kernel density over the (deduplicated) points.
    /// Models with structure may return something faster, provided it agrees
    /// with the direct sum to floating-point accuracy.
    fn mixture<'a>(
        &'a self,
        side: Side,
        n: usize,
        dim: usize,
        points: &[f64],
        weights: &[f64],
    ) -> Box<dyn MixtureDensity + 'a> {
        Box::new(DirectMixture::new(self, side, n, dim, points, weights))
    }
}

pub trait MixtureDensity {
    fn eval(&self, y: &[f64]) -> f64;
}

/// `N` particle pairs at a common time index, stored as two flat
/// `N × dim` buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledCloud {
    dim: usize,
    time: usize,
    fine: Vec<f64>,
    coarse: Vec<f64>,
}

impl CoupledCloud {
    pub fn new(dim: usize, time: usize, fine: Vec<f64>, coarse: Vec<f64>) -> Result<Self> {
        if dim == 0 || fine.is_empty() || fine.len() != coarse.len() || !fine.len().is_multiple_of(dim) {
            return Err(SmcError::InvalidModel(format!(
                "cloud buffers of length {} / {} do not hold whole {dim}-dimensional pairs",
                fine.len(),
                coarse.len()
            )));
        }
        Ok(CoupledCloud {
            dim,
            time,
            fine,
            coarse,
        })
    }

    /// One-dimensional cloud from paired values.
    pub fn from_pairs(time: usize, pairs: &[(f64, f64)]) -> Result<Self> {
        let (fine, coarse) = pairs.iter().copied().unzip();
        Self::new(1, time, fine, coarse)
    }

    pub(crate) fn zeroed(dim: usize, time: usize, size: usize) -> Self {
        CoupledCloud {
            dim,
            time,
            fine: vec![0.0; dim * size],
            coarse: vec![0.0; dim * size],
        }
    }

    pub fn len(&self) -> usize {
        self.fine.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.fine.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn fine_states(&self) -> &[f64] {
        &self.fine
    }

    pub fn coarse_states(&self) -> &[f64] {
        &self.coarse
    }

    pub fn states(&self, side: Side) -> &[f64] {
        match side {
            Side::Fine => &self.fine,
            Side::Coarse => &self.coarse,
        }
    }

    pub fn fine(&self, i: usize) -> &[f64] {
        &self.fine[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coarse(&self, i: usize) -> &[f64] {
        &self.coarse[i * self.dim..(i + 1) * self.dim]
    }

    pub fn pair(&self, i: usize) -> (&[f64], &[f64]) {
        (self.fine(i), self.coarse(i))
    }

    pub(crate) fn pair_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let d = self.dim;
        (&mut self.fine[i * d..(i + 1) * d], &mut self.coarse[i * d..(i + 1) * d])
    }

    /// The same pairs with the roles of the two coordinates exchanged.
    pub fn swapped(&self) -> Self {
        CoupledCloud {
            dim: self.dim,
            time: self.time,
            fine: self.coarse.clone(),
            coarse: self.fine.clone(),
        }
    }

    /// `(1/N) Σ ‖x^f_i − x^c_i‖²`.
    pub fn mean_sq_dist(&self) -> f64 {
        let total: f64 = self.fine.iter().zip(&self.coarse).map(|(a, b)| (a - b) * (a - b)).sum();
        total / self.len() as f64
    }

    /// Fraction of pairs whose coordinates differ (exact comparison).
    pub fn decouple_frac(&self) -> f64 {
        let differing = (0..self.len()).filter(|&i| self.fine(i) != self.coarse(i)).count();
        differing as f64 / self.len() as f64
    }
}

/// Potential values of a cloud and their normalized forms.
#[derive(Clone, Debug)]
pub struct WeightView {
    pub raw_f: Vec<f64>,
    pub raw_c: Vec<f64>,
    pub norm_f: Vec<f64>,
    pub norm_c: Vec<f64>,
}

impl WeightView {
    /// Evaluates `G_n` at every particle, `n` being the cloud's time.
    pub fn compute<M: FeynmanKacModel + ?Sized>(model: &M, cloud: &CoupledCloud) -> Result<Self> {
        let n = cloud.time();
        let raw_f: Vec<f64> = (0..cloud.len()).map(|i| model.potential(n, cloud.fine(i))).collect();
        let raw_c: Vec<f64> = (0..cloud.len()).map(|i| model.potential(n, cloud.coarse(i))).collect();
        let norm_f = normalize_weights(&raw_f).map_err(|e| at_time(e, n))?;
        let norm_c = normalize_weights(&raw_c).map_err(|e| at_time(e, n))?;
        Ok(WeightView {
            raw_f,
            raw_c,
            norm_f,
            norm_c,
        })
    }

    pub fn normalized(&self, side: Side) -> &[f64] {
        match side {
            Side::Fine => &self.norm_f,
            Side::Coarse => &self.norm_c,
        }
    }
}

fn at_time(err: SmcError, time: usize) -> SmcError {
    match err {
        SmcError::AllZeroWeights { .. } => SmcError::AllZeroWeights { time },
        other => other,
    }
}

/// Below this the raw weights are rescaled by their maximum before summing.
const UNDERFLOW_GUARD: f64 = 1e-300;

/// Normalizes nonnegative weights to a probability vector.
///
/// Fails with [`SmcError::AllZeroWeights`] when every entry is zero and with
/// [`SmcError::InvalidDistribution`] on negative or non-finite input.
pub fn normalize_weights(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(SmcError::InvalidDistribution("empty weight vector".into()));
    }
    let mut max = 0.0f64;
    for &w in raw {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(SmcError::InvalidDistribution(format!(
                "weight {w} is not a finite nonnegative number"
            )));
        }
        max = max.max(w);
    }
    if max == 0.0 {
        return Err(SmcError::AllZeroWeights { time: 0 });
    }
    // Rescaling by the maximum is the linear-space form of subtracting the
    // largest log-weight before exponentiating.
    let scaled: Vec<f64> = if max < UNDERFLOW_GUARD {
        raw.iter().map(|w| w / max).collect()
    } else {
        raw.to_vec()
    };
    let total: f64 = scaled.iter().sum();
    Ok(scaled.into_iter().map(|w| w / total).collect())
}

/// Effective sample size `1 / Σ w_i²` of a normalized weight vector.
pub fn ess(normalized: &[f64]) -> f64 {
    1.0 / normalized.iter().map(|w| w * w).sum::<f64>()
}

type TestFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A test function `φ` tagged with its sup-norm bound and, when known, its
/// Lipschitz constant.
#[derive(Clone)]
pub struct TestFunction {
    tag: String,
    bound: f64,
    lipschitz: Option<f64>,
    f: Arc<TestFn>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("tag", &self.tag)
            .field("bound", &self.bound)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl TestFunction {
    pub fn new<F>(tag: impl Into<String>, bound: f64, lipschitz: Option<f64>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        TestFunction {
            tag: tag.into(),
            bound,
            lipschitz,
            f: Arc::new(f),
        }
    }

    /// First coordinate. Unbounded on the real line.
    pub fn identity() -> Self {
        Self::new("identity", f64::INFINITY, Some(1.0), |x| x[0])
    }

    /// `min(|x_0|, cap)`.
    pub fn clipped_abs(cap: f64) -> Self {
        Self::new(format!("clipped-abs({cap})"), cap, Some(1.0), move |x| {
            x[0].abs().min(cap)
        })
    }

    /// `1[x_0 > threshold]`.
    pub fn indicator_above(threshold: f64) -> Self {
        Self::new(format!("indicator({threshold})"), 1.0, None, move |x| {
            if x[0] > threshold {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn constant(value: f64) -> Self {
        Self::new(format!("constant({value})"), value.abs(), Some(0.0), move |_| value)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }
}

/// `(1/N) Σ_i [φ(x^f_i) − φ(x^c_i)]`, the particle estimate of
/// `η̌_n(φ⊗1 − 1⊗φ)`.
pub fn estimate_pred_difference(cloud: &CoupledCloud, phi: &TestFunction) -> f64 {
    let total: f64 = (0..cloud.len())
        .map(|i| {
            let (xf, xc) = cloud.pair(i);
            phi.eval(xf) - phi.eval(xc)
        })
        .sum();
    total / cloud.len() as f64
}

/// Difference of the two self-normalized filter estimates
/// `Σ G_n φ / Σ G_n`, with `n` the cloud's time.
pub fn estimate_filt_difference<M: FeynmanKacModel + ?Sized>(
    cloud: &CoupledCloud,
    phi: &TestFunction,
    model: &M,
) -> Result<f64> {
    let weights = WeightView::compute(model, cloud)?;
    let dim = cloud.dim();
    let side_mean =
        |states: &[f64], w: &[f64]| -> f64 { states.chunks_exact(dim).zip(w).map(|(x, wi)| wi * phi.eval(x)).sum() };
    let f = side_mean(cloud.fine_states(), &weights.norm_f);
    let c = side_mean(cloud.coarse_states(), &weights.norm_c);
    Ok(f - c)
}

/// Fails unless the model state dimension is `required`.
pub(crate) fn require_dim<M: FeynmanKacModel + ?Sized>(model: &M, required: usize) -> Result<()> {
    let dim = model.state_dim();
    if dim != required {
        return Err(SmcError::DimensionUnsupported { dim, required });
    }
    Ok(())
}
