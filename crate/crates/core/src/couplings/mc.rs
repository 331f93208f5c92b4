//! Maximal coupling of the two predictive laws.
//!
//! Given the weighted clouds at time `n-1`, the fine and coarse predictive
//! laws are the mixtures
//!
//! ```text
//! F_f(y) = Σ_i w^f_i M_n^f(x^f_i, y),   F_c(y) = Σ_i w^c_i M_n^c(x^c_i, y).
//! ```
//!
//! Every output pair is an exact draw from their maximal coupling, obtained
//! by the two-stage rejection sampler: propose `X ~ F_f` and keep `(X, X)` if
//! `U·F_f(X) < F_c(X)`; otherwise propose `Y ~ F_c` until `U·F_c(Y) > F_f(Y)`
//! and output `(X, Y)`.

use rand::Rng;

use crate::couplings::categorical::Categorical;
use crate::couplings::check_step_time;
use crate::error::{Result, SmcError};
use crate::fk::{CoupledCloud, DensityView, FeynmanKacModel, MixtureDensity, Side, WeightView};
use crate::rng::{SmcRng, StreamKey};

/// Default per-pair cap on second-stage proposals.
pub const DEFAULT_MAX_ITERATIONS: u64 = 1_000_000;

/// Bookkeeping of the rejection sampler over a batch of pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RejectionStats {
    pub pairs: u64,
    /// Pairs accepted as a common value by the first stage.
    pub accept_at_step1: u64,
    /// Second-stage proposals, summed over pairs.
    pub loop_iterations: u64,
    /// Largest per-pair second-stage count (never above the cap).
    pub max_loop_observed: u64,
    pub max_iterations_cap: u64,
}

impl RejectionStats {
    pub fn new(cap: u64) -> Self {
        RejectionStats {
            max_iterations_cap: cap,
            ..Default::default()
        }
    }

    fn record(&mut self, loops: u64) {
        self.pairs += 1;
        if loops == 0 {
            self.accept_at_step1 += 1;
        }
        self.loop_iterations += loops;
        self.max_loop_observed = self.max_loop_observed.max(loops);
    }

    /// Mean number of proposals per pair (first stage included). Its
    /// expectation at the limit is `1 + R_n`.
    pub fn mean_steps(&self) -> f64 {
        1.0 + self.loop_iterations as f64 / self.pairs as f64
    }

    /// Fraction of pairs that left the first stage.
    pub fn decoupled_fraction(&self) -> f64 {
        (self.pairs - self.accept_at_step1) as f64 / self.pairs as f64
    }

    pub fn merge(&mut self, other: &RejectionStats) {
        self.pairs += other.pairs;
        self.accept_at_step1 += other.accept_at_step1;
        self.loop_iterations += other.loop_iterations;
        self.max_loop_observed = self.max_loop_observed.max(other.max_loop_observed);
        self.max_iterations_cap = self.max_iterations_cap.max(other.max_iterations_cap);
    }
}

/// `Σ_i w_i M_n^s(x_i, y)` by direct summation, `O(N)` per call.
pub fn predictive_mixture_density<M: FeynmanKacModel + ?Sized>(
    model: &M,
    side: Side,
    n: usize,
    points: &[f64],
    norm_weights: &[f64],
    y: &[f64],
) -> Result<f64> {
    let view = model
        .densities()
        .ok_or(SmcError::MissingDensity("predictive mixture"))?;
    let dim = model.state_dim();
    Ok(points
        .chunks_exact(dim)
        .zip(norm_weights)
        .map(|(x, w)| w * view.kernel_density(side, n, x, y))
        .sum())
}

/// Direct-sum mixture over deduplicated support points.
///
/// On finite state spaces the number of distinct points is at most the
/// number of atoms, which makes evaluation `O(K)` instead of `O(N)`.
pub struct DirectMixture<'a, D: DensityView + ?Sized> {
    view: &'a D,
    side: Side,
    n: usize,
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a, D: DensityView + ?Sized> DirectMixture<'a, D> {
    pub fn new(view: &'a D, side: Side, n: usize, dim: usize, points: &[f64], weights: &[f64]) -> Self {
        let (points, weights) = merge_atoms(dim, points, weights);
        DirectMixture {
            view,
            side,
            n,
            dim,
            points,
            weights,
        }
    }

    pub fn support_size(&self) -> usize {
        self.weights.len()
    }
}

impl<D: DensityView + ?Sized> MixtureDensity for DirectMixture<'_, D> {
    fn eval(&self, y: &[f64]) -> f64 {
        self.points
            .chunks_exact(self.dim)
            .zip(&self.weights)
            .map(|(x, w)| w * self.view.kernel_density(self.side, self.n, x, y))
            .sum()
    }
}

/// Sorts points lexicographically and sums the weights of exact duplicates.
/// Zero-weight points are dropped.
pub(crate) fn merge_atoms(dim: usize, points: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    order.sort_by(|&a, &b| {
        point(a)
            .iter()
            .zip(point(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut merged_points: Vec<f64> = Vec::with_capacity(order.len() * dim);
    let mut merged_weights: Vec<f64> = Vec::with_capacity(order.len());
    for i in order {
        let p = point(i);
        let same = merged_weights
            .len()
            .checked_sub(1)
            .is_some_and(|last| &merged_points[last * dim..] == p);
        if same {
            *merged_weights.last_mut().unwrap() += weights[i];
        } else {
            merged_points.extend_from_slice(p);
            merged_weights.push(weights[i]);
        }
    }
    (merged_points, merged_weights)
}

/// A law that can be sampled and whose density can be evaluated.
pub trait Proposal {
    fn sample(&self, rng: &mut SmcRng, out: &mut [f64]);
    fn density(&self, y: &[f64]) -> f64;
}

/// The predictive mixture `Φ_n^s` of a weighted cloud.
pub struct PredictiveMixture<'a, M: FeynmanKacModel + ?Sized> {
    model: &'a M,
    side: Side,
    n: usize,
    dim: usize,
    points: &'a [f64],
    ancestors: Categorical,
    eval: Box<dyn MixtureDensity + 'a>,
}

impl<'a, M: FeynmanKacModel + ?Sized> PredictiveMixture<'a, M> {
    pub fn new(model: &'a M, side: Side, n: usize, points: &'a [f64], norm_weights: &[f64]) -> Result<Self> {
        let view = model.densities().ok_or(SmcError::MissingDensity("MC scheme"))?;
        let dim = model.state_dim();
        Ok(PredictiveMixture {
            model,
            side,
            n,
            dim,
            points,
            ancestors: Categorical::new(norm_weights)?,
            eval: view.mixture(side, n, dim, points, norm_weights),
        })
    }
}

impl<M: FeynmanKacModel + ?Sized> Proposal for PredictiveMixture<'_, M> {
    fn sample(&self, rng: &mut SmcRng, out: &mut [f64]) {
        let i = self.ancestors.sample(rng);
        let x = &self.points[i * self.dim..(i + 1) * self.dim];
        self.model.sample_kernel(self.side, self.n, x, rng, out);
    }

    fn density(&self, y: &[f64]) -> f64 {
        self.eval.eval(y)
    }
}

/// The initial law `η_0^s` of one side.
pub struct InitialLaw<'a, M: FeynmanKacModel + ?Sized> {
    model: &'a M,
    view: &'a dyn DensityView,
    side: Side,
}

impl<'a, M: FeynmanKacModel + ?Sized> InitialLaw<'a, M> {
    pub fn new(model: &'a M, side: Side) -> Result<Self> {
        let view = model.densities().ok_or(SmcError::MissingDensity("MC scheme"))?;
        Ok(InitialLaw { model, view, side })
    }
}

impl<M: FeynmanKacModel + ?Sized> Proposal for InitialLaw<'_, M> {
    fn sample(&self, rng: &mut SmcRng, out: &mut [f64]) {
        self.model.sample_init(self.side, rng, out);
    }

    fn density(&self, y: &[f64]) -> f64 {
        self.view.init_density(self.side, y)
    }
}

/// One exact draw from the maximal coupling of `p` and `q`.
///
/// Returns the number of second-stage proposals (0 when the first stage
/// accepted a common value), or `None` once `cap` proposals were rejected.
pub fn sample_maximal_coupling<P, Q>(
    p: &P,
    q: &Q,
    rng: &mut SmcRng,
    cap: u64,
    out_f: &mut [f64],
    out_c: &mut [f64],
) -> Option<u64>
where
    P: Proposal + ?Sized,
    Q: Proposal + ?Sized,
{
    p.sample(rng, out_f);
    let w = rng.random::<f64>() * p.density(out_f);
    if w < q.density(out_f) {
        out_c.copy_from_slice(out_f);
        return Some(0);
    }
    for iteration in 1..=cap {
        q.sample(rng, out_c);
        let w = rng.random::<f64>() * q.density(out_c);
        if w > p.density(out_c) {
            return Some(iteration);
        }
    }
    None
}

fn couple_cloud<P, Q>(
    p: &P,
    q: &Q,
    dim: usize,
    size: usize,
    time: usize,
    rng: &mut SmcRng,
    cap: u64,
) -> Result<(CoupledCloud, RejectionStats)>
where
    P: Proposal + ?Sized,
    Q: Proposal + ?Sized,
{
    // Each pair owns a substream, so the output does not depend on the order
    // in which pairs are processed.
    let key = StreamKey::draw(rng);
    let mut next = CoupledCloud::zeroed(dim, time, size);
    let mut stats = RejectionStats::new(cap);
    for k in 0..size {
        let mut pair_rng = key.stream(k as u64);
        let (out_f, out_c) = next.pair_mut(k);
        match sample_maximal_coupling(p, q, &mut pair_rng, cap, out_f, out_c) {
            Some(loops) => stats.record(loops),
            None => return Err(SmcError::RejectionBudgetExceeded { time, pair: k, cap }),
        }
    }
    Ok((next, stats))
}

/// One step of the maximally coupled particle filter.
pub fn mcpf_step<M: FeynmanKacModel + ?Sized>(
    cloud: &CoupledCloud,
    model: &M,
    n: usize,
    rng: &mut SmcRng,
    max_iterations: u64,
) -> Result<(CoupledCloud, RejectionStats)> {
    check_step_time(cloud, n)?;
    if model.densities().is_none() {
        return Err(SmcError::MissingDensity("MC scheme"));
    }
    let weights = WeightView::compute(model, cloud)?;
    let mix_f = PredictiveMixture::new(model, Side::Fine, n, cloud.fine_states(), &weights.norm_f)?;
    let mix_c = PredictiveMixture::new(model, Side::Coarse, n, cloud.coarse_states(), &weights.norm_c)?;
    couple_cloud(&mix_f, &mix_c, cloud.dim(), cloud.len(), n, rng, max_iterations.max(1))
}

/// `N` draws from the maximal coupling of the two initial laws.
pub fn mcpf_init<M: FeynmanKacModel + ?Sized>(
    model: &M,
    size: usize,
    rng: &mut SmcRng,
    max_iterations: u64,
) -> Result<(CoupledCloud, RejectionStats)> {
    let init_f = InitialLaw::new(model, Side::Fine)?;
    let init_c = InitialLaw::new(model, Side::Coarse)?;
    couple_cloud(&init_f, &init_c, model.state_dim(), size, 0, rng, max_iterations.max(1))
}
