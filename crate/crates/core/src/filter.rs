//! Full filter runs: coupled filters with per-horizon snapshots and the
//! plain bootstrap particle filter.

use crate::couplings::Categorical;
use crate::couplings::{check_capabilities, mcpf_init, scheme_step, RejectionStats, SchemeId, StepOptions};
use crate::error::{Result, SmcError};
use crate::fk::{ess, estimate_pred_difference, CoupledCloud, FeynmanKacModel, Side, TestFunction, WeightView};
use crate::rng::SmcRng;

/// Statistics of a coupled cloud at one horizon `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonSnapshot {
    pub n: usize,
    pub pred_diff: f64,
    pub filt_diff: f64,
    pub mean_sq_dist: f64,
    pub decouple_frac: f64,
    pub ess_f: f64,
    pub ess_c: f64,
    /// MC only: the step that produced this cloud.
    pub rejection_last: Option<RejectionStats>,
    /// MC only: all steps up to `n`, initialization included.
    pub rejection_total: Option<RejectionStats>,
    /// MCR only: coupled-index fraction of the step that produced this cloud.
    pub coupled_index_fraction: Option<f64>,
}

/// Draws the time-0 cloud. The maximal-coupling scheme starts from the
/// maximal coupling of the two initial laws, the others from the model's
/// initial coupling.
pub fn initialize<M: FeynmanKacModel + ?Sized>(
    scheme: SchemeId,
    model: &M,
    size: usize,
    rng: &mut SmcRng,
    opts: &StepOptions,
) -> Result<(CoupledCloud, Option<RejectionStats>)> {
    if size == 0 {
        return Err(SmcError::InvalidModel("particle count must be positive".into()));
    }
    check_capabilities(scheme, model)?;
    if scheme == SchemeId::MC {
        let (cloud, stats) = mcpf_init(model, size, rng, opts.max_rejection_iterations)?;
        return Ok((cloud, Some(stats)));
    }
    let dim = model.state_dim();
    let mut fine = vec![0.0; size * dim];
    let mut coarse = vec![0.0; size * dim];
    for (f, c) in fine.chunks_exact_mut(dim).zip(coarse.chunks_exact_mut(dim)) {
        model.sample_init_coupled(rng, f, c);
    }
    Ok((CoupledCloud::new(dim, 0, fine, coarse)?, None))
}

fn check_finite(cloud: &CoupledCloud) -> Result<()> {
    if cloud
        .fine_states()
        .iter()
        .chain(cloud.coarse_states())
        .all(|x| x.is_finite())
    {
        Ok(())
    } else {
        Err(SmcError::NonFiniteState)
    }
}

fn check_horizon<M: FeynmanKacModel + ?Sized>(model: &M, last: usize) -> Result<()> {
    match model.horizon_limit() {
        Some(limit) if last >= limit => Err(SmcError::InvalidModel(format!(
            "horizon {last} needs potentials up to time {last}, but the model defines {limit}"
        ))),
        _ => Ok(()),
    }
}

fn snapshot<M: FeynmanKacModel + ?Sized>(
    model: &M,
    cloud: &CoupledCloud,
    phi: &TestFunction,
) -> Result<(f64, f64, f64, f64)> {
    let weights = WeightView::compute(model, cloud)?;
    let mean = |states: &[f64], w: &[f64]| -> f64 {
        states
            .chunks_exact(cloud.dim())
            .zip(w)
            .map(|(x, wi)| wi * phi.eval(x))
            .sum()
    };
    let filt = mean(cloud.fine_states(), &weights.norm_f) - mean(cloud.coarse_states(), &weights.norm_c);
    Ok((
        estimate_pred_difference(cloud, phi),
        filt,
        ess(&weights.norm_f),
        ess(&weights.norm_c),
    ))
}

/// Runs a coupled filter to the largest of `horizons` and reports the cloud
/// statistics at each requested horizon (in ascending order).
pub fn run_coupled_filter<M: FeynmanKacModel + ?Sized>(
    model: &M,
    scheme: SchemeId,
    size: usize,
    horizons: &[usize],
    phi: &TestFunction,
    rng: &mut SmcRng,
    opts: &StepOptions,
) -> Result<Vec<HorizonSnapshot>> {
    let mut wanted: Vec<usize> = horizons.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    let last = *wanted
        .last()
        .ok_or_else(|| SmcError::InvalidModel("at least one horizon is required".into()))?;
    check_horizon(model, last)?;
    let (mut cloud, init_stats) = initialize(scheme, model, size, rng, opts)?;
    check_finite(&cloud)?;
    let mut total = init_stats;
    let mut last_stats = init_stats;
    let mut index_fraction = None;
    let mut out = Vec::with_capacity(wanted.len());
    let mut next_wanted = wanted.iter().peekable();
    for n in 0..=last {
        if n > 0 {
            let (next, diag) = scheme_step(scheme, &cloud, model, n, rng, opts)?;
            check_finite(&next)?;
            cloud = next;
            if let Some(stats) = diag.rejection {
                total
                    .get_or_insert_with(|| RejectionStats::new(stats.max_iterations_cap))
                    .merge(&stats);
                last_stats = Some(stats);
            }
            index_fraction = diag.coupled_index_fraction;
        }
        if next_wanted.peek() == Some(&&n) {
            next_wanted.next();
            let (pred_diff, filt_diff, ess_f, ess_c) = snapshot(model, &cloud, phi)?;
            out.push(HorizonSnapshot {
                n,
                pred_diff,
                filt_diff,
                mean_sq_dist: cloud.mean_sq_dist(),
                decouple_frac: cloud.decouple_frac(),
                ess_f,
                ess_c,
                rejection_last: last_stats,
                rejection_total: total,
                coupled_index_fraction: index_fraction,
            });
        }
    }
    Ok(out)
}

/// Bootstrap particle filter on one side of `model` with multinomial
/// resampling. Returns the predictor estimate `(1/N) Σ φ(x_i)` at time `n`.
pub fn bootstrap_filter<M: FeynmanKacModel + ?Sized>(
    model: &M,
    side: Side,
    size: usize,
    n: usize,
    phi: &TestFunction,
    rng: &mut SmcRng,
) -> Result<f64> {
    if size == 0 {
        return Err(SmcError::InvalidModel("particle count must be positive".into()));
    }
    if n > 0 {
        check_horizon(model, n - 1)?;
    }
    let dim = model.state_dim();
    let mut states = vec![0.0; size * dim];
    for x in states.chunks_exact_mut(dim) {
        model.sample_init(side, rng, x);
    }
    let mut next = vec![0.0; size * dim];
    let mut weights = vec![0.0; size];
    for t in 1..=n {
        for (w, x) in weights.iter_mut().zip(states.chunks_exact(dim)) {
            *w = model.potential(t - 1, x);
        }
        let ancestors = Categorical::new(&weights).map_err(|_| SmcError::AllZeroWeights { time: t - 1 })?;
        for out in next.chunks_exact_mut(dim) {
            let i = ancestors.sample(rng);
            model.sample_kernel(side, t, &states[i * dim..(i + 1) * dim], rng, out);
        }
        std::mem::swap(&mut states, &mut next);
        if states.iter().any(|x| !x.is_finite()) {
            return Err(SmcError::NonFiniteState);
        }
    }
    Ok(states.chunks_exact(dim).map(|x| phi.eval(x)).sum::<f64>() / size as f64)
}
