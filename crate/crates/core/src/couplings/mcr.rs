//! Maximally coupled index resampling.

use crate::couplings::categorical::MaximalIndexCoupling;
use crate::couplings::check_step_time;
use crate::error::Result;
use crate::fk::{CoupledCloud, FeynmanKacModel, WeightView};
use crate::rng::SmcRng;

/// One step of the maximally-coupled-resampling filter.
///
/// Ancestor indices of every output pair are a fresh draw from the maximal
/// coupling of the two weight vectors over pair indices. A coupled draw
/// moves pair `i` through the coupled kernel; an uncoupled one moves
/// `(x^f_i, x^c_j)`, which realizes the residual product term.
///
/// Returns the new cloud and the fraction of coupled index draws.
pub fn mcrpf_step<M: FeynmanKacModel + ?Sized>(
    cloud: &CoupledCloud,
    model: &M,
    n: usize,
    rng: &mut SmcRng,
) -> Result<(CoupledCloud, f64)> {
    check_step_time(cloud, n)?;
    let weights = WeightView::compute(model, cloud)?;
    let coupling = MaximalIndexCoupling::new(&weights.norm_f, &weights.norm_c)?;
    let mut next = CoupledCloud::zeroed(cloud.dim(), n, cloud.len());
    let mut coupled_draws = 0usize;
    for k in 0..cloud.len() {
        let (i, j, coupled) = coupling.sample(rng);
        coupled_draws += usize::from(coupled);
        let (out_f, out_c) = next.pair_mut(k);
        model.sample_kernel_coupled(n, cloud.fine(i), cloud.coarse(j), rng, out_f, out_c);
    }
    Ok((next, coupled_draws as f64 / cloud.len() as f64))
}
