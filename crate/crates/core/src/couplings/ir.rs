//! Independent pair resampling.

use crate::couplings::categorical::Categorical;
use crate::couplings::check_step_time;
use crate::error::Result;
use crate::fk::{CoupledCloud, FeynmanKacModel, WeightView};
use crate::rng::SmcRng;

/// One step of the independently resampled coupled filter.
///
/// Each output pair draws a fine ancestor `i ∝ G_{n-1}(x^f_·)` and an
/// independent coarse ancestor `j ∝ G_{n-1}(x^c_·)`, then moves
/// `(x^f_i, x^c_j)` through the coupled kernel.
pub fn ircpf_step<M: FeynmanKacModel + ?Sized>(
    cloud: &CoupledCloud,
    model: &M,
    n: usize,
    rng: &mut SmcRng,
) -> Result<CoupledCloud> {
    check_step_time(cloud, n)?;
    let weights = WeightView::compute(model, cloud)?;
    let cat_f = Categorical::new(&weights.norm_f)?;
    let cat_c = Categorical::new(&weights.norm_c)?;
    let mut next = CoupledCloud::zeroed(cloud.dim(), n, cloud.len());
    for k in 0..cloud.len() {
        let i = cat_f.sample(rng);
        let j = cat_c.sample(rng);
        let (out_f, out_c) = next.pair_mut(k);
        model.sample_kernel_coupled(n, cloud.fine(i), cloud.coarse(j), rng, out_f, out_c);
    }
    Ok(next)
}
