//! Quantile (comonotone) coupled resampling on the real line.

use rand::Rng;

use crate::couplings::check_step_time;
use crate::error::{Result, SmcError};
use crate::fk::{require_dim, CoupledCloud, FeynmanKacModel, WeightView};
use crate::rng::SmcRng;

/// Generalized inverse of a weighted empirical CDF.
///
/// Atoms at equal positions are merged before inversion, so the table holds
/// strictly increasing support points with positive mass.
#[derive(Clone, Debug)]
pub struct QuantileTable {
    support: Vec<f64>,
    cumulative: Vec<f64>,
}

impl QuantileTable {
    /// Builds the table from unsorted points and nonnegative weights.
    pub fn new(points: &[f64], weights: &[f64]) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(SmcError::InvalidDistribution(format!(
                "{} points with {} weights",
                points.len(),
                weights.len()
            )));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
        Self::from_order(points, weights, order.into_iter())
    }

    fn from_order(points: &[f64], weights: &[f64], order: impl Iterator<Item = usize>) -> Result<Self> {
        let mut support: Vec<f64> = Vec::new();
        let mut mass: Vec<f64> = Vec::new();
        for i in order {
            let (x, w) = (points[i], weights[i]);
            if !(w >= 0.0) || !w.is_finite() || !x.is_finite() {
                return Err(SmcError::InvalidDistribution(format!("atom ({x}, {w})")));
            }
            if w == 0.0 {
                continue;
            }
            if support.last() == Some(&x) {
                *mass.last_mut().unwrap() += w;
            } else {
                support.push(x);
                mass.push(w);
            }
        }
        let total: f64 = mass.iter().sum();
        if support.is_empty() || !(total > 0.0) {
            return Err(SmcError::InvalidDistribution("weights have zero total mass".into()));
        }
        let mut acc = 0.0;
        let cumulative = mass
            .iter()
            .map(|m| {
                acc += m / total;
                acc
            })
            .collect();
        Ok(QuantileTable { support, cumulative })
    }

    /// `inf{x : F(x) ≥ u}`; `u ≤ 0` gives the smallest and `u ≥ 1` the
    /// largest support point.
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.support[0];
        }
        let idx = self.cumulative.partition_point(|&c| c < u);
        self.support[idx.min(self.support.len() - 1)]
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }
}

/// `F^{-1}(u)` for the weighted empirical measure on sorted `points`.
pub fn weighted_quantile(points: &[f64], weights: &[f64], u: f64) -> Result<f64> {
    if points.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(SmcError::InvalidDistribution("points are not sorted ascending".into()));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(SmcError::InvalidDistribution(format!("level {u} outside [0, 1]")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(SmcError::InvalidDistribution(format!("weights sum to {total}, not 1")));
    }
    if points.len() != weights.len() || points.is_empty() {
        return Err(SmcError::InvalidDistribution(
            "points and weights differ in length".into(),
        ));
    }
    Ok(QuantileTable::from_order(points, weights, 0..points.len())?.quantile(u))
}

/// Ancestor pairs `(F_f^{-1}(u_k), F_c^{-1}(u_k))` for `k < count`, with
/// the `u_k` i.i.d. uniform.
pub fn quantile_ancestors(
    fine: &QuantileTable,
    coarse: &QuantileTable,
    count: usize,
    rng: &mut SmcRng,
) -> Vec<(f64, f64)> {
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>();
            (fine.quantile(u), coarse.quantile(u))
        })
        .collect()
}

/// One step of the Wasserstein (quantile) coupled filter. One-dimensional
/// models only.
pub fn wcpf_step<M: FeynmanKacModel + ?Sized>(
    cloud: &CoupledCloud,
    model: &M,
    n: usize,
    rng: &mut SmcRng,
) -> Result<CoupledCloud> {
    require_dim(model, 1)?;
    check_step_time(cloud, n)?;
    let weights = WeightView::compute(model, cloud)?;
    let table_f = QuantileTable::new(cloud.fine_states(), &weights.norm_f)?;
    let table_c = QuantileTable::new(cloud.coarse_states(), &weights.norm_c)?;
    let mut next = CoupledCloud::zeroed(1, n, cloud.len());
    for k in 0..cloud.len() {
        let u = rng.random::<f64>();
        let ancestor = ([table_f.quantile(u)], [table_c.quantile(u)]);
        let (out_f, out_c) = next.pair_mut(k);
        model.sample_kernel_coupled(n, &ancestor.0, &ancestor.1, rng, out_f, out_c);
    }
    Ok(next)
}
