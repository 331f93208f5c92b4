//! Exact predictors and limiting couplings on finite models.

use ndarray::{Array1, Array2};

use crate::couplings::SchemeId;
use crate::error::{Result, SmcError};
use crate::fk::Side;
use crate::oracle::finite::{build, FiniteModel};

/// A coupling of two laws on the atoms of a finite model, at time `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    pub time: usize,
    pub mass: Array2<f64>,
}

impl CouplingMatrix {
    pub fn marginal(&self, side: Side) -> Array1<f64> {
        match side {
            Side::Fine => self.mass.sum_axis(ndarray::Axis(1)),
            Side::Coarse => self.mass.sum_axis(ndarray::Axis(0)),
        }
    }

    pub fn diag_mass(&self) -> f64 {
        self.mass.diag().sum()
    }

    /// Total-variation distance to another coupling on the same grid.
    pub fn tv(&self, other: &Array2<f64>) -> f64 {
        0.5 * self
            .mass
            .iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Largest deviation of the marginals from the model's exact predictors.
    pub fn marginal_error(&self, model: &FiniteModel) -> Result<f64> {
        let mut worst = 0.0f64;
        for side in [Side::Fine, Side::Coarse] {
            let target = exact_predictor(model, self.time, side)?;
            let got = self.marginal(side);
            worst = got.iter().zip(&target).fold(worst, |w, (a, b)| w.max((a - b).abs()));
        }
        Ok(worst)
    }

    /// `E[f(X) g(Y)]`-style quadratic forms: `Σ mass[x,y] h(x,y)`.
    pub fn expect(&self, h: impl Fn(usize, usize) -> f64) -> f64 {
        self.mass.indexed_iter().map(|((x, y), m)| m * h(x, y)).sum()
    }
}

/// `η_n^s` as a probability vector.
pub fn exact_predictor(model: &FiniteModel, n: usize, side: Side) -> Result<Array1<f64>> {
    let mut eta = Array1::from(model.init(side).to_vec());
    for t in 1..=n {
        eta = reweight(&eta, &model.pot(t - 1), t - 1)?.dot(model.trans(side, t));
    }
    Ok(eta)
}

/// `η ⊙ G / η(G)`.
pub(crate) fn reweight(eta: &Array1<f64>, g: &Array1<f64>, time: usize) -> Result<Array1<f64>> {
    let w = eta * g;
    let z = w.sum();
    if !(z > 0.0) {
        return Err(SmcError::ZeroMass { time });
    }
    Ok(w / z)
}

/// Pushes an ancestor coupling through `M̌_n`.
fn propagate(model: &FiniteModel, n: usize, ancestors: &Array2<f64>) -> Array2<f64> {
    let k = model.num_states();
    let flat = Array1::from_iter(ancestors.iter().copied());
    flat.dot(model.trans_coupled(n))
        .into_shape_with_order((k, k))
        .expect("K² entries")
}

/// Limit of the independent-resampling filter.
pub fn exact_coupled_ir(model: &FiniteModel, n: usize) -> Result<CouplingMatrix> {
    let mut current = model.init_coupled().clone();
    for t in 1..=n {
        let (bf, bc) = weighted_marginals(model, &current, t - 1)?;
        current = propagate(
            model,
            t,
            &build::independent(bf.as_slice().unwrap(), bc.as_slice().unwrap()),
        );
    }
    Ok(CouplingMatrix { time: n, mass: current })
}

/// `η̄^f`, `η̄^c` from the marginals of a coupling at time `t`.
fn weighted_marginals(model: &FiniteModel, mass: &Array2<f64>, t: usize) -> Result<(Array1<f64>, Array1<f64>)> {
    let g = model.pot(t);
    let bf = reweight(&mass.sum_axis(ndarray::Axis(1)), &g, t)?;
    let bc = reweight(&mass.sum_axis(ndarray::Axis(0)), &g, t)?;
    Ok((bf, bc))
}

/// Limit of the maximally-coupled-index filter.
///
/// A pair at `(x, y)` keeps its index with probability
/// `min(G(x)/Z_f, G(y)/Z_c)` relative to its mass; the remaining mass is
/// resampled from the product of the two residual laws, reading the fine
/// coordinate of one pair and the coarse coordinate of another.
pub fn exact_coupled_mcr(model: &FiniteModel, n: usize) -> Result<CouplingMatrix> {
    let k = model.num_states();
    let mut current = model.init_coupled().clone();
    for t in 1..=n {
        let g = model.pot(t - 1);
        let zf: f64 = current.indexed_iter().map(|((x, _), m)| m * g[x]).sum();
        let zc: f64 = current.indexed_iter().map(|((_, y), m)| m * g[y]).sum();
        if !(zf > 0.0) || !(zc > 0.0) {
            return Err(SmcError::ZeroMass { time: t - 1 });
        }
        let mut kept = Array2::zeros((k, k));
        let mut res_f = Array1::<f64>::zeros(k);
        let mut res_c = Array1::<f64>::zeros(k);
        for ((x, y), &m) in current.indexed_iter() {
            let (ff, fc) = (g[x] / zf, g[y] / zc);
            let common = ff.min(fc);
            kept[[x, y]] = m * common;
            res_f[x] += m * (ff - common);
            res_c[y] += m * (fc - common);
        }
        let residual = 1.0 - kept.sum();
        let mut ancestors = kept;
        if residual > 1e-15 {
            for x in 0..k {
                for v in 0..k {
                    ancestors[[x, v]] += res_f[x] * res_c[v] / residual;
                }
            }
        }
        current = propagate(model, t, &ancestors);
    }
    Ok(CouplingMatrix { time: n, mass: current })
}

/// Maximal coupling of the two exact predictors.
pub fn exact_coupled_mc(model: &FiniteModel, n: usize) -> Result<CouplingMatrix> {
    let p = exact_predictor(model, n, Side::Fine)?;
    let q = exact_predictor(model, n, Side::Coarse)?;
    Ok(CouplingMatrix {
        time: n,
        mass: build::maximal(p.as_slice().unwrap(), q.as_slice().unwrap()),
    })
}

/// Limit of the quantile-coupled filter: comonotone ancestors on the ordered
/// atoms, then `M̌_n`.
pub fn exact_coupled_w(model: &FiniteModel, n: usize) -> Result<CouplingMatrix> {
    let mut current = model.init_coupled().clone();
    for t in 1..=n {
        let (bf, bc) = weighted_marginals(model, &current, t - 1)?;
        current = propagate(
            model,
            t,
            &build::comonotone(bf.as_slice().unwrap(), bc.as_slice().unwrap()),
        );
    }
    Ok(CouplingMatrix { time: n, mass: current })
}

pub fn exact_coupled(model: &FiniteModel, n: usize, scheme: SchemeId) -> Result<CouplingMatrix> {
    match scheme {
        SchemeId::IR => exact_coupled_ir(model, n),
        SchemeId::MCR => exact_coupled_mcr(model, n),
        SchemeId::MC => exact_coupled_mc(model, n),
        SchemeId::W => exact_coupled_w(model, n),
    }
}
