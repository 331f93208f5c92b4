//! Semigroup operators and asymptotic variances on finite models.

use ndarray::{Array1, Array2};

use crate::couplings::SchemeId;
use crate::error::{Result, SmcError};
use crate::fk::{Side, TestFunction};
use crate::oracle::exact::{exact_coupled, exact_predictor};
use crate::oracle::finite::FiniteModel;

/// A function on the atoms of a finite model, with a tag for reports.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomFunction {
    pub tag: String,
    pub values: Array1<f64>,
}

impl AtomFunction {
    pub fn new(tag: impl Into<String>, values: Vec<f64>) -> Self {
        AtomFunction {
            tag: tag.into(),
            values: Array1::from(values),
        }
    }

    /// `φ(x) = x` on the atoms.
    pub fn identity(model: &FiniteModel) -> Self {
        Self::new("identity", model.states().to_vec())
    }

    pub fn from_test_function(model: &FiniteModel, phi: &TestFunction) -> Self {
        Self::new(
            phi.tag().to_string(),
            model.states().iter().map(|&x| phi.eval(&[x])).collect(),
        )
    }

    pub fn shifted(&self, c: f64) -> Self {
        AtomFunction {
            tag: format!("{}+{c}", self.tag),
            values: &self.values + c,
        }
    }
}

/// `Q_{p,n}^s = Π_{q=p}^{n-1} diag(G_q) M_{q+1}^s`; the identity when `p = n`.
pub fn q_operator(model: &FiniteModel, p: usize, n: usize, side: Side) -> Array2<f64> {
    assert!(p <= n, "q_operator needs p ≤ n");
    let k = model.num_states();
    let mut q = Array2::eye(k);
    for t in p..n {
        let step = Array2::from_diag(&model.pot(t)).dot(model.trans(side, t + 1));
        q = q.dot(&step);
    }
    q
}

/// `D_{p,n}^s(φ) = Q_{p,n}^s(φ − η_n^s(φ)) / η_p^s(Q_{p,n}^s 1)`.
pub fn d_function(model: &FiniteModel, p: usize, n: usize, phi: &Array1<f64>, side: Side) -> Result<Array1<f64>> {
    let q = q_operator(model, p, n, side);
    let eta_n = exact_predictor(model, n, side)?;
    let eta_p = exact_predictor(model, p, side)?;
    let centered = phi - eta_n.dot(phi);
    let norm = eta_p.dot(&q.sum_axis(ndarray::Axis(1)));
    if !(norm > 0.0) {
        return Err(SmcError::ZeroMass { time: p });
    }
    Ok(q.dot(&centered) / norm)
}

/// `h_{p,n}^f`, `h_{p,n}^c` and `S_{p,n}^{f,c}(φ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HsTerms {
    pub h_f: Array1<f64>,
    pub h_c: Array1<f64>,
    pub s: Array1<f64>,
}

/// `h^s = Q^s 1 / η_p^s(Q^s 1)` and `S = Q^f φ / Q^f 1 − Q^c φ / Q^c 1`.
/// Entries of `S` at atoms where `Q^s 1` vanishes are set to zero.
pub fn h_and_s(model: &FiniteModel, p: usize, n: usize, phi: &Array1<f64>) -> Result<HsTerms> {
    let mut h = Vec::with_capacity(2);
    let mut ratio = Vec::with_capacity(2);
    for side in [Side::Fine, Side::Coarse] {
        let q = q_operator(model, p, n, side);
        let ones = q.sum_axis(ndarray::Axis(1));
        let norm = exact_predictor(model, p, side)?.dot(&ones);
        if !(norm > 0.0) {
            return Err(SmcError::ZeroMass { time: p });
        }
        let qphi = q.dot(phi);
        ratio.push(Array1::from_iter(qphi.iter().zip(&ones).map(|(a, b)| {
            if *b > 0.0 {
                a / b
            } else {
                0.0
            }
        })));
        h.push(ones / norm);
    }
    let s = &ratio[0] - &ratio[1];
    let h_c = h.pop().unwrap();
    let h_f = h.pop().unwrap();
    Ok(HsTerms { h_f, h_c, s })
}

/// Asymptotic variance of `√N` times the predictor-difference error.
#[derive(Clone, Debug, PartialEq)]
pub struct CltVariance {
    pub sigma2: f64,
    pub scheme: SchemeId,
    pub n: usize,
    pub phi_tag: String,
}

/// `σ² = Σ_{p=0}^{n} η̌_p((D_{p,n}^f φ ⊗ 1 − 1 ⊗ D_{p,n}^c φ)²)` with `η̌_p`
/// the limiting coupling of the given scheme.
pub fn clt_variance(model: &FiniteModel, n: usize, phi: &AtomFunction, scheme: SchemeId) -> Result<CltVariance> {
    let mut sigma2 = 0.0;
    for p in 0..=n {
        let df = d_function(model, p, n, &phi.values, Side::Fine)?;
        let dc = d_function(model, p, n, &phi.values, Side::Coarse)?;
        let coupling = exact_coupled(model, p, scheme)?;
        sigma2 += coupling.expect(|x, y| {
            let gap = df[x] - dc[y];
            gap * gap
        });
    }
    Ok(CltVariance {
        sigma2,
        scheme,
        n,
        phi_tag: phi.tag.clone(),
    })
}

/// `η_n^f(φ) − η_n^c(φ)`.
pub fn exact_pred_difference(model: &FiniteModel, n: usize, phi: &Array1<f64>) -> Result<f64> {
    Ok(exact_predictor(model, n, Side::Fine)?.dot(phi) - exact_predictor(model, n, Side::Coarse)?.dot(phi))
}

/// Difference of the exact filters `η_n^s(G_n φ)/η_n^s(G_n)`.
pub fn exact_filt_difference(model: &FiniteModel, n: usize, phi: &Array1<f64>) -> Result<f64> {
    let g = model.pot(n);
    let mut out = [0.0; 2];
    for (slot, side) in [Side::Fine, Side::Coarse].into_iter().enumerate() {
        let eta = exact_predictor(model, n, side)?;
        let z = eta.dot(&g);
        if !(z > 0.0) {
            return Err(SmcError::ZeroMass { time: n });
        }
        out[slot] = (&eta * &g).dot(phi) / z;
    }
    Ok(out[0] - out[1])
}
