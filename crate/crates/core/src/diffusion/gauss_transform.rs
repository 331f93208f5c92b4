//! Fast evaluation of one-dimensional Gaussian mixtures with a shared
//! variance, `f(y) = Σ_i w_i N(y; m_i, σ²)`.
//!
//! Means are grouped into clusters of radius `h/2` with `h = √(2σ²)`. Each
//! cluster is replaced by a truncated Hermite expansion about its centre,
//! which is accurate to about `1e-13` relative to the cluster weight while
//! `|y − c| ≤ 3h`. Farther clusters are summed directly.

use std::f64::consts::PI;

const TERMS: usize = 24;
const NEAR: f64 = 3.0;

#[derive(Clone, Debug)]
struct Cluster {
    centre: f64,
    /// `A_n = (1/n!) Σ_i w_i ((m_i − c)/h)^n`.
    coeffs: [f64; TERMS],
    means: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GaussMixture {
    h: f64,
    norm: f64,
    clusters: Vec<Cluster>,
}

impl GaussMixture {
    /// `variance` must be positive; weights nonnegative.
    pub fn new(means: &[f64], weights: &[f64], variance: f64) -> Self {
        assert!(variance > 0.0, "variance must be positive");
        let h = (2.0 * variance).sqrt();
        let mut order: Vec<usize> = (0..means.len()).filter(|&i| weights[i] > 0.0).collect();
        order.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
        let mut clusters = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let lo = means[order[start]];
            let mut end = start;
            while end < order.len() && means[order[end]] <= lo + h {
                end += 1;
            }
            let members = &order[start..end];
            let centre = 0.5 * (lo + means[order[end - 1]]);
            let mut coeffs = [0.0; TERMS];
            for &i in members {
                let t = (means[i] - centre) / h;
                let mut term = weights[i];
                for (n, c) in coeffs.iter_mut().enumerate() {
                    *c += term;
                    term *= t / (n + 1) as f64;
                }
            }
            clusters.push(Cluster {
                centre,
                coeffs,
                means: members.iter().map(|&i| means[i]).collect(),
                weights: members.iter().map(|&i| weights[i]).collect(),
            });
            start = end;
        }
        GaussMixture {
            h,
            norm: 1.0 / (PI * h * h).sqrt(),
            clusters,
        }
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn eval(&self, y: f64) -> f64 {
        let mut total = 0.0;
        for cluster in &self.clusters {
            let t = (y - cluster.centre) / self.h;
            if t.abs() <= NEAR {
                // Hermite functions h_n(t) = (−1)^n dⁿ/dtⁿ e^{−t²}.
                let g = (-t * t).exp();
                let (mut prev, mut cur) = (0.0, g);
                let mut acc = 0.0;
                for (n, c) in cluster.coeffs.iter().enumerate() {
                    acc += c * cur;
                    let next = 2.0 * t * cur - 2.0 * n as f64 * prev;
                    prev = cur;
                    cur = next;
                }
                total += acc;
            } else {
                total += cluster
                    .means
                    .iter()
                    .zip(&cluster.weights)
                    .map(|(m, w)| {
                        let s = (y - m) / self.h;
                        w * (-s * s).exp()
                    })
                    .sum::<f64>();
            }
        }
        total * self.norm
    }
}

/// Direct `O(N)` evaluation, for comparison.
pub fn direct_mixture(means: &[f64], weights: &[f64], variance: f64, y: f64) -> f64 {
    let norm = 1.0 / (2.0 * PI * variance).sqrt();
    means
        .iter()
        .zip(weights)
        .map(|(m, w)| w * (-(y - m) * (y - m) / (2.0 * variance)).exp())
        .sum::<f64>()
        * norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn agrees_with_direct_sum() {
        let mut rng = rng_from_seed(21);
        for &(spread, variance) in &[(0.5, 0.3), (4.0, 0.3), (20.0, 0.05), (1.0, 2.0)] {
            let n = 500;
            let means: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() - 0.5) * spread).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let fast = GaussMixture::new(&means, &weights, variance);
            let scale = direct_mixture(&means, &weights, variance, 0.0).max(1e-300);
            for k in 0..400 {
                let y = -spread - 3.0 + (2.0 * spread + 6.0) * k as f64 / 399.0;
                let exact = direct_mixture(&means, &weights, variance, y);
                let got = fast.eval(y);
                assert!(
                    (got - exact).abs() <= 1e-10 * exact.max(1e-3 * scale),
                    "spread {spread} y {y}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn single_atom_is_gaussian_density() {
        let fast = GaussMixture::new(&[0.25], &[1.0], 0.5);
        let y = 1.1;
        let expected = (-(y - 0.25f64).powi(2) / 1.0).exp() / (PI).sqrt();
        assert!((fast.eval(y) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_are_dropped() {
        let fast = GaussMixture::new(&[0.0, 100.0], &[1.0, 0.0], 1.0);
        assert_eq!(fast.cluster_count(), 1);
    }
}
