//! Empirical checks of √N-asymptotic normality.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::stats::summary::Moments;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CltCheck {
    pub mean: f64,
    pub variance: f64,
    /// Kolmogorov–Smirnov distance to `N(0, variance)`; `NaN` when degenerate.
    pub ks: f64,
    /// Zero sample variance: no normal law to compare against.
    pub degenerate: bool,
    pub count: usize,
}

/// Moments of the scaled errors `√N (estimate − exact)` and their KS
/// distance to a centred normal with the sample variance.
pub fn clt_check(errors: &[f64]) -> CltCheck {
    let m = Moments::of(errors);
    if !(m.variance > 0.0) {
        return CltCheck {
            mean: m.mean,
            variance: m.variance.max(0.0),
            ks: f64::NAN,
            degenerate: true,
            count: m.count,
        };
    }
    let normal = Normal::new(0.0, m.variance.sqrt()).expect("positive sd");
    CltCheck {
        mean: m.mean,
        variance: m.variance,
        ks: ks_statistic(errors, |x| normal.cdf(x)),
        degenerate: false,
        count: m.count,
    }
}

/// `sup_x |F_n(x) − F(x)|` for the empirical CDF of `sample`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Large-sample critical value `√(−ln(α/2)/2)/√n` of the one-sample KS
/// statistic (1.358/√n at 5%, 1.628/√n at 1%).
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn gaussian_inputs_pass() {
        let mut rng = rng_from_seed(17);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let check = clt_check(&xs);
        assert!((3.8..=4.2).contains(&check.variance), "{}", check.variance);
        assert!(check.ks < ks_critical(xs.len(), 0.05));
    }

    #[test]
    fn all_zero_errors_are_degenerate() {
        let check = clt_check(&[0.0; 200]);
        assert!(check.degenerate);
        assert_eq!(check.variance, 0.0);
    }

    #[test]
    fn critical_values() {
        assert!((ks_critical(1, 0.05) - 1.358).abs() < 1e-3);
        assert!((ks_critical(1, 0.01) - 1.628).abs() < 1e-3);
    }

    #[test]
    fn two_sample_distance_of_disjoint_samples() {
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[0.0, 1.0]), 0.0);
    }
}
