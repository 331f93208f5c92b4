//! Categorical draws and the maximal coupling of two index distributions.

use rand::Rng;

use crate::error::{Result, SmcError};
use crate::rng::SmcRng;

const SUM_TOLERANCE: f64 = 1e-12;

/// Inverse-CDF sampler over `0..len` with unnormalized weights.
///
/// Prefix sums are built in one linear scan; a draw is a binary search.
#[derive(Clone, Debug)]
pub struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(weights.len());
        for &w in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(SmcError::InvalidDistribution(format!(
                    "weight {w} is not a finite nonnegative number"
                )));
            }
            acc += w;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(SmcError::InvalidDistribution("weights have zero total mass".into()));
        }
        Ok(Categorical { cumulative })
    }

    pub fn total(&self) -> f64 {
        *self.cumulative.last().expect("nonempty")
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn sample(&self, rng: &mut SmcRng) -> usize {
        let u = rng.random::<f64>() * self.total();
        self.index_of(u)
    }

    /// Smallest index whose prefix sum exceeds `u`.
    fn index_of(&self, u: f64) -> usize {
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // Rounding can leave `u` at or above the final prefix sum; the last
        // index with positive weight takes it.
        if idx >= self.cumulative.len() {
            let last = self.cumulative.len() - 1;
            let top = self.cumulative[last];
            return self.cumulative.partition_point(|&c| c < top);
        }
        idx
    }
}

fn check_probability_vector(w: &[f64], name: &str) -> Result<()> {
    if w.is_empty() {
        return Err(SmcError::InvalidDistribution(format!("{name} is empty")));
    }
    let mut total = 0.0;
    for &x in w {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(SmcError::InvalidDistribution(format!("{name} has entry {x}")));
        }
        total += x;
    }
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(SmcError::InvalidDistribution(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

/// Precomputed maximal coupling of two probability vectors on `0..N`.
///
/// With probability `Σ_k min(wf_k, wc_k)` the pair is `(i, i)` with `i`
/// drawn proportionally to the overlap `min(wf, wc)`; otherwise `i` and `j`
/// are drawn independently from the normalized residuals `wf − min` and
/// `wc − min`.
#[derive(Clone, Debug)]
pub struct MaximalIndexCoupling {
    overlap: f64,
    common: Option<Categorical>,
    residual: Option<(Categorical, Categorical)>,
}

impl MaximalIndexCoupling {
    pub fn new(wf: &[f64], wc: &[f64]) -> Result<Self> {
        check_probability_vector(wf, "fine weights")?;
        check_probability_vector(wc, "coarse weights")?;
        if wf.len() != wc.len() {
            return Err(SmcError::InvalidDistribution(format!(
                "weight vectors have lengths {} and {}",
                wf.len(),
                wc.len()
            )));
        }
        let min: Vec<f64> = wf.iter().zip(wc).map(|(a, b)| a.min(*b)).collect();
        let overlap: f64 = min.iter().sum();
        let common = Categorical::new(&min).ok();
        let res_f: Vec<f64> = wf.iter().zip(&min).map(|(a, m)| a - m).collect();
        let res_c: Vec<f64> = wc.iter().zip(&min).map(|(a, m)| a - m).collect();
        let residual = match (Categorical::new(&res_f), Categorical::new(&res_c)) {
            (Ok(f), Ok(c)) => Some((f, c)),
            _ => None,
        };
        Ok(MaximalIndexCoupling {
            overlap,
            common,
            residual,
        })
    }

    /// `Σ_k min(wf_k, wc_k)`, the probability that the indices agree.
    pub fn overlap(&self) -> f64 {
        self.overlap
    }

    /// Returns `(i, j, coupled)`.
    pub fn sample(&self, rng: &mut SmcRng) -> (usize, usize, bool) {
        let u = rng.random::<f64>();
        match (&self.common, &self.residual) {
            (Some(common), Some(_)) if u < self.overlap => {
                let i = common.sample(rng);
                (i, i, true)
            }
            (_, Some((f, c))) => (f.sample(rng), c.sample(rng), false),
            (Some(common), None) => {
                let i = common.sample(rng);
                (i, i, true)
            }
            (None, None) => unreachable!("validated probability vectors have mass"),
        }
    }
}

/// One draw `(i, j, coupled)` from the maximal coupling of `wf` and `wc`.
pub fn maximal_couple_categorical(wf: &[f64], wc: &[f64], rng: &mut SmcRng) -> Result<(usize, usize, bool)> {
    Ok(MaximalIndexCoupling::new(wf, wc)?.sample(rng))
}
