//! Multilevel estimator of `η_n^L(φ)`: a bootstrap filter at level 0 plus
//! coupled-filter estimates of `η_n^l(φ) − η_n^{l−1}(φ)` for `l = 1..L`.

use crate::couplings::{SchemeId, StepOptions};
use crate::diffusion::{DiffusionSpec, Potential};
use crate::diffusion::{EulerDiffusionModel, OuModel, OuSetup};
use crate::error::{Result, SmcError};
use crate::filter::{bootstrap_filter, run_coupled_filter};
use crate::fk::{FeynmanKacModel, Side, TestFunction};
use crate::par;
use crate::rng::{derive_seed, substream, tags, SmcRng};
use crate::stats::Moments;

/// Levels `0..=L`, per-level particle counts and the accounted cost model
/// (`2^l` units per particle per unit time at level `l`).
#[derive(Clone, Debug, PartialEq)]
pub struct MlmcPlan {
    pub epsilon: f64,
    pub constant: f64,
    pub max_level: u32,
    /// `N_0, …, N_L`.
    pub samples: Vec<usize>,
}

impl MlmcPlan {
    pub fn cost_per_unit(l: u32) -> u64 {
        1u64 << l
    }

    /// `Σ_l N_l 2^l n`.
    pub fn accounted_cost(&self, n: usize) -> u64 {
        self.samples
            .iter()
            .enumerate()
            .map(|(l, &nl)| nl as u64 * Self::cost_per_unit(l as u32) * n as u64)
            .sum()
    }
}

/// `L = ⌈log2(1/ε)⌉` unless overridden, `N_l = ⌈c ε^{-2} |ln ε| Δ_l⌉` for
/// `l ≥ 1`, and `N_0 = max(⌈ε^{-2}⌉, ⌈c ε^{-2} |ln ε|⌉)`.
///
/// The level-0 count takes the larger of the two so that the counts never
/// increase with the level.
pub fn plan_allocation(epsilon: f64, max_level: Option<u32>, constant: f64) -> Result<MlmcPlan> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SmcError::InvalidAccuracy(epsilon));
    }
    if !(constant > 0.0) || !constant.is_finite() {
        return Err(SmcError::InvalidModel(format!(
            "allocation constant {constant} must be positive"
        )));
    }
    let levels = match max_level {
        Some(0) => return Err(SmcError::InvalidModel("the multilevel plan needs L ≥ 1".into())),
        Some(l) => l,
        None => ((1.0 / epsilon).log2().ceil() as u32).max(1),
    };
    let base = constant * epsilon.powi(-2) * epsilon.ln().abs();
    let mut samples = Vec::with_capacity(levels as usize + 1);
    samples.push((epsilon.powi(-2).ceil() as usize).max(base.ceil() as usize).max(1));
    for l in 1..=levels {
        samples.push(((base * (-(l as f64)).exp2()).ceil() as usize).max(1));
    }
    Ok(MlmcPlan {
        epsilon,
        constant,
        max_level: levels,
        samples,
    })
}

/// A family of level pairs: `level_pair(l)` has level `l` as its fine side
/// and level `l − 1` as its coarse side; `level_pair(0)` is the diagonal
/// pair at level 0.
pub trait ModelFamily: Sync {
    type Model: FeynmanKacModel;

    fn level_pair(&self, l: u32) -> Result<Self::Model>;

    fn name(&self) -> &str;
}

impl ModelFamily for OuSetup {
    type Model = OuModel;

    fn level_pair(&self, l: u32) -> Result<OuModel> {
        OuModel::level_pair(self.clone(), l)
    }

    fn name(&self) -> &str {
        "ou"
    }
}

/// Level family of a general diffusion.
#[derive(Clone, Debug)]
pub struct DiffusionFamily {
    pub spec: DiffusionSpec,
    pub potential: Potential,
}

impl ModelFamily for DiffusionFamily {
    type Model = EulerDiffusionModel;

    fn level_pair(&self, l: u32) -> Result<EulerDiffusionModel> {
        EulerDiffusionModel::level_pair(self.spec.clone(), self.potential.clone(), l)
    }

    fn name(&self) -> &str {
        "diffusion"
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlmcResult {
    pub estimate: f64,
    /// Level-0 estimate followed by the level differences.
    pub terms: Vec<f64>,
    pub cost: u64,
}

/// Level `l` of the estimator, drawn from its own substream of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn mlmc_level_term<F: ModelFamily + ?Sized>(
    family: &F,
    plan: &MlmcPlan,
    scheme: SchemeId,
    phi: &TestFunction,
    n: usize,
    seed: u64,
    l: u32,
    opts: &StepOptions,
) -> Result<f64> {
    let size = *plan
        .samples
        .get(l as usize)
        .ok_or_else(|| SmcError::InvalidModel(format!("level {l} is beyond the plan")))?;
    let mut rng = substream(seed, tags::LEVEL, l as u64);
    level_term(family, size, scheme, phi, n, l, &mut rng, opts)
}

#[allow(clippy::too_many_arguments)]
fn level_term<F: ModelFamily + ?Sized>(
    family: &F,
    size: usize,
    scheme: SchemeId,
    phi: &TestFunction,
    n: usize,
    l: u32,
    rng: &mut SmcRng,
    opts: &StepOptions,
) -> Result<f64> {
    let model = family.level_pair(l)?;
    if l == 0 {
        bootstrap_filter(&model, Side::Fine, size, n, phi, rng)
    } else {
        let snaps = run_coupled_filter(&model, scheme, size, &[n], phi, rng, opts)?;
        Ok(snaps[0].pred_diff)
    }
}

/// Pilot estimates of `N · Var[term_l]` for `l = 0..=max_level`, each from
/// `replicates` runs with `particles` particles.
#[allow(clippy::too_many_arguments)]
pub fn pilot_level_variances<F: ModelFamily + ?Sized>(
    family: &F,
    scheme: SchemeId,
    phi: &TestFunction,
    n: usize,
    max_level: u32,
    particles: usize,
    replicates: usize,
    seed: u64,
    opts: &StepOptions,
) -> Result<Vec<f64>> {
    if replicates < 2 {
        return Err(SmcError::InvalidModel("a pilot needs at least 2 replicates".into()));
    }
    let levels = max_level as usize + 1;
    let terms = par::map_indexed(levels * replicates, |task| {
        let (l, r) = ((task / replicates) as u32, task % replicates);
        let mut rng = substream(derive_seed(seed, tags::LEVEL, l as u64), tags::REPLICATE, r as u64);
        level_term(family, particles, scheme, phi, n, l, &mut rng, opts).map_err(|e| e.at_level(l as usize))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(terms
        .chunks_exact(replicates)
        .map(|t| particles as f64 * Moments::of(t).variance)
        .collect())
}

/// Allocation constant `c` for which the variance part of the plan's MSE,
/// `Σ_l V_l / N_l`, is at most `share · ε²` given `V_l = N · Var[term_l]`.
pub fn constant_for_variance_share(level_variances: &[f64], epsilon: f64, share: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SmcError::InvalidAccuracy(epsilon));
    }
    if !(share > 0.0) {
        return Err(SmcError::InvalidModel(format!(
            "variance share {share} must be positive"
        )));
    }
    let weighted: f64 = level_variances
        .iter()
        .enumerate()
        .map(|(l, v)| v * (l as f64).exp2())
        .sum();
    Ok(weighted / (share * epsilon.ln().abs()))
}

/// Telescoping estimate of `η_n^L(φ)`. Levels run concurrently; each uses
/// the substream `(seed, "level", l)`, so the result does not depend on the
/// order or thread in which levels are evaluated.
pub fn mlmc_estimate<F: ModelFamily + ?Sized>(
    family: &F,
    plan: &MlmcPlan,
    scheme: SchemeId,
    phi: &TestFunction,
    n: usize,
    seed: u64,
    opts: &StepOptions,
) -> Result<MlmcResult> {
    let terms = par::map_indexed(plan.samples.len(), |l| {
        mlmc_level_term(family, plan, scheme, phi, n, seed, l as u32, opts).map_err(|e| e.at_level(l))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(MlmcResult {
        estimate: terms.iter().sum(),
        terms,
        cost: plan.accounted_cost(n),
    })
}

/// Bootstrap filter at level `L` alone, with cost `N·2^L·n`.
pub fn single_level_baseline<F: ModelFamily + ?Sized>(
    family: &F,
    level: u32,
    size: usize,
    phi: &TestFunction,
    n: usize,
    rng: &mut SmcRng,
) -> Result<(f64, u64)> {
    let model = family.level_pair(level)?;
    let estimate = bootstrap_filter(&model, Side::Fine, size, n, phi, rng)?;
    Ok((estimate, size as u64 * MlmcPlan::cost_per_unit(level) * n as u64))
}
