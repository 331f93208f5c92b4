//! Variance sweeps over discretization levels and time horizons.

use crate::couplings::{check_capabilities, SchemeId, StepOptions};
use crate::error::{Result, SmcError};
use crate::fk::TestFunction;
use crate::mlmc::ModelFamily;
use crate::par;
use crate::rng::{derive_seed, tags};
use crate::stats::replicates::{failure_rate, replicate_seed, run_single, ReplicateReport, RunSpec};
use crate::stats::summary::{loglog_slope, Moments, SlopeFit};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepGrid {
    /// `x = Δ_l`.
    Level,
    /// `x = n`.
    Horizon,
}

/// Replicate statistics at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub level: u32,
    pub n: usize,
    pub x: f64,
    /// `N · Var[pred_diff]` over successful replicates.
    pub scaled_variance: f64,
    pub mean_pred_diff: f64,
    pub mean_sq_dist: f64,
    pub decouple_frac: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub grid: SweepGrid,
    pub scheme: SchemeId,
    pub model: String,
    pub particles: usize,
    pub replicates: usize,
    pub points: Vec<SweepPoint>,
    /// Log-log fit of `scaled_variance` against `x`.
    pub slope: Option<SlopeFit>,
    /// Raw replicate rows, grid point major.
    pub reports: Vec<ReplicateReport>,
}

impl SweepResult {
    pub fn failure_rate(&self) -> f64 {
        failure_rate(&self.reports)
    }

    /// Largest over smallest `scaled_variance` across the grid.
    pub fn variance_ratio(&self) -> f64 {
        let vals = self.points.iter().map(|p| p.scaled_variance);
        let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Common sweep inputs.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub scheme: SchemeId,
    pub phi: TestFunction,
    pub particles: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub opts: StepOptions,
    pub timing: bool,
}

/// Master seed of grid point `index` (the level for level sweeps).
pub fn point_seed(master: u64, tag: &str, index: u64) -> u64 {
    derive_seed(master, tag, index)
}

fn point_of(level: u32, n: usize, x: f64, particles: usize, reports: &[&ReplicateReport]) -> SweepPoint {
    let ok: Vec<_> = reports.iter().filter_map(|r| r.metrics()).collect();
    let pick =
        |f: fn(&crate::stats::ReplicateMetrics) -> f64| Moments::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    let pred = pick(|m| m.pred_diff);
    SweepPoint {
        level,
        n,
        x,
        scaled_variance: particles as f64 * pred.variance,
        mean_pred_diff: pred.mean,
        mean_sq_dist: pick(|m| m.mean_sq_dist).mean,
        decouple_frac: pick(|m| m.decouple_frac).mean,
        successes: ok.len(),
        failures: reports.len() - ok.len(),
    }
}

/// `N · Var[pred_diff]` at horizon `n` for each level pair `(l, l − 1)`.
pub fn variance_level_sweep<F: ModelFamily + ?Sized>(
    family: &F,
    spec: &SweepSpec,
    n: usize,
    levels: &[u32],
) -> Result<SweepResult> {
    if levels.len() < 4 {
        return Err(SmcError::InvalidModel("a level sweep needs at least 4 levels".into()));
    }
    let models = levels
        .iter()
        .map(|&l| family.level_pair(l).map_err(|e| e.at_level(l as usize)))
        .collect::<Result<Vec<_>>>()?;
    for m in &models {
        check_capabilities(spec.scheme, m)?;
    }
    let reps = spec.replicates;
    let rows = par::map_indexed(levels.len() * reps, |task| {
        let (i, r) = (task / reps, task % reps);
        let run = RunSpec {
            scheme: spec.scheme,
            particles: spec.particles,
            horizons: vec![n],
            phi: spec.phi.clone(),
            level: levels[i],
            opts: spec.opts,
            timing: spec.timing,
        };
        let master = point_seed(spec.master_seed, tags::LEVEL, levels[i] as u64);
        run_single(&models[i], &run, r, replicate_seed(master, r))
    });
    let reports: Vec<ReplicateReport> = rows.into_iter().flatten().collect();
    let points: Vec<SweepPoint> = levels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let slice: Vec<&ReplicateReport> = reports[i * reps..(i + 1) * reps].iter().collect();
            point_of(l, n, (-(l as f64)).exp2(), spec.particles, &slice)
        })
        .collect();
    let slope = loglog_slope(
        &points.iter().map(|p| p.x).collect::<Vec<_>>(),
        &points.iter().map(|p| p.scaled_variance).collect::<Vec<_>>(),
    );
    Ok(SweepResult {
        grid: SweepGrid::Level,
        scheme: spec.scheme,
        model: family.name().to_string(),
        particles: spec.particles,
        replicates: reps,
        points,
        slope,
        reports,
    })
}

/// Statistics at each horizon for the level pair `(l, l − 1)`. Every
/// replicate is one filter run observed at all horizons.
pub fn time_uniformity_sweep<F: ModelFamily + ?Sized>(
    family: &F,
    spec: &SweepSpec,
    level: u32,
    horizons: &[usize],
) -> Result<SweepResult> {
    let mut grid = horizons.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() < 3 {
        return Err(SmcError::InvalidModel("a time sweep needs at least 3 horizons".into()));
    }
    let model = family.level_pair(level)?;
    check_capabilities(spec.scheme, &model)?;
    let run = RunSpec {
        scheme: spec.scheme,
        particles: spec.particles,
        horizons: grid.clone(),
        phi: spec.phi.clone(),
        level,
        opts: spec.opts,
        timing: spec.timing,
    };
    let master = point_seed(spec.master_seed, tags::HORIZON, level as u64);
    let rows = par::map_indexed(spec.replicates, |r| {
        run_single(&model, &run, r, replicate_seed(master, r))
    });
    // Regroup from replicate-major to horizon-major.
    let mut by_horizon: Vec<Vec<ReplicateReport>> = vec![Vec::new(); grid.len()];
    for row in rows {
        for (slot, report) in row.into_iter().enumerate() {
            by_horizon[slot].push(report);
        }
    }
    let points: Vec<SweepPoint> = grid
        .iter()
        .zip(&by_horizon)
        .map(|(&n, reps)| point_of(level, n, n as f64, spec.particles, &reps.iter().collect::<Vec<_>>()))
        .collect();
    let slope = loglog_slope(
        &points.iter().map(|p| p.x).collect::<Vec<_>>(),
        &points.iter().map(|p| p.scaled_variance).collect::<Vec<_>>(),
    );
    Ok(SweepResult {
        grid: SweepGrid::Horizon,
        scheme: spec.scheme,
        model: family.name().to_string(),
        particles: spec.particles,
        replicates: spec.replicates,
        points,
        slope,
        reports: by_horizon.into_iter().flatten().collect(),
    })
}
