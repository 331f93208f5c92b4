//! Independent replicate runs of a coupled filter.

use std::time::Instant;

use crate::couplings::{RejectionStats, SchemeId, StepOptions};
use crate::filter::run_coupled_filter;
use crate::fk::{FeynmanKacModel, TestFunction};
use crate::par;
use crate::rng::{derive_seed, rng_from_seed, tags};

/// Outcome of one replicate at one horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateReport {
    pub scheme: SchemeId,
    pub model: String,
    pub level: u32,
    pub n: usize,
    pub particles: usize,
    pub replicate: usize,
    pub seed: u64,
    pub outcome: Result<ReplicateMetrics, String>,
    /// Present only when timing was requested.
    pub wall_ms: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicateMetrics {
    pub pred_diff: f64,
    pub filt_diff: f64,
    pub mean_sq_dist: f64,
    pub decouple_frac: f64,
    pub ess_f: f64,
    pub ess_c: f64,
    pub rejection: Option<RejectionStats>,
}

impl ReplicateReport {
    pub fn metrics(&self) -> Option<&ReplicateMetrics> {
        self.outcome.as_ref().ok()
    }
}

/// What each replicate runs.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub scheme: SchemeId,
    pub particles: usize,
    /// Horizons reported by every replicate; one report per horizon.
    pub horizons: Vec<usize>,
    pub phi: TestFunction,
    /// Level label carried into the reports.
    pub level: u32,
    pub opts: StepOptions,
    pub timing: bool,
}

/// Seed of replicate `r` under `master`.
pub fn replicate_seed(master: u64, replicate: usize) -> u64 {
    derive_seed(master, tags::REPLICATE, replicate as u64)
}

/// One replicate with an explicit seed.
pub fn run_single<M: FeynmanKacModel + ?Sized>(
    model: &M,
    spec: &RunSpec,
    replicate: usize,
    seed: u64,
) -> Vec<ReplicateReport> {
    let start = spec.timing.then(Instant::now);
    let mut rng = rng_from_seed(seed);
    let result = run_coupled_filter(
        model,
        spec.scheme,
        spec.particles,
        &spec.horizons,
        &spec.phi,
        &mut rng,
        &spec.opts,
    );
    let wall_ms = start.map(|t| t.elapsed().as_secs_f64() * 1e3);
    let mut horizons = spec.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let report = |n: usize, outcome: Result<ReplicateMetrics, String>| ReplicateReport {
        scheme: spec.scheme,
        model: model.name().to_string(),
        level: spec.level,
        n,
        particles: spec.particles,
        replicate,
        seed,
        outcome,
        wall_ms,
    };
    match result {
        Ok(snaps) => snaps
            .into_iter()
            .map(|s| {
                report(
                    s.n,
                    Ok(ReplicateMetrics {
                        pred_diff: s.pred_diff,
                        filt_diff: s.filt_diff,
                        mean_sq_dist: s.mean_sq_dist,
                        decouple_frac: s.decouple_frac,
                        ess_f: s.ess_f,
                        ess_c: s.ess_c,
                        rejection: s.rejection_total,
                    }),
                )
            })
            .collect(),
        Err(e) => horizons.into_iter().map(|n| report(n, Err(e.to_string()))).collect(),
    }
}

/// `replicates` independent runs with seeds derived from `master`. Reports
/// come back in (replicate, horizon) order whatever the execution order.
pub fn run_replicates<M: FeynmanKacModel + ?Sized>(
    model: &M,
    spec: &RunSpec,
    replicates: usize,
    master: u64,
) -> Vec<ReplicateReport> {
    par::map_indexed(replicates, |r| run_single(model, spec, r, replicate_seed(master, r)))
        .into_iter()
        .flatten()
        .collect()
}

/// Fraction of failed reports.
pub fn failure_rate(reports: &[ReplicateReport]) -> f64 {
    if reports.is_empty() {
        return 0.0;
    }
    reports.iter().filter(|r| r.outcome.is_err()).count() as f64 / reports.len() as f64
}

/// Experiments fail when more than this fraction of replicates fails.
pub const MAX_FAILURE_RATE: f64 = 0.05;
