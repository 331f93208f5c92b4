//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use coupled_smc::couplings::{scheme_step, SchemeId, StepOptions};
use coupled_smc::diffusion::{synthesize_observations, OuPotential, OuSetup, OU_RATE};
use coupled_smc::filter::initialize;
use coupled_smc::oracle::{build, FiniteModel, FiniteModelParts};
use coupled_smc::rng::{substream, tags, SmcRng};
use coupled_smc::CoupledCloud;
use ndarray::{array, Array2};
use rand::Rng;

/// Fixed 3-state model with distinct fine/coarse kernels and a maximally
/// coupled `M̌`.
pub fn three_state() -> FiniteModel {
    let tf = array![[0.6, 0.3, 0.1], [0.2, 0.6, 0.2], [0.1, 0.3, 0.6]];
    let tc = array![[0.5, 0.35, 0.15], [0.25, 0.5, 0.25], [0.15, 0.3, 0.55]];
    let init_f = [0.3, 0.4, 0.3];
    let init_c = [0.35, 0.35, 0.3];
    FiniteModel::new(FiniteModelParts {
        states: vec![-1.0, 0.0, 1.5],
        init_f: init_f.to_vec(),
        init_c: init_c.to_vec(),
        init_coupled: build::maximal(&init_f, &init_c),
        pot: vec![vec![1.0, 0.6, 0.3], vec![0.4, 0.9, 0.7], vec![0.8, 0.5, 1.0]],
        trans_coupled: vec![build::coupled_kernel(&tf, &tc, build::maximal)],
        trans_f: vec![tf],
        trans_c: vec![tc],
    })
    .unwrap()
}

/// Two states, a sticky fine kernel, a flipping coarse kernel and a
/// potential favouring state 0.
pub fn two_state_asymmetric() -> FiniteModel {
    let tf = array![[0.8, 0.2], [0.2, 0.8]];
    let tc = array![[0.3, 0.7], [0.7, 0.3]];
    let init = [0.5, 0.5];
    FiniteModel::new(FiniteModelParts {
        states: vec![0.0, 1.0],
        init_f: init.to_vec(),
        init_c: init.to_vec(),
        init_coupled: build::maximal(&init, &init),
        pot: vec![vec![1.0, 0.4]],
        trans_coupled: vec![build::coupled_kernel(&tf, &tc, build::maximal)],
        trans_f: vec![tf],
        trans_c: vec![tc],
    })
    .unwrap()
}

fn random_law(rng: &mut SmcRng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn random_stochastic(rng: &mut SmcRng, k: usize) -> Array2<f64> {
    let rows: Vec<f64> = (0..k).flat_map(|_| random_law(rng, k)).collect();
    Array2::from_shape_vec((k, k), rows).unwrap()
}

fn random_coupling(rng: &mut SmcRng, p: &[f64], q: &[f64]) -> Array2<f64> {
    match rng.random_range(0..3) {
        0 => build::maximal(p, q),
        1 => build::independent(p, q),
        _ => build::comonotone(p, q),
    }
}

/// Random model on `k` ordered atoms whose potentials and kernels change at
/// each of the first `slices` times.
pub fn random_model(seed: u64, k: usize, slices: usize) -> FiniteModel {
    let mut rng = substream(seed, "fixture", k as u64);
    let mut states: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
    states.sort_by(f64::total_cmp);
    states.dedup();
    while states.len() < k {
        states.push(states.last().unwrap() + 1.0);
    }
    let init_f = random_law(&mut rng, k);
    let init_c = random_law(&mut rng, k);
    let init_coupled = random_coupling(&mut rng, &init_f, &init_c);
    let pot = (0..slices)
        .map(|_| (0..k).map(|_| rng.random_range(0.1..2.0)).collect())
        .collect();
    let (mut trans_f, mut trans_c, mut trans_coupled) = (vec![], vec![], vec![]);
    for _ in 0..slices {
        let tf = random_stochastic(&mut rng, k);
        let tc = random_stochastic(&mut rng, k);
        let couple = match rng.random_range(0..3) {
            0 => build::maximal,
            1 => build::independent,
            _ => build::comonotone,
        };
        trans_coupled.push(build::coupled_kernel(&tf, &tc, couple));
        trans_f.push(tf);
        trans_c.push(tc);
    }
    FiniteModel::new(FiniteModelParts {
        states,
        init_f,
        init_c,
        init_coupled,
        pot,
        trans_f,
        trans_c,
        trans_coupled,
    })
    .unwrap()
}

/// Cloud of `size` pairs after `n` steps of `scheme`.
pub fn run_cloud(model: &FiniteModel, scheme: SchemeId, size: usize, n: usize, rng: &mut SmcRng) -> CoupledCloud {
    let opts = StepOptions::default();
    let (mut cloud, _) = initialize(scheme, model, size, rng, &opts).unwrap();
    for t in 1..=n {
        cloud = scheme_step(scheme, &cloud, model, t, rng, &opts).unwrap().0;
    }
    cloud
}

/// Pair histogram of a cloud on the atoms of `model`.
pub fn empirical_coupling(model: &FiniteModel, cloud: &CoupledCloud) -> Array2<f64> {
    let k = model.num_states();
    let mut hist = Array2::zeros((k, k));
    for i in 0..cloud.len() {
        let (f, c) = cloud.pair(i);
        let x = model.atom_index(f[0]).expect("fine particle on an atom");
        let y = model.atom_index(c[0]).expect("coarse particle on an atom");
        hist[[x, y]] += 1.0;
    }
    hist / cloud.len() as f64
}

pub fn tv(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// OU family with the logistic potential and `count` synthesized
/// observations.
pub fn ou_with_observations(count: usize, seed: u64) -> OuSetup {
    let mut rng = substream(seed, tags::OBSERVATIONS, 0);
    let ys = synthesize_observations(OU_RATE, 0.0, count, 0.2, 0.8, &mut rng);
    OuSetup::new(OuPotential::logistic(0.2, 0.8, ys).unwrap())
}

/// Exact filter of the continuous-time OU model on a uniform grid: predictor
/// mean of `Z` at time `n` given the first `n` observations.
pub fn ou_grid_predictor_mean(rate: f64, ys: &[u8], a: f64, b: f64, n: usize) -> f64 {
    let m = 4001;
    let (lo, width) = (-7.0, 14.0);
    let h = width / (m - 1) as f64;
    let xs: Vec<f64> = (0..m).map(|i| lo + h * i as f64).collect();
    let decay = (-rate).exp();
    let var = (1.0 - decay * decay) / (2.0 * rate);
    let dens =
        |x: f64, y: f64| (-(y - decay * x).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    let mut eta: Vec<f64> = xs.iter().map(|&y| dens(0.0, y)).collect();
    for &obs in &ys[..n] {
        let weighted: Vec<f64> = xs
            .iter()
            .zip(&eta)
            .map(|(&x, &p)| {
                let q = a + (b - a) / (1.0 + (-x).exp());
                p * if obs == 1 { q } else { 1.0 - q }
            })
            .collect();
        eta = xs
            .iter()
            .map(|&y| xs.iter().zip(&weighted).map(|(&x, &w)| w * dens(x, y)).sum::<f64>() * h)
            .collect();
        let z: f64 = eta.iter().sum::<f64>() * h;
        eta.iter_mut().for_each(|p| *p /= z);
    }
    xs.iter().zip(&eta).map(|(x, p)| x * p).sum::<f64>() * h
}
