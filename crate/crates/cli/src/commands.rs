//! Experiment dispatch: each subcommand turns a config into CSV bytes, a
//! manifest and a list of failed assertions.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use coupled_smc::couplings::{check_capabilities, StepOptions};
use coupled_smc::diffusion::{synthesize_observations, DiffusionSpec, OuPotential, OuSetup, Potential};
use coupled_smc::mlmc::{mlmc_estimate, DiffusionFamily, ModelFamily};
use coupled_smc::oracle::{clt_variance, exact_pred_difference, AtomFunction, FiniteModel};
use coupled_smc::rng::{substream, tags};
use coupled_smc::stats::*;
use coupled_smc::{FeynmanKacModel, SchemeId};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ModelSource, ObservationSource, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Run,
    Sweep,
    Mlmc,
    CltCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Mlmc => "mlmc",
            Command::CltCheck => "clt-check",
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ObservationRecord {
    pub source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub count: usize,
    /// SHA-256 of the sequence written one digit per line.
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Manifest {
    pub command: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub model: &'static str,
    pub scheme: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observations: Option<ObservationRecord>,
}

/// Everything a subcommand produces.
pub struct Outcome {
    pub csv: Vec<u8>,
    /// Secondary CSV (`sweep` replicate rows).
    pub replicates_csv: Option<Vec<u8>>,
    /// Observation sequence when it was synthesized.
    pub observations: Option<Vec<u8>>,
    pub manifest: Manifest,
    /// Failed experiment assertions; nonempty means exit code 2.
    pub failures: Vec<String>,
    /// Non-fatal messages for standard error.
    pub notes: Vec<String>,
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn observation_text(ys: &[u8]) -> Vec<u8> {
    ys.iter().flat_map(|y| [b'0' + y, b'\n']).collect()
}

pub fn parse_observations(text: &str) -> Result<Vec<u8>> {
    text.split_whitespace()
        .enumerate()
        .map(|(i, tok)| match tok {
            "0" => Ok(0),
            "1" => Ok(1),
            other => bail!("observation {i}: expected 0 or 1, got {other:?}"),
        })
        .collect()
}

fn load_observations(cfg: &RunConfig) -> Result<Option<(Vec<u8>, ObservationRecord)>> {
    let (ys, source, path, seed) = match &cfg.observations {
        ObservationSource::None => return Ok(None),
        ObservationSource::File(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading observations {}", path.display()))?;
            (
                parse_observations(&text)?,
                "file",
                Some(path.display().to_string()),
                None,
            )
        }
        ObservationSource::Synthesize { seed, count } => {
            let ModelSource::Ou { rate, start } = cfg.model else {
                bail!("only the ou model can synthesize observations");
            };
            let mut rng = substream(*seed, tags::OBSERVATIONS, 0);
            (
                synthesize_observations(rate, start, *count, cfg.obs_a, cfg.obs_b, &mut rng),
                "synthesized",
                None,
                Some(*seed),
            )
        }
    };
    let record = ObservationRecord {
        source,
        path,
        seed,
        count: ys.len(),
        sha256: hex_sha256(&observation_text(&ys)),
    };
    Ok(Some((ys, record)))
}

/// A finite model seen as a level family whose every level is itself.
struct FixedFamily(FiniteModel);

impl ModelFamily for FixedFamily {
    type Model = FiniteModel;

    fn level_pair(&self, _l: u32) -> coupled_smc::Result<FiniteModel> {
        Ok(self.0.clone())
    }

    fn name(&self) -> &str {
        "finite"
    }
}

enum Family {
    Finite(Box<FixedFamily>),
    Ou(OuSetup),
    Diffusion(DiffusionFamily),
}

fn build_family(cfg: &RunConfig, ys: Option<Vec<u8>>) -> Result<Family> {
    Ok(match &cfg.model {
        ModelSource::Finite { path } => {
            let text = fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
            Family::Finite(Box::new(FixedFamily(
                FiniteModel::from_text(&text).with_context(|| format!("parsing {}", path.display()))?,
            )))
        }
        ModelSource::Ou { rate, start } => {
            let potential = match ys {
                Some(ys) => OuPotential::logistic(cfg.obs_a, cfg.obs_b, ys)?,
                None => OuPotential::Constant,
            };
            let mut setup = OuSetup::new(potential);
            setup.rate = *rate;
            setup.start = *start;
            Family::Ou(setup)
        }
        ModelSource::Diffusion {
            dim,
            rate,
            sigma,
            start,
        } => {
            let (d, rate, sigma) = (*dim, *rate, *sigma);
            let spec = DiffusionSpec::new(
                vec![*start; d],
                move |z, out| {
                    for (o, x) in out.iter_mut().zip(z) {
                        *o = -rate * x;
                    }
                },
                move |_, out| {
                    out.fill(0.0);
                    for i in 0..d {
                        out[i * d + i] = sigma;
                    }
                },
            )?;
            let potential = match ys {
                Some(ys) => {
                    let (a, b) = (cfg.obs_a, cfg.obs_b);
                    let horizon = ys.len();
                    Potential::new(1.0, Some(horizon), move |n, x| {
                        let p = coupled_smc::diffusion::ou::logistic_probability(a, b, x[0]);
                        if ys[n] == 1 {
                            p
                        } else {
                            1.0 - p
                        }
                    })?
                }
                None => Potential::constant(),
            };
            Family::Diffusion(DiffusionFamily { spec, potential })
        }
    })
}

/// Rejects horizons beyond the observations and schemes the model cannot run.
fn check_setup<F: ModelFamily>(family: &F, scheme: SchemeId, level: u32, n: usize) -> Result<()> {
    let model = family.level_pair(level)?;
    if let Some(limit) = model.horizon_limit() {
        if n >= limit {
            bail!("horizon {n} needs {} observations, only {limit} available", n + 1);
        }
    }
    check_capabilities(scheme, &model)?;
    Ok(())
}

fn failed_replicates(reports: &[ReplicateReport], notes: &mut Vec<String>, failures: &mut Vec<String>) {
    for r in reports {
        if let Err(msg) = &r.outcome {
            notes.push(format!(
                "replicate {} (seed {}) at n = {} failed: {msg}",
                r.replicate, r.seed, r.n
            ));
        }
    }
    let rate = failure_rate(reports);
    if rate > MAX_FAILURE_RATE {
        failures.push(format!("replicate failure rate {rate:.3} exceeds {MAX_FAILURE_RATE}"));
    }
}

fn csv_writer(out: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    notes: Vec<String>,
    failures: Vec<String>,
}

impl Ctx<'_> {
    fn run<F: ModelFamily>(&mut self, family: &F) -> Result<Vec<u8>> {
        let cfg = self.cfg;
        check_setup(family, cfg.scheme, cfg.level, cfg.n)?;
        let model = family.level_pair(cfg.level)?;
        let spec = RunSpec {
            scheme: cfg.scheme,
            particles: cfg.particles()?,
            horizons: vec![cfg.n],
            phi: cfg.phi.build(),
            level: cfg.level,
            opts: StepOptions::default(),
            timing: cfg.timing,
        };
        let reports = run_replicates(&model, &spec, cfg.replicates, cfg.seed);
        failed_replicates(&reports, &mut self.notes, &mut self.failures);
        let mut out = Vec::new();
        write_reports(&mut out, &reports)?;
        Ok(out)
    }

    fn sweep<F: ModelFamily>(&mut self, family: &F) -> Result<(Vec<u8>, Vec<u8>)> {
        let cfg = self.cfg;
        let spec = SweepSpec {
            scheme: cfg.scheme,
            phi: cfg.phi.build(),
            particles: cfg.particles()?,
            replicates: cfg.replicates,
            master_seed: cfg.seed,
            opts: StepOptions::default(),
            timing: cfg.timing,
        };
        let result = if !cfg.sweep_levels.is_empty() {
            for &l in &cfg.sweep_levels {
                check_setup(family, cfg.scheme, l, cfg.n)?;
            }
            variance_level_sweep(family, &spec, cfg.n, &cfg.sweep_levels)?
        } else if !cfg.sweep_horizons.is_empty() {
            let last = *cfg.sweep_horizons.iter().max().unwrap();
            check_setup(family, cfg.scheme, cfg.level, last)?;
            time_uniformity_sweep(family, &spec, cfg.level, &cfg.sweep_horizons)?
        } else {
            bail!("sweep needs sweep.levels or sweep.horizons");
        };
        failed_replicates(&result.reports, &mut self.notes, &mut self.failures);
        let (mut summary, mut raw) = (Vec::new(), Vec::new());
        write_sweep_summary(&mut summary, &result)?;
        write_reports(&mut raw, &result.reports)?;
        Ok((summary, raw))
    }

    fn mlmc<F: ModelFamily>(&mut self, family: &F) -> Result<Vec<u8>> {
        let cfg = self.cfg;
        let Some(mlmc) = cfg.mlmc else {
            bail!("mlmc needs mlmc.epsilon");
        };
        let plan = mlmc.plan()?;
        for l in 0..=plan.max_level {
            check_setup(family, cfg.scheme, l, cfg.n)?;
        }
        let result = mlmc_estimate(
            family,
            &plan,
            cfg.scheme,
            &cfg.phi.build(),
            cfg.n,
            cfg.seed,
            &StepOptions::default(),
        )
        .with_context(|| format!("mlmc with seed {}", cfg.seed))?;
        let mut out = Vec::new();
        {
            let mut w = csv_writer(&mut out);
            w.write_record(["row", "l", "N_l", "value", "cost"])?;
            for (l, (term, size)) in result.terms.iter().zip(&plan.samples).enumerate() {
                let cost = *size as u64 * coupled_smc::mlmc::MlmcPlan::cost_per_unit(l as u32) * cfg.n as u64;
                w.write_record([
                    "term".into(),
                    l.to_string(),
                    size.to_string(),
                    fmt_float(*term),
                    cost.to_string(),
                ])?;
            }
            w.write_record([
                "estimate".into(),
                plan.max_level.to_string(),
                String::new(),
                fmt_float(result.estimate),
                result.cost.to_string(),
            ])?;
            w.flush()?;
        }
        Ok(out)
    }

    fn clt_check(&mut self, family: &FixedFamily) -> Result<Vec<u8>> {
        let cfg = self.cfg;
        let model = &family.0;
        if cfg.replicates < 2 {
            bail!("clt-check needs at least 2 replicates");
        }
        check_setup(family, cfg.scheme, 0, cfg.n)?;
        let particles = cfg.particles()?;
        let phi = cfg.phi.build();
        let atoms = AtomFunction::from_test_function(model, &phi);
        let exact = exact_pred_difference(model, cfg.n, &atoms.values)?;
        let sigma2 = clt_variance(model, cfg.n, &atoms, cfg.scheme)?.sigma2;
        let spec = RunSpec {
            scheme: cfg.scheme,
            particles,
            horizons: vec![cfg.n],
            phi,
            level: 0,
            opts: StepOptions::default(),
            timing: false,
        };
        let reports = run_replicates(model, &spec, cfg.replicates, cfg.seed);
        failed_replicates(&reports, &mut self.notes, &mut self.failures);
        let scale = (particles as f64).sqrt();
        let errors: Vec<(usize, u64, f64)> = reports
            .iter()
            .filter_map(|r| {
                r.metrics()
                    .map(|m| (r.replicate, r.seed, scale * (m.pred_diff - exact)))
            })
            .collect();
        let values: Vec<f64> = errors.iter().map(|e| e.2).collect();
        let check = clt_check(&values);
        let crit = ks_critical(values.len(), 0.01);
        let rel = (check.variance / sigma2 - 1.0).abs();
        if rel > cfg.clt_tolerance {
            self.failures.push(format!(
                "sample variance {:.6} is {rel:.3} away from the asymptotic variance {sigma2:.6} (tolerance {})",
                check.variance, cfg.clt_tolerance
            ));
        }
        if check.ks >= crit {
            self.failures.push(format!(
                "KS statistic {:.4} is not below the 1% critical value {crit:.4}",
                check.ks
            ));
        }

        let mut out = Vec::new();
        {
            let mut w = csv_writer(&mut out);
            w.write_record([
                "row",
                "scheme",
                "n",
                "N",
                "replicate",
                "seed",
                "value",
                "clt_variance",
                "sample_variance",
                "ks",
                "ks_critical",
            ])?;
            let head = |row: &str| {
                vec![
                    row.to_string(),
                    cfg.scheme.to_string(),
                    cfg.n.to_string(),
                    particles.to_string(),
                ]
            };
            for (r, seed, e) in &errors {
                let mut rec = head("error");
                rec.extend([r.to_string(), seed.to_string(), fmt_float(*e)]);
                rec.extend(std::iter::repeat_n(String::new(), 4));
                w.write_record(rec)?;
            }
            let mut rec = head("summary");
            rec.extend([String::new(), String::new(), fmt_float(check.mean)]);
            rec.extend([sigma2, check.variance, check.ks, crit].map(fmt_float));
            w.write_record(rec)?;
            w.flush()?;
        }
        Ok(out)
    }
}

/// Runs `command` under the current rayon pool.
pub fn execute(command: Command, cfg: &RunConfig, config_text: &str) -> Result<Outcome> {
    let observations = load_observations(cfg)?;
    let (ys, record) = observations.map(|(y, r)| (Some(y), Some(r))).unwrap_or((None, None));
    let synthesized = match cfg.observations {
        ObservationSource::Synthesize { .. } => ys.as_deref().map(observation_text),
        _ => None,
    };
    let family = build_family(cfg, ys)?;

    let mut ctx = Ctx {
        cfg,
        notes: Vec::new(),
        failures: Vec::new(),
    };
    let mut replicates_csv = None;
    let csv = match (command, &family) {
        (Command::Run, Family::Finite(f)) => ctx.run(f.as_ref())?,
        (Command::Run, Family::Ou(f)) => ctx.run(f)?,
        (Command::Run, Family::Diffusion(f)) => ctx.run(f)?,
        (Command::Sweep, fam) => {
            let (summary, raw) = match fam {
                Family::Finite(f) => ctx.sweep(f.as_ref())?,
                Family::Ou(f) => ctx.sweep(f)?,
                Family::Diffusion(f) => ctx.sweep(f)?,
            };
            replicates_csv = Some(raw);
            summary
        }
        (Command::Mlmc, Family::Finite(_)) => bail!("mlmc needs a diffusion model"),
        (Command::Mlmc, Family::Ou(f)) => ctx.mlmc(f)?,
        (Command::Mlmc, Family::Diffusion(f)) => ctx.mlmc(f)?,
        (Command::CltCheck, Family::Finite(f)) => ctx.clt_check(f)?,
        (Command::CltCheck, _) => bail!("clt-check needs a finite model (the asymptotic variance is computed exactly)"),
    };

    Ok(Outcome {
        csv,
        replicates_csv,
        observations: synthesized,
        manifest: Manifest {
            command: command.name(),
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: hex_sha256(config_text.as_bytes()),
            model: cfg.model.name(),
            scheme: cfg.scheme.to_string(),
            seed: cfg.seed,
            observations: record,
        },
        failures: ctx.failures,
        notes: ctx.notes,
    })
}

/// Writes the outcome next to `out` (`x.csv`, `x.replicates.csv`,
/// `x.observations.txt`, `x.manifest.json`), or to standard output and
/// standard error when `out` is `None`.
pub fn write_outcome(outcome: &Outcome, out: Option<&Path>) -> Result<()> {
    let manifest = serde_json::to_string_pretty(&outcome.manifest)?;
    match out {
        Some(path) => {
            let sibling = |ext: &str| path.with_extension(ext);
            fs::write(path, &outcome.csv).with_context(|| format!("writing {}", path.display()))?;
            if let Some(raw) = &outcome.replicates_csv {
                fs::write(sibling("replicates.csv"), raw)?;
            }
            if let Some(obs) = &outcome.observations {
                fs::write(sibling("observations.txt"), obs)?;
            }
            fs::write(sibling("manifest.json"), manifest + "\n")?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            if let Some(raw) = &outcome.replicates_csv {
                stdout.write_all(raw)?;
                stdout.write_all(b"\n")?;
            }
            stdout.write_all(&outcome.csv)?;
            eprintln!("{manifest}");
        }
    }
    Ok(())
}
