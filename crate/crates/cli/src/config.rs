//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys:
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `model` | `finite`, `ou` or `diffusion` | required |
//! | `model.path` | finite model table (finite only) | required for `finite` |
//! | `ou.rate`, `ou.start` | OU mean reversion and start point | 1.5, 0 |
//! | `diffusion.dim` | state dimension | 1 |
//! | `diffusion.rate`, `diffusion.sigma` | `dZ = −rate·Z dt + sigma dW` | 1.5, 1 |
//! | `diffusion.start` | start coordinate (repeated across dimensions) | 0 |
//! | `scheme` | `IR`, `MCR`, `MC` or `W` | required |
//! | `level` | discretization level `l` | 0 |
//! | `n` | horizon | required |
//! | `particles` | `N` | required except for `mlmc` |
//! | `replicates` | `R` | 1 |
//! | `seed` | master seed | required |
//! | `phi` | `identity`, `clipped-abs` or `indicator` | `identity` |
//! | `phi.param` | cap or threshold | 1 for `clipped-abs`, 0 for `indicator` |
//! | `output` | CSV path (overridden by `--out`) | standard output |
//! | `timing` | fill the `wall_ms` column | false |
//! | `observations.file` | 0/1 observations, whitespace separated | none |
//! | `observations.seed` | synthesize observations from the OU model under this seed | none |
//! | `observations.count` | synthesized length | `n + 1` |
//! | `observations.a`, `observations.b` | logistic potential parameters | 0.2, 0.8 |
//! | `mlmc.epsilon` | target accuracy | none |
//! | `mlmc.constant` | constant in the sample allocation | 1 |
//! | `mlmc.levels` | finest level `L` | `⌈log2(1/ε)⌉` |
//! | `sweep.levels` | comma-separated levels for a level sweep | none |
//! | `sweep.horizons` | comma-separated horizons for a horizon sweep | none |
//! | `clt.tolerance` | allowed relative variance error of `clt-check` | 0.15 |
//!
//! Without observations the diffusion models use the constant potential.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use coupled_smc::mlmc::{plan_allocation, MlmcPlan};
use coupled_smc::{SchemeId, TestFunction};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSource {
    Finite {
        path: PathBuf,
    },
    Ou {
        rate: f64,
        start: f64,
    },
    /// Linear diffusion `dZ = −rate·Z dt + sigma dW` in `R^dim`.
    Diffusion {
        dim: usize,
        rate: f64,
        sigma: f64,
        start: f64,
    },
}

impl ModelSource {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSource::Finite { .. } => "finite",
            ModelSource::Ou { .. } => "ou",
            ModelSource::Diffusion { .. } => "diffusion",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSource::Diffusion { dim, .. } => *dim,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhiSelector {
    Identity,
    ClippedAbs(f64),
    Indicator(f64),
}

impl PhiSelector {
    pub fn build(self) -> TestFunction {
        match self {
            PhiSelector::Identity => TestFunction::identity(),
            PhiSelector::ClippedAbs(cap) => TestFunction::clipped_abs(cap),
            PhiSelector::Indicator(t) => TestFunction::indicator_above(t),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObservationSource {
    None,
    File(PathBuf),
    Synthesize { seed: u64, count: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlmcConfig {
    pub epsilon: f64,
    pub constant: f64,
    pub max_level: Option<u32>,
}

impl MlmcConfig {
    pub fn plan(&self) -> coupled_smc::Result<MlmcPlan> {
        plan_allocation(self.epsilon, self.max_level, self.constant)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelSource,
    pub scheme: SchemeId,
    pub level: u32,
    pub n: usize,
    pub particles: Option<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub phi: PhiSelector,
    pub output: Option<PathBuf>,
    pub timing: bool,
    pub observations: ObservationSource,
    pub obs_a: f64,
    pub obs_b: f64,
    pub mlmc: Option<MlmcConfig>,
    pub sweep_levels: Vec<u32>,
    pub sweep_horizons: Vec<usize>,
    pub clt_tolerance: f64,
}

const KEYS: [&str; 29] = [
    "model",
    "model.path",
    "ou.rate",
    "ou.start",
    "diffusion.dim",
    "diffusion.rate",
    "diffusion.sigma",
    "diffusion.start",
    "scheme",
    "level",
    "n",
    "particles",
    "replicates",
    "seed",
    "phi",
    "phi.param",
    "output",
    "timing",
    "observations.file",
    "observations.seed",
    "observations.count",
    "observations.a",
    "observations.b",
    "mlmc.epsilon",
    "mlmc.constant",
    "mlmc.levels",
    "sweep.levels",
    "sweep.horizons",
    "clt.tolerance",
];

/// Raw entries with the line each came from.
struct Entries(Vec<(String, String, usize)>);

impl Entries {
    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.0
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, line)| (v.as_str(), *line))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|(v, line)| {
                v.parse().map_err(|e: T::Err| ConfigError::Parse {
                    line,
                    message: format!("{key}: {e}"),
                })
            })
            .transpose()
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| invalid(key, "missing"))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some((v, line)) = self.raw(key) else {
            return Ok(Vec::new());
        };
        v.split(',')
            .map(|item| {
                item.trim().parse().map_err(|e: T::Err| ConfigError::Parse {
                    line,
                    message: format!("{key}: {e}"),
                })
            })
            .collect()
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ConfigError::Parse {
                line,
                message: format!("expected `key = value`, got {trimmed:?}"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::Parse {
                line,
                message: format!("unknown key {key:?}"),
            });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::Parse {
                line,
                message: format!("duplicate key {key:?}"),
            });
        }
        entries.push((key.to_string(), value.to_string(), line));
    }
    Ok(Entries(entries))
}

fn positive<T: PartialOrd + Default>(field: &str, v: T) -> Result<T, ConfigError> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(invalid(field, "must be positive"))
    }
}

fn finite(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, "must be finite"))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let e = tokenize(text)?;

    let model_kind: String = e.require("model")?;
    let model = match model_kind.as_str() {
        "finite" => ModelSource::Finite {
            path: e.require::<String>("model.path")?.into(),
        },
        "ou" => ModelSource::Ou {
            rate: finite("ou.rate", e.get("ou.rate")?.unwrap_or(coupled_smc::diffusion::OU_RATE))?,
            start: finite("ou.start", e.get("ou.start")?.unwrap_or(0.0))?,
        },
        "diffusion" => ModelSource::Diffusion {
            dim: positive("diffusion.dim", e.get("diffusion.dim")?.unwrap_or(1usize))?,
            rate: finite(
                "diffusion.rate",
                e.get("diffusion.rate")?.unwrap_or(coupled_smc::diffusion::OU_RATE),
            )?,
            sigma: positive(
                "diffusion.sigma",
                finite("diffusion.sigma", e.get("diffusion.sigma")?.unwrap_or(1.0))?,
            )?,
            start: finite("diffusion.start", e.get("diffusion.start")?.unwrap_or(0.0))?,
        },
        other => {
            return Err(invalid(
                "model",
                format!("unknown model {other:?} (expected finite, ou or diffusion)"),
            ))
        }
    };
    let model_keys: &[&str] = match model {
        ModelSource::Finite { .. } => &["model.path"],
        ModelSource::Ou { .. } => &["ou.rate", "ou.start"],
        ModelSource::Diffusion { .. } => &["diffusion.dim", "diffusion.rate", "diffusion.sigma", "diffusion.start"],
    };
    for key in [
        "model.path",
        "ou.rate",
        "ou.start",
        "diffusion.dim",
        "diffusion.rate",
        "diffusion.sigma",
        "diffusion.start",
    ] {
        if !model_keys.contains(&key) && e.raw(key).is_some() {
            return Err(invalid(key, format!("does not apply to the {} model", model.name())));
        }
    }

    let scheme = e
        .raw("scheme")
        .ok_or_else(|| invalid("scheme", "missing"))
        .and_then(|(v, _)| v.parse::<SchemeId>().map_err(|msg| invalid("scheme", msg)))?;
    if scheme == SchemeId::W && model.dim() != 1 {
        return Err(invalid(
            "scheme",
            format!(
                "W requires a one-dimensional state, model has dimension {}",
                model.dim()
            ),
        ));
    }
    if scheme == SchemeId::MC && matches!(model, ModelSource::Diffusion { .. }) {
        return Err(invalid(
            "scheme",
            "MC requires transition densities, which the diffusion model does not provide",
        ));
    }

    let phi = match e.get::<String>("phi")?.as_deref().unwrap_or("identity") {
        "identity" => {
            if e.raw("phi.param").is_some() {
                return Err(invalid("phi.param", "identity takes no parameter"));
            }
            PhiSelector::Identity
        }
        "clipped-abs" => PhiSelector::ClippedAbs(positive(
            "phi.param",
            finite("phi.param", e.get("phi.param")?.unwrap_or(1.0))?,
        )?),
        "indicator" => PhiSelector::Indicator(finite("phi.param", e.get("phi.param")?.unwrap_or(0.0))?),
        other => return Err(invalid("phi", format!("unknown test function {other:?}"))),
    };

    let n: usize = e.require("n")?;
    let observations = match (
        e.get::<String>("observations.file")?,
        e.get::<u64>("observations.seed")?,
    ) {
        (Some(_), Some(_)) => {
            return Err(invalid(
                "observations",
                "give either observations.file or observations.seed",
            ))
        }
        (Some(path), None) => ObservationSource::File(path.into()),
        (None, Some(seed)) => ObservationSource::Synthesize {
            seed,
            count: positive("observations.count", e.get("observations.count")?.unwrap_or(n + 1))?,
        },
        (None, None) => ObservationSource::None,
    };
    if matches!(observations, ObservationSource::File(_)) && e.raw("observations.count").is_some() {
        return Err(invalid(
            "observations.count",
            "only applies to synthesized observations",
        ));
    }
    let obs_a = e.get("observations.a")?.unwrap_or(0.2);
    let obs_b = e.get("observations.b")?.unwrap_or(0.8);
    if !(0.0 < obs_a && obs_a < obs_b && obs_b < 1.0) {
        return Err(invalid(
            "observations",
            format!("need 0 < a < b < 1, got a = {obs_a}, b = {obs_b}"),
        ));
    }
    if matches!(observations, ObservationSource::Synthesize { .. }) && !matches!(model, ModelSource::Ou { .. }) {
        return Err(invalid(
            "observations.seed",
            "only the ou model can synthesize observations",
        ));
    }
    if matches!(model, ModelSource::Finite { .. }) && observations != ObservationSource::None {
        return Err(invalid("observations", "the finite model carries its own potentials"));
    }

    let mlmc = match e.get::<f64>("mlmc.epsilon")? {
        Some(epsilon) => {
            let cfg = MlmcConfig {
                epsilon,
                constant: e.get("mlmc.constant")?.unwrap_or(1.0),
                max_level: e.get("mlmc.levels")?,
            };
            cfg.plan().map_err(|err| invalid("mlmc", err.to_string()))?;
            Some(cfg)
        }
        None if e.raw("mlmc.constant").is_some() || e.raw("mlmc.levels").is_some() => {
            return Err(invalid("mlmc.epsilon", "missing"));
        }
        None => None,
    };
    if mlmc.is_some() && matches!(model, ModelSource::Finite { .. }) {
        return Err(invalid("mlmc", "needs a diffusion level family, not a finite model"));
    }

    let sweep_levels: Vec<u32> = e.list("sweep.levels")?;
    let sweep_horizons: Vec<usize> = e.list("sweep.horizons")?;
    if !sweep_levels.is_empty() && !sweep_horizons.is_empty() {
        return Err(invalid("sweep", "give either sweep.levels or sweep.horizons"));
    }
    if !sweep_levels.is_empty() && matches!(model, ModelSource::Finite { .. }) {
        return Err(invalid("sweep.levels", "a finite model has no discretization levels"));
    }

    let clt_tolerance = positive("clt.tolerance", e.get("clt.tolerance")?.unwrap_or(0.15))?;

    Ok(RunConfig {
        model,
        scheme,
        level: e.get("level")?.unwrap_or(0),
        n,
        particles: e.get("particles")?.map(|v| positive("particles", v)).transpose()?,
        replicates: positive("replicates", e.get("replicates")?.unwrap_or(1usize))?,
        seed: e.require("seed")?,
        phi,
        output: e.get::<String>("output")?.map(PathBuf::from),
        timing: e.get("timing")?.unwrap_or(false),
        observations,
        obs_a,
        obs_b,
        mlmc,
        sweep_levels,
        sweep_horizons,
        clt_tolerance,
    })
}

impl RunConfig {
    /// Resolves relative paths against `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ModelSource::Finite { path } = &mut self.model {
            fix(path);
        }
        if let ObservationSource::File(path) = &mut self.observations {
            fix(path);
        }
        if let Some(out) = &mut self.output {
            fix(out);
        }
    }

    pub fn particles(&self) -> Result<usize, ConfigError> {
        self.particles.ok_or_else(|| invalid("particles", "missing"))
    }
}
