//! Experiment configuration: flat `key = value` lines, `#` comments, dotted
//! section prefixes.
//!
//! ```text
//! name = demo
//! output_dir = runs/demo
//!
//! phantom.kind = shepp_logan     # shepp_logan | beads | line_pairs | disk_with_insert
//! phantom.noise = gaussian       # none | gaussian | poisson
//! phantom.sigma = 1.0
//! geometry.n = 64
//! geometry.n_angles = 30
//!
//! recon.algorithm = asd-pocs     # asd-pocs | awpcsd | piccs
//! optimizer.algorithm = ssa-csa  # ssa-csa | csa
//! optimizer.init = cdlu          # cdlu | dlu | lhs | random
//! optimizer.population = 25
//! optimizer.iterations = 30
//! ```
//!
//! `space.param = name min max step` lines (repeatable) replace the preset
//! grid of `space.preset`, which defaults to the reconstruction algorithm's.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::experiment::Scenario;
use crate::fitness::FitnessConfig;
use crate::init::InitScheme;
use crate::optimizer::{Algorithm, OptimizerConfig};
use crate::param_space::{ParameterSpace, ParameterSpec, ReconAlgorithm};
use crate::phantoms::{NoiseModel, PhantomKind, PhantomSpec};
use crate::recon::{Geometry, ReconParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {msg}")]
    Read { path: String, msg: String },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: `{key}`: {msg}")]
    Field { line: usize, key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub scenario: Scenario,
    pub space: ParameterSpace,
    pub optimizer: OptimizerConfig,
    pub algorithm: Algorithm,
    pub init: InitScheme,
}

struct Entry {
    line: usize,
    key: String,
    value: String,
}

impl Entry {
    fn err(&self, msg: impl Into<String>) -> ConfigError {
        ConfigError::Field {
            line: self.line,
            key: self.key.clone(),
            msg: msg.into(),
        }
    }

    fn parse<T: FromStr>(&self) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.value.parse::<T>().map_err(|e| self.err(format!("`{}`: {e}", self.value)))
    }

    fn number(&self) -> Result<f64, ConfigError> {
        let v: f64 = self.parse()?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err("must be finite"))
        }
    }

    fn count(&self) -> Result<usize, ConfigError> {
        self.parse()
    }

    fn flag(&self) -> Result<bool, ConfigError> {
        match self.value.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.err(format!("`{}` is not a boolean", self.value))),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax {
            line: i + 1,
            msg: format!("expected `key = value`, found `{line}`"),
        })?;
        let (key, value) = (k.trim(), v.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                msg: "empty key or value".into(),
            });
        }
        entries.push(Entry {
            line: i + 1,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(entries)
}

const RECON_KEYS: [&str; 10] = [
    "max_iter",
    "tv_iter",
    "epsilon",
    "alpha",
    "alpha_red",
    "lambda",
    "lambda_red",
    "r_max",
    "delta",
    "rho",
];

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let entries = tokenize(text)?;

    let mut seen = HashSet::new();
    for e in &entries {
        if e.key != "space.param" && !seen.insert(e.key.as_str()) {
            return Err(e.err("set more than once"));
        }
    }
    let get = |key: &str| entries.iter().find(|e| e.key == key);

    let mut name = "experiment".to_string();
    let mut output_dir = None;
    let mut kind = PhantomKind::SheppLogan;
    let mut size = 64;
    let mut intensity = None;
    let mut noise_kind = "gaussian".to_string();
    let mut sigma = 1.0;
    let mut i0 = 1e5;
    let mut phantom_seed = 0;
    let mut insert = true;
    let mut n_angles = 30;
    let mut n_detectors = None;
    let mut keep_fraction = 1.0;
    let mut noise_seed = 0;
    let mut recon_alg = ReconAlgorithm::AsdPocs;
    let mut base = ReconParams::default();
    let mut fitness = FitnessConfig::default();
    let mut opt = OptimizerConfig::default();
    let mut algorithm = Algorithm::SsaCsa;
    let mut init = InitScheme::Cdlu;
    let mut preset = None;
    let mut custom = Vec::new();

    // `recon.algorithm` first, so that `space.preset` can default to it.
    if let Some(e) = get("recon.algorithm") {
        recon_alg = e.parse()?;
    }

    for e in &entries {
        match e.key.as_str() {
            "name" => name = e.value.clone(),
            "output_dir" => output_dir = Some(PathBuf::from(&e.value)),
            "phantom.kind" => kind = e.parse()?,
            "phantom.size" | "geometry.n" => size = e.count()?,
            "phantom.intensity" => intensity = Some(e.number()?),
            "phantom.noise" => {
                let v = e.value.to_ascii_lowercase();
                if !["none", "gaussian", "poisson"].contains(&v.as_str()) {
                    return Err(e.err("expected none, gaussian or poisson"));
                }
                noise_kind = v;
            }
            "phantom.sigma" => sigma = e.number()?,
            "phantom.i0" => i0 = e.number()?,
            "phantom.seed" => phantom_seed = e.parse()?,
            "phantom.insert" => insert = e.flag()?,
            "geometry.n_angles" => n_angles = e.count()?,
            "geometry.n_detectors" => n_detectors = Some(e.count()?),
            "geometry.keep_fraction" => keep_fraction = e.number()?,
            "geometry.noise_seed" => noise_seed = e.parse()?,
            "recon.algorithm" => {}
            "fitness.eta" => fitness.eta = e.number()?,
            "fitness.xi" => fitness.xi = e.number()?,
            "fitness.gamma" => fitness.gamma = e.number()?,
            "optimizer.algorithm" => algorithm = e.parse()?,
            "optimizer.init" => init = e.parse()?,
            "optimizer.population" => opt.population = e.count()?,
            "optimizer.iterations" => opt.iterations = e.count()?,
            "optimizer.flight_length" => opt.flight_length = e.number()?,
            "optimizer.ap0" => opt.ap0 = e.number()?,
            "optimizer.ap_inc" => opt.ap_inc = Some(e.number()?),
            "optimizer.kappa0" => opt.kappa0 = e.number()?,
            "optimizer.omega_inc" => opt.omega_inc = e.number()?,
            "optimizer.k0" => opt.k0 = e.number()?,
            "optimizer.weight_floor" => opt.weight_floor = e.number()?,
            "optimizer.neighborhood" => opt.neighborhood = e.number()?,
            "optimizer.csa_ap" => opt.csa_ap = e.number()?,
            "optimizer.seed" => opt.seed = e.parse()?,
            "space.preset" => preset = Some(e.parse::<ReconAlgorithm>()?),
            "space.param" => {
                let f: Vec<&str> = e.value.split_whitespace().collect();
                if f.len() != 4 {
                    return Err(e.err("expected `name min max step`"));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| e.err(format!("`{s}` is not a number")));
                let spec = ParameterSpec::new(f[0], num(f[1])?, num(f[2])?, num(f[3])?)
                    .map_err(|err| e.err(err.to_string()))?;
                if !RECON_KEYS.contains(&f[0]) {
                    return Err(e.err(format!("unknown reconstruction parameter `{}`", f[0])));
                }
                custom.push(spec);
            }
            key => match key.strip_prefix("recon.") {
                Some(p) if RECON_KEYS.contains(&p) => {
                    base.set(p, e.number()?).map_err(|err| e.err(err.to_string()))?;
                }
                _ => return Err(e.err("unknown key")),
            },
        }
    }

    let noise = match noise_kind.as_str() {
        "none" => NoiseModel::None,
        "gaussian" => NoiseModel::Gaussian(sigma),
        _ => NoiseModel::Poisson(i0),
    };
    let phantom = PhantomSpec {
        kind,
        size,
        intensity: intensity.unwrap_or(kind.default_intensity()),
        noise,
        seed: phantom_seed,
        insert,
    };
    let scenario = Scenario {
        n_detectors: n_detectors.unwrap_or(Geometry::default_detectors(size)),
        keep_fraction,
        noise_seed,
        base_params: base,
        fitness,
        ..Scenario::new(phantom, n_angles, recon_alg)
    };
    let space = if custom.is_empty() {
        ParameterSpace::preset(preset.unwrap_or(recon_alg))
    } else {
        ParameterSpace::new(custom).map_err(|e| ConfigError::Invalid(format!("space.param: {e}")))?
    };

    let invalid = |key: &str, msg: String| match get(key) {
        Some(e) => e.err(msg),
        None => ConfigError::Invalid(msg),
    };
    scenario
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(invalid("geometry.keep_fraction", "must lie in (0, 1]".into()));
    }
    opt.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if init != InitScheme::Random && init != InitScheme::Lhs && opt.population < 2 {
        return Err(invalid("optimizer.population", "diagonal schemes need at least 2 crows".into()));
    }

    Ok(RunConfig {
        output_dir: output_dir.unwrap_or_else(|| PathBuf::from("runs").join(&name)),
        name,
        scenario,
        space,
        optimizer: opt,
        algorithm,
        init,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_file() {
        let c = parse("# nothing but a comment\n\n").unwrap();
        assert_eq!(c.algorithm, Algorithm::SsaCsa);
        assert_eq!(c.init, InitScheme::Cdlu);
        assert_eq!(c.optimizer, OptimizerConfig::default());
        assert_eq!(c.scenario.phantom.size, 64);
        assert_eq!(c.scenario.n_detectors, Geometry::default_detectors(64));
        assert_eq!(c.scenario.phantom.intensity, PhantomKind::SheppLogan.default_intensity());
        assert_eq!(c.space, ParameterSpace::preset(ReconAlgorithm::AsdPocs));
        assert_eq!(c.output_dir, PathBuf::from("runs/experiment"));
    }

    #[test]
    fn full_example() {
        let c = parse(
            "name = lp\noutput_dir = /tmp/x\nphantom.kind = line_pairs\nphantom.noise = poisson\nphantom.i0 = 2e4\n\
             geometry.n = 32\ngeometry.n_angles = 20\nrecon.algorithm = awpcsd\nrecon.rho = 0.3\n\
             fitness.xi = 2\noptimizer.algorithm = csa\noptimizer.init = lhs\noptimizer.population = 6\n\
             optimizer.iterations = 3\noptimizer.seed = 11\n",
        )
        .unwrap();
        assert_eq!(c.name, "lp");
        assert_eq!(c.scenario.phantom.noise, NoiseModel::Poisson(2e4));
        assert_eq!(c.scenario.algorithm, ReconAlgorithm::AwPcsd);
        assert_eq!(c.space, ParameterSpace::preset(ReconAlgorithm::AwPcsd));
        assert_eq!(c.scenario.base_params.rho, 0.3);
        assert_eq!(c.scenario.fitness.xi, 2.0);
        assert_eq!(c.algorithm, Algorithm::Csa);
        assert_eq!(c.optimizer.seed, 11);
    }

    #[test]
    fn custom_space_rows() {
        let c = parse("space.param = epsilon 50 100 10\nspace.param = lambda 0.9 0.99 0.01\n").unwrap();
        assert_eq!(c.space.dim(), 2);
        assert_eq!(c.space.specs()[0].count(), 6);
        assert!(parse("space.param = bogus 0 1 0.1\n").is_err());
        assert!(parse("space.param = epsilon 50 100\n").is_err());
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = parse("name = a\noptimizer.population = many\n").unwrap_err();
        assert!(matches!(&e, ConfigError::Field { line: 2, key, .. } if key == "optimizer.population"));
        let e = parse("phantom.colour = red\n").unwrap_err();
        assert!(e.to_string().contains("line 1") && e.to_string().contains("phantom.colour"));
        assert!(matches!(parse("just words\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(parse("name = a\nname = b\n").is_err());
        assert!(parse("recon.algorithm = fbp\n").is_err());
        assert!(parse("recon.algorithm = piccs\n").is_err());
        assert!(parse("optimizer.ap0 = 1.5\n").is_err());
        assert!(parse("geometry.keep_fraction = 0\n").is_err());
    }
}
