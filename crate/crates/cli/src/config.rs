//! Run configuration: an optional TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use contrastive::solver::{Engine, SolverConfig};
use serde::Deserialize;

use crate::failure::{self, Failure};
use crate::{EngineArg, ExplainArgs, ModelSource};

/// Default smoothing radius for built-in trees and forests, whose scores are
/// piecewise constant.
pub const PIECEWISE_MU: f64 = 0.5;
pub const DEFAULT_SSA_SAMPLES: usize = 16;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub schema: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub remote: Option<String>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub solver: Option<toml::Table>,
}

impl RunFile {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = failure::read(p, failure::CONFIG)?;
                toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))
            }
        }
    }
}

pub enum Source {
    File(PathBuf),
    Remote(String),
}

/// Inputs shared by `explain` and `evaluate` after merging file and flags.
pub struct Resolved {
    pub source: Source,
    pub schema: Option<PathBuf>,
    pub data: PathBuf,
    pub file: RunFile,
}

pub fn resolve(args: &ModelSource) -> Result<Resolved, Failure> {
    let file = RunFile::load(args.config.as_deref())?;
    let source = match (&args.model, &args.remote) {
        (Some(m), _) => Source::File(m.clone()),
        (None, Some(r)) => Source::Remote(r.clone()),
        (None, None) => match (&file.model, &file.remote) {
            (Some(_), Some(_)) => {
                return Err(Failure::config(
                    "configuration names both a model file and a remote model",
                ))
            }
            (Some(m), None) => Source::File(m.clone()),
            (None, Some(r)) => Source::Remote(r.clone()),
            (None, None) => return Err(Failure::config("no model given; use --model or --remote")),
        },
    };
    let data = args
        .data
        .clone()
        .or_else(|| file.data.clone())
        .ok_or_else(|| Failure::config("no dataset given; use --data"))?;
    let schema = args.schema.clone().or_else(|| file.schema.clone());
    if matches!(source, Source::Remote(_)) && schema.is_none() {
        return Err(Failure::config("a remote model needs --schema"));
    }
    Ok(Resolved {
        source,
        schema,
        data,
        file,
    })
}

/// Recursively overlays `top` onto `base`, rejecting keys `base` lacks.
fn overlay(base: &mut toml::Table, top: &toml::Table, path: &str) -> Result<(), Failure> {
    for (key, value) in top {
        let name = if path.is_empty() {
            key.clone()
        } else {
            format!("{path}.{key}")
        };
        match (base.get_mut(key), value) {
            // engine variants carry different fields, so take it whole
            (Some(_), _) if name == "engine" => {
                base.insert(key.clone(), value.clone());
            }
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t, &name)?,
            (Some(slot), _) => *slot = value.clone(),
            (None, _) => return Err(Failure::config(format!("unknown solver setting `{name}`"))),
        }
    }
    Ok(())
}

/// Builds the solver configuration: defaults, then the file, then flags.
pub fn solver_config(file: &RunFile, args: &ExplainArgs, piecewise: bool) -> Result<SolverConfig, Failure> {
    let mut cfg = SolverConfig::default();
    if piecewise {
        cfg.grad.mu = PIECEWISE_MU;
    }
    if let Some(table) = &file.solver {
        let toml::Value::Table(mut base) = toml::Value::try_from(&cfg).map_err(Failure::config)? else {
            unreachable!("a struct serializes to a table");
        };
        overlay(&mut base, table, "")?;
        cfg = toml::Value::Table(base)
            .try_into()
            .map_err(|e| Failure::config(format!("solver settings: {e}")))?;
    }
    if let Some(seed) = args.seed.or(file.seed) {
        cfg.seed = seed;
    }
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.c, args.c);
    set(&mut cfg.beta, args.beta);
    set(&mut cfg.gamma, args.gamma);
    set(&mut cfg.kappa, args.kappa);
    set(&mut cfg.alpha, args.alpha);
    set(&mut cfg.grad.mu, args.mu);
    if let Some(n) = args.steps {
        cfg.iterations = n;
    }
    if let Some(q) = args.grad_samples {
        cfg.grad.q = q;
    }
    if let Some(r) = args.restarts {
        cfg.restarts = r;
    }
    match (args.engine, args.ssa_samples) {
        (Some(EngineArg::Fma), _) => cfg.engine = Engine::Fma,
        (Some(EngineArg::Ssa), samples) => {
            cfg.engine = Engine::Ssa {
                samples: samples.unwrap_or(DEFAULT_SSA_SAMPLES),
            }
        }
        (None, Some(samples)) => match &mut cfg.engine {
            Engine::Ssa { samples: s } => *s = samples,
            Engine::Fma => return Err(Failure::config("--ssa-samples needs the simplex engine (--engine ssa)")),
        },
        (None, None) => {}
    }
    cfg.validate().map_err(|e| Failure::config(e.to_string()))?;
    Ok(cfg)
}
