//! End-to-end explanation of a single record.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{Axis, EncodedSpace};
use crate::error::{Error, Result};
use crate::model::ModelHandle;
use crate::schema::{Cell, Record, Schema};
use crate::solver::{solve, CandidateResult, DensityFn, Kind, SolverConfig};
use crate::{config_hash, TOOL_VERSION};

/// Current explanation format version.
pub const EXPLANATION_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRef {
    pub index: usize,
    pub label: String,
}

impl ClassRef {
    pub fn new(schema: &Schema, index: usize) -> Self {
        Self {
            index,
            label: schema.classes[index].clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub hinge: f64,
    pub l1: f64,
    pub l2: f64,
}

/// A pertinent positive or negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub record: Vec<Cell>,
    /// The record in encoded space.
    pub encoded: Vec<f64>,
    /// Change from the input: raw units for reals, encoded units for
    /// categoricals.
    pub delta: Vec<f64>,
    pub importances: Vec<f64>,
    /// Feature names by descending importance.
    pub ranking: Vec<String>,
    pub predicted: ClassRef,
    pub objective: Objective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStatus {
    pub found: bool,
    pub status: String,
    pub queries_used: u64,
    pub iterations: usize,
    pub restarts_used: usize,
    pub c_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub queries_used: u64,
    pub seed: u64,
    pub pp: SearchStatus,
    pub pn: SearchStatus,
    pub tool_version: String,
    /// Digest of the solver settings other than the seed.
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    pub input: Vec<Cell>,
    pub t0: ClassRef,
    pub pp: Option<Part>,
    pub pn: Option<Part>,
    pub diagnostics: Diagnostics,
}

impl Explanation {
    pub fn part(&self, kind: Kind) -> Option<&Part> {
        match kind {
            Kind::Pp => self.pp.as_ref(),
            Kind::Pn => self.pn.as_ref(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != u64::from(EXPLANATION_VERSION) {
            return Err(Error::Version {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: EXPLANATION_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Hash of the solver configuration with the seed zeroed.
pub fn settings_hash(cfg: &SolverConfig) -> String {
    config_hash(&SolverConfig { seed: 0, ..cfg.clone() })
}

/// Per-feature deviation between two encoded points, in raw units for reals
/// and encoded units for categoricals.
pub fn deviation(space: &EncodedSpace, a: &[f64], b: &[f64]) -> Vec<f64> {
    space
        .axes()
        .iter()
        .enumerate()
        .map(|(i, axis)| {
            let d = a[i] - b[i];
            match axis {
                Axis::Real { lo, hi } => d * (hi - lo),
                Axis::Categorical(_) => d,
            }
        })
        .collect()
}

/// `|deviation_i| / sigma_i` for every feature.
pub fn feature_importance(deviation: &[f64], scales: &[f64]) -> Vec<f64> {
    deviation.iter().zip(scales).map(|(d, s)| d.abs() / s).collect()
}

/// Feature indices by descending importance; ties keep schema order.
pub fn rank_importances(importances: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importances.len()).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    order
}

fn status(res: &CandidateResult, rounds: usize) -> SearchStatus {
    SearchStatus {
        found: res.valid,
        status: if res.valid {
            "found".into()
        } else {
            format!("no valid candidate after {rounds} c-search rounds")
        },
        queries_used: res.queries_used,
        iterations: res.iterations,
        restarts_used: res.restarts_used,
        c_final: res.c_final,
    }
}

fn build_part(res: &CandidateResult, x0_enc: &[f64], schema: &Schema, space: &EncodedSpace) -> Part {
    let delta = deviation(space, &res.encoded, x0_enc);
    let reference = match res.kind {
        Kind::Pp => deviation(space, &res.encoded, space.base()),
        Kind::Pn => delta.clone(),
    };
    let importances = feature_importance(&reference, space.scales());
    let ranking = rank_importances(&importances)
        .into_iter()
        .map(|i| schema.features[i].name.clone())
        .collect();
    Part {
        record: schema.to_cells(&res.record),
        encoded: res.encoded.clone(),
        delta,
        importances,
        ranking,
        predicted: ClassRef::new(schema, res.predicted),
        objective: Objective {
            hinge: res.hinge,
            l1: res.l1,
            l2: res.l2,
        },
    }
}

/// Explains one raw record: finds its class and searches for both parts.
pub fn explain(
    x0: &[f64],
    model: &ModelHandle,
    schema: &Schema,
    space: &EncodedSpace,
    cfg: &SolverConfig,
    density: Option<&DensityFn<'_>>,
) -> Result<Explanation> {
    schema.check_record(x0)?;
    let x0_enc = space.encode(x0)?;
    let t0_scores = model.predict_one(x0)?;
    let t0 = t0_scores.argmax();
    let pp = solve(Kind::Pp, x0, t0, model, space, cfg, density)?;
    let pn = solve(Kind::Pn, x0, t0, model, space, cfg, density)?;
    let rounds = cfg.c_search.rounds;
    Ok(Explanation {
        version: EXPLANATION_VERSION,
        row: None,
        input: schema.to_cells(x0),
        t0: ClassRef::new(schema, t0),
        pp: pp.valid.then(|| build_part(&pp, &x0_enc, schema, space)),
        pn: pn.valid.then(|| build_part(&pn, &x0_enc, schema, space)),
        diagnostics: Diagnostics {
            queries_used: 1 + pp.queries_used + pn.queries_used,
            seed: cfg.seed,
            pp: status(&pp, rounds),
            pn: status(&pn, rounds),
            tool_version: TOOL_VERSION.to_string(),
            config_hash: settings_hash(cfg),
        },
    })
}

/// Explains many rows on `jobs` threads. Row `i` is solved with seed
/// `cfg.seed + i`, so results do not depend on scheduling.
pub fn explain_batch(
    rows: &[(usize, Record)],
    model: &ModelHandle,
    schema: &Schema,
    space: &EncodedSpace,
    cfg: &SolverConfig,
    jobs: usize,
    density: Option<&DensityFn<'_>>,
) -> Result<Vec<Result<Explanation>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        rows.par_iter()
            .map(|(row, record)| {
                let row_cfg = SolverConfig {
                    seed: cfg.seed.wrapping_add(*row as u64),
                    ..cfg.clone()
                };
                explain(record, model, schema, space, &row_cfg, density).map(|mut e| {
                    e.row = Some(*row);
                    e
                })
            })
            .collect()
    }))
}
