//! Projected FISTA search for pertinent positives and negatives.
//!
//! Both searches minimise
//!
//! ```text
//! c * hinge(x) + beta * |v|_1 + |v|_2^2 - gamma * p(x)
//! ```
//!
//! over their feasible set, where `v = x - b` for a pertinent positive and
//! `v = x - x0` for a pertinent negative. Positives are searched on the
//! segment between base and input, the part of `|x - b| <= |x0 - b|` on the
//! input's side; negatives on the full set `|x - b| >= |x0 - b|`. The hinge and density terms are only
//! available through model queries and get a random-direction gradient
//! estimate; the quadratic term is differentiated exactly. Every iterate is
//! rounded, queried once and kept in a pool; the result is the valid pool
//! entry with the smallest `beta * |v|_1 + |v|_2^2`.

mod projection;
mod search;

pub use projection::{
    clamp_pp_segment, pn_feasible, pn_rays, pp_feasible, pp_interval, pp_segment, project_pn, project_pn_coord,
    project_pp, project_pp_coord, sample_pn_coord, sample_pp_coord, sample_pp_segment,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::EncodedSpace;
use crate::error::{Error, Result};
use crate::grad::{estimate_gradient, GradConfig};
use crate::model::{ModelHandle, ScoreVector};
use crate::schema::Record;
use search::{FmaSearch, Search, SsaSearch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Pp,
    Pn,
}

impl Kind {
    /// Whether a predicted class satisfies this kind for input class `t0`.
    pub fn accepts(self, predicted: usize, t0: usize) -> bool {
        match self {
            Kind::Pp => predicted == t0,
            Kind::Pn => predicted != t0,
        }
    }
}

/// How categorical features are searched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[derive(Default)]
pub enum Engine {
    /// Frequency-map codes in `[0, 1]`, rounded on every query.
    #[default]
    Fma,
    /// One-hot blocks on the simplex, scored by sampling corners.
    Ssa { samples: usize },
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CSearch {
    pub rounds: usize,
    pub factor: f64,
}

impl Default for CSearch {
    fn default() -> Self {
        Self {
            rounds: 3,
            factor: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Hinge weight for the first round.
    pub c: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    /// Step size in encoded units.
    pub alpha: f64,
    /// FISTA steps per start.
    pub iterations: usize,
    pub c_search: CSearch,
    /// Random starts after the zero-perturbation start, per round.
    pub restarts: usize,
    pub grad: GradConfig,
    pub engine: Engine,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            c: 10.0,
            beta: 0.01,
            gamma: 0.0,
            kappa: 0.0,
            alpha: 0.01,
            iterations: 100,
            c_search: CSearch::default(),
            restarts: 9,
            grad: GradConfig::default(),
            engine: Engine::Fma,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("c", self.c),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("kappa", self.kappa),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.c_search.rounds == 0 {
            return Err(Error::Config("c_search.rounds must be at least 1".into()));
        }
        if !(self.c_search.factor > 0.0 && self.c_search.factor.is_finite()) {
            return Err(Error::Config("c_search.factor must be positive".into()));
        }
        if let Engine::Ssa { samples: 0 } = self.engine {
            return Err(Error::Config("ssa samples must be at least 1".into()));
        }
        self.grad.validate()
    }
}

/// `max(max_{i != t0} s_i - s_t0, -kappa)`: non-positive once `t0` wins.
pub fn hinge_pp(s: &ScoreVector, t0: usize, kappa: f64) -> f64 {
    (s.max_other(t0) - s.get(t0)).max(-kappa)
}

/// `max(s_t0 - max_{i != t0} s_i, -kappa)`: non-positive once `t0` loses.
pub fn hinge_pn(s: &ScoreVector, t0: usize, kappa: f64) -> f64 {
    (s.get(t0) - s.max_other(t0)).max(-kappa)
}

pub fn hinge(kind: Kind, s: &ScoreVector, t0: usize, kappa: f64) -> f64 {
    match kind {
        Kind::Pp => hinge_pp(s, t0, kappa),
        Kind::Pn => hinge_pn(s, t0, kappa),
    }
}

pub fn shrink_scalar(z: f64, beta: f64) -> f64 {
    if z > beta {
        z - beta
    } else if z < -beta {
        z + beta
    } else {
        0.0
    }
}

/// Element-wise soft thresholding.
pub fn shrink(z: &[f64], beta: f64) -> Vec<f64> {
    z.iter().map(|&v| shrink_scalar(v, beta)).collect()
}

/// Projected FISTA with the proximal step centred at `center`:
///
/// ```text
/// x_{k+1} = P(center + S_beta(y_k - alpha * grad(y_k) - center))
/// y_{k+1} = P(x_{k+1} + k / (k + 3) * (x_{k+1} - x_k))
/// ```
///
/// `visit` sees every `x_{k+1}`. Returns the last iterate.
pub fn projected_fista<G, P, V>(
    start: &[f64],
    center: &[f64],
    alpha: f64,
    beta: f64,
    iterations: usize,
    mut grad: G,
    project: P,
    mut visit: V,
) -> Result<Vec<f64>>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
    P: Fn(&mut [f64]),
    V: FnMut(&[f64]) -> Result<()>,
{
    let mut x = start.to_vec();
    let mut y = x.clone();
    for k in 0..iterations {
        let g = grad(&y)?;
        let mut next: Vec<f64> = (0..x.len())
            .map(|i| center[i] + shrink_scalar(y[i] - alpha * g[i] - center[i], beta))
            .collect();
        project(&mut next);
        let m = k as f64 / (k as f64 + 3.0);
        let mut y_next: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a + m * (a - b)).collect();
        project(&mut y_next);
        x = next;
        y = y_next;
        visit(&x)?;
    }
    Ok(x)
}

/// Density term `p(x)` on raw records.
pub type DensityFn<'a> = dyn Fn(&[f64]) -> f64 + Send + Sync + 'a;

/// One evaluated iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolEntry {
    /// Rounded point in frequency-map encoded space.
    pub encoded: Vec<f64>,
    pub record: Record,
    pub predicted: usize,
    pub valid: bool,
    pub hinge: f64,
    pub l1: f64,
    pub l2: f64,
}

impl PoolEntry {
    /// Selection criterion `beta * l1 + l2`.
    pub fn selection_value(&self, beta: f64) -> f64 {
        beta * self.l1 + self.l2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateResult {
    pub kind: Kind,
    pub valid: bool,
    /// `x0 + delta` in encoded space.
    pub encoded: Vec<f64>,
    /// `delta` in encoded space.
    pub delta: Vec<f64>,
    pub record: Record,
    pub predicted: usize,
    pub scores: ScoreVector,
    pub hinge: f64,
    pub l1: f64,
    pub l2: f64,
    pub queries_used: u64,
    pub iterations: usize,
    pub restarts_used: usize,
    pub c_final: f64,
}

/// Searches for a pertinent positive or negative of `x0` (raw record) whose
/// predicted class is `t0`.
pub fn solve(
    kind: Kind,
    x0: &[f64],
    t0: usize,
    model: &ModelHandle,
    space: &EncodedSpace,
    cfg: &SolverConfig,
    density: Option<&DensityFn<'_>>,
) -> Result<CandidateResult> {
    Ok(run(kind, x0, t0, model, space, cfg, density, false)?.0)
}

/// Like [`solve`], also returning every evaluated iterate.
pub fn solve_traced(
    kind: Kind,
    x0: &[f64],
    t0: usize,
    model: &ModelHandle,
    space: &EncodedSpace,
    cfg: &SolverConfig,
    density: Option<&DensityFn<'_>>,
) -> Result<(CandidateResult, Vec<PoolEntry>)> {
    run(kind, x0, t0, model, space, cfg, density, true)
}

#[allow(clippy::too_many_arguments)]
fn run(
    kind: Kind,
    x0: &[f64],
    t0: usize,
    model: &ModelHandle,
    space: &EncodedSpace,
    cfg: &SolverConfig,
    density: Option<&DensityFn<'_>>,
    keep_pool: bool,
) -> Result<(CandidateResult, Vec<PoolEntry>)> {
    cfg.validate()?;
    if t0 >= model.n_classes() {
        return Err(Error::InvalidRecord(format!("class index {t0} out of range")));
    }
    match cfg.engine {
        Engine::Fma => {
            let s = FmaSearch::new(space, x0)?;
            run_search(&s, kind, x0, t0, model, space, cfg, density, keep_pool)
        }
        Engine::Ssa { samples } => {
            let s = SsaSearch::new(space, x0, samples)?;
            run_search(&s, kind, x0, t0, model, space, cfg, density, keep_pool)
        }
    }
}

struct Best {
    entry: PoolEntry,
    scores: ScoreVector,
}

#[allow(clippy::too_many_arguments)]
fn run_search<S: Search>(
    search: &S,
    kind: Kind,
    x0: &[f64],
    t0: usize,
    model: &ModelHandle,
    space: &EncodedSpace,
    cfg: &SolverConfig,
    density: Option<&DensityFn<'_>>,
    keep_pool: bool,
) -> Result<(CandidateResult, Vec<PoolEntry>)> {
    let mut dir_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_rng.set_stream(1);

    let center = search.center(kind).to_vec();
    let x0_enc = space.encode(x0)?;
    let mut grad_queries = 0u64;
    let mut pool_queries = 0u64;
    let mut iterations = 0usize;
    let mut restarts_used = 0usize;
    let mut pool = Vec::new();
    let mut best_valid: Option<Best> = None;
    let mut best_invalid: Option<Best> = None;
    let mut c = cfg.c;
    let mut c_final = c;

    for round in 0..cfg.c_search.rounds {
        if round > 0 {
            c *= cfg.c_search.factor;
        }
        c_final = c;
        for restart in 0..=cfg.restarts {
            let start = if restart == 0 {
                search.start().to_vec()
            } else {
                restarts_used += 1;
                search.random_start(kind, &mut dir_rng)
            };
            let grad = |y: &[f64]| -> Result<Vec<f64>> {
                let objective = |points: &[Vec<f64>]| -> Result<Vec<f64>> {
                    let (scores, n) = search.scores(model, points, &mut sample_rng)?;
                    grad_queries += n;
                    Ok(scores
                        .iter()
                        .zip(points)
                        .map(|(s, p)| {
                            let penalty = match density {
                                Some(p_fn) if cfg.gamma > 0.0 => cfg.gamma * p_fn(&search.record(p)),
                                _ => 0.0,
                            };
                            c * hinge(kind, s, t0, cfg.kappa) - penalty
                        })
                        .collect())
                };
                let mut g = estimate_gradient(objective, y, &cfg.grad, Some(search.probe_bounds()), &mut dir_rng)?;
                for ((gi, yi), ci) in g.iter_mut().zip(y).zip(&center) {
                    *gi += 2.0 * (yi - ci);
                }
                Ok(g)
            };
            let visit = |x: &[f64]| -> Result<()> {
                iterations += 1;
                let Some(point) = search.finalize(kind, x) else {
                    return Ok(());
                };
                let record = search.record(&point);
                let scores = model.predict_one(&record)?;
                pool_queries += 1;
                let predicted = scores.argmax();
                let (mut l1, mut l2) = (0.0, 0.0);
                for (p, ci) in point.iter().zip(&center) {
                    l1 += (p - ci).abs();
                    l2 += (p - ci).powi(2);
                }
                let entry = PoolEntry {
                    encoded: search.encoded(&point),
                    record,
                    predicted,
                    valid: kind.accepts(predicted, t0),
                    hinge: hinge(kind, &scores, t0, cfg.kappa),
                    l1,
                    l2,
                };
                let value = entry.selection_value(cfg.beta);
                if entry.valid {
                    if best_valid
                        .as_ref()
                        .is_none_or(|b| value < b.entry.selection_value(cfg.beta))
                    {
                        best_valid = Some(Best {
                            entry: entry.clone(),
                            scores,
                        });
                    }
                } else if best_invalid.as_ref().is_none_or(|b| {
                    (entry.hinge, value) < (b.entry.hinge, b.entry.selection_value(cfg.beta))
                }) {
                    best_invalid = Some(Best {
                        entry: entry.clone(),
                        scores,
                    });
                }
                if keep_pool {
                    pool.push(entry);
                }
                Ok(())
            };
            projected_fista(
                &start,
                &center,
                cfg.alpha,
                cfg.beta,
                cfg.iterations,
                grad,
                |x: &mut [f64]| search.project(kind, x),
                visit,
            )?;
        }
        if best_valid.is_some() {
            break;
        }
    }

    let mut valid = best_valid.is_some();
    let best = best_valid.or(best_invalid);
    let (entry, scores) = match best {
        Some(b) => {
            // final direct check of the returned candidate
            let confirm = model.predict_one(&b.entry.record)?;
            pool_queries += 1;
            valid = valid && kind.accepts(confirm.argmax(), t0);
            (b.entry, b.scores)
        }
        None => {
            let scores = model.predict_one(x0)?;
            pool_queries += 1;
            let predicted = scores.argmax();
            let entry = PoolEntry {
                encoded: x0_enc.clone(),
                record: x0.to_vec(),
                predicted,
                valid: false,
                hinge: hinge(kind, &scores, t0, cfg.kappa),
                l1: f64::NAN,
                l2: f64::NAN,
            };
            (entry, scores)
        }
    };
    let delta = entry.encoded.iter().zip(&x0_enc).map(|(a, b)| a - b).collect();
    let result = CandidateResult {
        kind,
        valid,
        encoded: entry.encoded,
        delta,
        record: entry.record,
        predicted: entry.predicted,
        scores,
        hinge: entry.hinge,
        l1: entry.l1,
        l2: entry.l2,
        queries_used: grad_queries + pool_queries,
        iterations,
        restarts_used,
        c_final,
    };
    Ok((result, pool))
}
