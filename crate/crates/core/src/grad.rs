//! Two-point random-direction gradient estimation.
//!
//! ```text
//! grad f(x) ~= (d / q) * sum_j [(f(x + mu u_j) - f(x)) / mu] u_j
//! ```
//!
//! with `u_j` drawn uniformly from the unit sphere. `f(x)` is shared across
//! directions, so one estimate costs `q + 1` evaluations, issued as a single
//! batch.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradConfig {
    /// Number of random directions.
    pub q: usize,
    /// Smoothing radius in encoded units.
    pub mu: f64,
}

impl Default for GradConfig {
    fn default() -> Self {
        Self { q: 50, mu: 0.1 }
    }
}

impl GradConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::Config("q must be at least 1".into()));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config("mu must be positive".into()));
        }
        Ok(())
    }
}

/// `q` i.i.d. directions uniform on the unit sphere in `d` dimensions
/// (normalised Gaussians).
pub fn sample_directions<R: Rng + ?Sized>(d: usize, q: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..q)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// Estimate along the given directions. `f` receives `[x, probe_1, ...]`.
///
/// Probes are clamped into `bounds` when given.
pub fn estimate_with_directions<F>(
    f: F,
    x: &[f64],
    dirs: &[Vec<f64>],
    mu: f64,
    bounds: Option<&[(f64, f64)]>,
) -> Result<Vec<f64>>
where
    F: FnOnce(&[Vec<f64>]) -> Result<Vec<f64>>,
{
    let d = x.len();
    let mut points = Vec::with_capacity(dirs.len() + 1);
    points.push(x.to_vec());
    for u in dirs {
        let mut p: Vec<f64> = x.iter().zip(u).map(|(xi, ui)| xi + mu * ui).collect();
        if let Some(b) = bounds {
            for (pi, &(lo, hi)) in p.iter_mut().zip(b) {
                *pi = pi.clamp(lo, hi);
            }
        }
        points.push(p);
    }
    let values = f(&points)?;
    if values.len() != points.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} objective values", points.len()),
            got: values.len().to_string(),
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteProbe {
            point: points[i].clone(),
        });
    }
    let f0 = values[0];
    let mut grad = vec![0.0; d];
    for (u, &fu) in dirs.iter().zip(&values[1..]) {
        let w = (fu - f0) / mu;
        for (g, ui) in grad.iter_mut().zip(u) {
            *g += w * ui;
        }
    }
    let scale = d as f64 / dirs.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(grad)
}

pub fn estimate_gradient<F, R>(
    f: F,
    x: &[f64],
    cfg: &GradConfig,
    bounds: Option<&[(f64, f64)]>,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    F: FnOnce(&[Vec<f64>]) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let dirs = sample_directions(x.len(), cfg.q, rng);
    estimate_with_directions(f, x, &dirs, cfg.mu, bounds)
}

/// Monte Carlo mean squared error of the estimator against a known gradient.
pub fn empirical_mse<F, R>(
    mut f: F,
    true_grad: &[f64],
    x: &[f64],
    cfg: &GradConfig,
    trials: usize,
    rng: &mut R,
) -> Result<f64>
where
    F: FnMut(&[Vec<f64>]) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    let mut total = 0.0;
    for _ in 0..trials {
        let g = estimate_gradient(&mut f, x, cfg, None, rng)?;
        total += g.iter().zip(true_grad).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total / trials.max(1) as f64)
}

/// Evaluates a scalar function over a batch; convenience for closures.
pub fn pointwise<'a>(f: impl Fn(&[f64]) -> f64 + 'a) -> impl FnMut(&[Vec<f64>]) -> Result<Vec<f64>> + 'a {
    move |pts: &[Vec<f64>]| Ok(pts.iter().map(|p| f(p)).collect())
}
