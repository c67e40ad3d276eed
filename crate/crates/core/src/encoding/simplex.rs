//! Simplex sampling for one-hot categorical blocks.
//!
//! Each categorical feature is a point on its probability simplex; a score is
//! the expectation of the model output over corners drawn independently per
//! feature, estimated by Monte Carlo.

use rand::Rng;

use crate::error::Result;
use crate::model::ScoreVector;
use crate::schema::Record;

/// One simplex point per categorical feature, in the order of `features`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexEncoding {
    pub features: Vec<usize>,
    pub blocks: Vec<Vec<f64>>,
}

impl SimplexEncoding {
    /// Corner encoding of the categorical cells of `record`.
    pub fn corners(record: &[f64], features: &[usize], cardinalities: &[usize]) -> Self {
        let blocks = features
            .iter()
            .zip(cardinalities)
            .map(|(&f, &k)| {
                let mut b = vec![0.0; k];
                b[record[f] as usize] = 1.0;
                b
            })
            .collect();
        Self {
            features: features.to_vec(),
            blocks,
        }
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.blocks
            .iter()
            .all(|b| b.iter().all(|&w| w >= 0.0) && (b.iter().sum::<f64>() - 1.0).abs() <= tol)
    }

    fn is_degenerate(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().filter(|&&w| w > 0.0).count() == 1)
    }

    /// Most probable value per block (ties to the lowest index).
    pub fn argmax(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .map(|b| {
                let mut best = 0;
                for (i, &w) in b.iter().enumerate() {
                    if w > b[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

fn draw<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Draws `n` records: real cells copied from `template`, categorical cells
/// sampled from their blocks.
pub fn sample_records<R: Rng + ?Sized>(template: &[f64], enc: &SimplexEncoding, n: usize, rng: &mut R) -> Vec<Record> {
    (0..n)
        .map(|_| {
            let mut rec = template.to_vec();
            for (&f, block) in enc.features.iter().zip(&enc.blocks) {
                rec[f] = draw(block, rng) as f64;
            }
            rec
        })
        .collect()
}

/// Monte Carlo expectation of `f` over the product distribution of `enc`.
///
/// When every block is a corner the distribution is a point mass and `f` is
/// evaluated once.
pub fn ssa_evaluate<F, R>(
    f: F,
    template: &[f64],
    enc: &SimplexEncoding,
    n_samples: usize,
    rng: &mut R,
) -> Result<ScoreVector>
where
    F: FnOnce(&[Record]) -> Result<Vec<ScoreVector>>,
    R: Rng + ?Sized,
{
    let n = if enc.is_degenerate() { 1 } else { n_samples.max(1) };
    let records = sample_records(template, enc, n, rng);
    let scores = f(&records)?;
    let k = scores[0].len();
    let mut mean = vec![0.0; k];
    for s in &scores {
        for (m, v) in mean.iter_mut().zip(&s.0) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= scores.len() as f64);
    Ok(ScoreVector(mean))
}

/// Euclidean projection onto `{w >= 0, sum w = 1}` by sorting and thresholding.
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: &[f64], b: &[f64]) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn projection_examples() {
        assert_close(&simplex_project(&[0.2, 0.3, 0.5]), &[0.2, 0.3, 0.5]);
        assert_close(&simplex_project(&[2.0, 0.0]), &[1.0, 0.0]);
        // KKT: theta = 0.1 on the support {0, 1}, third coordinate clipped
        assert_close(&simplex_project(&[0.6, 0.6, 0.0]), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn corners_evaluate_exactly() {
        let enc = SimplexEncoding::corners(&[0.3, 2.0], &[1], &[3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = |rs: &[Record]| Ok(rs.iter().map(|r| ScoreVector(vec![r[0] + r[1], 0.1])).collect());
        let s = ssa_evaluate(f, &[0.3, 2.0], &enc, 17, &mut rng).unwrap();
        assert_eq!(s, ScoreVector(vec![2.3, 0.1]));
    }

    #[test]
    fn mixture_converges_to_expectation() {
        let enc = SimplexEncoding {
            features: vec![0],
            blocks: vec![vec![0.5, 0.5]],
        };
        let (sa, sb) = (1.0, -3.0);
        let f = |rs: &[Record]| {
            Ok(rs
                .iter()
                .map(|r| ScoreVector(vec![if r[0] == 0.0 { sa } else { sb }]))
                .collect())
        };
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let est = ssa_evaluate(f, &[0.0], &enc, n, &mut rng).unwrap().0[0];
        // Bernoulli(1/2) mixture: sd = |sa - sb| / 2
        let se = (sa - sb).abs() / 2.0 / (n as f64).sqrt();
        assert!((est - (sa + sb) / 2.0).abs() < 3.0 * se, "estimate {est}");
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let enc = SimplexEncoding {
            features: vec![0, 1],
            blocks: vec![vec![0.2, 0.8], vec![0.1, 0.3, 0.6]],
        };
        let f = |rs: &[Record]| Ok(rs.iter().map(|r| ScoreVector(vec![r[0] * 2.0 + r[1]])).collect());
        let a = ssa_evaluate(f, &[0.0, 0.0], &enc, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = ssa_evaluate(f, &[0.0, 0.0], &enc, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex_and_is_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..8)) {
            let p = simplex_project(&v);
            prop_assert!(p.iter().all(|&w| w >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let pp = simplex_project(&p);
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn projection_is_non_expansive(
            pair in (1usize..8).prop_flat_map(|n| (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            ))
        ) {
            let (u, v) = pair;
            let (pu, pv) = (simplex_project(&u), simplex_project(&v));
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(d(&pu, &pv) <= d(&u, &v) + 1e-12);
        }
    }
}
