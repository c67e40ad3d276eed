//! Bagged CART forest with per-split feature subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_cart, Classifier, DecisionTree, ScoreScale, ScoreVector, TreeParams};
use crate::error::{Error, Result};
use crate::schema::{Dataset, Record, Schema};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features per split; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_classes: usize,
    #[serde(default)]
    pub scale: ScoreScale,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Mean of member-tree leaf probabilities.
    pub fn probabilities(&self, record: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.probabilities(record)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// The `k` features most frequent on member-tree paths, `k` being the
    /// rounded mean per-tree path size. Ties go to the lower feature index.
    pub fn path_features(&self, record: &[f64]) -> Vec<usize> {
        let mut freq: Vec<(usize, usize)> = Vec::new();
        let mut total = 0usize;
        for t in &self.trees {
            let path = t.path_features(record);
            total += path.len();
            for f in path {
                match freq.iter_mut().find(|(g, _)| *g == f) {
                    Some((_, c)) => *c += 1,
                    None => freq.push((f, 1)),
                }
            }
        }
        let k = (total as f64 / self.trees.len().max(1) as f64).round() as usize;
        freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        freq.into_iter().take(k).map(|(f, _)| f).collect()
    }
}

impl Classifier for RandomForest {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn scores(&self, batch: &[Record]) -> Result<Vec<ScoreVector>> {
        Ok(batch
            .iter()
            .map(|r| ScoreVector(self.probabilities(r).into_iter().map(|p| self.scale.apply(p)).collect()))
            .collect())
    }

    fn decision_path(&self, record: &[f64]) -> Option<Vec<usize>> {
        Some(self.path_features(record))
    }

    fn has_paths(&self) -> bool {
        true
    }
}

/// Trains `n_trees` bootstrap-sampled trees; deterministic for a given seed
/// regardless of thread count.
pub fn train_forest(ds: &Dataset, schema: &Schema, params: &ForestParams, seed: u64) -> Result<RandomForest> {
    if ds.labels.is_none() {
        return Err(Error::Unlabeled);
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if params.n_trees == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    let d = schema.dim();
    let tree_params = TreeParams {
        max_depth: params.max_depth.unwrap_or(usize::MAX),
        min_leaf: params.min_leaf,
        max_features: Some(params.max_features.unwrap_or(((d as f64).sqrt() as usize).max(1))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..params.n_trees).map(|_| rng.gen()).collect();
    let n = ds.len();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let idx: Vec<usize> = (0..n).map(|_| r.gen_range(0..n)).collect();
            let mut tree = train_cart(&ds.subset(&idx), schema, &tree_params, r.gen())?;
            tree.scale = ScoreScale::Prob;
            Ok(tree)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForest {
        n_classes: schema.n_classes(),
        scale: ScoreScale::Log,
        trees,
    })
}
