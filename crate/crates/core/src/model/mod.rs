//! The black-box query contract.
//!
//! The explanation machinery only ever calls [`ModelHandle::predict_scores`];
//! it never sees gradients or model internals. The optional decision-path
//! capability is used by the evaluation harness only.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::Record;

mod forest;
mod remote;
mod tree;

pub use forest::{train_forest, ForestParams, RandomForest};
pub use remote::{remote_model, RemoteClassifier, ScoresRequest, ScoresResponse, REMOTE_CHUNK};
pub use tree::{train_cart, DecisionTree, Node, SplitRule, TreeParams};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-6;

/// One confidence score per class, in schema class order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the highest score; ties go to the lowest class index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.0.iter().enumerate() {
            if s > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Largest score among classes other than `class`.
    pub fn max_other(&self, class: usize) -> f64 {
        self.0
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != class)
            .map(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }
}

/// Score scale reported by built-in models.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreScale {
    /// `ln(max(p, PROB_FLOOR))`
    #[default]
    Log,
    Prob,
}

impl ScoreScale {
    pub fn apply(self, p: f64) -> f64 {
        match self {
            ScoreScale::Log => p.max(PROB_FLOOR).ln(),
            ScoreScale::Prob => p,
        }
    }
}

/// Anything that maps a batch of raw records to per-class scores.
pub trait Classifier: Send + Sync {
    fn n_classes(&self) -> usize;

    fn scores(&self, batch: &[Record]) -> Result<Vec<ScoreVector>>;

    /// Features tested along the record's decision path, if the model has one.
    fn decision_path(&self, _record: &[f64]) -> Option<Vec<usize>> {
        None
    }

    fn has_paths(&self) -> bool {
        false
    }
}

/// Shared, query-counting handle to a classifier.
///
/// Clones share the underlying model and the query counter.
#[derive(Clone)]
pub struct ModelHandle {
    inner: Arc<dyn Classifier>,
    queries: Arc<AtomicU64>,
}

impl fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelHandle")
            .field("n_classes", &self.inner.n_classes())
            .field("queries", &self.queries())
            .finish()
    }
}

impl ModelHandle {
    pub fn new<C: Classifier + 'static>(classifier: C) -> Self {
        Self::from_arc(Arc::new(classifier))
    }

    pub fn from_arc(inner: Arc<dyn Classifier>) -> Self {
        Self {
            inner,
            queries: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    /// Scores for every record in `batch`. Each record counts as one query.
    pub fn predict_scores(&self, batch: &[Record]) -> Result<Vec<ScoreVector>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        self.queries.fetch_add(batch.len() as u64, Ordering::Relaxed);
        let scores = self.inner.scores(batch)?;
        if scores.len() != batch.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} score vectors", batch.len()),
                got: format!("{}", scores.len()),
            });
        }
        let k = self.n_classes();
        for s in &scores {
            if s.len() != k {
                return Err(Error::ShapeMismatch {
                    expected: format!("{k} scores per record"),
                    got: format!("{}", s.len()),
                });
            }
            if s.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteScore);
            }
        }
        Ok(scores)
    }

    pub fn predict_one(&self, record: &[f64]) -> Result<ScoreVector> {
        Ok(self.predict_scores(&[record.to_vec()])?.remove(0))
    }

    pub fn predict_class(&self, record: &[f64]) -> Result<usize> {
        Ok(self.predict_one(record)?.argmax())
    }

    /// Total records queried through this handle (and its clones).
    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn has_paths(&self) -> bool {
        self.inner.has_paths()
    }

    pub fn decision_path(&self, record: &[f64]) -> Option<Vec<usize>> {
        self.inner.decision_path(record)
    }
}

/// Adapts a per-record scoring closure into a [`Classifier`].
pub struct FnClassifier<F> {
    n_classes: usize,
    score: F,
}

impl<F> FnClassifier<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(n_classes: usize, score: F) -> Self {
        Self { n_classes, score }
    }
}

impl<F> Classifier for FnClassifier<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn scores(&self, batch: &[Record]) -> Result<Vec<ScoreVector>> {
        Ok(batch.iter().map(|r| ScoreVector((self.score)(r))).collect())
    }
}

/// Model file contents for the built-in model families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BuiltinModel {
    Cart(DecisionTree),
    Forest(RandomForest),
}

impl BuiltinModel {
    pub fn into_handle(self) -> ModelHandle {
        match self {
            BuiltinModel::Cart(t) => ModelHandle::new(t),
            BuiltinModel::Forest(f) => ModelHandle::new(f),
        }
    }

    pub fn set_scale(&mut self, scale: ScoreScale) {
        match self {
            BuiltinModel::Cart(t) => t.scale = scale,
            BuiltinModel::Forest(f) => f.scale = scale,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(ScoreVector(vec![1.0, 1.0, 0.0]).argmax(), 0);
        assert_eq!(ScoreVector(vec![0.0, 2.0, 2.0]).argmax(), 1);
        assert_eq!(ScoreVector(vec![3.0, 2.0, 5.0]).max_other(2), 3.0);
    }

    #[test]
    fn log_scale_floors() {
        assert_eq!(ScoreScale::Log.apply(0.0), PROB_FLOOR.ln());
        assert_eq!(ScoreScale::Prob.apply(0.25), 0.25);
    }

    #[test]
    fn handle_counts_and_checks_shape() {
        let m = ModelHandle::new(FnClassifier::new(2, |r| vec![r[0], -r[0]]));
        let clone = m.clone();
        let out = m.predict_scores(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        assert!(out.iter().all(|s| *s == out[0]));
        clone.predict_one(&[2.0]).unwrap();
        assert_eq!(m.queries(), 4);

        let bad = ModelHandle::new(FnClassifier::new(2, |_| vec![0.0; 3]));
        assert!(matches!(bad.predict_one(&[0.0]), Err(Error::ShapeMismatch { .. })));
        let nan = ModelHandle::new(FnClassifier::new(2, |_| vec![f64::NAN, 0.0]));
        assert!(matches!(nan.predict_one(&[0.0]), Err(Error::NonFiniteScore)));
    }
}
