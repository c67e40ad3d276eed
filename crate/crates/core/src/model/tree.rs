//! Binary CART classifier with Gini impurity.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Classifier, ScoreScale, ScoreVector};
use crate::error::{Error, Result};
use crate::schema::{Dataset, Record, Schema};

/// Split test; records satisfying the rule go to the left child.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SplitRule {
    LessEq {
        threshold: f64,
    },
    /// One value against the rest (value index).
    Equals {
        value: usize,
    },
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, v: f64) -> bool {
        match *self {
            SplitRule::LessEq { threshold } => v <= threshold,
            SplitRule::Equals { value } => v == value as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        counts: Vec<u64>,
        /// Log of the Laplace-smoothed class frequencies.
        log_probs: Vec<f64>,
    },
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
}

impl Node {
    /// Leaf with Laplace-smoothed probabilities from class counts.
    pub fn leaf(counts: Vec<u64>) -> Self {
        let n: u64 = counts.iter().sum();
        let k = counts.len() as f64;
        let log_probs = counts
            .iter()
            .map(|&c| ((c as f64 + 1.0) / (n as f64 + k)).ln())
            .collect();
        Node::Leaf { counts, log_probs }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features sampled per split; `None` considers all of them.
    #[serde(default)]
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 5,
            min_leaf: 1,
            max_features: None,
        }
    }
}

/// A trained tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_classes: usize,
    #[serde(default)]
    pub scale: ScoreScale,
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn from_nodes(n_classes: usize, nodes: Vec<Node>) -> Self {
        Self {
            n_classes,
            scale: ScoreScale::Log,
            nodes,
        }
    }

    fn leaf_of(&self, record: &[f64]) -> &Node {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    i = if rule.goes_left(record[*feature]) {
                        *left
                    } else {
                        *right
                    }
                }
                leaf => return leaf,
            }
        }
    }

    /// Class probabilities of the leaf the record falls into.
    pub fn probabilities(&self, record: &[f64]) -> Vec<f64> {
        match self.leaf_of(record) {
            Node::Leaf { log_probs, .. } => log_probs.iter().map(|lp| lp.exp()).collect(),
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Features tested on the record's root-to-leaf path, first occurrence order.
    pub fn path_features(&self, record: &[f64]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut i = 0;
        while let Node::Split {
            feature,
            rule,
            left,
            right,
        } = &self.nodes[i]
        {
            if !out.contains(feature) {
                out.push(*feature);
            }
            i = if rule.goes_left(record[*feature]) {
                *left
            } else {
                *right
            };
        }
        out
    }

    /// Length in splits of the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn score(&self, record: &[f64]) -> ScoreVector {
        match self.leaf_of(record) {
            Node::Leaf { log_probs, .. } => ScoreVector(match self.scale {
                ScoreScale::Log => log_probs.iter().map(|&lp| lp.max(super::PROB_FLOOR.ln())).collect(),
                ScoreScale::Prob => log_probs.iter().map(|lp| lp.exp()).collect(),
            }),
            Node::Split { .. } => unreachable!(),
        }
    }
}

impl Classifier for DecisionTree {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn scores(&self, batch: &[Record]) -> Result<Vec<ScoreVector>> {
        Ok(batch.iter().map(|r| self.score(r)).collect())
    }

    fn decision_path(&self, record: &[f64]) -> Option<Vec<usize>> {
        Some(self.path_features(record))
    }

    fn has_paths(&self) -> bool {
        true
    }
}

/// Trains a Gini CART on a labelled dataset.
///
/// Real features split on midpoints between consecutive distinct values;
/// categorical features split one value against the rest. `seed` only matters
/// when `params.max_features` subsamples candidate features.
pub fn train_cart(ds: &Dataset, schema: &Schema, params: &TreeParams, seed: u64) -> Result<DecisionTree> {
    let labels = ds.labels.as_ref().ok_or(Error::Unlabeled)?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if params.max_depth == 0 {
        return Err(Error::Config("max_depth must be at least 1".into()));
    }
    let mut builder = Builder {
        rows: &ds.rows,
        labels,
        categorical: schema.features.iter().map(|f| f.is_categorical()).collect(),
        n_classes: schema.n_classes(),
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
    };
    let all: Vec<usize> = (0..ds.len()).collect();
    builder.grow(all, 0);
    Ok(DecisionTree {
        n_classes: schema.n_classes(),
        scale: ScoreScale::Log,
        nodes: builder.nodes,
    })
}

struct Builder<'a> {
    rows: &'a [Record],
    labels: &'a [usize],
    categorical: Vec<bool>,
    n_classes: usize,
    params: &'a TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct Candidate {
    impurity: f64,
    feature: usize,
    rule: SplitRule,
}

/// `n * gini` for a count vector, i.e. `n - sum(c^2) / n`.
fn weighted_gini(counts: &[u64], n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<u64> {
        let mut c = vec![0u64; self.n_classes];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let id = self.nodes.len();
        self.nodes.push(Node::leaf(counts.clone()));

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf.max(1) {
            return id;
        }
        let parent = weighted_gini(&counts, idx.len() as u64);
        let Some(best) = self.best_split(&idx) else {
            return id;
        };
        if best.impurity >= parent - 1e-12 {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| best.rule.goes_left(self.rows[i][best.feature]));
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            rule: best.rule,
            left,
            right,
        };
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.categorical.len();
        match self.params.max_features {
            Some(m) if m < d => {
                let mut f = sample(&mut self.rng, d, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        for feature in self.candidate_features() {
            let found = if self.categorical[feature] {
                self.best_categorical(idx, feature)
            } else {
                self.best_threshold(idx, feature)
            };
            if let Some(c) = found {
                if best.as_ref().is_none_or(|b| c.impurity < b.impurity) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn best_threshold(&self, idx: &[usize], feature: usize) -> Option<Candidate> {
        let mut sorted: Vec<usize> = idx.to_vec();
        sorted.sort_by(|&a, &b| self.rows[a][feature].total_cmp(&self.rows[b][feature]));
        let total = self.counts(idx);
        let n = sorted.len();
        let min_leaf = self.params.min_leaf.max(1);
        let mut left = vec![0u64; self.n_classes];
        let mut best: Option<Candidate> = None;
        for pos in 0..n - 1 {
            left[self.labels[sorted[pos]]] += 1;
            let v = self.rows[sorted[pos]][feature];
            let next = self.rows[sorted[pos + 1]][feature];
            if v == next {
                continue;
            }
            let nl = pos + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right: Vec<u64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let impurity = weighted_gini(&left, nl as u64) + weighted_gini(&right, nr as u64);
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mut threshold = 0.5 * (v + next);
                if threshold >= next {
                    threshold = v;
                }
                best = Some(Candidate {
                    impurity,
                    feature,
                    rule: SplitRule::LessEq { threshold },
                });
            }
        }
        best
    }

    fn best_categorical(&self, idx: &[usize], feature: usize) -> Option<Candidate> {
        let total = self.counts(idx);
        let n = idx.len() as u64;
        let min_leaf = self.params.min_leaf.max(1) as u64;
        let mut per_value: std::collections::BTreeMap<usize, Vec<u64>> = Default::default();
        for &i in idx {
            per_value
                .entry(self.rows[i][feature] as usize)
                .or_insert_with(|| vec![0; self.n_classes])[self.labels[i]] += 1;
        }
        let mut best: Option<Candidate> = None;
        for (value, left) in per_value {
            let nl: u64 = left.iter().sum();
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right: Vec<u64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let impurity = weighted_gini(&left, nl) + weighted_gini(&right, nr);
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                best = Some(Candidate {
                    impurity,
                    feature,
                    rule: SplitRule::Equals { value },
                });
            }
        }
        best
    }
}
