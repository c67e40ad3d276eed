//! Frequency map encoding of categorical features.
//!
//! The `k` values of a feature with counts `c_1..c_k` map to
//! `r_j = (c_max - c_j) / (c_max - 1)` in `[0, 1]`: the mode lands on 0 and
//! any value seen once lands on 1. Decoding rounds to the nearest `r_j`.

use serde::{Deserialize, Serialize};

use crate::schema::{value_counts, Dataset, FeatureKind, Schema};

/// Encoded position of each value given its count. Zero counts are treated
/// as one so every value stays inside `[0, 1]`.
pub fn frequency_codes(counts: &[u64]) -> Vec<f64> {
    let counts: Vec<u64> = counts.iter().map(|&c| c.max(1)).collect();
    let c_max = counts.iter().copied().max().unwrap_or(1);
    if c_max == 1 {
        return vec![0.0; counts.len()];
    }
    let denom = (c_max - 1) as f64;
    counts.iter().map(|&c| (c_max - c) as f64 / denom).collect()
}

/// One entry of the decode table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub code: f64,
    pub value: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmaColumn {
    pub feature: String,
    /// Position of the feature in the schema.
    pub index: usize,
    pub values: Vec<String>,
    pub counts: Vec<u64>,
    pub codes: Vec<f64>,
    /// Distinct codes in ascending order, each with the value it decodes to.
    pub levels: Vec<Level>,
}

impl FmaColumn {
    pub fn from_counts(feature: impl Into<String>, index: usize, values: Vec<String>, counts: Vec<u64>) -> Self {
        let counts: Vec<u64> = counts.iter().map(|&c| c.max(1)).collect();
        let codes = frequency_codes(&counts);
        let mut order: Vec<usize> = (0..values.len()).collect();
        // equal codes imply equal counts, so schema order settles collisions
        order.sort_by(|&a, &b| {
            codes[a]
                .total_cmp(&codes[b])
                .then(counts[b].cmp(&counts[a]))
                .then(a.cmp(&b))
        });
        let mut levels: Vec<Level> = Vec::new();
        for j in order {
            if levels.last().is_none_or(|l| l.code != codes[j]) {
                levels.push(Level {
                    code: codes[j],
                    value: j,
                });
            }
        }
        Self {
            feature: feature.into(),
            index,
            values,
            counts,
            codes,
            levels,
        }
    }

    pub fn encode(&self, value: usize) -> f64 {
        self.codes[value]
    }

    /// Step function: the value whose code is nearest to `x` (clamped to
    /// `[0, 1]`). At an exact midpoint the lower code wins, which is the
    /// higher-count value.
    pub fn decode(&self, x: f64) -> usize {
        let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
        for pair in self.levels.windows(2) {
            if x <= 0.5 * (pair[0].code + pair[1].code) {
                return pair[0].value;
            }
        }
        self.levels.last().expect("at least one level").value
    }

    /// Midpoints between consecutive distinct codes.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.levels.windows(2).map(|p| 0.5 * (p[0].code + p[1].code)).collect()
    }
}

/// Frequency maps for every categorical feature of a schema.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FmaMap {
    pub columns: Vec<FmaColumn>,
}

impl FmaMap {
    pub fn column(&self, feature: usize) -> Option<&FmaColumn> {
        self.columns.iter().find(|c| c.index == feature)
    }
}

/// Counts every categorical value in `ds`; values never observed get count 1.
pub fn fma_fit(ds: &Dataset, schema: &Schema) -> FmaMap {
    let columns = schema
        .features
        .iter()
        .enumerate()
        .filter_map(|(j, f)| match &f.kind {
            FeatureKind::Categorical { values } => Some(FmaColumn::from_counts(
                f.name.clone(),
                j,
                values.clone(),
                value_counts(ds, j, values.len()),
            )),
            FeatureKind::Real { .. } => None,
        })
        .collect();
    FmaMap { columns }
}
