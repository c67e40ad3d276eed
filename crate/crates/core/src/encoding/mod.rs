//! Continuous search space for mixed real/categorical records.
//!
//! Real features are mapped affinely from `[lo, hi]` to `[0, 1]`;
//! categorical features use their frequency-map codes. Every model query
//! goes through [`EncodedSpace::decode`], which rounds categorical
//! coordinates to the nearest code.

mod fma;
mod simplex;

pub use fma::{fma_fit, frequency_codes, FmaColumn, FmaMap, Level};
pub use simplex::{sample_records, simplex_project, ssa_evaluate, SimplexEncoding};

use crate::error::{Error, Result};
use crate::schema::{FeatureKind, Record, Schema};

#[derive(Clone, Debug, PartialEq)]
pub enum Axis {
    Real { lo: f64, hi: f64 },
    Categorical(FmaColumn),
}

impl Axis {
    pub fn is_categorical(&self) -> bool {
        matches!(self, Axis::Categorical(_))
    }

    pub fn encode(&self, raw: f64) -> f64 {
        match self {
            Axis::Real { lo, hi } if hi > lo => (raw - lo) / (hi - lo),
            Axis::Real { .. } => 0.0,
            Axis::Categorical(col) => col.encode(raw as usize),
        }
    }

    /// Reals are mapped back without clamping; categoricals round to a code.
    pub fn decode(&self, x: f64) -> f64 {
        match self {
            Axis::Real { lo, hi } if hi > lo => lo + x * (hi - lo),
            Axis::Real { lo, .. } => *lo,
            Axis::Categorical(col) => col.decode(x) as f64,
        }
    }
}

/// The encoded space plus base values and importance scales.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSpace {
    axes: Vec<Axis>,
    base: Vec<f64>,
    base_raw: Record,
    /// Standard deviation per feature (raw units for reals, encoded for
    /// categoricals); zero deviations are replaced by one.
    scales: Vec<f64>,
    names: Vec<String>,
}

impl EncodedSpace {
    /// Requires a schema with ranges and base values filled in.
    pub fn new(schema: &Schema, fma: &FmaMap) -> Result<Self> {
        let mut axes = Vec::with_capacity(schema.dim());
        for (j, f) in schema.features.iter().enumerate() {
            axes.push(match &f.kind {
                FeatureKind::Real { range } => {
                    let (lo, hi) = range.ok_or_else(|| Error::Schema(format!("feature `{}` has no range", f.name)))?;
                    Axis::Real { lo, hi }
                }
                FeatureKind::Categorical { values } => {
                    let col = fma
                        .column(j)
                        .ok_or_else(|| Error::Schema(format!("no frequency map for `{}`", f.name)))?;
                    if col.values != *values {
                        return Err(Error::Schema(format!(
                            "frequency map for `{}` does not match schema",
                            f.name
                        )));
                    }
                    Axis::Categorical(col.clone())
                }
            });
        }
        let base_raw = schema.base_record()?;
        let base = axes.iter().zip(&base_raw).map(|(a, &b)| a.encode(b)).collect();
        let scales = schema
            .features
            .iter()
            .map(|f| match f.std {
                Some(s) if s > 0.0 => s,
                _ => 1.0,
            })
            .collect();
        Ok(Self {
            axes,
            base,
            base_raw,
            scales,
            names: schema.features.iter().map(|f| f.name.clone()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Encoded base vector.
    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn base_raw(&self) -> &[f64] {
        &self.base_raw
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn encode(&self, record: &[f64]) -> Result<Vec<f64>> {
        if record.len() != self.dim() {
            return Err(Error::InvalidRecord(format!(
                "expected {} cells, got {}",
                self.dim(),
                record.len()
            )));
        }
        if record.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord("non-finite cell".into()));
        }
        Ok(self.axes.iter().zip(record).map(|(a, &v)| a.encode(v)).collect())
    }

    pub fn decode(&self, x: &[f64]) -> Record {
        self.axes.iter().zip(x).map(|(a, &v)| a.decode(v)).collect()
    }

    /// Rounds categorical coordinates onto their codes; reals pass through.
    pub fn snap(&self, x: &[f64]) -> Vec<f64> {
        self.axes
            .iter()
            .zip(x)
            .map(|(a, &v)| match a {
                Axis::Real { .. } => v,
                Axis::Categorical(col) => col.encode(col.decode(v)),
            })
            .collect()
    }

    pub fn categorical_features(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.axes[j].is_categorical()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{complete_schema, Dataset, FeatureSpec};

    fn setup() -> (Schema, Dataset, EncodedSpace) {
        let schema = Schema::new(
            vec![
                FeatureSpec::real("r").with_range(0.0, 10.0),
                FeatureSpec::categorical("c", ["A", "B", "C"]),
                FeatureSpec::real("flat"),
            ],
            "t",
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let mut rows = Vec::new();
        for i in 0..18 {
            let c = if i < 11 {
                0.0
            } else if i < 17 {
                1.0
            } else {
                2.0
            };
            rows.push(vec![i as f64 * 0.5, c, 3.0]);
        }
        let ds = Dataset::new(rows, None);
        let schema = complete_schema(&ds, &schema).unwrap();
        let space = EncodedSpace::new(&schema, &fma_fit(&ds, &schema)).unwrap();
        (schema, ds, space)
    }

    #[test]
    fn affine_and_degenerate_axes() {
        let (_, _, space) = setup();
        let x = space.encode(&[7.0, 1.0, 3.0]).unwrap();
        assert!((x[0] - 0.7).abs() < 1e-15);
        assert_eq!(x[1], 0.5);
        assert_eq!(x[2], 0.0);
        assert_eq!(space.decode(&x), vec![7.0, 1.0, 3.0]);
    }

    #[test]
    fn training_records_round_trip() {
        let (_, ds, space) = setup();
        for r in &ds.rows {
            let back = space.decode(&space.encode(r).unwrap());
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn base_and_scales() {
        let (schema, _, space) = setup();
        assert_eq!(space.base()[1], 0.0);
        assert_eq!(space.scales()[2], 1.0);
        assert_eq!(Some(space.scales()[0]), schema.features[0].std);
        assert_eq!(space.snap(&[0.33, 0.6, 0.1]), vec![0.33, 0.5, 0.1]);
    }

    #[test]
    fn rejects_bad_records() {
        let (_, _, space) = setup();
        assert!(space.encode(&[1.0, 0.0]).is_err());
        assert!(space.encode(&[f64::NAN, 0.0, 3.0]).is_err());
    }
}
