//! Feature metadata, dataset ingestion and per-feature statistics.
//!
//! Records are stored as `Vec<f64>` in schema order. Real features hold their
//! raw value; categorical features hold the index of the value in
//! [`FeatureKind::Categorical::values`]. Conversion to the external cell
//! representation (numbers and strings) goes through [`Schema::to_cells`] and
//! [`Schema::from_cells`].

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::encoding::frequency_codes;
use crate::error::{Error, Result};
use crate::Provenance;

/// A record in schema order. Categorical cells hold value indices.
pub type Record = Vec<f64>;

/// External representation of one cell: reals as numbers, categoricals as strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Number(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Number(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureKind {
    /// Real-valued feature; `range` is `[lo, hi]` in raw units once known.
    Real { range: Option<(f64, f64)> },
    /// Categorical feature with an ordered list of distinct values.
    Categorical { values: Vec<String> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Base value: raw value (real) or value index (categorical).
    pub base: Option<f64>,
    /// Population standard deviation (categoricals: of the frequency-encoded column).
    pub std: Option<f64>,
    /// Raw value substitutions applied at ingestion, `(from, to)`.
    pub substitutions: Vec<(f64, f64)>,
}

impl FeatureSpec {
    pub fn real(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Real { range: None },
            base: None,
            std: None,
            substitutions: Vec::new(),
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical {
                values: values.into_iter().map(Into::into).collect(),
            },
            base: None,
            std: None,
            substitutions: Vec::new(),
        }
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        if let FeatureKind::Real { range } = &mut self.kind {
            *range = Some((lo, hi));
        }
        self
    }

    pub fn with_base(mut self, base: f64) -> Self {
        self.base = Some(base);
        self
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    /// Number of categorical values (0 for real features).
    pub fn cardinality(&self) -> usize {
        match &self.kind {
            FeatureKind::Categorical { values } => values.len(),
            FeatureKind::Real { .. } => 0,
        }
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        match self.kind {
            FeatureKind::Real { range } => range,
            FeatureKind::Categorical { .. } => None,
        }
    }

    fn value_index(&self, text: &str) -> Option<usize> {
        match &self.kind {
            FeatureKind::Categorical { values } => values.iter().position(|v| v == text),
            FeatureKind::Real { .. } => None,
        }
    }

    fn substitute(&self, v: f64) -> f64 {
        self.substitutions
            .iter()
            .find(|(from, _)| *from == v)
            .map_or(v, |(_, to)| *to)
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Schema(format!("feature `{}`: {msg}", self.name)));
        match &self.kind {
            FeatureKind::Real { range } => {
                if let Some((lo, hi)) = range {
                    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                        return err(format!("invalid range [{lo}, {hi}]"));
                    }
                    if let Some(b) = self.base {
                        if b < *lo || b > *hi {
                            return err(format!("base {b} outside range [{lo}, {hi}]"));
                        }
                    }
                }
                if let Some(b) = self.base {
                    if !b.is_finite() {
                        return err("base is not finite".into());
                    }
                }
            }
            FeatureKind::Categorical { values } => {
                if values.is_empty() {
                    return err("no categorical values".into());
                }
                let distinct: HashSet<&String> = values.iter().collect();
                if distinct.len() != values.len() {
                    return err("categorical values are not distinct".into());
                }
                if let Some(b) = self.base {
                    if b.fract() != 0.0 || b < 0.0 || b as usize >= values.len() {
                        return err(format!("base index {b} out of range"));
                    }
                }
            }
        }
        if let Some(s) = self.std {
            if !(s >= 0.0 && s.is_finite()) {
                return err(format!("invalid std {s}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    pub target: String,
    pub classes: Vec<String>,
    pub provenance: Option<Provenance>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>, target: impl Into<String>, classes: Vec<String>) -> Result<Self> {
        let schema = Self {
            features,
            target: target.into(),
            classes,
            provenance: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema has no features".into()));
        }
        if self.classes.len() < 2 {
            return Err(Error::Schema("at least two classes are required".into()));
        }
        let mut names = HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            f.validate()?;
        }
        let classes: HashSet<&String> = self.classes.iter().collect();
        if classes.len() != self.classes.len() {
            return Err(Error::Schema("class labels are not distinct".into()));
        }
        Ok(())
    }

    /// Number of features.
    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    /// Base values in record form; fails if any base is still unknown.
    pub fn base_record(&self) -> Result<Record> {
        self.features
            .iter()
            .map(|f| {
                f.base
                    .ok_or_else(|| Error::Schema(format!("feature `{}` has no base value", f.name)))
            })
            .collect()
    }

    pub fn check_record(&self, record: &[f64]) -> Result<()> {
        if record.len() != self.dim() {
            return Err(Error::InvalidRecord(format!(
                "record has {} cells, schema has {} features",
                record.len(),
                self.dim()
            )));
        }
        for (f, &v) in self.features.iter().zip(record) {
            match &f.kind {
                FeatureKind::Real { .. } if !v.is_finite() => {
                    return Err(Error::InvalidRecord(format!("`{}` is not finite", f.name)));
                }
                FeatureKind::Categorical { values } if v.fract() != 0.0 || v < 0.0 || v as usize >= values.len() => {
                    return Err(Error::InvalidRecord(format!(
                        "`{}` holds invalid value index {v}",
                        f.name
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_cells(&self, record: &[f64]) -> Vec<Cell> {
        self.features
            .iter()
            .zip(record)
            .map(|(f, &v)| match &f.kind {
                FeatureKind::Real { .. } => Cell::Number(v),
                FeatureKind::Categorical { values } => Cell::Text(values[v as usize].clone()),
            })
            .collect()
    }

    pub fn from_cells(&self, cells: &[Cell]) -> Result<Record> {
        if cells.len() != self.dim() {
            return Err(Error::InvalidRecord(format!(
                "expected {} cells, got {}",
                self.dim(),
                cells.len()
            )));
        }
        self.features
            .iter()
            .zip(cells)
            .map(|(f, cell)| match (&f.kind, cell) {
                (FeatureKind::Real { .. }, Cell::Number(v)) if v.is_finite() => Ok(*v),
                (FeatureKind::Categorical { .. }, c) => {
                    let text = c.to_string();
                    f.value_index(&text)
                        .map(|i| i as f64)
                        .ok_or_else(|| Error::InvalidRecord(format!("unknown value `{text}` for `{}`", f.name)))
                }
                _ => Err(Error::InvalidRecord(format!("bad cell {cell:?} for `{}`", f.name))),
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Record>,
    /// Class indices into [`Schema::classes`], when the target column is present.
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(rows: Vec<Record>, labels: Option<Vec<usize>>) -> Self {
        Self { rows, labels }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows selected by index, labels carried along.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[j])
    }
}

/// Parses a UTF-8 CSV with a header row into a [`Dataset`].
///
/// Row numbers in errors count data rows from 1.
pub fn ingest_csv(bytes: &[u8], schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv {
            row: 0,
            message: e.to_string(),
        })?
        .clone();

    let mut target_col = None;
    let mut columns = vec![None; schema.dim()];
    for (col, name) in headers.iter().enumerate() {
        if name == schema.target {
            target_col = Some(col);
        } else if let Some(j) = schema.feature_index(name) {
            columns[j] = Some(col);
        } else {
            return Err(Error::UnexpectedColumn(name.to_string()));
        }
    }
    let columns = columns
        .into_iter()
        .zip(&schema.features)
        .map(|(c, f)| c.ok_or_else(|| Error::MissingColumn(f.name.clone())))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut labels = target_col.map(|_| Vec::new());
    for (i, result) in reader.records().enumerate() {
        let row = i + 1;
        let rec = result.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        let mut record = Vec::with_capacity(schema.dim());
        for (f, &col) in schema.features.iter().zip(&columns) {
            let text = rec.get(col).unwrap_or("");
            if text.is_empty() {
                return Err(Error::MissingValue {
                    row,
                    feature: f.name.clone(),
                });
            }
            let value = match &f.kind {
                FeatureKind::Real { .. } => {
                    let v: f64 = text.parse().map_err(|_| Error::NonFinite {
                        row,
                        feature: f.name.clone(),
                        value: text.to_string(),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            row,
                            feature: f.name.clone(),
                            value: text.to_string(),
                        });
                    }
                    f.substitute(v)
                }
                FeatureKind::Categorical { .. } => f.value_index(text).ok_or_else(|| Error::UnknownCategory {
                    row,
                    feature: f.name.clone(),
                    value: text.to_string(),
                })? as f64,
            };
            record.push(value);
        }
        if let (Some(col), Some(labels)) = (target_col, labels.as_mut()) {
            let text = rec.get(col).unwrap_or("");
            let class = schema.class_index(text).ok_or_else(|| Error::UnknownClass {
                row,
                label: text.to_string(),
            })?;
            labels.push(class);
        }
        rows.push(record);
    }
    Ok(Dataset { rows, labels })
}

/// Writes a dataset back to CSV, target column last when labels exist.
pub fn serialize_csv(ds: &Dataset, schema: &Schema) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = schema.feature_names();
    if ds.labels.is_some() {
        header.push(&schema.target);
    }
    let csv_err = |e: csv::Error| Error::Csv {
        row: 0,
        message: e.to_string(),
    };
    writer.write_record(&header).map_err(csv_err)?;
    for (i, row) in ds.rows.iter().enumerate() {
        let mut fields: Vec<String> = schema.to_cells(row).iter().map(Cell::to_string).collect();
        if let Some(labels) = &ds.labels {
            fields.push(schema.classes[labels[i]].clone());
        }
        writer.write_record(&fields).map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Median with the mean-of-middle-pair rule for even lengths.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-value counts of a categorical column.
pub fn value_counts(ds: &Dataset, feature: usize, cardinality: usize) -> Vec<u64> {
    let mut counts = vec![0u64; cardinality];
    for v in ds.column(feature) {
        counts[v as usize] += 1;
    }
    counts
}

/// Index of the most frequent value; ties go to the earliest declared value.
pub fn mode(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Fills missing base values: column median for reals, column mode for categoricals.
pub fn estimate_base_values(ds: &Dataset, schema: &Schema) -> Result<Schema> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut out = schema.clone();
    for (j, f) in out.features.iter_mut().enumerate() {
        if f.base.is_some() {
            continue;
        }
        f.base = Some(match &f.kind {
            FeatureKind::Real { .. } => median(&mut ds.column(j).collect::<Vec<_>>()),
            FeatureKind::Categorical { values } => mode(&value_counts(ds, j, values.len())) as f64,
        });
    }
    out.validate()?;
    Ok(out)
}

/// Fills observed real ranges and population standard deviations.
///
/// User-specified ranges are kept. Categorical deviations are taken over the
/// frequency-encoded column.
pub fn feature_stats(ds: &Dataset, schema: &Schema) -> Result<Schema> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut out = schema.clone();
    for (j, f) in out.features.iter_mut().enumerate() {
        let column: Vec<f64> = match &mut f.kind {
            FeatureKind::Real { range } => {
                let col: Vec<f64> = ds.column(j).collect();
                if range.is_none() {
                    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    *range = Some((lo, hi));
                }
                col
            }
            FeatureKind::Categorical { values } => {
                let counts = value_counts(ds, j, values.len());
                let codes = frequency_codes(&counts);
                ds.column(j).map(|v| codes[v as usize]).collect()
            }
        };
        if f.std.is_none() {
            f.std = Some(population_std(&column));
        }
    }
    out.validate()?;
    Ok(out)
}

/// Convenience: [`estimate_base_values`] followed by [`feature_stats`].
pub fn complete_schema(ds: &Dataset, schema: &Schema) -> Result<Schema> {
    feature_stats(ds, &estimate_base_values(ds, schema)?)
}

pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

// Serde wire format.

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawKind {
    Real,
    Categorical,
}

#[derive(Serialize, Deserialize)]
struct RawFeature {
    name: String,
    kind: RawKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    std: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    substitutions: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    features: Vec<RawFeature>,
    target: String,
    classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

impl TryFrom<RawSchema> for Schema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        let features = raw
            .features
            .into_iter()
            .map(|rf| {
                let kind = match rf.kind {
                    RawKind::Real => FeatureKind::Real {
                        range: rf.range.map(|[lo, hi]| (lo, hi)),
                    },
                    RawKind::Categorical => FeatureKind::Categorical {
                        values: rf.values.ok_or_else(|| {
                            Error::Schema(format!("categorical feature `{}` lists no values", rf.name))
                        })?,
                    },
                };
                let base = match (&kind, rf.base) {
                    (_, None) => None,
                    (FeatureKind::Real { .. }, Some(Cell::Number(v))) => Some(v),
                    (FeatureKind::Categorical { values }, Some(cell)) => {
                        let text = cell.to_string();
                        let idx = values.iter().position(|v| *v == text).ok_or_else(|| {
                            Error::Schema(format!("base `{text}` of `{}` is not a declared value", rf.name))
                        })?;
                        Some(idx as f64)
                    }
                    (FeatureKind::Real { .. }, Some(Cell::Text(t))) => {
                        return Err(Error::Schema(format!("real feature `{}` has text base `{t}`", rf.name)))
                    }
                };
                Ok(FeatureSpec {
                    name: rf.name,
                    kind,
                    base,
                    std: rf.std,
                    substitutions: rf.substitutions.into_iter().map(|[a, b]| (a, b)).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let schema = Schema {
            features,
            target: raw.target,
            classes: raw.classes,
            provenance: raw.provenance,
        };
        schema.validate()?;
        Ok(schema)
    }
}

impl From<Schema> for RawSchema {
    fn from(s: Schema) -> Self {
        RawSchema {
            features: s
                .features
                .into_iter()
                .map(|f| {
                    let (kind, range, values, base) = match f.kind {
                        FeatureKind::Real { range } => (
                            RawKind::Real,
                            range.map(|(lo, hi)| [lo, hi]),
                            None,
                            f.base.map(Cell::Number),
                        ),
                        FeatureKind::Categorical { values } => {
                            let base = f.base.map(|b| Cell::Text(values[b as usize].clone()));
                            (RawKind::Categorical, None, Some(values), base)
                        }
                    };
                    RawFeature {
                        name: f.name,
                        kind,
                        range,
                        values,
                        base,
                        std: f.std,
                        substitutions: f.substitutions.into_iter().map(|(a, b)| [a, b]).collect(),
                    }
                })
                .collect(),
            target: s.target,
            classes: s.classes,
            provenance: s.provenance,
        }
    }
}
