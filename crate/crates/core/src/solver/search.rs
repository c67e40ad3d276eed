//! The two categorical-handling engines as search spaces for the FISTA loop.
//!
//! `FmaSearch` works in the encoded space directly: one coordinate per
//! feature, categoricals on their frequency codes. `SsaSearch` keeps reals as
//! single coordinates and expands each categorical feature into a block on
//! its probability simplex.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::projection::{clamp_pp_segment, project_pn_coord, sample_pn_coord, sample_pp_segment};
use super::Kind;
use crate::encoding::{simplex_project, ssa_evaluate, Axis, EncodedSpace, SimplexEncoding};
use crate::error::Result;
use crate::model::{ModelHandle, ScoreVector};
use crate::schema::Record;

pub(crate) trait Search {
    /// Input record in search coordinates.
    fn start(&self) -> &[f64];

    /// Centre of the elastic-net penalty: the base for PP, the input for PN.
    fn center(&self, kind: Kind) -> &[f64];

    /// Box used to clamp gradient probes.
    fn probe_bounds(&self) -> &[(f64, f64)];

    fn project(&self, kind: Kind, x: &mut [f64]);

    fn random_start(&self, kind: Kind, rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Scores at each point and the number of records queried.
    fn scores(&self, model: &ModelHandle, points: &[Vec<f64>], rng: &mut ChaCha8Rng)
        -> Result<(Vec<ScoreVector>, u64)>;

    /// Raw record represented by a point.
    fn record(&self, x: &[f64]) -> Record;

    /// Rounds categoricals to a single value. `None` if the rounded point
    /// leaves the feasible set.
    fn finalize(&self, kind: Kind, x: &[f64]) -> Option<Vec<f64>>;

    /// The point expressed in the frequency-map encoded space.
    fn encoded(&self, x: &[f64]) -> Vec<f64>;
}

fn probe_box(x0: &[f64]) -> Vec<(f64, f64)> {
    x0.iter().map(|&v| (v.min(0.0), v.max(1.0))).collect()
}

fn decode_real(axis: &Axis, x: f64, x0_enc: f64, x0_raw: f64, b_enc: f64, b_raw: f64) -> f64 {
    // exact raw values where the coordinate sits on the input or the base
    if x == x0_enc {
        x0_raw
    } else if x == b_enc {
        b_raw
    } else {
        axis.decode(x)
    }
}

fn coord_feasible(kind: Kind, x: f64, x0: f64, b: f64, (lo, hi): (f64, f64)) -> bool {
    let inside = (lo..=hi).contains(&x);
    match kind {
        Kind::Pp => inside && x >= x0.min(b) && x <= x0.max(b),
        Kind::Pn => inside && (x - b).abs() >= (x0 - b).abs(),
    }
}

pub(crate) struct FmaSearch<'a> {
    space: &'a EncodedSpace,
    x0_raw: Record,
    x0: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

impl<'a> FmaSearch<'a> {
    pub fn new(space: &'a EncodedSpace, x0_raw: &[f64]) -> Result<Self> {
        let x0 = space.encode(x0_raw)?;
        Ok(Self {
            space,
            x0_raw: x0_raw.to_vec(),
            bounds: probe_box(&x0),
            x0,
        })
    }
}

impl Search for FmaSearch<'_> {
    fn start(&self) -> &[f64] {
        &self.x0
    }

    fn center(&self, kind: Kind) -> &[f64] {
        match kind {
            Kind::Pp => self.space.base(),
            Kind::Pn => &self.x0,
        }
    }

    fn probe_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn project(&self, kind: Kind, x: &mut [f64]) {
        let b = self.space.base();
        for (i, xi) in x.iter_mut().enumerate() {
            let (lo, hi) = self.bounds[i];
            *xi = match kind {
                Kind::Pp => clamp_pp_segment(*xi, self.x0[i], b[i], lo, hi),
                Kind::Pn => project_pn_coord(*xi, self.x0[i], b[i], lo, hi),
            };
        }
    }

    fn random_start(&self, kind: Kind, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let b = self.space.base();
        (0..self.x0.len())
            .map(|i| {
                let (lo, hi) = self.bounds[i];
                match kind {
                    Kind::Pp => sample_pp_segment(self.x0[i], b[i], lo, hi, rng),
                    Kind::Pn => sample_pn_coord(self.x0[i], b[i], lo, hi, rng),
                }
            })
            .collect()
    }

    fn scores(
        &self,
        model: &ModelHandle,
        points: &[Vec<f64>],
        _rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<ScoreVector>, u64)> {
        let records: Vec<Record> = points.iter().map(|p| self.record(p)).collect();
        Ok((model.predict_scores(&records)?, records.len() as u64))
    }

    fn record(&self, x: &[f64]) -> Record {
        let (b, b_raw) = (self.space.base(), self.space.base_raw());
        self.space
            .axes()
            .iter()
            .enumerate()
            .map(|(i, axis)| match axis {
                Axis::Real { .. } => decode_real(axis, x[i], self.x0[i], self.x0_raw[i], b[i], b_raw[i]),
                Axis::Categorical(_) if x[i] == self.x0[i] => self.x0_raw[i],
                Axis::Categorical(_) => axis.decode(x[i]),
            })
            .collect()
    }

    fn finalize(&self, kind: Kind, x: &[f64]) -> Option<Vec<f64>> {
        let snapped = self.space.snap(x);
        let b = self.space.base();
        (0..snapped.len())
            .all(|i| coord_feasible(kind, snapped[i], self.x0[i], b[i], self.bounds[i]))
            .then_some(snapped)
    }

    fn encoded(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

#[derive(Clone, Debug)]
enum Slot {
    Real { feature: usize, coord: usize },
    Block { feature: usize, start: usize, len: usize },
}

pub(crate) struct SsaSearch<'a> {
    space: &'a EncodedSpace,
    samples: usize,
    slots: Vec<Slot>,
    x0_raw: Record,
    x0: Vec<f64>,
    base: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

impl<'a> SsaSearch<'a> {
    pub fn new(space: &'a EncodedSpace, x0_raw: &[f64], samples: usize) -> Result<Self> {
        let enc = space.encode(x0_raw)?;
        let mut slots = Vec::new();
        let (mut x0, mut base, mut bounds) = (Vec::new(), Vec::new(), Vec::new());
        for (j, axis) in space.axes().iter().enumerate() {
            match axis {
                Axis::Real { .. } => {
                    slots.push(Slot::Real {
                        feature: j,
                        coord: x0.len(),
                    });
                    x0.push(enc[j]);
                    base.push(space.base()[j]);
                    bounds.push((enc[j].min(0.0), enc[j].max(1.0)));
                }
                Axis::Categorical(col) => {
                    let len = col.values.len();
                    let start = x0.len();
                    slots.push(Slot::Block { feature: j, start, len });
                    for v in 0..len {
                        x0.push(if v == x0_raw[j] as usize { 1.0 } else { 0.0 });
                        base.push(if v == space.base_raw()[j] as usize { 1.0 } else { 0.0 });
                        bounds.push((0.0, 1.0));
                    }
                }
            }
        }
        Ok(Self {
            space,
            samples,
            slots,
            x0_raw: x0_raw.to_vec(),
            x0,
            base,
            bounds,
        })
    }

    /// Values a block may put weight on: PP keeps the input and base values,
    /// PN may leave the input value only when it already equals the base.
    fn support(&self, kind: Kind, feature: usize, len: usize) -> Vec<usize> {
        let v0 = self.x0_raw[feature] as usize;
        let vb = self.space.base_raw()[feature] as usize;
        match kind {
            Kind::Pp if v0 == vb => vec![v0],
            Kind::Pp => vec![v0.min(vb), v0.max(vb)],
            Kind::Pn if v0 == vb => (0..len).collect(),
            Kind::Pn => vec![v0],
        }
    }

    fn block_argmax(block: &[f64]) -> usize {
        let mut best = 0;
        for (i, &w) in block.iter().enumerate() {
            if w > block[best] {
                best = i;
            }
        }
        best
    }

    fn template(&self, x: &[f64]) -> Record {
        let mut rec = vec![0.0; self.space.dim()];
        for slot in &self.slots {
            match *slot {
                Slot::Real { feature, coord } => {
                    let axis = &self.space.axes()[feature];
                    rec[feature] = decode_real(
                        axis,
                        x[coord],
                        self.x0[coord],
                        self.x0_raw[feature],
                        self.base[coord],
                        self.space.base_raw()[feature],
                    );
                }
                Slot::Block { feature, start, len } => {
                    rec[feature] = Self::block_argmax(&x[start..start + len]) as f64;
                }
            }
        }
        rec
    }
}

impl Search for SsaSearch<'_> {
    fn start(&self) -> &[f64] {
        &self.x0
    }

    fn center(&self, kind: Kind) -> &[f64] {
        match kind {
            Kind::Pp => &self.base,
            Kind::Pn => &self.x0,
        }
    }

    fn probe_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn project(&self, kind: Kind, x: &mut [f64]) {
        for slot in &self.slots {
            match *slot {
                Slot::Real { coord, .. } => {
                    let (lo, hi) = self.bounds[coord];
                    let (x0, b) = (self.x0[coord], self.base[coord]);
                    x[coord] = match kind {
                        Kind::Pp => clamp_pp_segment(x[coord], x0, b, lo, hi),
                        Kind::Pn => project_pn_coord(x[coord], x0, b, lo, hi),
                    };
                }
                Slot::Block { feature, start, len } => {
                    let support = self.support(kind, feature, len);
                    let sub: Vec<f64> = support.iter().map(|&v| x[start + v]).collect();
                    let p = simplex_project(&sub);
                    x[start..start + len].iter_mut().for_each(|w| *w = 0.0);
                    for (&v, w) in support.iter().zip(p) {
                        x[start + v] = w;
                    }
                }
            }
        }
    }

    fn random_start(&self, kind: Kind, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = vec![0.0; self.x0.len()];
        for slot in &self.slots {
            match *slot {
                Slot::Real { coord, .. } => {
                    let (lo, hi) = self.bounds[coord];
                    let (x0, b) = (self.x0[coord], self.base[coord]);
                    x[coord] = match kind {
                        Kind::Pp => sample_pp_segment(x0, b, lo, hi, rng),
                        Kind::Pn => sample_pn_coord(x0, b, lo, hi, rng),
                    };
                }
                Slot::Block { feature, start, len } => {
                    // uniform on the allowed face of the simplex
                    let support = self.support(kind, feature, len);
                    let draws: Vec<f64> = support.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
                    let total: f64 = draws.iter().sum();
                    for (&v, w) in support.iter().zip(draws) {
                        x[start + v] = if total > 0.0 {
                            w / total
                        } else {
                            1.0 / support.len() as f64
                        };
                    }
                }
            }
        }
        x
    }

    fn scores(
        &self,
        model: &ModelHandle,
        points: &[Vec<f64>],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<ScoreVector>, u64)> {
        let mut out = Vec::with_capacity(points.len());
        let mut queried = 0u64;
        for p in points {
            let mut features = Vec::new();
            let mut blocks = Vec::new();
            for slot in &self.slots {
                if let Slot::Block { feature, start, len } = *slot {
                    features.push(feature);
                    blocks.push(simplex_project(&p[start..start + len]));
                }
            }
            let enc = SimplexEncoding { features, blocks };
            let template = self.template(p);
            let s = ssa_evaluate(
                |records| {
                    queried += records.len() as u64;
                    model.predict_scores(records)
                },
                &template,
                &enc,
                self.samples,
                rng,
            )?;
            out.push(s);
        }
        Ok((out, queried))
    }

    fn record(&self, x: &[f64]) -> Record {
        self.template(x)
    }

    fn finalize(&self, kind: Kind, x: &[f64]) -> Option<Vec<f64>> {
        let mut snapped = x.to_vec();
        for slot in &self.slots {
            match *slot {
                Slot::Real { coord, .. } => {
                    if !coord_feasible(kind, x[coord], self.x0[coord], self.base[coord], self.bounds[coord]) {
                        return None;
                    }
                }
                Slot::Block { feature, start, len } => {
                    let v = Self::block_argmax(&x[start..start + len]);
                    if !self.support(kind, feature, len).contains(&v) {
                        return None;
                    }
                    for (i, w) in snapped[start..start + len].iter_mut().enumerate() {
                        *w = if i == v { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        Some(snapped)
    }

    fn encoded(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.space.dim()];
        for slot in &self.slots {
            match *slot {
                Slot::Real { feature, coord } => out[feature] = x[coord],
                Slot::Block { feature, start, len } => {
                    out[feature] = self.space.axes()[feature].encode(Self::block_argmax(&x[start..start + len]) as f64);
                }
            }
        }
        out
    }
}
