//! Evaluation of explanations against the model they explain.
//!
//! - CCP: percentage of parts whose record gets the class they promise.
//! - CFR: Spearman correlation between the explanation's feature ranking and
//!   a one-at-a-time ablation ranking.
//! - CFIP: overlap between the top-k explanation features and the decision
//!   path of the closest qualifying training row.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::EncodedSpace;
use crate::error::{Error, Result};
use crate::explainer::{rank_importances, Explanation, Part};
use crate::model::ModelHandle;
use crate::schema::{Dataset, Schema};
use crate::solver::Kind;
use crate::Provenance;

/// Average ranks starting at 1; tied values share the mean of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation; `None` for fewer than two points or a constant side.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Nonzero-importance features in ranking order.
fn active_features(part: &Part) -> Vec<usize> {
    rank_importances(&part.importances)
        .into_iter()
        .filter(|&i| part.importances[i] > 0.0)
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CcpResult {
    /// Over explanations that carry the part.
    pub pp: Option<f64>,
    pub pn: Option<f64>,
    /// Over all explanations, counting missing parts as failures.
    pub pp_unconditional: Option<f64>,
    pub pn_unconditional: Option<f64>,
    pub n: usize,
    pub n_pp: usize,
    pub n_pn: usize,
}

fn percent(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub fn ccp(expls: &[Explanation], model: &ModelHandle, schema: &Schema) -> Result<CcpResult> {
    let mut out = CcpResult {
        n: expls.len(),
        ..Default::default()
    };
    for kind in [Kind::Pp, Kind::Pn] {
        let checks: Vec<bool> = expls
            .par_iter()
            .filter_map(|e| e.part(kind).map(|p| (e, p)))
            .map(|(e, p)| {
                let record = schema.from_cells(&p.record)?;
                Ok(kind.accepts(model.predict_class(&record)?, e.t0.index))
            })
            .collect::<Result<_>>()?;
        let hits = checks.iter().filter(|&&ok| ok).count();
        match kind {
            Kind::Pp => {
                out.n_pp = checks.len();
                out.pp = percent(hits, checks.len());
                out.pp_unconditional = percent(hits, expls.len());
            }
            Kind::Pn => {
                out.n_pn = checks.len();
                out.pn = percent(hits, checks.len());
                out.pn_unconditional = percent(hits, expls.len());
            }
        }
    }
    Ok(out)
}

/// Ranking correlation for one explanation part; `None` when fewer than two
/// features carry importance or either ranking is constant.
pub fn cfr_one(kind: Kind, expl: &Explanation, model: &ModelHandle, schema: &Schema) -> Result<Option<f64>> {
    let Some(part) = expl.part(kind) else {
        return Ok(None);
    };
    let top = active_features(part);
    if top.len() < 2 {
        return Ok(None);
    }
    let x0 = schema.from_cells(&expl.input)?;
    let (origin, restore, class) = match kind {
        Kind::Pp => (x0, schema.base_record()?, expl.t0.index),
        Kind::Pn => (schema.from_cells(&part.record)?, x0, part.predicted.index),
    };
    let records: Vec<_> = top
        .iter()
        .map(|&j| {
            let mut r = origin.clone();
            r[j] = restore[j];
            r
        })
        .collect();
    let retained: Vec<f64> = model.predict_scores(&records)?.iter().map(|s| s.get(class)).collect();
    let neg_importance: Vec<f64> = top.iter().map(|&j| -part.importances[j]).collect();
    Ok(spearman(&neg_importance, &retained))
}

/// Mean correlation and the number of explanations it averages.
pub fn cfr(kind: Kind, expls: &[Explanation], model: &ModelHandle, schema: &Schema) -> Result<(Option<f64>, usize)> {
    let values: Vec<Option<f64>> = expls
        .par_iter()
        .map(|e| cfr_one(kind, e, model, schema))
        .collect::<Result<_>>()?;
    let used: Vec<f64> = values.into_iter().flatten().collect();
    let mean = (!used.is_empty()).then(|| used.iter().sum::<f64>() / used.len() as f64);
    Ok((mean, used.len()))
}

/// Training rows pre-encoded and pre-classified for proxy search.
pub struct ProxyIndex {
    encoded: Vec<Vec<f64>>,
    predicted: Vec<usize>,
}

impl ProxyIndex {
    pub fn new(ds: &Dataset, model: &ModelHandle, space: &EncodedSpace) -> Result<Self> {
        let encoded = ds.rows.iter().map(|r| space.encode(r)).collect::<Result<_>>()?;
        let predicted = model.predict_scores(&ds.rows)?.iter().map(|s| s.argmax()).collect();
        Ok(Self { encoded, predicted })
    }

    /// Index of the qualifying row closest to the base values.
    pub fn find(&self, kind: Kind, x0_enc: &[f64], t0: usize, base: &[f64], beta: f64) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (i, row) in self.encoded.iter().enumerate() {
            if !kind.accepts(self.predicted[i], t0) {
                continue;
            }
            let qualifies = row.iter().zip(x0_enc).zip(base).all(|((r, x), b)| match kind {
                Kind::Pp => (r - b).abs() <= (x - b).abs(),
                Kind::Pn => (r - b).abs() >= (x - b).abs(),
            });
            if !qualifies {
                continue;
            }
            let (l1, l2) = row.iter().zip(base).fold((0.0, 0.0), |(l1, l2), (r, b)| {
                (l1 + (r - b).abs(), l2 + (r - b).powi(2))
            });
            let value = beta * l1 + l2;
            if best.is_none_or(|(v, _)| value < v) {
                best = Some((value, i));
            }
        }
        best.map(|(_, i)| i)
    }
}

/// Closest training row satisfying the PP or PN criteria for `x0`.
pub fn find_proxy(
    kind: Kind,
    x0: &[f64],
    t0: usize,
    ds: &Dataset,
    model: &ModelHandle,
    space: &EncodedSpace,
    beta: f64,
) -> Result<Option<usize>> {
    let index = ProxyIndex::new(ds, model, space)?;
    Ok(index.find(kind, &space.encode(x0)?, t0, space.base(), beta))
}

/// `|f ∩ f*| / k` where `f*` is the proxy's path set, `k = |f*|` and `f` the
/// top-k features of the part.
pub fn cfip_score(part: &Part, path: &[usize]) -> Option<f64> {
    let k = path.len();
    if k == 0 {
        return None;
    }
    let hits = active_features(part)
        .into_iter()
        .take(k)
        .filter(|f| path.contains(f))
        .count();
    Some(hits as f64 / k as f64)
}

/// Mean CFIP percentage and the number of explanations it averages.
pub fn cfip(
    kind: Kind,
    expls: &[Explanation],
    model: &ModelHandle,
    ds: &Dataset,
    schema: &Schema,
    space: &EncodedSpace,
    beta: f64,
) -> Result<(Option<f64>, usize)> {
    if !model.has_paths() {
        return Err(Error::NoPaths);
    }
    let index = ProxyIndex::new(ds, model, space)?;
    let scores: Vec<Option<f64>> = expls
        .par_iter()
        .map(|e| {
            let Some(part) = e.part(kind) else {
                return Ok(None);
            };
            let x0 = space.encode(&schema.from_cells(&e.input)?)?;
            let Some(proxy) = index.find(kind, &x0, e.t0.index, space.base(), beta) else {
                return Ok(None);
            };
            let path = model.decision_path(&ds.rows[proxy]).unwrap_or_default();
            Ok(cfip_score(part, &path))
        })
        .collect::<Result<_>>()?;
    let used: Vec<f64> = scores.into_iter().flatten().collect();
    let mean = (!used.is_empty()).then(|| 100.0 * used.iter().sum::<f64>() / used.len() as f64);
    Ok((mean, used.len()))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub empty: bool,
    pub n_evaluated: usize,
    pub n_pp_valid: usize,
    pub n_pn_valid: usize,
    pub ccp_pp: Option<f64>,
    pub ccp_pn: Option<f64>,
    pub ccp_pp_unconditional: Option<f64>,
    pub ccp_pn_unconditional: Option<f64>,
    pub cfr_pp: Option<f64>,
    pub cfr_pn: Option<f64>,
    pub cfr_pp_n: usize,
    pub cfr_pn_n: usize,
    pub cfip_available: bool,
    pub cfip_pp: Option<f64>,
    pub cfip_pn: Option<f64>,
    pub cfip_pp_n: usize,
    pub cfip_pn_n: usize,
    pub notices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Computes every metric. CFIP is skipped with a notice when the model has
/// no decision paths.
pub fn evaluate(
    expls: &[Explanation],
    model: &ModelHandle,
    ds: &Dataset,
    schema: &Schema,
    space: &EncodedSpace,
    beta: f64,
) -> Result<MetricReport> {
    if expls.is_empty() {
        return Ok(MetricReport {
            empty: true,
            notices: vec!["no explanations to evaluate".into()],
            ..Default::default()
        });
    }
    let c = ccp(expls, model, schema)?;
    let (cfr_pp, cfr_pp_n) = cfr(Kind::Pp, expls, model, schema)?;
    let (cfr_pn, cfr_pn_n) = cfr(Kind::Pn, expls, model, schema)?;
    let mut report = MetricReport {
        empty: false,
        n_evaluated: expls.len(),
        n_pp_valid: c.n_pp,
        n_pn_valid: c.n_pn,
        ccp_pp: c.pp,
        ccp_pn: c.pn,
        ccp_pp_unconditional: c.pp_unconditional,
        ccp_pn_unconditional: c.pn_unconditional,
        cfr_pp,
        cfr_pn,
        cfr_pp_n,
        cfr_pn_n,
        notices: vec![
            "CCP is over explanations that carry the part; the unconditional variant counts missing parts as failures"
                .into(),
        ],
        ..Default::default()
    };
    if model.has_paths() {
        report.cfip_available = true;
        (report.cfip_pp, report.cfip_pp_n) = cfip(Kind::Pp, expls, model, ds, schema, space, beta)?;
        (report.cfip_pn, report.cfip_pn_n) = cfip(Kind::Pn, expls, model, ds, schema, space, beta)?;
    } else {
        report
            .notices
            .push("CFIP unavailable: model does not expose decision paths".into());
    }
    Ok(report)
}

impl MetricReport {
    /// Aligned text table with one row per metric and PP / PN columns.
    pub fn to_text_table(&self) -> String {
        let fmt = |v: Option<f64>, digits: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"));
        let mut rows = vec![
            ("CCP (%)".to_string(), fmt(self.ccp_pp, 2), fmt(self.ccp_pn, 2)),
            (
                "CCP all (%)".to_string(),
                fmt(self.ccp_pp_unconditional, 2),
                fmt(self.ccp_pn_unconditional, 2),
            ),
            ("CFR".to_string(), fmt(self.cfr_pp, 3), fmt(self.cfr_pn, 3)),
        ];
        if self.cfip_available {
            rows.push(("CFIP (%)".to_string(), fmt(self.cfip_pp, 2), fmt(self.cfip_pn, 2)));
        } else {
            rows.push(("CFIP (%)".to_string(), "n/a".into(), "n/a".into()));
        }
        rows.push((
            "found".to_string(),
            format!("{}/{}", self.n_pp_valid, self.n_evaluated),
            format!("{}/{}", self.n_pn_valid, self.n_evaluated),
        ));
        let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("metric".len());
        let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(2);
        let w2 = rows.iter().map(|r| r.2.len()).max().unwrap_or(0).max(2);
        let mut out = String::new();
        let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", "metric", "PP", "PN");
        for (name, pp, pn) in rows {
            let _ = writeln!(out, "{name:<w0$}  {pp:>w1$}  {pn:>w2$}");
        }
        for n in &self.notices {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::fma_fit;
    use crate::explainer::{ClassRef, Diagnostics, Objective, SearchStatus, EXPLANATION_VERSION};
    use crate::model::{FnClassifier, Node, SplitRule};
    use crate::schema::{complete_schema, FeatureSpec};

    fn status() -> SearchStatus {
        SearchStatus {
            found: true,
            status: "found".into(),
            queries_used: 0,
            iterations: 0,
            restarts_used: 0,
            c_final: 0.0,
        }
    }

    fn part(schema: &Schema, record: &[f64], importances: Vec<f64>, predicted: usize) -> Part {
        Part {
            record: schema.to_cells(record),
            encoded: vec![],
            delta: vec![],
            ranking: vec![],
            importances,
            predicted: ClassRef {
                index: predicted,
                label: schema.classes[predicted].clone(),
            },
            objective: Objective {
                hinge: 0.0,
                l1: 0.0,
                l2: 0.0,
            },
        }
    }

    fn explanation(schema: &Schema, input: &[f64], t0: usize, pp: Option<Part>, pn: Option<Part>) -> Explanation {
        Explanation {
            version: EXPLANATION_VERSION,
            row: None,
            input: schema.to_cells(input),
            t0: ClassRef {
                index: t0,
                label: schema.classes[t0].clone(),
            },
            pp,
            pn,
            diagnostics: Diagnostics {
                queries_used: 0,
                seed: 0,
                pp: status(),
                pn: status(),
                tool_version: String::new(),
                config_hash: String::new(),
            },
        }
    }

    fn binary_schema(d: usize) -> Schema {
        Schema::new(
            (0..d)
                .map(|j| FeatureSpec::real(format!("f{j}")).with_range(0.0, 1.0).with_base(0.0))
                .collect(),
            "y",
            vec!["0".into(), "1".into()],
        )
        .unwrap()
    }

    #[test]
    fn ranks_and_correlation() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
    }

    #[test]
    fn ccp_counts_class_changes() {
        let schema = binary_schema(1);
        let model = ModelHandle::new(FnClassifier::new(2, |r: &[f64]| vec![0.0, r[0] - 0.5]));
        let a = explanation(&schema, &[1.0], 1, None, Some(part(&schema, &[0.0], vec![1.0], 0)));
        let b = explanation(&schema, &[1.0], 1, None, Some(part(&schema, &[0.9], vec![0.1], 0)));
        let c = ccp(&[a, b], &model, &schema).unwrap();
        assert_eq!(c.pn, Some(50.0));
        assert_eq!(c.pp, None);
        assert_eq!(c.pp_unconditional, Some(0.0));
    }

    #[test]
    fn empty_report_is_marked() {
        let schema = binary_schema(1);
        let model = ModelHandle::new(FnClassifier::new(2, |_: &[f64]| vec![0.0, 1.0]));
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], None);
        let schema = complete_schema(&ds, &schema).unwrap();
        let space = EncodedSpace::new(&schema, &fma_fit(&ds, &schema)).unwrap();
        let r = evaluate(&[], &model, &ds, &schema, &space, 0.1).unwrap();
        assert!(r.empty);
        assert_eq!(r.ccp_pp, None);
    }

    #[test]
    fn cfr_on_weighted_sum_model() {
        let schema = binary_schema(2);
        // score of class 1 = 3 f0 + f1, so ablating f0 drops it most
        let model = ModelHandle::new(FnClassifier::new(2, |r: &[f64]| vec![2.0, 3.0 * r[0] + r[1]]));
        let aligned = explanation(
            &schema,
            &[1.0, 1.0],
            1,
            Some(part(&schema, &[1.0, 1.0], vec![2.0, 1.0], 1)),
            None,
        );
        let reversed = explanation(
            &schema,
            &[1.0, 1.0],
            1,
            Some(part(&schema, &[1.0, 1.0], vec![1.0, 2.0], 1)),
            None,
        );
        assert_eq!(cfr_one(Kind::Pp, &aligned, &model, &schema).unwrap(), Some(1.0));
        assert_eq!(cfr_one(Kind::Pp, &reversed, &model, &schema).unwrap(), Some(-1.0));
        let single = explanation(
            &schema,
            &[1.0, 1.0],
            1,
            Some(part(&schema, &[1.0, 0.0], vec![1.0, 0.0], 1)),
            None,
        );
        assert_eq!(cfr(Kind::Pp, &[single], &model, &schema).unwrap(), (None, 0));
    }

    #[test]
    fn cfr_pn_restores_input_values() {
        let schema = binary_schema(2);
        let model = ModelHandle::new(FnClassifier::new(2, |r: &[f64]| vec![3.0 * r[0] + r[1], 2.0]));
        // input (0, 0) is class 1; the PN (1, 1) is class 0
        let e = explanation(
            &schema,
            &[0.0, 0.0],
            1,
            None,
            Some(part(&schema, &[1.0, 1.0], vec![2.0, 1.0], 0)),
        );
        assert_eq!(cfr_one(Kind::Pn, &e, &model, &schema).unwrap(), Some(1.0));
    }

    #[test]
    fn proxy_is_sparsest_qualifying_row() {
        let schema = binary_schema(2);
        let model = ModelHandle::new(FnClassifier::new(2, |r: &[f64]| vec![0.5, r[0]]));
        let ds = Dataset::new(
            vec![
                vec![0.9, 0.9],
                vec![0.2, 0.0],
                vec![0.8, 0.1],
                vec![0.6, 0.0],
                vec![0.7, 0.8],
            ],
            None,
        );
        let schema = complete_schema(&ds, &schema).unwrap();
        let space = EncodedSpace::new(&schema, &fma_fit(&ds, &schema)).unwrap();
        // class 1 needs f0 > 0.5; rows 0, 2, 3 and 4 qualify against x0 = (0.9, 0.9)
        let found = find_proxy(Kind::Pp, &[0.9, 0.9], 1, &ds, &model, &space, 0.1).unwrap();
        assert_eq!(found, Some(3));
        let none = find_proxy(Kind::Pn, &[0.9, 0.9], 1, &ds, &model, &space, 0.1).unwrap();
        assert_eq!(none, None);
    }

    #[test]
    fn cfip_on_depth_two_tree() {
        use crate::model::DecisionTree;
        let schema = binary_schema(3);
        // f0 <= 0.5 ? (f1 <= 0.5 ? 0 : 1) : 1
        let tree = DecisionTree::from_nodes(
            2,
            vec![
                Node::Split {
                    feature: 0,
                    rule: SplitRule::LessEq { threshold: 0.5 },
                    left: 1,
                    right: 2,
                },
                Node::Split {
                    feature: 1,
                    rule: SplitRule::LessEq { threshold: 0.5 },
                    left: 3,
                    right: 4,
                },
                Node::leaf(vec![0, 5]),
                Node::leaf(vec![5, 0]),
                Node::leaf(vec![0, 5]),
            ],
        );
        let model = ModelHandle::new(tree);
        let ds = Dataset::new(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]], None);
        let schema = complete_schema(&ds, &schema).unwrap();
        let space = EncodedSpace::new(&schema, &fma_fit(&ds, &schema)).unwrap();
        // proxy for x0 = (0, 1, 1) is row 0, path {f0, f1}
        let x0 = [0.0, 1.0, 1.0];
        let both = explanation(&schema, &x0, 1, Some(part(&schema, &x0, vec![2.0, 1.0, 0.0], 1)), None);
        let none = explanation(&schema, &x0, 1, Some(part(&schema, &x0, vec![0.0, 0.0, 1.0], 1)), None);
        let half = explanation(&schema, &x0, 1, Some(part(&schema, &x0, vec![0.0, 2.0, 1.0], 1)), None);
        for (e, want) in [(both, 100.0), (none, 0.0), (half, 50.0)] {
            let (v, n) = cfip(Kind::Pp, &[e], &model, &ds, &schema, &space, 0.1).unwrap();
            assert_eq!((v, n), (Some(want), 1));
        }
    }

    #[test]
    fn cfip_requires_paths() {
        let schema = binary_schema(1);
        let model = ModelHandle::new(FnClassifier::new(2, |_: &[f64]| vec![0.0, 1.0]));
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], None);
        let schema = complete_schema(&ds, &schema).unwrap();
        let space = EncodedSpace::new(&schema, &fma_fit(&ds, &schema)).unwrap();
        assert!(matches!(
            cfip(Kind::Pp, &[], &model, &ds, &schema, &space, 0.1),
            Err(Error::NoPaths)
        ));
    }
}
