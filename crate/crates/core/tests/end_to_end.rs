use contrastive::encoding::{fma_fit, EncodedSpace};
use contrastive::explainer::{explain, explain_batch};
use contrastive::grad::GradConfig;
use contrastive::metrics::{ccp, evaluate};
use contrastive::model::{train_cart, ModelHandle, TreeParams};
use contrastive::schema::{complete_schema, Dataset, Record};
use contrastive::solver::{pn_feasible, pp_feasible, Engine, SolverConfig};
use contrastive::synthetic::{mixed_dataset, mixed_schema, split_indices};

struct Setup {
    schema: contrastive::schema::Schema,
    train: Dataset,
    test: Dataset,
    space: EncodedSpace,
    model: ModelHandle,
}

fn setup() -> Setup {
    let ds = mixed_dataset(500, 11);
    let (tr, te) = split_indices(ds.len(), 0.75, 11);
    let (train, test) = (ds.subset(&tr), ds.subset(&te));
    let schema = complete_schema(&train, &mixed_schema()).unwrap();
    let space = EncodedSpace::new(&schema, &fma_fit(&train, &schema)).unwrap();
    let tree = train_cart(&train, &schema, &TreeParams::default(), 11).unwrap();
    Setup {
        schema,
        train,
        test,
        space,
        model: ModelHandle::new(tree),
    }
}

fn tree_config(seed: u64) -> SolverConfig {
    SolverConfig {
        grad: GradConfig { q: 50, mu: 0.5 },
        seed,
        ..SolverConfig::default()
    }
}

#[test]
fn parts_are_valid_and_feasible_on_synthetic_cart() {
    let s = setup();
    let rows: Vec<(usize, Record)> = s.test.rows.iter().cloned().enumerate().take(40).collect();
    let expls: Vec<_> = explain_batch(&rows, &s.model, &s.schema, &s.space, &tree_config(5), 4, None)
        .unwrap()
        .into_iter()
        .map(|e| e.unwrap())
        .collect();
    let c = ccp(&expls, &s.model, &s.schema).unwrap();
    assert_eq!(c.pp, Some(100.0));
    assert_eq!(c.pn, Some(100.0));
    let bounds: Vec<(f64, f64)> = vec![(0.0, 1.0); s.schema.dim()];
    for e in &expls {
        let x0 = s.space.encode(&s.schema.from_cells(&e.input).unwrap()).unwrap();
        if let Some(pp) = &e.pp {
            assert!(pp_feasible(&pp.encoded, &x0, s.space.base(), &bounds));
            for i in 0..x0.len() {
                let (lo, hi) = (x0[i].min(s.space.base()[i]), x0[i].max(s.space.base()[i]));
                assert!(pp.encoded[i] >= lo && pp.encoded[i] <= hi);
            }
        }
        if let Some(pn) = &e.pn {
            assert!(pn_feasible(&pn.encoded, &x0, s.space.base(), &bounds));
        }
    }
    let found = expls.iter().filter(|e| e.pn.is_some()).count();
    assert!(found * 10 >= expls.len() * 8, "PN found for {found} of {}", expls.len());
    let report = evaluate(&expls, &s.model, &s.train, &s.schema, &s.space, 0.01).unwrap();
    assert!(report.cfip_available);
    for v in [report.cfip_pp, report.cfip_pn].into_iter().flatten() {
        assert!((0.0..=100.0).contains(&v));
    }
    for v in [report.cfr_pp, report.cfr_pn].into_iter().flatten() {
        assert!((-1.0..=1.0).contains(&v));
    }
}

#[test]
fn ssa_engine_returns_valid_parts() {
    let s = setup();
    let cfg = SolverConfig {
        engine: Engine::Ssa { samples: 8 },
        iterations: 40,
        restarts: 3,
        ..tree_config(2)
    };
    let mut found = 0;
    for row in s.test.rows.iter().take(6) {
        let e = explain(row, &s.model, &s.schema, &s.space, &cfg, None).unwrap();
        if let Some(pp) = &e.pp {
            let rec = s.schema.from_cells(&pp.record).unwrap();
            assert_eq!(s.model.predict_class(&rec).unwrap(), e.t0.index);
            // categorical cells stay on the input or the base value
            for j in 3..6 {
                assert!(rec[j] == row[j] || rec[j] == s.space.base_raw()[j]);
            }
            found += 1;
        }
        if let Some(pn) = &e.pn {
            let rec = s.schema.from_cells(&pn.record).unwrap();
            assert_ne!(s.model.predict_class(&rec).unwrap(), e.t0.index);
        }
    }
    assert!(found > 0);
}

#[test]
fn sparsity_does_not_grow_with_beta_on_convex_problem() {
    let s = setup();
    let row = &s.test.rows[0];
    let count = |beta: f64| {
        let cfg = SolverConfig {
            c: 0.0,
            beta,
            restarts: 0,
            c_search: contrastive::solver::CSearch {
                rounds: 1,
                factor: 10.0,
            },
            ..tree_config(1)
        };
        let e = explain(row, &s.model, &s.schema, &s.space, &cfg, None).unwrap();
        e.pp.map(|p| p.importances.iter().filter(|&&v| v > 0.0).count())
    };
    let mut last = usize::MAX;
    for beta in [0.0, 0.01, 0.05, 0.2] {
        if let Some(n) = count(beta) {
            assert!(n <= last, "beta {beta}: {n} > {last}");
            last = n;
        }
    }
}
