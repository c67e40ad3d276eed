use std::io::Write as _;
use std::path::Path;

use contrastive::encoding::{fma_fit, EncodedSpace, FmaMap};
use contrastive::explainer::{explain_batch, Explanation};
use contrastive::metrics::evaluate as score_explanations;
use contrastive::model::{
    remote_model, train_cart, train_forest, BuiltinModel, ForestParams, ModelHandle, ScoreScale, TreeParams,
};
use contrastive::schema::{complete_schema, ingest_csv, Dataset, Record, Schema};
use contrastive::synthetic::split_indices;
use contrastive::{config_hash, Provenance};
use serde::{Deserialize, Serialize};

use crate::config::{self, Resolved, Source};
use crate::failure::{self, Failure};
use crate::{EvaluateArgs, ExplainArgs, ModelKind, Scale, TrainArgs};

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train_fraction: f64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Everything needed to explain with a trained model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    /// Schema completed on the training rows.
    pub schema: Schema,
    pub fma: FmaMap,
    pub model: BuiltinModel,
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub train_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = failure::read(path, failure::MODEL)?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| Failure::model(format!("{}: {e}", path.display())))?;
        if file.version != MODEL_FILE_VERSION {
            return Err(Failure::model(format!(
                "{}: unsupported model file version {} (expected {MODEL_FILE_VERSION})",
                path.display(),
                file.version
            )));
        }
        Ok(file)
    }
}

fn load_schema(path: &Path) -> Result<Schema, Failure> {
    let text = failure::read(path, failure::DATA)?;
    Schema::from_json(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn load_data(path: &Path, schema: &Schema) -> Result<Dataset, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    ingest_csv(&bytes, schema).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::data)?;
    text.push('\n');
    failure::write(path, &text)
}

pub fn bases(schema_path: &Path, data_path: &Path, out: &Path) -> Result<(), Failure> {
    let schema = load_schema(schema_path)?;
    let ds = load_data(data_path, &schema)?;
    let mut done = complete_schema(&ds, &schema)?;
    done.provenance = Some(Provenance::new(None, Some(config_hash(&schema))));
    write_json(out, &done)?;
    eprintln!(
        "filled bases and statistics for {} features from {} rows",
        done.dim(),
        ds.len()
    );
    Ok(())
}

fn accuracy(model: &ModelHandle, ds: &Dataset) -> Result<f64, Failure> {
    let labels = ds
        .labels
        .as_ref()
        .ok_or_else(|| Failure::data("dataset has no labels"))?;
    let scores = model.predict_scores(&ds.rows)?;
    let hits = scores.iter().zip(labels).filter(|(s, &l)| s.argmax() == l).count();
    Ok(hits as f64 / ds.len().max(1) as f64)
}

pub fn train(args: &TrainArgs) -> Result<(), Failure> {
    if !(args.split > 0.0 && args.split <= 1.0) {
        return Err(Failure::config("--split must be in (0, 1]"));
    }
    let schema = load_schema(&args.schema)?;
    let ds = load_data(&args.data, &schema)?;
    if ds.labels.is_none() {
        return Err(Failure::data(format!(
            "{}: no `{}` column to train on",
            args.data.display(),
            schema.target
        )));
    }
    let split = (args.split < 1.0).then(|| {
        let (train, test) = split_indices(ds.len(), args.split, args.seed);
        Split {
            train_fraction: args.split,
            train,
            test,
        }
    });
    let train_ds = split.as_ref().map_or_else(|| ds.clone(), |s| ds.subset(&s.train));
    let schema = complete_schema(&train_ds, &schema)?;
    let fma = fma_fit(&train_ds, &schema);

    let (mut model, params) = match args.kind {
        ModelKind::Cart => {
            let params = TreeParams {
                max_depth: args.max_depth.unwrap_or(5),
                min_leaf: args.min_leaf,
                max_features: args.max_features,
            };
            let tree = train_cart(&train_ds, &schema, &params, args.seed)?;
            (
                BuiltinModel::Cart(tree),
                serde_json::to_value(&params).map_err(Failure::config)?,
            )
        }
        ModelKind::Forest => {
            let params = ForestParams {
                n_trees: args.trees,
                max_depth: args.max_depth,
                min_leaf: args.min_leaf,
                max_features: args.max_features,
            };
            let forest = train_forest(&train_ds, &schema, &params, args.seed)?;
            (
                BuiltinModel::Forest(forest),
                serde_json::to_value(&params).map_err(Failure::config)?,
            )
        }
    };
    model.set_scale(match args.scale {
        Scale::Log => ScoreScale::Log,
        Scale::Prob => ScoreScale::Prob,
    });

    let handle = model.clone().into_handle();
    let train_accuracy = accuracy(&handle, &train_ds)?;
    let test_accuracy = match &split {
        Some(s) if !s.test.is_empty() => Some(accuracy(&handle, &ds.subset(&s.test))?),
        _ => None,
    };
    let settings = serde_json::json!({
        "kind": format!("{:?}", args.kind),
        "params": params,
        "split": args.split,
        "scale": format!("{:?}", args.scale),
    });
    let file = ModelFile {
        version: MODEL_FILE_VERSION,
        schema,
        fma,
        model,
        params,
        split,
        train_accuracy,
        test_accuracy,
        provenance: Provenance::new(Some(args.seed), Some(config_hash(&settings))),
    };
    write_json(&args.out, &file)?;
    match test_accuracy {
        Some(t) => eprintln!(
            "trained on {} rows: train accuracy {train_accuracy:.3}, test accuracy {t:.3}",
            train_ds.len()
        ),
        None => eprintln!("trained on {} rows: train accuracy {train_accuracy:.3}", train_ds.len()),
    }
    Ok(())
}

/// Model, schema, encoding and data for one run.
struct Context {
    schema: Schema,
    space: EncodedSpace,
    model: ModelHandle,
    data: Dataset,
    split: Option<Split>,
    builtin: bool,
}

impl Context {
    fn load(r: &Resolved) -> Result<Self, Failure> {
        match &r.source {
            Source::File(path) => {
                let file = ModelFile::load(path)?;
                let data = load_data(&r.data, &file.schema)?;
                let space = EncodedSpace::new(&file.schema, &file.fma)?;
                Ok(Self {
                    schema: file.schema,
                    space,
                    model: file.model.into_handle(),
                    data,
                    split: file.split,
                    builtin: true,
                })
            }
            Source::Remote(url) => {
                let path = r.schema.as_deref().expect("checked when resolving");
                let schema = load_schema(path)?;
                let data = load_data(&r.data, &schema)?;
                let schema = complete_schema(&data, &schema)?;
                let space = EncodedSpace::new(&schema, &fma_fit(&data, &schema))?;
                Ok(Self {
                    model: remote_model(url, &schema),
                    schema,
                    space,
                    data,
                    split: None,
                    builtin: false,
                })
            }
        }
    }

    /// Rows used as the reference population for proxies.
    fn reference(&self) -> Dataset {
        match &self.split {
            Some(s) => self.data.subset(&s.train),
            None => self.data.clone(),
        }
    }
}

#[derive(Serialize)]
struct RowFailure<'a> {
    row: usize,
    code: u8,
    error: &'a str,
}

pub fn explain(args: &ExplainArgs) -> Result<(), Failure> {
    let resolved = config::resolve(&args.source)?;
    let ctx = Context::load(&resolved)?;
    let cfg = config::solver_config(&resolved.file, args, ctx.builtin)?;
    let jobs = args
        .jobs
        .or(resolved.file.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let indices: Vec<usize> = if let Some(r) = args.row {
        if r >= ctx.data.len() {
            return Err(Failure::data(format!(
                "row {r} out of range: dataset has {} rows",
                ctx.data.len()
            )));
        }
        vec![r]
    } else if args.all_test {
        match &ctx.split {
            Some(s) => s.test.clone(),
            None => {
                return Err(Failure::config(
                    "--all-test needs a model file trained with --split below 1",
                ))
            }
        }
    } else if args.all {
        (0..ctx.data.len()).collect()
    } else {
        return Err(Failure::config("choose rows with --row, --all-test or --all"));
    };
    let rows: Vec<(usize, Record)> = indices.iter().map(|&i| (i, ctx.data.rows[i].clone())).collect();

    eprintln!("explaining {} rows on {jobs} threads (seed {})", rows.len(), cfg.seed);
    let results = explain_batch(&rows, &ctx.model, &ctx.schema, &ctx.space, &cfg, jobs, None)?;

    let mut out = String::new();
    let (mut pp, mut pn, mut queries) = (0, 0, 0u64);
    let mut first_failure: Option<Failure> = None;
    let mut failed = 0;
    for ((row, _), result) in rows.iter().zip(&results) {
        let line = match result {
            Ok(e) => {
                pp += usize::from(e.pp.is_some());
                pn += usize::from(e.pn.is_some());
                queries += e.diagnostics.queries_used;
                e.to_json()?
            }
            Err(err) => {
                failed += 1;
                let f = Failure::from_ref(err);
                let line = serde_json::to_string(&RowFailure {
                    row: *row,
                    code: f.code,
                    error: &f.message,
                })
                .map_err(Failure::data)?;
                eprintln!("row {row}: {}", f.message);
                first_failure.get_or_insert(f);
                line
            }
        };
        out.push_str(&line);
        out.push('\n');
    }

    match args.out.as_ref().or(resolved.file.out.as_ref()) {
        Some(path) => failure::write(path, &out)?,
        None => std::io::stdout()
            .write_all(out.as_bytes())
            .map_err(|e| Failure::data(format!("stdout: {e}")))?,
    }
    eprintln!(
        "done: {} explained, {failed} failed; PP found {pp}, PN found {pn}; {queries} model queries",
        rows.len() - failed
    );
    match first_failure {
        Some(f) => Err(Failure {
            code: f.code,
            message: format!("{failed} of {} rows failed", rows.len()),
        }),
        None => Ok(()),
    }
}

/// Parses an explanation file, skipping blank lines and recorded row failures.
pub fn read_explanations(path: &Path) -> Result<(Vec<Explanation>, usize), Failure> {
    let text = failure::read(path, failure::DATA)?;
    let mut expls = Vec::new();
    let mut skipped = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Failure::data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if value.get("error").is_some() {
            skipped += 1;
            continue;
        }
        let e = Explanation::from_json(line)
            .map_err(|e| Failure::data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        expls.push(e);
    }
    Ok((expls, skipped))
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), Failure> {
    let resolved = config::resolve(&args.source)?;
    let (expls, skipped) = read_explanations(&args.explanations)?;
    if expls.is_empty() {
        return Err(Failure::data(format!(
            "{}: no explanations to evaluate",
            args.explanations.display()
        )));
    }
    let ctx = Context::load(&resolved)?;
    let file_beta = resolved
        .file
        .solver
        .as_ref()
        .and_then(|t| t.get("beta"))
        .and_then(|v| v.as_float());
    let beta = args
        .beta
        .or(file_beta)
        .unwrap_or(contrastive::solver::SolverConfig::default().beta);

    let mut report = score_explanations(&expls, &ctx.model, &ctx.reference(), &ctx.schema, &ctx.space, beta)?;
    if skipped > 0 {
        report
            .notices
            .push(format!("{skipped} failed rows in the explanation file were skipped"));
    }
    let settings = serde_json::json!({
        "beta": beta,
        "explanations": expls[0].diagnostics.config_hash,
    });
    report.provenance = Some(Provenance::new(
        Some(expls[0].diagnostics.seed),
        Some(config_hash(&settings)),
    ));

    print!("{}", report.to_text_table());
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}

impl Failure {
    fn from_ref(e: &contrastive::Error) -> Self {
        Self {
            code: failure::exit_code(e),
            message: e.to_string(),
        }
    }
}
