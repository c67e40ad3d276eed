//! Minimal scoring server speaking the remote model protocol, for tests and demos.

use std::io::Write;

use contrastive::model::{ModelHandle, ScoresRequest, ScoresResponse};
use contrastive::schema::Schema;

use crate::commands::ModelFile;
use crate::failure::Failure;
use crate::StubArgs;

enum Scorer {
    Model { schema: Schema, model: ModelHandle },
    Fixed(Vec<f64>),
}

impl Scorer {
    fn answer(&self, body: &str) -> Result<ScoresResponse, String> {
        let req: ScoresRequest = serde_json::from_str(body).map_err(|e| format!("bad request: {e}"))?;
        let scores = match self {
            Scorer::Fixed(s) => vec![s.clone(); req.instances.len()],
            Scorer::Model { schema, model } => {
                let records = req
                    .instances
                    .iter()
                    .map(|cells| schema.from_cells(cells))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| e.to_string())?;
                model
                    .predict_scores(&records)
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .map(|s| s.0)
                    .collect()
            }
        };
        Ok(ScoresResponse { scores })
    }
}

pub fn serve(args: &StubArgs) -> Result<(), Failure> {
    let scorer = match (&args.model, &args.fixed) {
        (Some(path), _) => {
            let file = ModelFile::load(path)?;
            Scorer::Model {
                schema: file.schema,
                model: file.model.into_handle(),
            }
        }
        (None, Some(text)) => {
            let scores = text
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::config(format!("--fixed: {e}")))?;
            Scorer::Fixed(scores)
        }
        (None, None) => return Err(Failure::config("give --model or --fixed")),
    };
    let server = tiny_http::Server::http(&args.addr).map_err(|e| Failure::config(format!("{}: {e}", args.addr)))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Failure::config("not an IP listen address"))?;
    println!("listening on http://{addr}");
    std::io::stdout().flush().ok();

    for mut req in server.incoming_requests() {
        let response = if req.method() != &tiny_http::Method::Post || req.url() != "/scores" {
            tiny_http::Response::from_string("not found").with_status_code(404)
        } else {
            let mut body = String::new();
            match req.as_reader().read_to_string(&mut body) {
                Err(e) => tiny_http::Response::from_string(e.to_string()).with_status_code(400),
                Ok(_) => match scorer.answer(&body) {
                    Ok(r) => tiny_http::Response::from_string(serde_json::to_string(&r).expect("scores serialize"))
                        .with_header(
                            "Content-Type: application/json"
                                .parse::<tiny_http::Header>()
                                .expect("static header"),
                        ),
                    Err(msg) => tiny_http::Response::from_string(msg).with_status_code(400),
                },
            }
        };
        let _ = req.respond(response);
    }
    Ok(())
}
