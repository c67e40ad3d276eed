//! HTTP client for models served behind `POST {url}/scores`.
//!
//! Request body: `{"instances": [[cell, ...], ...]}` with real cells as JSON
//! numbers and categorical cells as strings, in schema order. Response body:
//! `{"scores": [[number, ...], ...]}`, one row per instance.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Classifier, ModelHandle, ScoreVector};
use crate::error::{Error, Result};
use crate::schema::{Cell, Record, Schema};

/// Maximum instances per request.
pub const REMOTE_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoresRequest {
    pub instances: Vec<Vec<Cell>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoresResponse {
    pub scores: Vec<Vec<f64>>,
}

pub struct RemoteClassifier {
    endpoint: String,
    schema: Schema,
    agent: ureq::Agent,
    chunk: usize,
}

impl RemoteClassifier {
    pub fn new(url: &str, schema: Schema) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(30))
            .max_idle_connections_per_host(8)
            .build();
        Self {
            endpoint: format!("{}/scores", url.trim_end_matches('/')),
            schema,
            agent,
            chunk: REMOTE_CHUNK,
        }
    }

    pub fn with_chunk(mut self, chunk: usize) -> Self {
        self.chunk = chunk.max(1);
        self
    }

    fn request(&self, records: &[Record]) -> Result<Vec<ScoreVector>> {
        let body = ScoresRequest {
            instances: records.iter().map(|r| self.schema.to_cells(r)).collect(),
        };
        let text = serde_json::to_string(&body)?;
        let resp = self
            .agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json")
            .send_string(&text)
            .map_err(|e| match e {
                ureq::Error::Status(code, _) => Error::Transport(format!("HTTP status {code}")),
                other => Error::Transport(other.to_string()),
            })?;
        let text = resp.into_string().map_err(|e| Error::Transport(e.to_string()))?;
        let parsed: ScoresResponse =
            serde_json::from_str(&text).map_err(|e| Error::Transport(format!("malformed response: {e}")))?;
        if parsed.scores.len() != records.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} score rows", records.len()),
                got: parsed.scores.len().to_string(),
            });
        }
        let k = self.schema.n_classes();
        parsed
            .scores
            .into_iter()
            .map(|row| {
                if row.len() == k {
                    Ok(ScoreVector(row))
                } else {
                    Err(Error::ShapeMismatch {
                        expected: format!("{k} scores per instance"),
                        got: row.len().to_string(),
                    })
                }
            })
            .collect()
    }
}

impl Classifier for RemoteClassifier {
    fn n_classes(&self) -> usize {
        self.schema.n_classes()
    }

    fn scores(&self, batch: &[Record]) -> Result<Vec<ScoreVector>> {
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(self.chunk) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }
}

/// Handle for a remote model; no decision-path introspection.
pub fn remote_model(url: &str, schema: &Schema) -> ModelHandle {
    ModelHandle::new(RemoteClassifier::new(url, schema.clone()))
}
