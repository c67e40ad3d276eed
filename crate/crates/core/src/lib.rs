//! Query-only contrastive explanations for tabular classifiers.
//!
//! Given a classifier that can only be queried for per-class scores, this
//! crate searches for a *pertinent positive* (the sparsest record, relative to
//! per-feature base values, that keeps the predicted class) and a *pertinent
//! negative* (the smallest perturbation away from the base values that changes
//! the predicted class). The search runs projected FISTA on zeroth-order
//! gradient estimates in a continuous encoding of mixed real/categorical data.
//!
//! Module map:
//!
//! - [`schema`]: feature metadata, CSV ingestion, base values and statistics
//! - [`model`]: the black-box query contract plus built-in CART / forest models
//!   and a remote HTTP client
//! - [`encoding`]: the continuous search space (frequency map for categoricals,
//!   simplex sampling alternative)
//! - [`grad`]: random-direction gradient estimation
//! - [`solver`]: hinge losses, feasible-set projections and the FISTA loop
//! - [`explainer`]: end-to-end explanation of one record and importances
//! - [`metrics`]: CCP / CFR / CFIP evaluation harness

pub mod encoding;
pub mod error;
pub mod explainer;
pub mod grad;
pub mod metrics;
pub mod model;
pub mod schema;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};

/// Version string embedded into every produced artifact.
pub const TOOL_VERSION: &str = concat!("contrastive ", env!("CARGO_PKG_VERSION"));

/// Reproducibility stamp carried by produced artifacts.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl Provenance {
    pub fn new(seed: Option<u64>, config_hash: Option<String>) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            seed,
            config_hash,
        }
    }
}

/// Short hex digest of any serializable configuration.
pub fn config_hash<T: serde::Serialize>(config: &T) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(config).expect("configuration serializes");
    let digest = Sha256::digest(&bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
