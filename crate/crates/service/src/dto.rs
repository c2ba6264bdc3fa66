//! Request and response bodies, shared with the command-line front end.

use std::collections::BTreeMap;

use axum::http::header;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use refit_core::journal::InteractionRecord;
use refit_core::refit::{build_spec, BetaScheme, Mode, RefitOutcome, RefitParams};
use refit_core::similarity::{DistanceReport, Hit};
use refit_core::{Params, Result, Spec, VersionId};

/// Significant digits kept for every number in a response.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Rounds `x` to [`SIGNIFICANT_DIGITS`] significant decimal digits.
pub fn round_significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round_significant(x))) {
                *n = x;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Serializes `body` the way every endpoint does: compact JSON with floats
/// rounded to nine significant digits.
pub fn to_json_string<T: Serialize>(body: &T) -> serde_json::Result<String> {
    let mut value = serde_json::to_value(body)?;
    round_value(&mut value);
    serde_json::to_string(&value)
}

/// JSON response using [`to_json_string`].
pub struct ApiJson<T>(pub T);

impl<T: Serialize> IntoResponse for ApiJson<T> {
    fn into_response(self) -> Response {
        match to_json_string(&self.0) {
            Ok(body) => ([(header::CONTENT_TYPE, "application/json")], body).into_response(),
            Err(err) => (
                axum::http::StatusCode::INTERNAL_SERVER_ERROR,
                format!("serialization failed: {err}"),
            )
                .into_response(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub version: VersionId,
    pub hits: Vec<Hit<f64>>,
}

/// Optional overrides of the default refit parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBody {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_scheme: Option<BetaScheme<f64>>,
}

impl ParamsBody {
    pub fn resolve(&self) -> Params {
        let defaults = RefitParams::default();
        RefitParams {
            max_sweeps: self.max_sweeps.unwrap_or(defaults.max_sweeps),
            tolerance: self.tolerance.unwrap_or(defaults.tolerance),
            beta_scheme: self.beta_scheme.unwrap_or(defaults.beta_scheme),
            alpha_default: self.alpha.unwrap_or(defaults.alpha_default),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefitRequest {
    pub mode: Mode,
    pub words: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsBody>,
    pub base_version: VersionId,
}

impl RefitRequest {
    /// Validated spec and parameters for this request.
    pub fn resolve(&self) -> Result<(Spec, Params)> {
        let params = self.params.as_ref().map(ParamsBody::resolve).unwrap_or_default();
        params.validate()?;
        let spec = build_spec(self.mode, &self.words, self.target.as_deref(), &params)?;
        Ok((spec, params))
    }
}

/// What a committed refit did, as reported to clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefitReport {
    pub base_version: VersionId,
    pub version: VersionId,
    pub mode: Mode,
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub sweeps_executed: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub displacement: BTreeMap<String, f64>,
    pub distance_before: DistanceReport<f64>,
    pub distance_after: DistanceReport<f64>,
    pub updates: BTreeMap<String, Vec<f64>>,
}

impl RefitReport {
    pub fn new(spec: &Spec, outcome: RefitOutcome<f64>, version: VersionId) -> Self {
        RefitReport {
            base_version: outcome.updates.base_version,
            version,
            mode: spec.mode(),
            members: spec.members().to_vec(),
            target: spec.target().map(str::to_string),
            sweeps_executed: outcome.sweeps_executed,
            converged: outcome.converged,
            objective_trace: outcome.objective_trace,
            displacement: outcome.displacement,
            distance_before: outcome.distance_before,
            distance_after: outcome.distance_after,
            updates: outcome.updates.changes,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseBody {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_version: Option<VersionId>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_version: Option<VersionId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VersionResponse {
    pub version: VersionId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectRequest {
    pub words: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<VersionId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectResponse {
    pub version: VersionId,
    pub words: Vec<String>,
    pub coords: Vec<(f64, f64)>,
}

/// Same words placed in one shared layout for two versions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRequest {
    pub words: Vec<String>,
    pub before: VersionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<VersionId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareResponse {
    pub before: ProjectResponse,
    pub after: ProjectResponse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistancesResponse {
    pub version: VersionId,
    #[serde(flatten)]
    pub report: DistanceReport<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub version: VersionId,
    pub vocab_size: usize,
    pub dim: usize,
    pub can_undo: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalResponse {
    pub records: Vec<InteractionRecord<f64>>,
}

/// Splits a comma-separated word list, dropping empty items.
pub fn split_words(list: &str) -> Vec<String> {
    list.split(',')
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}
