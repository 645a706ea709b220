//! HTTP geocoding adapter.
//!
//! Request: `POST <endpoint>` with body `{"queries": ["city, country", ...]}` and,
//! when a key is configured, `Authorization: Bearer <key>`.
//! Response: `{"results": [[lat, lon], ...]}` aligned with the queries; `null` or
//! `[0, 0]` marks a miss.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, GeocodeBackend};

/// Environment variable holding the remote geocoder key.
pub const KEY_ENV: &str = "SCIMAP_GEOCODER_KEY";

#[derive(Serialize)]
struct Request<'a> {
    queries: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    results: Vec<Option<[f64; 2]>>,
}

pub struct RemoteBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        RemoteBackend {
            endpoint: endpoint.into(),
            api_key,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    /// Build from an endpoint, reading the key from [`KEY_ENV`].
    pub fn from_env(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let key = std::env::var(KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(endpoint, key, timeout)
    }
}

/// Decode a response body into coordinate pairs; misses become `(0, 0)`.
pub fn decode_response(body: &str, expected: usize) -> Result<Vec<(f64, f64)>, BackendError> {
    let resp: Response =
        serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    if resp.results.len() != expected {
        return Err(BackendError::Malformed(format!(
            "expected {expected} results, got {}",
            resp.results.len()
        )));
    }
    Ok(resp
        .results
        .into_iter()
        .map(|r| r.map(|[lat, lon]| (lat, lon)).unwrap_or((0.0, 0.0)))
        .collect())
}

impl GeocodeBackend for RemoteBackend {
    fn source_id(&self) -> &str {
        "remote"
    }

    fn lookup(&self, queries: &[String]) -> Result<Vec<(f64, f64)>, BackendError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::to_string(&Request { queries })
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        let resp = match req.set("Content-Type", "application/json").send_string(&body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                return Err(BackendError::Transport(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, _)) => {
                return Err(BackendError::Rejected(format!("HTTP {code}")))
            }
            Err(e) => return Err(BackendError::Transport(e.to_string())),
        };
        let text = resp
            .into_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        decode_response(&text, queries.len())
    }
}
