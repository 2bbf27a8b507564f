//! Client for models served over HTTP.
//!
//! Wire protocol: `POST <url>` with `{"inputs": {...}}`, answered by
//! `{"outputs": {...}}`.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use modelcaller_core::Record;
use serde::{Deserialize, Serialize};

/// Serializable endpoint settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSpec {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retry: u32,
    /// How long a failed endpoint is skipped before it is probed again.
    #[serde(default = "default_cooldown_ms")]
    pub cooldown_ms: u64,
}

fn default_timeout_ms() -> u64 {
    2_000
}

fn default_cooldown_ms() -> u64 {
    5_000
}

impl RemoteSpec {
    pub fn new(url: impl Into<String>) -> Self {
        Self { url: url.into(), timeout_ms: default_timeout_ms(), retry: 0, cooldown_ms: default_cooldown_ms() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Health {
    Up,
    Down { since: Instant },
}

#[derive(Serialize)]
struct Request<'a> {
    inputs: &'a Record,
}

#[derive(Deserialize)]
struct Response {
    outputs: Record,
}

pub struct RemoteEndpoint {
    spec: RemoteSpec,
    agent: ureq::Agent,
    health: Mutex<Health>,
}

impl std::fmt::Debug for RemoteEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEndpoint").field("spec", &self.spec).field("health", &self.health()).finish()
    }
}

impl RemoteEndpoint {
    pub fn new(spec: RemoteSpec) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(spec.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { spec, agent, health: Mutex::new(Health::Up) }
    }

    pub fn spec(&self) -> &RemoteSpec {
        &self.spec
    }

    pub fn health(&self) -> Health {
        *self.health.lock().expect("health lock")
    }

    /// Posts the record, retrying up to the budget. A Down endpoint fails
    /// without a request until its cooldown has elapsed.
    pub fn invoke(&self, inputs: &Record) -> Result<Record, String> {
        if let Health::Down { since } = self.health() {
            if since.elapsed() < Duration::from_millis(self.spec.cooldown_ms) {
                return Err(format!("endpoint {} is down", self.spec.url));
            }
        }
        let mut last = String::new();
        for _ in 0..=self.spec.retry {
            match self.attempt(inputs) {
                Ok(out) => {
                    *self.health.lock().expect("health lock") = Health::Up;
                    return Ok(out);
                }
                Err(Failure::Reply(e)) => return Err(e),
                Err(Failure::Transport(e)) => last = e,
            }
        }
        *self.health.lock().expect("health lock") = Health::Down { since: Instant::now() };
        Err(last)
    }

    fn attempt(&self, inputs: &Record) -> Result<Record, Failure> {
        let mut resp = self
            .agent
            .post(&self.spec.url)
            .send_json(Request { inputs })
            .map_err(|e| Failure::Transport(format!("{}: {e}", self.spec.url)))?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(Failure::Transport(format!("{}: http status {status}", self.spec.url)));
        }
        if status >= 400 {
            return Err(Failure::Reply(format!("{}: http status {status}", self.spec.url)));
        }
        resp.body_mut()
            .read_json::<Response>()
            .map(|r| r.outputs)
            .map_err(|e| Failure::Reply(format!("{}: malformed response: {e}", self.spec.url)))
    }
}

/// Transport failures count against the retry budget and the health state;
/// a well-formed rejection from the server does not.
enum Failure {
    Transport(String),
    Reply(String),
}
