#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use modelcaller::core::{CallTarget, CallerConfig, ModelKind, Params, Record, Role, Signature, Value, ValueKind};
use modelcaller::gateway::{start_service, ApiKey, GatewayConfig, ServiceHandle, API_KEY_HEADER};
use modelcaller::{Callable, CallerSpec, Hub};
use serde_json::json;

pub const ADMIN: Role = Role::Admin;

/// One numeric input `x`, one numeric output `y`.
pub fn sig_xy() -> Signature {
    Signature::new(Params::new().with("x", ValueKind::Number), Params::new().with("y", ValueKind::Number))
}

pub fn x(v: f64) -> Record {
    Record::new().with("x", v)
}

pub fn y_of(r: &Record) -> f64 {
    r.number("y").expect("numeric y")
}

pub fn constant(id: &str, value: f64) -> Callable {
    Callable::builtin_model(id, ModelKind::Constant { value: Value::Number(value) }, sig_xy(), 0).unwrap()
}

pub fn function(id: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Callable {
    Callable::function(id, sig_xy(), move |r: &Record| {
        let x = r.number("x").ok_or("missing x")?;
        Ok(Record::new().with("y", f(x)))
    })
}

pub fn config(target: CallTarget) -> CallerConfig {
    CallerConfig { call_target: target, ..CallerConfig::default() }
}

/// Creates an x→y caller, with `host` when given.
pub fn caller(hub: &Hub, name: &str, host: Option<Callable>, config: CallerConfig) -> String {
    hub.create_caller(
        ADMIN,
        CallerSpec { name: name.into(), signature: sig_xy(), config, host: host.map(Arc::new), ..CallerSpec::default() },
    )
    .unwrap()
}

pub fn register(hub: &Hub, caller_id: &str, c: Callable) -> String {
    hub.register(ADMIN, caller_id, c, "ensemble", Record::new()).unwrap()
}

/// A tiny HTTP server standing in for a remote model. Every request body
/// is recorded; `reply` maps the posted inputs to the response body.
pub struct StubServer {
    pub url: String,
    pub seen: Arc<Mutex<Vec<serde_json::Value>>>,
}

impl StubServer {
    pub fn start(delay: Duration, reply: impl Fn(&serde_json::Value) -> serde_json::Value + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/predict", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let reply = Arc::new(reply);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let log = log.clone();
                let reply = reply.clone();
                std::thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut len = 0usize;
                    loop {
                        let mut line = String::new();
                        if reader.read_line(&mut line).unwrap_or(0) == 0 {
                            return;
                        }
                        let line = line.trim_end();
                        if line.is_empty() {
                            break;
                        }
                        if let Some((k, v)) = line.split_once(':') {
                            if k.eq_ignore_ascii_case("content-length") {
                                len = v.trim().parse().unwrap_or(0);
                            }
                        }
                    }
                    let mut body = vec![0u8; len];
                    if reader.read_exact(&mut body).is_err() {
                        return;
                    }
                    let request: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
                    log.lock().unwrap().push(request.clone());
                    std::thread::sleep(delay);
                    let out = reply(&request).to_string();
                    let _ = write!(
                        stream,
                        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{out}",
                        out.len()
                    );
                });
            }
        });
        Self { url, seen }
    }

    /// Echoes `{"y": <value>}` for every request.
    pub fn constant(value: f64) -> Self {
        Self::start(Duration::ZERO, move |_| serde_json::json!({"outputs": {"y": value}}))
    }
}

/// API key for each role, e.g. `mle-key`.
pub fn key(role: Role) -> String {
    format!("{}-key", serde_json::to_value(role).unwrap().as_str().unwrap())
}

pub fn gateway_config(dir: Option<&std::path::Path>) -> GatewayConfig {
    GatewayConfig {
        bind: "127.0.0.1:0".into(),
        persistence_dir: dir.map(Into::into),
        api_keys: Role::ALL.iter().map(|&r| ApiKey::plain(key(r), r)).collect(),
        deterministic: true,
        ..GatewayConfig::default()
    }
}

pub fn serve(dir: Option<&std::path::Path>) -> ServiceHandle {
    start_service(&gateway_config(dir)).unwrap()
}

/// Status and parsed body of one request; `key` None sends no key header.
pub fn http(base: &str, method: &str, path: &str, key: Option<&str>, body: Option<&serde_json::Value>) -> (u16, serde_json::Value) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let url = format!("{base}{path}");
    let with_key = |b: ureq::RequestBuilder<ureq::typestate::WithoutBody>| match key {
        Some(k) => b.header(API_KEY_HEADER, k),
        None => b,
    };
    let with_key_body = |b: ureq::RequestBuilder<ureq::typestate::WithBody>| match key {
        Some(k) => b.header(API_KEY_HEADER, k),
        None => b,
    };
    let empty = serde_json::json!({});
    let body = body.unwrap_or(&empty);
    let resp = match method {
        "GET" => with_key(agent.get(&url)).call(),
        "DELETE" => with_key(agent.delete(&url)).call(),
        "PATCH" => with_key_body(agent.patch(&url)).send_json(body),
        "POST" => with_key_body(agent.post(&url)).send_json(body),
        other => panic!("unsupported method {other}"),
    };
    let mut resp = resp.unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(serde_json::Value::String(text)))
}

/// The demo's transaction caller with its legacy rule as host, as JSON.
pub fn fraud_caller_json(name: &str) -> serde_json::Value {
    serde_json::json!({
        "name": name,
        "signature": {
            "inputs": {"amount": "number", "hour": "number", "merchant_risk": "number", "region": "text"},
            "outputs": {"fraud": "number"}
        },
        "config": {"feedback_fraction": 1.0, "call_target": "host"},
        "host": {"id": format!("{name}-rule"), "function": "legacy_rule"}
    })
}

pub fn transaction(amount: f64) -> serde_json::Value {
    serde_json::json!({"amount": amount, "hour": 14, "merchant_risk": 0.2, "region": "EU"})
}

/// A constant-1 builtin model registration body.
pub fn model_body(id: &str) -> serde_json::Value {
    json!({"callable": {"id": id, "builtin": {"type": "constant", "value": 1}}})
}

/// A request that passes validation far enough that only the role decides
/// between 403 and anything else.
pub fn rbac_request(path: &str, id: &str, n: usize) -> (String, Option<serde_json::Value>) {
    let path = path.replace("{id}", id).replace("{rid}", "r999").replace("{token}", &format!("{id}.999"));
    let body = match path.rsplit('/').next().unwrap() {
        "callers" => Some(json!({"name": format!("matrix-{n}"), "signature": fraud_caller_json("x")["signature"]})),
        "config" => Some(json!({"edata_fraction": 0.2})),
        "register" => Some(model_body(&format!("matrix-model-{n}"))),
        "call" | "stream" => Some(json!({"inputs": transaction(10.0)})),
        "sensor" => Some(json!({"inputs": transaction(10.0), "output": {"fraud": 0}})),
        "answer" => Some(json!({"output": {"fraud": 1}})),
        "plan" => Some(json!({"candidate": "r1"})),
        _ if path.starts_with("/v1/reviews/") => Some(json!({"action": "confirm"})),
        _ => Some(json!({})),
    };
    (path, body)
}

/// Every file under `root`, relative path and bytes, in a stable order.
pub fn tree(root: &std::path::Path) -> Vec<(std::path::PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
