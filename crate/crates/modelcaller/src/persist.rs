//! On-disk caller state: one directory per caller holding `meta.json` and
//! an append-style `samples.jsonl` with one sample per line.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use modelcaller_core::{CallerConfig, DriftAlert, MemberMetrics, Qualification, Record, RngStreams, Signature};
use serde::{Deserialize, Serialize};

use crate::callable::{BindingDescriptor, Callable, CallableDescriptor};
use crate::caller::{Caller, CallerState, Host, Hub, Registration};
use crate::datastore::{Sample, SampleStore, TokenEntry};
use crate::error::{McError, Result};
use crate::transformation::TransformationPlan;

pub const FORMAT_VERSION: u64 = 1;
pub const META_FILE: &str = "meta.json";
pub const SAMPLES_FILE: &str = "samples.jsonl";

/// What to do with unreadable persisted data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadMode {
    /// Refuse to load anything corrupt.
    #[default]
    Strict,
    /// Drop corrupt sample lines and unreadable callers, with warnings.
    Skip,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub callers: Vec<String>,
    pub samples: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PersistedHost {
    callable: CallableDescriptor,
    attributes: Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PersistedRegistration {
    id: String,
    callable: CallableDescriptor,
    role: String,
    attributes: Record,
    qualification: Qualification,
    metrics: MemberMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PersistedCaller {
    id: String,
    name: String,
    created_at: u64,
    signature: Signature,
    config: CallerConfig,
    config_version: u64,
    host: Option<PersistedHost>,
    registrations: Vec<PersistedRegistration>,
    context_providers: Vec<(String, String)>,
    caller_metrics: Option<MemberMetrics>,
    learned_weights: BTreeMap<String, f64>,
    target_locked: bool,
    next_registration: u64,
    rng: RngStreams,
    invocations: BTreeMap<String, u64>,
    plan: Option<TransformationPlan>,
    drift_alerts: Vec<DriftAlert>,
    drift_breached: bool,
    review_tokens: BTreeMap<String, TokenEntry>,
    next_token: u64,
    next_sample: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    format_version: u64,
    caller: PersistedCaller,
}

fn snapshot(caller: &Caller) -> (Meta, Vec<Sample>) {
    let st = caller.snapshot();
    let store = caller.store();
    let caller_meta = PersistedCaller {
        id: caller.id.clone(),
        name: caller.name.clone(),
        created_at: caller.created_at,
        signature: st.signature.clone(),
        config: st.config.clone(),
        config_version: st.config_version,
        host: st.host.as_ref().map(|h| PersistedHost { callable: h.callable.descriptor(), attributes: h.attributes.clone() }),
        registrations: st
            .registrations
            .iter()
            .map(|r| PersistedRegistration {
                id: r.id.clone(),
                callable: r.callable.descriptor(),
                role: r.role.clone(),
                attributes: r.attributes.clone(),
                qualification: r.qualification,
                metrics: r.metrics.clone(),
            })
            .collect(),
        context_providers: st.context_providers.clone(),
        caller_metrics: st.caller_metrics.clone(),
        learned_weights: st.learned_weights.clone(),
        target_locked: st.target_locked,
        next_registration: st.next_registration,
        rng: caller.rng_state(),
        invocations: caller.counters(),
        plan: caller.plan(),
        drift_alerts: caller.alerts(),
        drift_breached: caller.drift_breached.load(std::sync::atomic::Ordering::SeqCst),
        review_tokens: store.tokens().clone(),
        next_token: store.next_token(),
        next_sample: store.next_sample(),
    };
    (Meta { format_version: FORMAT_VERSION, caller: caller_meta }, store.samples().to_vec())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Serialized meta and sample log of one caller.
pub fn encode_caller(caller: &Caller) -> (Vec<u8>, Vec<u8>) {
    let (meta, samples) = snapshot(caller);
    let mut meta_bytes = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    meta_bytes.push(b'\n');
    let mut log = Vec::new();
    for s in &samples {
        serde_json::to_writer(&mut log, s).expect("sample serializes");
        log.push(b'\n');
    }
    (meta_bytes, log)
}

pub fn caller_dir(root: &Path, caller_id: &str) -> PathBuf {
    root.join(caller_id)
}

impl Hub {
    pub fn persist_caller(&self, root: &Path, caller_id: &str) -> Result<()> {
        let caller = self.caller(caller_id)?;
        let dir = caller_dir(root, &caller.id);
        fs::create_dir_all(&dir)?;
        let (meta, log) = encode_caller(&caller);
        write_atomic(&dir.join(SAMPLES_FILE), &log)?;
        write_atomic(&dir.join(META_FILE), &meta)?;
        Ok(())
    }

    /// Writes every caller under `root`.
    pub fn persist_all(&self, root: &Path) -> Result<usize> {
        let ids = self.caller_ids();
        for id in &ids {
            self.persist_caller(root, id)?;
        }
        Ok(ids.len())
    }

    /// Restores every caller directory under `root`, in name order.
    pub fn load_all(&self, root: &Path, mode: LoadMode) -> Result<LoadReport> {
        let mut report = LoadReport::default();
        if !root.exists() {
            return Ok(report);
        }
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(META_FILE).is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            match self.load_caller(&dir, mode, &mut report.warnings) {
                Ok((id, n)) => {
                    report.callers.push(id);
                    report.samples += n;
                }
                Err(e) if mode == LoadMode::Skip => report.warnings.push(format!("{}: skipped caller: {e}", dir.display())),
                Err(e) => return Err(e),
            }
        }
        Ok(report)
    }

    fn restore_callable(&self, d: &CallableDescriptor) -> Result<Arc<Callable>> {
        if let Ok(existing) = self.callable(&d.id) {
            return Ok(existing);
        }
        let c = match &d.binding {
            BindingDescriptor::Function { name: Some(name) } => {
                Callable::named_function(d.id.clone(), d.signature.clone(), name.clone(), self.library().function(name)?)
            }
            BindingDescriptor::Function { name: None } => {
                return Err(McError::Format(format!(
                    "function `{}` has no library name; add it to the hub before loading",
                    d.id
                )))
            }
            BindingDescriptor::Model { model } => Callable::model(d.id.clone(), d.signature.clone(), model.clone()),
            BindingDescriptor::Remote { spec } => Callable::remote(d.id.clone(), d.kind, d.signature.clone(), spec.clone()),
            BindingDescriptor::Queue => Callable::external(d.id.clone(), d.signature.clone()),
            BindingDescriptor::Nested { caller } => Callable::nested(d.id.clone(), caller.clone(), d.signature.clone()),
        };
        self.add_callable(c)
    }

    fn load_caller(&self, dir: &Path, mode: LoadMode, warnings: &mut Vec<String>) -> Result<(String, usize)> {
        let raw = fs::read_to_string(dir.join(META_FILE))?;
        let value: serde_json::Value = serde_json::from_str(&raw).map_err(|e| McError::Format(format!("meta.json: {e}")))?;
        let version = value.get("format_version").and_then(serde_json::Value::as_u64).unwrap_or(0);
        if version != FORMAT_VERSION {
            return Err(McError::Version(version));
        }
        let meta: Meta = serde_json::from_value(value).map_err(|e| McError::Format(format!("meta.json: {e}")))?;
        let p = meta.caller;

        let mut samples = Vec::new();
        // Old line index -> new index, for remapping review tokens.
        let mut kept: Vec<Option<usize>> = Vec::new();
        let log_path = dir.join(SAMPLES_FILE);
        let log = if log_path.exists() { fs::read_to_string(&log_path)? } else { String::new() };
        for (n, line) in log.lines().enumerate() {
            if line.trim().is_empty() {
                kept.push(None);
                continue;
            }
            match serde_json::from_str::<Sample>(line) {
                Ok(s) if s.caller_id == p.id => {
                    kept.push(Some(samples.len()));
                    samples.push(s);
                }
                res => {
                    let message = match res {
                        Err(e) => e.to_string(),
                        Ok(s) => format!("sample belongs to caller `{}`", s.caller_id),
                    };
                    if mode == LoadMode::Strict {
                        return Err(McError::CorruptLine { line: n + 1, message });
                    }
                    warnings.push(format!("{}:{}: dropped corrupt sample: {message}", log_path.display(), n + 1));
                    kept.push(None);
                }
            }
        }
        let mut tokens = BTreeMap::new();
        for (token, mut entry) in p.review_tokens {
            match kept.get(entry.sample).copied().flatten() {
                Some(idx) => {
                    entry.sample = idx;
                    tokens.insert(token, entry);
                }
                None if mode == LoadMode::Skip => warnings.push(format!("review token `{token}` lost its sample")),
                None => return Err(McError::Format(format!("review token `{token}` points past the sample log"))),
            }
        }

        let host = match &p.host {
            Some(h) => Some(Host { callable: self.restore_callable(&h.callable)?, attributes: h.attributes.clone() }),
            None => None,
        };
        let registrations = p
            .registrations
            .iter()
            .map(|r| {
                Ok(Registration {
                    id: r.id.clone(),
                    callable: self.restore_callable(&r.callable)?,
                    role: r.role.clone(),
                    attributes: r.attributes.clone(),
                    qualification: r.qualification,
                    metrics: r.metrics.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let latest = samples
            .iter()
            .map(|s| s.created_at)
            .chain(p.drift_alerts.iter().map(|a| a.raised_at))
            .chain(p.plan.iter().flat_map(|pl| pl.history.iter().map(|h| h.at)))
            .chain(tokens.values().map(|t: &TokenEntry| t.issued_at))
            .chain([p.created_at])
            .max()
            .unwrap_or(0);
        self.clock().advance_to(latest);

        let n = samples.len();
        let store = SampleStore::restore(p.id.clone(), samples, tokens, p.next_token, p.next_sample);
        let state = CallerState {
            signature: p.signature,
            config: p.config,
            config_version: p.config_version,
            host: host.clone(),
            registrations,
            context_providers: p.context_providers,
            caller_metrics: p.caller_metrics,
            learned_weights: p.learned_weights,
            target_locked: p.target_locked,
            next_registration: p.next_registration,
        };
        let caller =
            Caller::from_parts(p.id.clone(), p.name, p.created_at, state, store, p.rng, p.invocations, p.plan, p.drift_alerts);
        caller.drift_breached.store(p.drift_breached, std::sync::atomic::Ordering::SeqCst);
        let rebound: Vec<String> = host.iter().map(|h| h.callable.id.clone()).collect();
        self.insert_caller(Arc::new(caller), &rebound)?;
        Ok((p.id, n))
    }
}
