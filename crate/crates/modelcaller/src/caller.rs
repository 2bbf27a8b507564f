//! Model callers, the hub that owns them, and the call pipeline.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Instant;

use modelcaller_core::rbac::authorize;
use modelcaller_core::value::{ID_PARAM, PREV_PARAM, RESERVED_PREFIX};
use modelcaller_core::{
    AutoId, CallerConfig, ConfigPatch, DriftAlert, MemberMetrics, Method, Origin, Params, Qualification, Record,
    Role, RngStreams, Signature, Split, Value, ValueKind,
};
use serde::{Deserialize, Serialize};

use crate::callable::{Binding, Callable, CallableKind, CallableSpec};
use crate::clock::Clock;
use crate::datastore::{DatasetSelector, FeedbackAction, NewSample, Sample, SampleStore};
use crate::ensemble::CollabBoard;
use crate::error::{McError, Result};
use crate::library::Library;
use crate::transformation::TransformationPlan;

pub const ROLE_ENSEMBLE: &str = "ensemble";
pub const ROLE_AGGREGATOR: &str = "aggregator";
pub const ROLE_GATE: &str = "gate";
/// Output parameter a gate callable uses to list the members to activate.
pub const GATE_MEMBERS: &str = "members";

pub(crate) fn check_role(role: Role, method: Method) -> Result<()> {
    if authorize(role, method).is_allowed() {
        Ok(())
    } else {
        Err(McError::Unauthorized { role, method })
    }
}

fn register_method(kind: CallableKind) -> Method {
    match kind {
        CallableKind::Model => Method::RegisterModel,
        CallableKind::Function => Method::RegisterFunction,
        CallableKind::External => Method::RegisterExternal,
        CallableKind::NestedCaller => Method::RegisterNested,
    }
}

/// Deterministic caller id derived from the caller name.
pub fn caller_id_for(name: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("mc-{h:016x}")
}

#[derive(Debug, Clone)]
pub struct Host {
    pub callable: Arc<Callable>,
    pub attributes: Record,
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub id: String,
    pub callable: Arc<Callable>,
    pub role: String,
    pub attributes: Record,
    pub qualification: Qualification,
    pub metrics: MemberMetrics,
}

/// Everything a call reads, swapped as one unit so a call never sees a
/// half-applied change.
#[derive(Debug, Clone)]
pub struct CallerState {
    pub signature: Signature,
    pub config: CallerConfig,
    pub config_version: u64,
    pub host: Option<Host>,
    pub registrations: Vec<Registration>,
    /// (context parameter, provider name).
    pub context_providers: Vec<(String, String)>,
    /// Metrics of the caller's own aggregate output.
    pub caller_metrics: Option<MemberMetrics>,
    /// Learned aggregation weights by callable id.
    pub learned_weights: BTreeMap<String, f64>,
    /// Set once the host is retired; the call target can no longer leave
    /// `registered`.
    pub target_locked: bool,
    pub next_registration: u64,
}

impl CallerState {
    pub fn registration(&self, rid: &str) -> Result<&Registration> {
        self.registrations.iter().find(|r| r.id == rid).ok_or_else(|| McError::UnknownRegistration(rid.to_string()))
    }

    pub fn with_role<'a>(&'a self, role: &'a str) -> impl Iterator<Item = &'a Registration> + 'a {
        self.registrations.iter().filter(move |r| r.role == role)
    }

    pub fn members(&self) -> impl Iterator<Item = &Registration> {
        self.with_role(ROLE_ENSEMBLE)
    }
}

pub struct Caller {
    pub id: String,
    pub name: String,
    pub created_at: u64,
    state: RwLock<Arc<CallerState>>,
    write: Mutex<()>,
    pub(crate) store: Mutex<SampleStore>,
    pub(crate) rng: Mutex<RngStreams>,
    pub(crate) counters: Mutex<BTreeMap<String, u64>>,
    pub(crate) plan: Mutex<Option<TransformationPlan>>,
    pub(crate) alerts: Mutex<Vec<DriftAlert>>,
    /// Whether the last drift check breached its threshold.
    pub(crate) drift_breached: std::sync::atomic::AtomicBool,
}

impl std::fmt::Debug for Caller {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Caller").field("id", &self.id).field("name", &self.name).finish_non_exhaustive()
    }
}

impl Caller {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        id: String,
        name: String,
        created_at: u64,
        state: CallerState,
        store: SampleStore,
        rng: RngStreams,
        counters: BTreeMap<String, u64>,
        plan: Option<TransformationPlan>,
        alerts: Vec<DriftAlert>,
    ) -> Self {
        Self {
            id,
            name,
            created_at,
            state: RwLock::new(Arc::new(state)),
            write: Mutex::new(()),
            store: Mutex::new(store),
            rng: Mutex::new(rng),
            counters: Mutex::new(counters),
            plan: Mutex::new(plan),
            alerts: Mutex::new(alerts),
            drift_breached: std::sync::atomic::AtomicBool::new(false),
        }
    }

    pub fn snapshot(&self) -> Arc<CallerState> {
        self.state.read().expect("state lock").clone()
    }

    /// Applies `f` to a copy of the state and publishes it if `f` succeeds.
    pub(crate) fn mutate<T>(&self, f: impl FnOnce(&mut CallerState) -> Result<T>) -> Result<T> {
        let _serial = self.write.lock().expect("write lock");
        let mut next = (**self.state.read().expect("state lock")).clone();
        let out = f(&mut next)?;
        *self.state.write().expect("state lock") = Arc::new(next);
        Ok(out)
    }

    pub fn store(&self) -> MutexGuard<'_, SampleStore> {
        self.store.lock().expect("store lock")
    }

    pub fn counters(&self) -> BTreeMap<String, u64> {
        self.counters.lock().expect("counter lock").clone()
    }

    pub fn counter(&self, callable_id: &str) -> u64 {
        self.counters.lock().expect("counter lock").get(callable_id).copied().unwrap_or(0)
    }

    pub(crate) fn bump(&self, callable_id: &str) {
        *self.counters.lock().expect("counter lock").entry(callable_id.to_string()).or_default() += 1;
    }

    pub fn plan(&self) -> Option<TransformationPlan> {
        self.plan.lock().expect("plan lock").clone()
    }

    pub fn alerts(&self) -> Vec<DriftAlert> {
        self.alerts.lock().expect("alert lock").clone()
    }

    pub fn rng_state(&self) -> RngStreams {
        self.rng.lock().expect("rng lock").clone()
    }
}

/// How context arguments are obtained: surrogate-style calls compute them,
/// direct calls must carry them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallPath {
    #[default]
    Surrogate,
    Direct,
}

#[derive(Debug, Clone, Default)]
pub struct CallOptions {
    pub context: Option<Record>,
    pub path: CallPath,
}

impl CallOptions {
    pub fn direct(context: Record) -> Self {
        Self { context: Some(context), path: CallPath::Direct }
    }
}

/// Live calls count invocations, draw from the caller's streams and cache
/// samples. Replays (used by evaluation) do none of that.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    Live,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Host,
    Registered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberOutput {
    pub callable_id: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub host: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Record>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency_ms: f64,
}

impl MemberOutput {
    pub fn result(&self) -> std::result::Result<&Record, &str> {
        match (&self.output, &self.error) {
            (Some(o), _) => Ok(o),
            (None, Some(e)) => Err(e),
            (None, None) => Err("no output"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallResult {
    pub output: Record,
    pub member_outputs: Vec<MemberOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_token: Option<String>,
    pub targets_used: Vec<TargetKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_id: Option<String>,
    pub config_version: u64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReceipt {
    pub sample_id: String,
    /// Lets a reviewer confirm or override the sensor sample later.
    pub review_token: String,
}

/// Everything needed to create a caller.
#[derive(Debug, Clone, Default)]
pub struct CallerSpec {
    pub name: String,
    pub signature: Signature,
    pub config: CallerConfig,
    pub host: Option<Arc<Callable>>,
    pub host_attributes: Record,
    /// (context parameter, provider name).
    pub context_providers: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationView {
    pub id: String,
    pub callable_id: String,
    pub kind: CallableKind,
    pub role: String,
    pub trainable: bool,
    pub attributes: Record,
    pub qualification: Qualification,
    pub metrics: MemberMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostView {
    pub callable_id: String,
    pub kind: CallableKind,
}

/// Read-only description of a caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallerView {
    pub id: String,
    pub name: String,
    pub created_at: u64,
    pub signature: Signature,
    pub config: CallerConfig,
    pub config_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<HostView>,
    pub registrations: Vec<RegistrationView>,
    pub context_providers: BTreeMap<String, String>,
    pub target_locked: bool,
    pub sample_count: usize,
}

pub struct HubInner {
    pub(crate) clock: Clock,
    pub(crate) library: Arc<Library>,
    callers: RwLock<BTreeMap<String, Arc<Caller>>>,
    /// Caller names and rebound host names, mapped to caller ids.
    names: RwLock<BTreeMap<String, String>>,
    callables: RwLock<BTreeMap<String, Arc<Callable>>>,
    pub(crate) collab: CollabBoard,
    /// Serializes structural changes so cycle checks see a stable graph.
    structure: Mutex<()>,
}

/// Process-wide namespace of callers and shared callables.
#[derive(Clone)]
pub struct Hub {
    pub(crate) inner: Arc<HubInner>,
}

impl Default for Hub {
    fn default() -> Self {
        Hub::new(Clock::System, Arc::new(Library::with_builtins()))
    }
}

impl Hub {
    pub fn new(clock: Clock, library: Arc<Library>) -> Self {
        Hub {
            inner: Arc::new(HubInner {
                clock,
                library,
                callers: RwLock::new(BTreeMap::new()),
                names: RwLock::new(BTreeMap::new()),
                callables: RwLock::new(BTreeMap::new()),
                collab: CollabBoard::default(),
                structure: Mutex::new(()),
            }),
        }
    }

    /// A hub on a logical clock, for reproducible runs.
    pub fn deterministic() -> Self {
        Hub::new(Clock::logical(), Arc::new(Library::with_builtins()))
    }

    pub fn clock(&self) -> &Clock {
        &self.inner.clock
    }

    pub fn library(&self) -> &Library {
        &self.inner.library
    }

    pub fn now(&self) -> u64 {
        self.inner.clock.now_ms()
    }

    // ---- registry -------------------------------------------------------

    /// Looks a caller up by id or by any name bound to it.
    pub fn caller(&self, id_or_name: &str) -> Result<Arc<Caller>> {
        let callers = self.inner.callers.read().expect("callers lock");
        if let Some(c) = callers.get(id_or_name) {
            return Ok(c.clone());
        }
        let names = self.inner.names.read().expect("names lock");
        names
            .get(id_or_name)
            .and_then(|id| callers.get(id))
            .cloned()
            .ok_or_else(|| McError::UnknownCaller(id_or_name.to_string()))
    }

    pub fn caller_ids(&self) -> Vec<String> {
        self.inner.callers.read().expect("callers lock").keys().cloned().collect()
    }

    pub fn callers(&self) -> Vec<Arc<Caller>> {
        self.inner.callers.read().expect("callers lock").values().cloned().collect()
    }

    pub fn callable(&self, id: &str) -> Result<Arc<Callable>> {
        self.inner
            .callables
            .read()
            .expect("callables lock")
            .get(id)
            .cloned()
            .ok_or_else(|| McError::UnknownCallable(id.to_string()))
    }

    /// Adds a callable to the shared registry. Adding the same instance
    /// twice is a no-op; reusing an id for a different callable is refused.
    pub fn add_callable(&self, callable: impl Into<Arc<Callable>>) -> Result<Arc<Callable>> {
        let callable = callable.into();
        let mut map = self.inner.callables.write().expect("callables lock");
        match map.get(&callable.id) {
            Some(existing) if Arc::ptr_eq(existing, &callable) => Ok(callable),
            Some(_) => Err(McError::Conflict(format!("callable id `{}` is already in use", callable.id))),
            None => {
                map.insert(callable.id.clone(), callable.clone());
                Ok(callable)
            }
        }
    }

    pub(crate) fn insert_caller(&self, caller: Arc<Caller>, extra_names: &[String]) -> Result<()> {
        let mut callers = self.inner.callers.write().expect("callers lock");
        let mut names = self.inner.names.write().expect("names lock");
        if callers.contains_key(&caller.id) || names.contains_key(&caller.name) {
            return Err(McError::DuplicateName(caller.name.clone()));
        }
        if let Some(taken) = extra_names.iter().find(|n| names.contains_key(*n) || callers.contains_key(*n)) {
            return Err(McError::Conflict(format!("name `{taken}` is already bound")));
        }
        names.insert(caller.name.clone(), caller.id.clone());
        for n in extra_names {
            names.insert(n.clone(), caller.id.clone());
        }
        callers.insert(caller.id.clone(), caller);
        Ok(())
    }

    pub(crate) fn unbind_name(&self, name: &str) {
        self.inner.names.write().expect("names lock").remove(name);
    }

    /// Builds a callable from its wire description, or returns the shared
    /// callable a bare id refers to.
    pub fn build_callable(&self, spec: &CallableSpec, caller_signature: &Signature) -> Result<Arc<Callable>> {
        if spec.is_reference() {
            return self.callable(&spec.id);
        }
        let kind = spec.resolved_kind()?;
        let signature = spec.signature.clone().unwrap_or_else(|| default_member_signature(kind, caller_signature));
        let callable = match (kind, &spec.builtin, &spec.function, &spec.remote, &spec.caller) {
            (CallableKind::Model, Some(builtin), None, None, None) => {
                Callable::builtin_model(spec.id.clone(), builtin.clone(), signature, spec.seed.unwrap_or(0))?
            }
            (CallableKind::Function, None, Some(name), None, None) => {
                let imp = self.inner.library.function(name)?;
                Callable::named_function(spec.id.clone(), signature, name.clone(), imp)
            }
            (CallableKind::Model | CallableKind::Function, None, None, Some(remote), None) => {
                Callable::remote(spec.id.clone(), kind, signature, remote.clone())
            }
            (CallableKind::External, None, None, None, None) => Callable::external(spec.id.clone(), signature),
            (CallableKind::NestedCaller, None, None, None, Some(target)) => {
                let inner = self.caller(target)?;
                let sig = spec.signature.clone().unwrap_or_else(|| inner.snapshot().signature.clone());
                Callable::nested(spec.id.clone(), inner.id.clone(), sig)
            }
            _ => {
                return Err(McError::Invalid(format!(
                    "callable `{}`: binding does not fit kind {kind:?}",
                    spec.id
                )))
            }
        };
        Ok(Arc::new(callable))
    }

    // ---- lifecycle --------------------------------------------------------

    pub fn create_caller(&self, role: Role, spec: CallerSpec) -> Result<String> {
        check_role(role, Method::CreateCaller)?;
        if spec.host.is_some() {
            check_role(role, Method::RegisterHost)?;
        }
        spec.signature.validate()?;
        spec.config.validate(spec.host.is_some())?;
        if let Some(host) = &spec.host {
            if !host.signature.inputs.is_subset_of(&spec.signature.inputs) {
                return Err(McError::SignatureMismatch(format!(
                    "host `{}` inputs must be a subset of the caller inputs",
                    host.id
                )));
            }
            if !host.signature.outputs.same_set(&spec.signature.outputs) {
                return Err(McError::SignatureMismatch(format!(
                    "host `{}` outputs must equal the caller outputs",
                    host.id
                )));
            }
            if matches!(host.kind, CallableKind::External | CallableKind::NestedCaller) {
                return Err(McError::Invalid("a host must be a function or a model".into()));
            }
        }
        for (param, provider) in &spec.context_providers {
            if !spec.signature.context_params.contains(param) {
                return Err(McError::SignatureMismatch(format!("`{param}` is not a declared context parameter")));
            }
            self.inner.library.provider(provider)?;
        }
        let id = caller_id_for(&spec.name);
        if self.inner.names.read().expect("names lock").contains_key(&spec.name)
            || self.inner.callers.read().expect("callers lock").contains_key(&id)
        {
            return Err(McError::DuplicateName(spec.name));
        }
        let host = match spec.host {
            Some(h) => Some(Host { callable: self.add_callable(h)?, attributes: spec.host_attributes }),
            None => None,
        };
        let state = CallerState {
            signature: spec.signature,
            config_version: 1,
            host: host.clone(),
            registrations: Vec::new(),
            context_providers: spec.context_providers,
            caller_metrics: None,
            learned_weights: BTreeMap::new(),
            target_locked: false,
            next_registration: 0,
            config: spec.config,
        };
        let rng = RngStreams::from_seed(state.config.rng_seed);
        let caller = Caller::from_parts(
            id.clone(),
            spec.name,
            self.now(),
            state,
            SampleStore::new(id.clone()),
            rng,
            BTreeMap::new(),
            None,
            Vec::new(),
        );
        let rebound: Vec<String> = host.iter().map(|h| h.callable.id.clone()).collect();
        self.insert_caller(Arc::new(caller), &rebound)?;
        Ok(id)
    }

    pub fn register(
        &self,
        role: Role,
        caller_id: &str,
        callable: impl Into<Arc<Callable>>,
        member_role: &str,
        attributes: Record,
    ) -> Result<String> {
        let callable = callable.into();
        check_role(role, register_method(callable.kind))?;
        let caller = self.caller(caller_id)?;
        let rid = {
            let _structure = self.inner.structure.lock().expect("structure lock");
            if let Some(target) = callable.nested_caller() {
                let inner = self.caller(target)?;
                if inner.id == caller.id || self.reaches(&inner.id, &caller.id) {
                    return Err(McError::Cycle(inner.id.clone()));
                }
            }
            let callable = self.add_callable(callable)?;
            caller.mutate(|st| {
                check_registration(st, &callable, member_role)?;
                st.next_registration += 1;
                let rid = format!("r{}", st.next_registration);
                st.registrations.push(Registration {
                    id: rid.clone(),
                    callable: callable.clone(),
                    role: member_role.to_string(),
                    attributes,
                    qualification: Qualification::InsufficientData,
                    metrics: MemberMetrics::default(),
                });
                Ok(rid)
            })?
        };
        let cfg = caller.snapshot().config.clone();
        if cfg.auto_train {
            self.auto_train_registration(&caller, &rid)?;
        }
        if cfg.auto_test {
            self.evaluate_registration_now(&caller, &rid)?;
        }
        Ok(rid)
    }

    pub fn unregister(&self, role: Role, caller_id: &str, rid: &str) -> Result<()> {
        check_role(role, Method::Unregister)?;
        let caller = self.caller(caller_id)?;
        let _structure = self.inner.structure.lock().expect("structure lock");
        caller.mutate(|st| {
            let pos = st
                .registrations
                .iter()
                .position(|r| r.id == rid)
                .ok_or_else(|| McError::UnknownRegistration(rid.to_string()))?;
            let removed = st.registrations.remove(pos);
            st.learned_weights.remove(&removed.callable.id);
            Ok(())
        })?;
        self.halt_plan_if_candidate(&caller, rid);
        Ok(())
    }

    /// True when `from` reaches `to` through nested-caller registrations.
    fn reaches(&self, from: &str, to: &str) -> bool {
        let mut stack = vec![from.to_string()];
        let mut seen = std::collections::BTreeSet::new();
        while let Some(id) = stack.pop() {
            if id == to {
                return true;
            }
            if !seen.insert(id.clone()) {
                continue;
            }
            if let Ok(c) = self.caller(&id) {
                for r in &c.snapshot().registrations {
                    if let Some(next) = r.callable.nested_caller() {
                        stack.push(next.to_string());
                    }
                }
            }
        }
        false
    }

    pub fn update_config(&self, role: Role, caller_id: &str, patch: &ConfigPatch) -> Result<CallerConfig> {
        check_role(role, Method::UpdateConfig)?;
        let caller = self.caller(caller_id)?;
        let plan = caller.plan.lock().expect("plan lock");
        if let (Some(target), Some(p)) = (patch.call_target, plan.as_ref().filter(|p| p.active)) {
            if p.state.call_target() != Some(target) {
                return Err(McError::Conflict(format!(
                    "call_target is managed by the active transformation plan (state {})",
                    p.state.name()
                )));
            }
        }
        let out = caller.mutate(|st| {
            let next = st.config.apply(patch);
            if st.target_locked && next.call_target != modelcaller_core::CallTarget::Registered {
                return Err(McError::Conflict("call_target is locked to registered after host retirement".into()));
            }
            next.validate(st.host.is_some())?;
            check_config_fits(st, &next, &self.inner.library)?;
            if next != st.config {
                st.config = next;
                st.config_version += 1;
            }
            Ok(st.config.clone())
        });
        drop(plan);
        out
    }

    /// Sets the call target on behalf of a transformation plan.
    pub(crate) fn set_call_target(&self, caller: &Caller, target: modelcaller_core::CallTarget) -> Result<u64> {
        caller.mutate(|st| {
            let mut next = st.config.clone();
            next.call_target = target;
            if next.call_target == modelcaller_core::CallTarget::Host || next.call_target == modelcaller_core::CallTarget::Both {
                next.auto_cache = true;
            }
            next.validate(st.host.is_some())?;
            if next != st.config {
                st.config = next;
                st.config_version += 1;
            }
            Ok(st.config_version)
        })
    }

    pub fn view(&self, role: Role, caller_id: &str) -> Result<CallerView> {
        check_role(role, Method::Read)?;
        let caller = self.caller(caller_id)?;
        Ok(caller_view(&caller))
    }

    pub fn list(&self, role: Role) -> Result<Vec<CallerView>> {
        check_role(role, Method::Read)?;
        Ok(self.callers().iter().map(|c| caller_view(c)).collect())
    }

    // ---- calls ------------------------------------------------------------

    pub fn call(&self, role: Role, caller_id: &str, inputs: Record, opts: CallOptions) -> Result<CallResult> {
        check_role(role, Method::Call)?;
        let caller = self.caller(caller_id)?;
        self.run_call(&caller, inputs, &opts, Mode::Live)
    }

    /// Invokes an outer caller whose members include nested callers. Every
    /// nested caller runs its own pipeline and caches its own samples.
    pub fn call_nested(&self, role: Role, caller_id: &str, inputs: Record) -> Result<CallResult> {
        let caller = self.caller(caller_id)?;
        if !caller.snapshot().registrations.iter().any(|r| r.callable.kind == CallableKind::NestedCaller) {
            return Err(McError::Invalid(format!("caller `{}` has no nested callers", caller.id)));
        }
        self.call(role, caller_id, inputs, CallOptions::default())
    }

    /// Calls whichever caller a name is bound to: its own name or the name
    /// of the host it surrogates.
    pub fn call_name(&self, role: Role, name: &str, inputs: Record) -> Result<CallResult> {
        self.call(role, name, inputs, CallOptions::default())
    }

    pub(crate) fn run_call(&self, caller: &Caller, inputs: Record, opts: &CallOptions, mode: Mode) -> Result<CallResult> {
        let started = Instant::now();
        let state = caller.snapshot();
        state.signature.inputs.check(&inputs, "call inputs")?;
        let cfg = &state.config;

        if cfg.auto_id == AutoId::Passthrough {
            let host = state.host.as_ref().expect("passthrough requires a host");
            let input = inputs.project(host.callable.signature.inputs.names());
            let t = Instant::now();
            let res = self.invoke(caller, &host.callable, &input, mode, true);
            let latency = ms_since(t);
            if mode == Mode::Live {
                caller.bump(&host.callable.id);
            }
            let output = res.map_err(|e| McError::AllFailed(format!("host `{}`: {e}", host.callable.id)))?;
            return Ok(CallResult {
                output: output.clone(),
                member_outputs: vec![MemberOutput {
                    callable_id: host.callable.id.clone(),
                    host: true,
                    output: Some(output),
                    error: None,
                    latency_ms: latency,
                }],
                review_token: None,
                targets_used: vec![TargetKind::Host],
                sample_id: None,
                config_version: state.config_version,
                latency_ms: ms_since(started),
            });
        }

        let context = self.resolve_context(caller, &state, &inputs, opts)?;
        let use_host = cfg.call_target.includes_host() && state.host.is_some();
        let members = if cfg.call_target.includes_registered() {
            self.select_members(caller, &state, &inputs, &context, mode)?
        } else {
            Vec::new()
        };
        if !use_host && members.is_empty() {
            return Err(McError::NoTargets(format!(
                "caller `{}` has no active members and no host in scope",
                caller.id
            )));
        }
        let mut targets_used = Vec::new();
        if use_host {
            targets_used.push(TargetKind::Host);
        }
        if !members.is_empty() {
            targets_used.push(TargetKind::Registered);
        }

        let run = self.execute_sources(caller, &state, &inputs, &context, use_host, &members, mode);
        let output = self.aggregate_run(caller, &state, &inputs, &context, &run, mode)?;

        let (sample_id, review_token) = if mode == Mode::Live {
            let (id, tok) = self.record(caller, &state, inputs, context, output.clone(), Origin::Call, true);
            (id, tok)
        } else {
            (None, None)
        };
        Ok(CallResult {
            output,
            member_outputs: run.outputs,
            review_token,
            targets_used,
            sample_id,
            config_version: state.config_version,
            latency_ms: ms_since(started),
        })
    }

    pub(crate) fn resolve_context(&self, caller: &Caller, state: &CallerState, inputs: &Record, opts: &CallOptions) -> Result<Record> {
        let mut ctx = Record::new();
        if opts.path == CallPath::Surrogate {
            for (param, provider) in &state.context_providers {
                let f = self.inner.library.provider(provider)?;
                let v = f(inputs).map_err(|e| McError::Invalid(format!("context provider `{provider}`: {e}")))?;
                ctx.insert(param.clone(), v);
            }
            if state.config.auto_id == AutoId::On {
                ctx.insert(ID_PARAM, caller.id.clone());
            }
        }
        if let Some(explicit) = &opts.context {
            for (k, v) in explicit.iter() {
                if !state.signature.context_params.contains(k) && k != ID_PARAM {
                    return Err(McError::Invalid(format!("`{k}` is not a declared context parameter")));
                }
                ctx.insert(k, v.clone());
            }
        }
        for (name, kind) in &state.signature.context_params.0 {
            match ctx.get(name) {
                None => return Err(McError::Invalid(format!("context parameter `{name}` was not supplied"))),
                Some(v) if !kind.admits(v) => {
                    return Err(McError::Invalid(format!("context parameter `{name}` expects {kind:?}")))
                }
                Some(_) => {}
            }
        }
        Ok(ctx)
    }

    /// Invokes one callable and validates its output. `check_outputs` is
    /// off for gate callables, whose outputs name members.
    pub(crate) fn invoke(
        &self,
        caller: &Caller,
        callable: &Callable,
        input: &Record,
        mode: Mode,
        check_outputs: bool,
    ) -> std::result::Result<Record, String> {
        let out = match &callable.binding {
            Binding::Function { imp, .. } => imp(input),
            Binding::Model(m) => m.predict(input),
            Binding::Remote(r) => r.invoke(input),
            Binding::Queue => match mode {
                Mode::Live => {
                    let timeout = caller.snapshot().config.collab_timeout_ms;
                    self.inner.collab.ask(&self.inner.clock, &caller.id, callable, input.clone(), timeout)
                }
                Mode::Replay => Err("collaborative members do not take part in replays".into()),
            },
            Binding::Nested(id) => {
                let inner = self.caller(id).map_err(|e| e.to_string())?;
                self.run_call(&inner, input.clone(), &CallOptions::default(), mode)
                    .map(|r| r.output)
                    .map_err(|e| e.to_string())
            }
        }?;
        if check_outputs {
            callable.signature.outputs.check(&out, &format!("output of `{}`", callable.id)).map_err(|e| e.to_string())?;
        }
        Ok(out)
    }

    /// Draws supervision and split, then caches the sample when caching is
    /// on or the sample was picked for review.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn record(
        &self,
        caller: &Caller,
        state: &CallerState,
        inputs: Record,
        context: Record,
        output: Record,
        origin: Origin,
        sample_for_review: bool,
    ) -> (Option<String>, Option<String>) {
        let cfg = &state.config;
        let mut rng = caller.rng.lock().expect("rng lock");
        let sampled = sample_for_review && rng.feedback.bernoulli(cfg.feedback_fraction);
        if !(cfg.auto_cache || sampled || origin == Origin::Sensor) {
            return (None, None);
        }
        let split = if rng.split.bernoulli(cfg.edata_fraction) { Split::Evaluation } else { Split::Training };
        let now = self.now();
        let mut store = caller.store();
        let idx = store.append(NewSample {
            inputs,
            context,
            output,
            origin,
            split,
            created_at: now,
            config_version: state.config_version,
        });
        let token = (sampled || origin == Origin::Sensor).then(|| store.issue_token(idx, now));
        (Some(store.samples()[idx].id.clone()), token)
    }

    // ---- data ---------------------------------------------------------------

    /// Ingests an input/output pair observed elsewhere, without invoking
    /// any member.
    pub fn add_sensor_sample(&self, role: Role, caller_id: &str, inputs: Record, output: Record) -> Result<SensorReceipt> {
        check_role(role, Method::Sensor)?;
        let caller = self.caller(caller_id)?;
        let state = caller.snapshot();
        state.signature.inputs.check(&inputs, "sensor inputs")?;
        state.signature.outputs.check(&output, "sensor output")?;
        let (id, token) = self.record(&caller, &state, inputs, Record::new(), output, Origin::Sensor, false);
        Ok(SensorReceipt {
            sample_id: id.expect("sensor samples are always cached"),
            review_token: token.expect("sensor samples always get a token"),
        })
    }

    pub fn apply_feedback(&self, role: Role, token: &str, action: FeedbackAction) -> Result<Sample> {
        check_role(role, Method::Review)?;
        let caller_id = token.rsplit_once('.').map(|(c, _)| c).ok_or_else(|| McError::UnknownToken(token.to_string()))?;
        let caller = self.caller(caller_id).map_err(|_| McError::UnknownToken(token.to_string()))?;
        let state = caller.snapshot();
        let now = self.now();
        let mut store = caller.store();
        store.apply_feedback(token, action, now, state.config.review_ttl_ms, &state.signature.outputs)
    }

    pub fn pending_reviews(&self, role: Role, caller_id: &str, limit: usize) -> Result<Vec<(String, Sample)>> {
        check_role(role, Method::Read)?;
        Ok(self.caller(caller_id)?.store().pending(limit))
    }

    pub fn dataset_view(&self, role: Role, caller_id: &str, selector: &DatasetSelector) -> Result<Vec<Sample>> {
        check_role(role, Method::Read)?;
        Ok(self.caller(caller_id)?.store().view(selector))
    }

    /// Ids of every caller that registers the callable.
    pub fn share_check(&self, role: Role, callable_id: &str) -> Result<Vec<String>> {
        check_role(role, Method::Read)?;
        self.callable(callable_id)?;
        Ok(self
            .callers()
            .iter()
            .filter(|c| c.snapshot().registrations.iter().any(|r| r.callable.id == callable_id))
            .map(|c| c.id.clone())
            .collect())
    }
}

pub(crate) fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Signature a member gets when none is given: models see inputs plus
/// context, everything else sees the caller inputs.
pub fn default_member_signature(kind: CallableKind, caller: &Signature) -> Signature {
    let mut inputs = caller.inputs.clone();
    if kind == CallableKind::Model {
        inputs.0.extend(caller.context_params.0.iter().cloned());
    }
    Signature::new(inputs, caller.outputs.clone())
}

/// Names a member may take beyond the caller's declared parameters.
fn wiring_params(kind: CallableKind) -> Params {
    let p = Params::new().with(PREV_PARAM, ValueKind::Map);
    if kind.receives_context() {
        p.with(ID_PARAM, ValueKind::Text)
    } else {
        p
    }
}

/// Like `Signature::validate`, but members may declare the reserved wiring
/// inputs.
fn validate_member_signature(callable: &Callable) -> Result<()> {
    let allowed = wiring_params(callable.kind);
    let user_inputs = Params(
        callable.signature.inputs.0.iter().filter(|(n, _)| !allowed.contains(n)).cloned().collect(),
    );
    if let Some((n, _)) = callable.signature.inputs.0.iter().find(|(n, _)| n.starts_with(RESERVED_PREFIX) && !allowed.contains(n)) {
        return Err(McError::SignatureMismatch(format!("`{n}` is reserved")));
    }
    Signature { inputs: user_inputs, ..callable.signature.clone() }.validate()?;
    Ok(())
}

fn check_registration(st: &CallerState, callable: &Arc<Callable>, role: &str) -> Result<()> {
    let sig = &st.signature;
    let mismatch = |m: String| Err(McError::SignatureMismatch(format!("`{}`: {m}", callable.id)));
    if st.registrations.iter().any(|r| r.role == role && r.callable.id == callable.id) {
        return Err(McError::Conflict(format!("`{}` is already registered as {role}", callable.id)));
    }
    match role {
        ROLE_AGGREGATOR => {
            if st.with_role(ROLE_AGGREGATOR).next().is_some() {
                return Err(McError::Conflict("caller already has an aggregator".into()));
            }
            if !callable.signature.outputs.same_set(&sig.outputs) {
                return mismatch("aggregator outputs must equal the caller outputs".into());
            }
            return Ok(());
        }
        ROLE_GATE => {
            if st.with_role(ROLE_GATE).next().is_some() {
                return Err(McError::Conflict("caller already has a gate".into()));
            }
            if callable.signature.outputs.kind_of(GATE_MEMBERS) != Some(ValueKind::List) {
                return mismatch(format!("a gate must output a list named `{GATE_MEMBERS}`"));
            }
        }
        _ => {
            if !callable.signature.outputs.same_set(&sig.outputs) {
                return mismatch("outputs must equal the caller outputs".into());
            }
        }
    }
    validate_member_signature(callable)?;
    let mut visible = sig.inputs.clone();
    if callable.kind.receives_context() {
        visible.0.extend(sig.context_params.0.iter().cloned());
    }
    visible.0.extend(wiring_params(callable.kind).0);
    if !callable.signature.inputs.is_subset_of(&visible) {
        return mismatch(if callable.kind.receives_context() {
            "inputs must be a subset of the caller inputs and context".into()
        } else {
            "inputs must be a subset of the caller inputs".into()
        });
    }
    if role == ROLE_ENSEMBLE {
        let models: Vec<&Registration> = st.members().filter(|r| r.callable.kind == CallableKind::Model).collect();
        if callable.kind == CallableKind::Model {
            if let Some(other) = models.first() {
                let o = &other.callable.signature;
                if !(o.inputs.same_set(&callable.signature.inputs) && o.outputs.same_set(&callable.signature.outputs)) {
                    return mismatch(format!("ensemble models must share one signature (see `{}`)", other.callable.id));
                }
            }
            let prev_ok = |p: &Params| Params(p.0.iter().filter(|(n, _)| n != PREV_PARAM).cloned().collect());
            for f in st.members().filter(|r| r.callable.kind == CallableKind::Function) {
                if !prev_ok(&f.callable.signature.inputs).is_subset_of(&callable.signature.inputs) {
                    return mismatch(format!("function `{}` takes inputs the model does not", f.callable.id));
                }
            }
        } else if callable.kind == CallableKind::Function {
            if let Some(m) = models.first() {
                let own = Params(callable.signature.inputs.0.iter().filter(|(n, _)| n != PREV_PARAM).cloned().collect());
                if !own.is_subset_of(&m.callable.signature.inputs) {
                    return mismatch(format!("function inputs must be a subset of the model inputs (`{}`)", m.callable.id));
                }
            }
        }
    }
    Ok(())
}

/// Configuration checks that depend on registrations and named hooks.
fn check_config_fits(st: &CallerState, cfg: &CallerConfig, library: &Library) -> Result<()> {
    use modelcaller_core::{AggregationStrategy, GateSpec, Matcher};
    match &cfg.aggregation.strategy {
        AggregationStrategy::AggregatorModel if st.with_role(ROLE_AGGREGATOR).next().is_none() => {
            return Err(McError::Invalid("aggregator_model needs a registration with role aggregator".into()))
        }
        AggregationStrategy::CustomHook { hook } => {
            library.aggregator(hook)?;
        }
        _ => {}
    }
    if cfg.gating == GateSpec::GateModel && st.with_role(ROLE_GATE).next().is_none() {
        return Err(McError::Invalid("gate_model gating needs a registration with role gate".into()));
    }
    if let Matcher::Custom { hook } = &cfg.matcher {
        library.matcher(hook)?;
    }
    Ok(())
}

pub(crate) fn caller_view(caller: &Caller) -> CallerView {
    let st = caller.snapshot();
    CallerView {
        id: caller.id.clone(),
        name: caller.name.clone(),
        created_at: caller.created_at,
        signature: st.signature.clone(),
        config: st.config.clone(),
        config_version: st.config_version,
        host: st.host.as_ref().map(|h| HostView { callable_id: h.callable.id.clone(), kind: h.callable.kind }),
        registrations: st
            .registrations
            .iter()
            .map(|r| RegistrationView {
                id: r.id.clone(),
                callable_id: r.callable.id.clone(),
                kind: r.callable.kind,
                role: r.role.clone(),
                trainable: r.callable.trainable(),
                attributes: r.attributes.clone(),
                qualification: r.qualification,
                metrics: r.metrics.clone(),
            })
            .collect(),
        context_providers: st.context_providers.iter().cloned().collect(),
        target_locked: st.target_locked,
        sample_count: caller.store().len(),
    }
}

/// Input a member receives: models get inputs plus context, everything else
/// gets the inputs it declares. `prev` is the previous stage's output in a
/// sequential chain.
pub(crate) fn member_input(callable: &Callable, inputs: &Record, context: &Record, prev: Option<&Record>) -> Record {
    if callable.kind.receives_context() {
        let mut r = inputs.clone();
        r.extend_from(context);
        if let Some(p) = prev {
            r.insert(PREV_PARAM, Value::Map(p.clone()));
        }
        r
    } else {
        let mut r = inputs.project(callable.signature.inputs.names());
        if let Some(p) = prev {
            if callable.signature.inputs.contains(PREV_PARAM) {
                r.insert(PREV_PARAM, Value::Map(p.clone()));
            }
        }
        r
    }
}
