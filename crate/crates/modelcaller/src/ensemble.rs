//! Member execution, gating, aggregation, anytime calls and collaboration.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use modelcaller_core::aggregate::{self, Contribution};
use modelcaller_core::anytime::{expected_quality, MonotoneGate, SourceQuality};
use modelcaller_core::gate::{self, GateCandidate};
use modelcaller_core::{AggregationStrategy, Execution, GateSpec, Method, Origin, Params, Qualification, Record, Role, Value};
use serde::{Deserialize, Serialize};

use crate::callable::Callable;
use crate::caller::{
    check_role, member_input, ms_since, CallResult, Caller, CallerState, Hub, MemberOutput, Mode, Registration,
    TargetKind, GATE_MEMBERS, ROLE_AGGREGATOR, ROLE_ENSEMBLE, ROLE_GATE,
};
use crate::clock::Clock;
use crate::error::{McError, Result};
use crate::library::HookMember;

/// Attribute holding a source's expected-quality prior.
pub const PRIOR_ATTRIBUTE: &str = "expected_quality";

/// Outputs of one execution, in host-then-registration order.
pub(crate) struct Run {
    pub outputs: Vec<MemberOutput>,
    /// (index into `outputs`, registration index or `None` for the host)
    /// of each output that takes part in aggregation.
    pub contributions: Vec<(usize, Option<usize>)>,
    pub host_only: bool,
    /// Error of a broken sequential chain.
    pub chain_error: Option<String>,
}

struct Job {
    callable: Arc<Callable>,
    input: Record,
    registration: Option<usize>,
}

fn outcome(callable_id: &str, host: bool, res: std::result::Result<Record, String>, latency_ms: f64) -> MemberOutput {
    let (output, error) = match res {
        Ok(o) => (Some(o), None),
        Err(e) => (None, Some(e)),
    };
    MemberOutput { callable_id: callable_id.to_string(), host, output, error, latency_ms }
}

impl Hub {
    /// Active ensemble members for one call, as registration indices in
    /// registration order.
    pub(crate) fn select_members(
        &self,
        caller: &Caller,
        state: &CallerState,
        inputs: &Record,
        context: &Record,
        mode: Mode,
    ) -> Result<Vec<usize>> {
        let members: Vec<usize> =
            state.registrations.iter().enumerate().filter(|(_, r)| r.role == ROLE_ENSEMBLE).map(|(i, _)| i).collect();
        let spec = &state.config.gating;
        let chosen = match spec {
            GateSpec::GateModel => {
                let (_, gate_reg) = state
                    .registrations
                    .iter()
                    .enumerate()
                    .find(|(_, r)| r.role == ROLE_GATE)
                    .ok_or_else(|| McError::Invalid("gate_model gating needs a gate registration".into()))?;
                let input = member_input(&gate_reg.callable, inputs, context, None);
                if mode == Mode::Live {
                    caller.bump(&gate_reg.callable.id);
                }
                let out = self
                    .invoke(caller, &gate_reg.callable, &input, mode, false)
                    .map_err(|e| modelcaller_core::Error::Gating(format!("gate `{}`: {e}", gate_reg.callable.id)))?;
                let Some(Value::List(names)) = out.get(GATE_MEMBERS) else {
                    return Err(modelcaller_core::Error::Gating(format!("gate must return a `{GATE_MEMBERS}` list")).into());
                };
                let mut picked = Vec::new();
                for n in names {
                    let n = n.as_str().ok_or_else(|| modelcaller_core::Error::Gating("gate member names must be text".into()))?;
                    let idx = members
                        .iter()
                        .copied()
                        .find(|&i| state.registrations[i].callable.id == n || state.registrations[i].id == n)
                        .ok_or_else(|| modelcaller_core::Error::Gating(format!("gate selected unknown member `{n}`")))?;
                    picked.push(idx);
                }
                picked.sort_unstable();
                picked.dedup();
                return Ok(picked);
            }
            _ => {
                let by = match spec {
                    GateSpec::TopK { by, .. } => *by,
                    _ => state.config.aggregation.weight_source,
                };
                let candidates: Vec<GateCandidate> = members
                    .iter()
                    .map(|&i| {
                        let r = &state.registrations[i];
                        GateCandidate { accuracy: r.metrics.accuracy(by), qualified: r.qualification == Qualification::Qualified }
                    })
                    .collect();
                match (spec, mode) {
                    (GateSpec::RandomK { .. }, Mode::Live) => {
                        let mut rng = caller.rng.lock().expect("rng lock");
                        gate::select(spec, &candidates, &mut rng.gate)?
                    }
                    (GateSpec::RandomK { .. }, Mode::Replay) => {
                        let mut stream = caller.rng.lock().expect("rng lock").gate.clone();
                        gate::select(spec, &candidates, &mut stream)?
                    }
                    _ => gate::select(spec, &candidates, &mut modelcaller_core::SeededRng::new(0))?,
                }
            }
        };
        Ok(chosen.into_iter().map(|k| members[k]).collect())
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn execute_sources(
        &self,
        caller: &Caller,
        state: &CallerState,
        inputs: &Record,
        context: &Record,
        use_host: bool,
        members: &[usize],
        mode: Mode,
    ) -> Run {
        let host_job = use_host.then(|| {
            let host = state.host.as_ref().expect("host in scope");
            Job { callable: host.callable.clone(), input: inputs.project(host.callable.signature.inputs.names()), registration: None }
        });
        if mode == Mode::Live {
            if let Some(j) = &host_job {
                caller.bump(&j.callable.id);
            }
        }
        match state.config.execution {
            Execution::Parallel => {
                let mut jobs: Vec<Job> = host_job.into_iter().collect();
                for &i in members {
                    let callable = state.registrations[i].callable.clone();
                    let input = member_input(&callable, inputs, context, None);
                    if mode == Mode::Live {
                        caller.bump(&callable.id);
                    }
                    jobs.push(Job { callable, input, registration: Some(i) });
                }
                let results = self.run_jobs(caller, &jobs, mode);
                let mut run = Run { outputs: Vec::new(), contributions: Vec::new(), host_only: members.is_empty(), chain_error: None };
                for (job, (res, ms)) in jobs.iter().zip(results) {
                    if res.is_ok() {
                        run.contributions.push((run.outputs.len(), job.registration));
                    }
                    run.outputs.push(outcome(&job.callable.id, job.registration.is_none(), res, ms));
                }
                run
            }
            Execution::Sequential => {
                let (host_res, chain) = std::thread::scope(|s| {
                    let host = host_job.as_ref().map(|j| {
                        s.spawn(move || {
                            let t = Instant::now();
                            let r = self.invoke(caller, &j.callable, &j.input, mode, true);
                            (r, ms_since(t))
                        })
                    });
                    let chain = self.run_chain(caller, state, inputs, context, members, mode);
                    (host.map(|h| h.join().expect("host thread")), chain)
                });
                let mut run = Run { outputs: Vec::new(), contributions: Vec::new(), host_only: members.is_empty(), chain_error: None };
                if let (Some(j), Some((res, ms))) = (&host_job, host_res) {
                    if res.is_ok() {
                        run.contributions.push((0, None));
                    }
                    run.outputs.push(outcome(&j.callable.id, true, res, ms));
                }
                let offset = run.outputs.len();
                let ChainRun { outputs, error, last } = chain;
                if let Some(last) = last {
                    run.contributions.push((offset + outputs.len() - 1, Some(last)));
                }
                run.chain_error = error;
                run.outputs.extend(outputs);
                run
            }
        }
    }

    /// Runs jobs concurrently (inline when there is only one); results come
    /// back in job order.
    fn run_jobs(&self, caller: &Caller, jobs: &[Job], mode: Mode) -> Vec<(std::result::Result<Record, String>, f64)> {
        let run_one = |j: &Job| {
            let t = Instant::now();
            let r = self.invoke(caller, &j.callable, &j.input, mode, true);
            (r, ms_since(t))
        };
        if jobs.len() <= 1 {
            return jobs.iter().map(run_one).collect();
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs.iter().map(|j| s.spawn(move || run_one(j))).collect();
            handles.into_iter().map(|h| h.join().expect("member thread")).collect()
        })
    }

    /// Runs members as a chain; stage i > 1 receives the previous output as
    /// `__mc_prev`. The first failure stops the chain.
    fn run_chain(
        &self,
        caller: &Caller,
        state: &CallerState,
        inputs: &Record,
        context: &Record,
        members: &[usize],
        mode: Mode,
    ) -> ChainRun {
        let mut outputs = Vec::new();
        let mut prev: Option<Record> = None;
        for &i in members {
            let callable = &state.registrations[i].callable;
            let input = member_input(callable, inputs, context, prev.as_ref());
            if mode == Mode::Live {
                caller.bump(&callable.id);
            }
            let t = Instant::now();
            let res = self.invoke(caller, callable, &input, mode, true);
            let ms = ms_since(t);
            match res {
                Ok(out) => {
                    prev = Some(out.clone());
                    outputs.push(outcome(&callable.id, false, Ok(out), ms));
                }
                Err(e) => {
                    outputs.push(outcome(&callable.id, false, Err(e.clone()), ms));
                    return ChainRun { outputs, error: Some(format!("stage `{}` failed: {e}", callable.id)), last: None };
                }
            }
        }
        ChainRun { outputs, error: None, last: members.last().copied() }
    }

    pub(crate) fn aggregate_run(
        &self,
        caller: &Caller,
        state: &CallerState,
        inputs: &Record,
        context: &Record,
        run: &Run,
        mode: Mode,
    ) -> Result<Record> {
        if run.contributions.is_empty() {
            let mut reasons: Vec<String> =
                run.outputs.iter().filter_map(|o| o.error.as_ref().map(|e| format!("{}: {e}", o.callable_id))).collect();
            if let Some(e) = &run.chain_error {
                reasons.push(e.clone());
            }
            return Err(McError::AllFailed(reasons.join("; ")));
        }
        let items: Vec<(&str, &Record, Option<&Registration>)> = run
            .contributions
            .iter()
            .map(|&(o, r)| {
                let out = &run.outputs[o];
                (out.callable_id.as_str(), out.output.as_ref().expect("successful output"), r.map(|i| &state.registrations[i]))
            })
            .collect();
        self.aggregate_items(caller, state, inputs, context, &items, run.host_only, mode)
    }

    /// Applies the caller's aggregation spec to successful outputs.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn aggregate_items(
        &self,
        caller: &Caller,
        state: &CallerState,
        inputs: &Record,
        context: &Record,
        items: &[(&str, &Record, Option<&Registration>)],
        host_only: bool,
        mode: Mode,
    ) -> Result<Record> {
        if host_only {
            if let [(_, out, None)] = items {
                return Ok((*out).clone());
            }
        }
        let spec = &state.config.aggregation;
        let out = match &spec.strategy {
            AggregationStrategy::AggregatorModel => {
                let agg = state
                    .with_role(ROLE_AGGREGATOR)
                    .next()
                    .ok_or_else(|| modelcaller_core::Error::Aggregation("no aggregator registered".into()))?;
                let contributions: Vec<Contribution<'_>> = items.iter().map(|(id, o, _)| Contribution::new(id, o)).collect();
                let mut input = inputs.clone();
                if agg.callable.kind.receives_context() {
                    input.extend_from(context);
                }
                input.extend_from(&aggregate::stack(&contributions));
                if mode == Mode::Live {
                    caller.bump(&agg.callable.id);
                }
                self.invoke(caller, &agg.callable, &input, mode, true)
                    .map_err(|e| modelcaller_core::Error::Aggregation(format!("aggregator `{}`: {e}", agg.callable.id)))?
            }
            AggregationStrategy::CustomHook { hook } => {
                let f = self.inner.library.aggregator(hook)?;
                let members: Vec<HookMember<'_>> =
                    items.iter().map(|(id, o, r)| HookMember { id, output: o, metrics: r.map(|r| &r.metrics) }).collect();
                f(&members, inputs).map_err(|e| modelcaller_core::Error::Aggregation(format!("hook `{hook}`: {e}")))?
            }
            strategy => {
                let contributions: Vec<Contribution<'_>> = items
                    .iter()
                    .map(|(id, o, r)| Contribution {
                        id,
                        output: o,
                        accuracy: r.and_then(|r| r.metrics.accuracy(spec.weight_source)),
                        learned_weight: state.learned_weights.get(*id).copied(),
                    })
                    .collect();
                aggregate::aggregate(strategy, &contributions)?
            }
        };
        if spec.strategy != AggregationStrategy::Stacking {
            state.signature.outputs.check(&out, "aggregated output")?;
        }
        Ok(out)
    }
}

struct ChainRun {
    outputs: Vec<MemberOutput>,
    error: Option<String>,
    /// Registration index of the final stage when the chain completed.
    last: Option<usize>,
}

// ---- anytime ----------------------------------------------------------------

/// One partial result of an anytime call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnytimeEmission {
    pub output: Record,
    pub expected_quality: f64,
    pub members_included: Vec<String>,
    pub elapsed_ms: f64,
}

/// Everything an anytime call produced. `result` aggregates every source
/// that completed, which is also what gets cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnytimeOutcome {
    pub emissions: Vec<AnytimeEmission>,
    pub result: CallResult,
}

fn source_quality(reg: Option<&Registration>, attributes: &Record) -> SourceQuality {
    SourceQuality {
        gold: reg.and_then(|r| r.metrics.gold_accuracy),
        silver: reg.and_then(|r| r.metrics.silver_accuracy),
        prior: attributes.number(PRIOR_ATTRIBUTE),
    }
}

impl Hub {
    /// Starts every source at once and emits a new aggregate whenever a
    /// completion raises the expected quality. Stops when all sources are
    /// done or the deadline passes.
    pub fn call_anytime(
        &self,
        role: Role,
        caller_id: &str,
        inputs: Record,
        deadline: Duration,
        mut on_emit: impl FnMut(&AnytimeEmission),
    ) -> Result<AnytimeOutcome> {
        check_role(role, Method::Call)?;
        let started = Instant::now();
        let caller = self.caller(caller_id)?;
        let state = caller.snapshot();
        if !state.config.anytime {
            return Err(McError::Invalid(format!("caller `{}` is not configured for anytime calls", caller.id)));
        }
        if state.config.auto_id == modelcaller_core::AutoId::Passthrough {
            return Err(McError::Invalid("passthrough callers do not support anytime calls".into()));
        }
        state.signature.inputs.check(&inputs, "call inputs")?;
        let context = self.resolve_context(&caller, &state, &inputs, &crate::caller::CallOptions::default())?;
        let use_host = state.config.call_target.includes_host() && state.host.is_some();
        let members = if state.config.call_target.includes_registered() {
            self.select_members(&caller, &state, &inputs, &context, Mode::Live)?
        } else {
            Vec::new()
        };

        let mut sources: Vec<(Arc<Callable>, Record, Option<usize>, SourceQuality)> = Vec::new();
        if use_host {
            let h = state.host.as_ref().expect("host in scope");
            let input = inputs.project(h.callable.signature.inputs.names());
            sources.push((h.callable.clone(), input, None, source_quality(None, &h.attributes)));
        }
        for &i in &members {
            let r = &state.registrations[i];
            let input = member_input(&r.callable, &inputs, &context, None);
            sources.push((r.callable.clone(), input, Some(i), source_quality(Some(r), &r.attributes)));
        }
        if sources.len() < 2 {
            return Err(McError::Invalid(format!(
                "anytime calls need at least two output sources, caller `{}` has {}",
                caller.id,
                sources.len()
            )));
        }

        let (tx, rx) = mpsc::channel();
        for (idx, (callable, input, _, _)) in sources.iter().enumerate() {
            caller.bump(&callable.id);
            let (hub, caller, callable, input, tx) = (self.clone(), caller.clone(), callable.clone(), input.clone(), tx.clone());
            std::thread::spawn(move || {
                let t = Instant::now();
                let r = hub.invoke(&caller, &callable, &input, Mode::Live, true);
                let _ = tx.send((idx, r, ms_since(t)));
            });
        }
        drop(tx);

        let mut results: Vec<Option<(std::result::Result<Record, String>, f64)>> = vec![None; sources.len()];
        let mut gate = MonotoneGate::default();
        let mut emissions = Vec::new();
        let end = started + deadline;
        let mut pending = sources.len();
        while pending > 0 {
            let Some(left) = end.checked_duration_since(Instant::now()) else { break };
            let Ok((idx, res, ms)) = rx.recv_timeout(left) else { break };
            pending -= 1;
            let ok = res.is_ok();
            results[idx] = Some((res, ms));
            if !ok {
                continue;
            }
            let done: Vec<usize> = (0..sources.len()).filter(|&k| matches!(results[k], Some((Ok(_), _)))).collect();
            let items: Vec<(&str, &Record, Option<&Registration>)> = done
                .iter()
                .map(|&k| {
                    let out = results[k].as_ref().and_then(|(r, _)| r.as_ref().ok()).expect("completed");
                    (sources[k].0.id.as_str(), out, sources[k].2.map(|i| &state.registrations[i]))
                })
                .collect();
            let Ok(output) = self.aggregate_items(&caller, &state, &inputs, &context, &items, false, Mode::Live) else {
                continue;
            };
            let q = expected_quality(done.iter().map(|&k| &sources[k].3)).expect("non-empty");
            if gate.admit(q) {
                let e = AnytimeEmission {
                    output,
                    expected_quality: q,
                    members_included: done.iter().map(|&k| sources[k].0.id.clone()).collect(),
                    elapsed_ms: ms_since(started),
                };
                on_emit(&e);
                emissions.push(e);
            }
        }

        let member_outputs: Vec<MemberOutput> = sources
            .iter()
            .zip(&results)
            .map(|((c, _, reg, _), r)| match r {
                Some((res, ms)) => outcome(&c.id, reg.is_none(), res.clone(), *ms),
                None => outcome(&c.id, reg.is_none(), Err("deadline exceeded".into()), ms_since(started)),
            })
            .collect();
        let items: Vec<(&str, &Record, Option<&Registration>)> = sources
            .iter()
            .zip(&member_outputs)
            .filter_map(|((c, _, reg, _), m)| m.output.as_ref().map(|o| (c.id.as_str(), o, reg.map(|i| &state.registrations[i]))))
            .collect();
        if items.is_empty() {
            return Err(McError::AllFailed("no source completed before the deadline".into()));
        }
        let output = self.aggregate_items(&caller, &state, &inputs, &context, &items, false, Mode::Live)?;
        let (sample_id, review_token) =
            self.record(&caller, &state, inputs, context, output.clone(), Origin::Call, true);
        let mut targets_used = Vec::new();
        if use_host {
            targets_used.push(TargetKind::Host);
        }
        if !members.is_empty() {
            targets_used.push(TargetKind::Registered);
        }
        Ok(AnytimeOutcome {
            emissions,
            result: CallResult {
                output,
                member_outputs,
                review_token,
                targets_used,
                sample_id,
                config_version: state.config_version,
                latency_ms: ms_since(started),
            },
        })
    }
}

// ---- collaboration ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CollabState {
    Open,
    Answered { output: Record },
    TimedOut,
}

/// A question put to a person or outside system standing in for a member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollabRequest {
    pub id: String,
    pub caller_id: String,
    pub member_id: String,
    pub inputs: Record,
    /// Parameters an answer must carry.
    pub outputs: Params,
    pub created_at: u64,
    pub deadline: u64,
    #[serde(flatten)]
    pub state: CollabState,
}

struct Entry {
    request: CollabRequest,
    expires: Instant,
}

impl Entry {
    fn refresh(&mut self, now: Instant) {
        if self.request.state == CollabState::Open && now >= self.expires {
            self.request.state = CollabState::TimedOut;
        }
    }
}

#[derive(Default)]
pub struct CollabBoard {
    entries: Mutex<(u64, BTreeMap<u64, Entry>)>,
    changed: Condvar,
}

fn request_seq(id: &str) -> Option<u64> {
    id.strip_prefix("collab-").and_then(|n| n.parse().ok())
}

impl CollabBoard {
    pub fn open(&self, clock: &Clock, caller_id: &str, member: &Callable, inputs: Record, timeout_ms: u64) -> CollabRequest {
        let now = clock.now_ms();
        let mut g = self.entries.lock().expect("collab lock");
        g.0 += 1;
        let seq = g.0;
        let request = CollabRequest {
            id: format!("collab-{seq}"),
            caller_id: caller_id.to_string(),
            member_id: member.id.clone(),
            inputs,
            outputs: member.signature.outputs.clone(),
            created_at: now,
            deadline: now + timeout_ms,
            state: CollabState::Open,
        };
        g.1.insert(seq, Entry { request: request.clone(), expires: Instant::now() + Duration::from_millis(timeout_ms) });
        request
    }

    /// Blocks until the request is answered or times out.
    pub fn wait(&self, id: &str) -> std::result::Result<Record, String> {
        let seq = request_seq(id).ok_or_else(|| format!("unknown collaboration request `{id}`"))?;
        let mut g = self.entries.lock().expect("collab lock");
        loop {
            let entry = g.1.get_mut(&seq).ok_or_else(|| format!("unknown collaboration request `{id}`"))?;
            let now = Instant::now();
            entry.refresh(now);
            match &entry.request.state {
                CollabState::Answered { output } => return Ok(output.clone()),
                CollabState::TimedOut => return Err(format!("collaboration request `{id}` timed out")),
                CollabState::Open => {
                    let left = entry.expires - now;
                    g = self.changed.wait_timeout(g, left).expect("collab lock").0;
                }
            }
        }
    }

    pub(crate) fn ask(
        &self,
        clock: &Clock,
        caller_id: &str,
        member: &Callable,
        inputs: Record,
        timeout_ms: u64,
    ) -> std::result::Result<Record, String> {
        let req = self.open(clock, caller_id, member, inputs, timeout_ms);
        self.wait(&req.id)
    }

    pub fn answer(&self, id: &str, output: Record) -> Result<CollabRequest> {
        let seq = request_seq(id).ok_or_else(|| McError::UnknownRequest(id.to_string()))?;
        let mut g = self.entries.lock().expect("collab lock");
        let entry = g.1.get_mut(&seq).ok_or_else(|| McError::UnknownRequest(id.to_string()))?;
        entry.refresh(Instant::now());
        match &entry.request.state {
            CollabState::Open => {}
            CollabState::Answered { .. } => return Err(McError::Conflict(format!("request `{id}` was already answered"))),
            CollabState::TimedOut => return Err(McError::Conflict(format!("request `{id}` has timed out"))),
        }
        entry.request.outputs.check(&output, "collaboration answer")?;
        entry.request.state = CollabState::Answered { output };
        let out = entry.request.clone();
        drop(g);
        self.changed.notify_all();
        Ok(out)
    }

    pub fn list(&self, open_only: bool) -> Vec<CollabRequest> {
        let mut g = self.entries.lock().expect("collab lock");
        let now = Instant::now();
        g.1.values_mut()
            .map(|e| {
                e.refresh(now);
                &e.request
            })
            .filter(|r| !open_only || r.state == CollabState::Open)
            .cloned()
            .collect()
    }
}

impl Hub {
    pub fn collab_requests(&self, role: Role, open_only: bool) -> Result<Vec<CollabRequest>> {
        check_role(role, Method::Read)?;
        Ok(self.inner.collab.list(open_only))
    }

    pub fn collab_answer(&self, role: Role, id: &str, output: Record) -> Result<CollabRequest> {
        check_role(role, Method::CollabAnswer)?;
        self.inner.collab.answer(id, output)
    }

    /// Opens a request on behalf of the caller's external member without
    /// blocking; the answer is collected with [`CollabBoard::wait`].
    pub fn collab_open(&self, role: Role, caller_id: &str, inputs: Record, timeout: Duration) -> Result<CollabRequest> {
        check_role(role, Method::Call)?;
        let caller = self.caller(caller_id)?;
        let state = caller.snapshot();
        let member = state
            .registrations
            .iter()
            .find(|r| r.callable.kind == crate::callable::CallableKind::External)
            .ok_or_else(|| McError::Invalid(format!("caller `{}` has no external member", caller.id)))?;
        state.signature.inputs.check(&inputs, "collaboration inputs")?;
        Ok(self.inner.collab.open(&self.inner.clock, &caller.id, &member.callable, inputs, timeout.as_millis() as u64))
    }

    pub fn collab_board(&self) -> &CollabBoard {
        &self.inner.collab
    }
}
