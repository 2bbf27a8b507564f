//! Evaluation, qualification, training and drift detection.

use std::collections::BTreeMap;
use std::time::Instant;

use modelcaller_core::aggregate::{AggregationStrategy, Contribution};
use modelcaller_core::drift::{check_window, DriftAlert, DriftCheck, WindowBounds};
use modelcaller_core::quality::{match_outputs, qualify, Tally};
use modelcaller_core::value::PREV_PARAM;
use modelcaller_core::{
    Category, CategoryCounts, Matcher, MemberMetrics, Method, Origin, Qualification, Record, Role, SeededRng,
    Supervision, TrainInit, TrainTrace,
};
use serde::{Deserialize, Serialize};

use crate::callable::Callable;
use crate::caller::{
    check_role, member_input, ms_since, CallOptions, Caller, CallerState, Hub, Mode, Registration, ROLE_AGGREGATOR,
    ROLE_ENSEMBLE,
};
use crate::datastore::{DatasetSelector, Review, Sample};
use crate::error::{McError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Gold samples only.
    #[default]
    Golden,
    /// Gold and Silver samples.
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    Local,
    /// Also covers every ensemble member.
    Nested,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    /// Registration to evaluate; the caller itself when absent.
    pub target: Option<String>,
    pub behavior: Behavior,
    pub scope: Scope,
    /// Overrides the caller's configured matcher.
    pub matcher: Option<Matcher>,
}

impl EvalSpec {
    pub fn registration(rid: impl Into<String>, behavior: Behavior) -> Self {
        Self { target: Some(rid.into()), behavior, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEval {
    pub registration: String,
    pub callable_id: String,
    pub metrics: MemberMetrics,
    pub qualification: Qualification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub caller_id: String,
    pub behavior: Behavior,
    pub scope: Scope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caller: Option<MemberMetrics>,
    pub members: Vec<MemberEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    /// Registration to train; the caller itself when absent.
    pub target: Option<String>,
    pub mode: Scope,
    pub init: TrainInit,
    pub dataset: DatasetSelector,
    /// Split the dataset disjointly across the trained members.
    pub bagging: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self { target: None, mode: Scope::Local, init: TrainInit::Fresh, dataset: DatasetSelector::training(), bagging: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainedKind {
    Model,
    Aggregator,
    /// The caller's quality-weighted-mean weights.
    Weights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPart {
    pub target: String,
    pub kind: TrainedKind,
    pub trace: TrainTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub caller_id: String,
    pub parts: Vec<TrainPart>,
    pub samples_used: usize,
    pub duration_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DriftReport {
    NotEnoughData { available: usize, required: usize },
    Evaluated {
        windowed_accuracy: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        baseline_accuracy: Option<f64>,
        window: WindowBounds,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alert: Option<DriftAlert>,
    },
}

impl DriftReport {
    pub fn alert(&self) -> Option<&DriftAlert> {
        match self {
            DriftReport::Evaluated { alert, .. } => alert.as_ref(),
            DriftReport::NotEnoughData { .. } => None,
        }
    }
}

/// Everything the metrics endpoint reports for one caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub caller_id: String,
    pub name: String,
    pub config_version: u64,
    pub call_target: modelcaller_core::CallTarget,
    pub sample_counts: CategoryCounts,
    pub pending_reviews: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caller_metrics: Option<MemberMetrics>,
    pub members: Vec<MemberEval>,
    pub learned_weights: BTreeMap<String, f64>,
    pub invocations: BTreeMap<String, u64>,
    pub drift_alerts: Vec<DriftAlert>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_state: Option<String>,
}

#[derive(Default)]
struct Score {
    gold: Tally,
    silver: Tally,
    failures: usize,
    skipped: usize,
    latencies: Vec<f64>,
}

enum Subject<'a> {
    Caller,
    Member(&'a Callable),
}

fn eval_categories(behavior: Behavior) -> &'static [Category] {
    match behavior {
        Behavior::Golden => &[Category::Gold],
        Behavior::Combined => &[Category::Gold, Category::Silver],
    }
}

fn build_metrics(prev: Option<&MemberMetrics>, score: &Score, behavior: Behavior, state: &CallerState, counts: CategoryCounts, now: u64) -> MemberMetrics {
    let silver = (behavior == Behavior::Combined).then_some(score.silver);
    let mut m = MemberMetrics::from_tallies(score.gold, silver, &state.config.min_eval_samples);
    m.failures = score.failures;
    m.skipped = score.skipped;
    m.sample_counts = counts;
    m.last_evaluated = Some(now);
    m.latency_ewma_ms = prev.map_or(0.0, |p| p.latency_ewma_ms);
    score.latencies.iter().for_each(|&l| m.observe_latency(l));
    m
}

impl Hub {
    /// Matches with the given matcher, resolving custom hooks through the
    /// library. Parameter-set mismatches count as misses.
    pub(crate) fn outputs_match(&self, matcher: &Matcher, actual: &Record, desired: &Record) -> Result<bool> {
        match matcher {
            Matcher::Custom { hook } => Ok(self.inner.library.matcher(hook)?(actual, desired)),
            m => Ok(match_outputs(actual, desired, m).unwrap_or(false)),
        }
    }

    fn score(
        &self,
        caller: &Caller,
        state: &CallerState,
        subject: Subject<'_>,
        samples: &[Sample],
        matcher: &Matcher,
    ) -> Result<Score> {
        let mut score = Score::default();
        for s in samples {
            let t = Instant::now();
            let actual = match subject {
                Subject::Caller => {
                    if !state.signature.context_params.names().all(|n| s.context.contains(n)) {
                        score.skipped += 1;
                        continue;
                    }
                    let mut ctx = Record::new();
                    for (k, v) in s.context.iter() {
                        if state.signature.context_params.contains(k) || k == modelcaller_core::value::ID_PARAM {
                            ctx.insert(k, v.clone());
                        }
                    }
                    self.run_call(caller, s.inputs.clone(), &CallOptions::direct(ctx), Mode::Replay)
                        .map(|r| r.output)
                        .map_err(|e| e.to_string())
                }
                Subject::Member(callable) => {
                    let input = member_input(callable, &s.inputs, &s.context, None);
                    if !callable.signature.inputs.names().filter(|n| *n != PREV_PARAM).all(|n| input.contains(n)) {
                        score.skipped += 1;
                        continue;
                    }
                    self.invoke(caller, callable, &input, Mode::Replay, true)
                }
            };
            score.latencies.push(ms_since(t));
            let matched = match &actual {
                Ok(out) => self.outputs_match(matcher, out, &s.output)?,
                Err(_) => {
                    score.failures += 1;
                    false
                }
            };
            match s.category() {
                Category::Gold => score.gold.record(matched),
                _ => score.silver.record(matched),
            }
        }
        Ok(score)
    }

    pub fn evaluate(&self, role: Role, caller_id: &str, spec: &EvalSpec) -> Result<EvalReport> {
        check_role(role, Method::Eval)?;
        let caller = self.caller(caller_id)?;
        self.evaluate_inner(&caller, spec)
    }

    pub(crate) fn evaluate_inner(&self, caller: &Caller, spec: &EvalSpec) -> Result<EvalReport> {
        let state = caller.snapshot();
        let matcher = spec.matcher.clone().unwrap_or_else(|| state.config.matcher.clone());
        matcher.validate()?;
        let (samples, counts) = {
            let store = caller.store();
            (store.view(&DatasetSelector::categories(eval_categories(spec.behavior).iter().copied())), store.counts())
        };
        let now = self.now();

        let mut member_ids: Vec<String> = Vec::new();
        let mut caller_metrics = None;
        match &spec.target {
            Some(rid) => member_ids.push(state.registration(rid)?.id.clone()),
            None => {
                let score = self.score(caller, &state, Subject::Caller, &samples, &matcher)?;
                caller_metrics = Some(build_metrics(state.caller_metrics.as_ref(), &score, spec.behavior, &state, counts, now));
                if spec.scope == Scope::Nested {
                    member_ids.extend(state.with_role(ROLE_ENSEMBLE).map(|r| r.id.clone()));
                }
            }
        }
        let mut scored: Vec<(String, MemberMetrics)> = Vec::new();
        for rid in &member_ids {
            let reg = state.registration(rid)?;
            let score = self.score(caller, &state, Subject::Member(&reg.callable), &samples, &matcher)?;
            scored.push((rid.clone(), build_metrics(Some(&reg.metrics), &score, spec.behavior, &state, counts, now)));
        }

        let members = caller.mutate(|st| {
            if let Some(m) = &caller_metrics {
                st.caller_metrics = Some(m.clone());
            }
            let thresholds = st.config.quality_thresholds;
            let mut out = Vec::new();
            for (rid, metrics) in &scored {
                if let Some(reg) = st.registrations.iter_mut().find(|r| &r.id == rid) {
                    reg.metrics = metrics.clone();
                    reg.qualification = qualify(metrics.gold_accuracy, metrics.silver_accuracy, &thresholds);
                    out.push(MemberEval {
                        registration: reg.id.clone(),
                        callable_id: reg.callable.id.clone(),
                        metrics: reg.metrics.clone(),
                        qualification: reg.qualification,
                    });
                }
            }
            Ok(out)
        })?;
        Ok(EvalReport { caller_id: caller.id.clone(), behavior: spec.behavior, scope: spec.scope, caller: caller_metrics, members })
    }

    /// Re-derives the stored qualification from stored metrics and the
    /// current thresholds.
    pub fn qualify(&self, role: Role, caller_id: &str, rid: &str) -> Result<Qualification> {
        check_role(role, Method::Eval)?;
        let caller = self.caller(caller_id)?;
        caller.mutate(|st| {
            let thresholds = st.config.quality_thresholds;
            let reg = st
                .registrations
                .iter_mut()
                .find(|r| r.id == rid)
                .ok_or_else(|| McError::UnknownRegistration(rid.to_string()))?;
            reg.qualification = qualify(reg.metrics.gold_accuracy, reg.metrics.silver_accuracy, &thresholds);
            Ok(reg.qualification)
        })
    }

    pub(crate) fn evaluate_registration_now(&self, caller: &Caller, rid: &str) -> Result<EvalReport> {
        self.evaluate_inner(caller, &EvalSpec::registration(rid, Behavior::Combined))
    }

    /// Training on registration: fits a fresh trainable model on the
    /// caller's training data when there is any.
    pub(crate) fn auto_train_registration(&self, caller: &Caller, rid: &str) -> Result<()> {
        let state = caller.snapshot();
        let reg = state.registration(rid)?;
        if !reg.callable.trainable() {
            return Ok(());
        }
        let samples = caller.store().view(&DatasetSelector::training());
        let data = training_pairs(&reg.callable, &samples);
        if data.is_empty() {
            return Ok(());
        }
        reg.callable.shared_model().expect("trainable").train(&data, TrainInit::Fresh)?;
        Ok(())
    }

    pub fn train(&self, role: Role, caller_id: &str, spec: &TrainSpec) -> Result<TrainReport> {
        check_role(role, Method::Train)?;
        let caller = self.caller(caller_id)?;
        self.train_inner(&caller, spec)
    }

    pub(crate) fn train_inner(&self, caller: &Caller, spec: &TrainSpec) -> Result<TrainReport> {
        let started = Instant::now();
        let state = caller.snapshot();
        let samples = caller.store().view(&spec.dataset);
        let mut parts = Vec::new();

        let models: Vec<&Registration> = match &spec.target {
            Some(rid) => {
                let reg = state.registration(rid)?;
                if !reg.callable.trainable() {
                    return Err(McError::NotTrainable(format!("registration `{rid}` ({}) has no learnable parameters", reg.callable.id)));
                }
                vec![reg]
            }
            None if spec.mode == Scope::Nested => state.with_role(ROLE_ENSEMBLE).filter(|r| r.callable.trainable()).collect(),
            None => Vec::new(),
        };
        let own = spec.target.is_none() && self.caller_learnable(&state);
        if models.is_empty() && !own {
            return Err(McError::NotTrainable(format!("caller `{}` has nothing to train in {:?} mode", caller.id, spec.mode)));
        }
        if samples.is_empty() {
            return Err(McError::EmptyDataset(format!("no samples match the selector for caller `{}`", caller.id)));
        }

        let shares: Vec<Vec<usize>> = if spec.bagging && models.len() > 1 {
            let seed = caller.rng.lock().expect("rng lock").train.next_u64();
            let mut shares = bagging_partition(samples.len(), models.len(), seed);
            shares.iter_mut().for_each(|s| s.sort_unstable());
            shares
        } else {
            vec![(0..samples.len()).collect(); models.len()]
        };
        for (reg, share) in models.iter().zip(&shares) {
            let subset: Vec<Sample> = share.iter().map(|&i| samples[i].clone()).collect();
            let data = training_pairs(&reg.callable, &subset);
            if data.is_empty() {
                return Err(McError::EmptyDataset(format!("no usable samples for `{}`", reg.callable.id)));
            }
            let trace = reg.callable.shared_model().expect("trainable").train(&data, spec.init)?;
            parts.push(TrainPart { target: reg.id.clone(), kind: TrainedKind::Model, trace });
        }
        if own {
            parts.push(self.train_own(caller, &state, &samples, spec.init)?);
        }

        let evaluation = if state.config.auto_test {
            Some(match &spec.target {
                Some(rid) => self.evaluate_registration_now(caller, rid)?,
                None => self.evaluate_inner(
                    caller,
                    &EvalSpec { behavior: Behavior::Combined, scope: spec.mode, ..EvalSpec::default() },
                )?,
            })
        } else {
            None
        };
        Ok(TrainReport {
            caller_id: caller.id.clone(),
            parts,
            samples_used: samples.len(),
            duration_ms: ms_since(started),
            evaluation,
        })
    }

    fn caller_learnable(&self, state: &CallerState) -> bool {
        match state.config.aggregation.strategy {
            AggregationStrategy::QualityWeightedMean => state.members().next().is_some(),
            AggregationStrategy::AggregatorModel => state.with_role(ROLE_AGGREGATOR).any(|r| r.callable.trainable()),
            _ => false,
        }
    }

    /// Trains the caller's own parameters: the aggregator model or the
    /// quality-weighted-mean weights.
    fn train_own(&self, caller: &Caller, state: &CallerState, samples: &[Sample], init: TrainInit) -> Result<TrainPart> {
        let members: Vec<&Registration> = state.members().collect();
        // Member outputs per sample, replayed without side effects.
        let replayed: Vec<Vec<Option<Record>>> = samples
            .iter()
            .map(|s| {
                members
                    .iter()
                    .map(|r| self.invoke(caller, &r.callable, &member_input(&r.callable, &s.inputs, &s.context, None), Mode::Replay, true).ok())
                    .collect()
            })
            .collect();

        if state.config.aggregation.strategy == AggregationStrategy::AggregatorModel {
            let agg = state.with_role(ROLE_AGGREGATOR).next().expect("checked learnable");
            let data: Vec<(Record, Record)> = samples
                .iter()
                .zip(&replayed)
                .map(|(s, outs)| {
                    let contributions: Vec<Contribution<'_>> = members
                        .iter()
                        .zip(outs)
                        .filter_map(|(r, o)| o.as_ref().map(|o| Contribution::new(&r.callable.id, o)))
                        .collect();
                    let mut input = s.inputs.clone();
                    if agg.callable.kind.receives_context() {
                        input.extend_from(&s.context);
                    }
                    input.extend_from(&modelcaller_core::aggregate::stack(&contributions));
                    (input, s.output.clone())
                })
                .collect();
            let trace = agg.callable.shared_model().expect("checked learnable").train(&data, init)?;
            return Ok(TrainPart { target: agg.id.clone(), kind: TrainedKind::Aggregator, trace });
        }

        let start: Vec<f64> = members
            .iter()
            .map(|r| match init {
                TrainInit::Incremental => state.learned_weights.get(&r.callable.id).copied(),
                TrainInit::Fresh => None,
            }
            .or(r.metrics.accuracy(state.config.aggregation.weight_source))
            .unwrap_or(1.0)
            .max(WEIGHT_FLOOR))
            .collect();
        let rows: Vec<WeightRow> = samples
            .iter()
            .zip(&replayed)
            .flat_map(|(s, outs)| weight_rows(s, outs))
            .collect();
        let (weights, trace) = fit_weights(start, &rows, state.config.weight_learning_rate, state.config.weight_epochs);
        caller.mutate(|st| {
            for (r, w) in members.iter().zip(&weights) {
                st.learned_weights.insert(r.callable.id.clone(), *w);
            }
            Ok(())
        })?;
        Ok(TrainPart { target: caller.id.clone(), kind: TrainedKind::Weights, trace })
    }

    /// Checks the most recent `window` supervised call samples, comparing
    /// the cached output against the reviewed one. A new alert is recorded
    /// only when the window goes from healthy to breached.
    pub fn detect_drift(&self, role: Role, caller_id: &str, window: usize) -> Result<DriftReport> {
        check_role(role, Method::Read)?;
        let caller = self.caller(caller_id)?;
        self.detect_drift_inner(&caller, window)
    }

    pub(crate) fn detect_drift_inner(&self, caller: &Caller, window: usize) -> Result<DriftReport> {
        let state = caller.snapshot();
        let matcher = &state.config.matcher;
        let (stamps, outcomes): (Vec<u64>, Vec<bool>) = caller
            .store()
            .samples()
            .iter()
            .filter(|s| s.origin == Origin::Call && s.supervision == Supervision::Supervised)
            .map(|s| {
                let cached = match (&s.review, &s.original_output) {
                    (Review::Overridden, Some(o)) => o,
                    _ => &s.output,
                };
                Ok((s.created_at, self.outputs_match(matcher, cached, &s.output)?))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let threshold = state.config.quality_thresholds.supervised_min;
        let stats = match check_window(&outcomes, window, threshold) {
            DriftCheck::NotEnoughData { available, required } => {
                return Ok(DriftReport::NotEnoughData { available, required })
            }
            DriftCheck::Evaluated(stats) => stats,
        };
        let bounds = WindowBounds {
            start: stamps[stats.first],
            end: stamps[stamps.len() - 1],
            size: stats.size,
        };
        let was = caller.drift_breached.swap(stats.breached, std::sync::atomic::Ordering::SeqCst);
        let alert = stats.breached.then(|| DriftAlert {
            caller_id: caller.id.clone(),
            window: bounds,
            windowed_accuracy: stats.windowed_accuracy,
            baseline_accuracy: stats.baseline_accuracy,
            threshold_breached: ("quality_thresholds.supervised_min".to_string(), threshold),
            raised_at: self.now(),
        });
        if let (Some(a), false) = (&alert, was) {
            caller.alerts.lock().expect("alert lock").push(a.clone());
        }
        Ok(DriftReport::Evaluated {
            windowed_accuracy: stats.windowed_accuracy,
            baseline_accuracy: stats.baseline_accuracy,
            window: bounds,
            alert,
        })
    }

    pub fn metrics(&self, role: Role, caller_id: &str) -> Result<MetricsReport> {
        check_role(role, Method::Read)?;
        let caller = self.caller(caller_id)?;
        let state = caller.snapshot();
        let (sample_counts, pending_reviews) = {
            let store = caller.store();
            (store.counts(), store.pending_count())
        };
        Ok(MetricsReport {
            caller_id: caller.id.clone(),
            name: caller.name.clone(),
            config_version: state.config_version,
            call_target: state.config.call_target,
            sample_counts,
            pending_reviews,
            caller_metrics: state.caller_metrics.clone(),
            members: state
                .registrations
                .iter()
                .map(|r| MemberEval {
                    registration: r.id.clone(),
                    callable_id: r.callable.id.clone(),
                    metrics: r.metrics.clone(),
                    qualification: r.qualification,
                })
                .collect(),
            learned_weights: state.learned_weights.clone(),
            invocations: caller.counters(),
            drift_alerts: caller.alerts(),
            plan_state: caller.plan().map(|p| p.state.name().to_string()),
        })
    }
}

/// (model input, desired output) pairs; samples missing an input the model
/// needs are left out.
fn training_pairs(callable: &Callable, samples: &[Sample]) -> Vec<(Record, Record)> {
    samples
        .iter()
        .filter_map(|s| {
            let input = member_input(callable, &s.inputs, &s.context, None);
            callable
                .signature
                .inputs
                .names()
                .filter(|n| *n != PREV_PARAM)
                .all(|n| input.contains(n))
                .then(|| (input, s.output.clone()))
        })
        .collect()
}

const WEIGHT_FLOOR: f64 = 1e-6;

/// One numeric target with the member values available for it.
struct WeightRow {
    /// (member index, value)
    values: Vec<(usize, f64)>,
    target: f64,
}

fn weight_rows(sample: &Sample, outs: &[Option<Record>]) -> Vec<WeightRow> {
    sample
        .output
        .iter()
        .filter_map(|(param, want)| {
            let target = want.as_f64()?;
            let values: Vec<(usize, f64)> =
                outs.iter().enumerate().filter_map(|(i, o)| o.as_ref()?.number(param).map(|v| (i, v))).collect();
            (!values.is_empty()).then_some(WeightRow { values, target })
        })
        .collect()
}

fn weighted(row: &WeightRow, w: &[f64]) -> (f64, f64) {
    let total: f64 = row.values.iter().map(|&(i, _)| w[i]).sum();
    let agg = row.values.iter().map(|&(i, v)| w[i] * v).sum::<f64>() / total;
    (agg, total)
}

fn mean_loss(rows: &[WeightRow], w: &[f64]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|r| (weighted(r, w).0 - r.target).powi(2)).sum::<f64>() / rows.len() as f64
}

/// Full-batch gradient descent on the squared error of the weighted mean,
/// with weights kept positive.
fn fit_weights(mut w: Vec<f64>, rows: &[WeightRow], lr: f64, epochs: usize) -> (Vec<f64>, TrainTrace) {
    let initial_loss = Some(mean_loss(rows, &w));
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        if rows.is_empty() {
            break;
        }
        let mut grad = vec![0.0; w.len()];
        for r in rows {
            let (agg, total) = weighted(r, &w);
            let e = agg - r.target;
            for &(i, v) in &r.values {
                grad[i] += 2.0 * e * (v - agg) / total;
            }
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi = (*wi - lr * g / rows.len() as f64).max(WEIGHT_FLOOR);
        }
        losses.push(mean_loss(rows, &w));
    }
    (w, TrainTrace { initial_loss, losses, samples: rows.len() })
}

/// Seeded shuffle of `0..n` dealt round-robin into `parts` disjoint shares.
pub fn bagging_partition(n: usize, parts: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut idx);
    let mut shares = vec![Vec::new(); parts.max(1)];
    let k = shares.len();
    for (j, i) in idx.into_iter().enumerate() {
        shares[j % k].push(i);
    }
    shares
}
