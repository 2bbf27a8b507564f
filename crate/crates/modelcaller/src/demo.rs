//! Seeded fraud-detection scenario: a legacy rule per region is moved onto a
//! learned model by a transformation plan while synthetic traffic flows.

use std::fmt::Write as _;
use std::sync::Arc;

use modelcaller_core::{
    AggregationSpec, AggregationStrategy, CallTarget, CallerConfig, Category, CategoryCounts, ModelKind, Params,
    PlanState, QualityThresholds, Record, Role, Signature, SeededRng, ValueKind,
};
use serde::{Deserialize, Serialize};

use crate::callable::Callable;
use crate::caller::{CallOptions, CallerSpec, Hub, ROLE_ENSEMBLE};
use crate::datastore::{DatasetSelector, FeedbackAction};
use crate::error::{McError, Result};
use crate::quality::{Scope, TrainSpec};
use crate::transformation::PlanOptions;

pub const REGIONS: [&str; 2] = ["EU", "US"];
const LEGACY_CUTOFF: f64 = 1000.0;

/// The crude legacy host: fraud iff amount exceeds 1000.
pub fn legacy_rule(inputs: &Record) -> Record {
    let fraud = inputs.number("amount").is_some_and(|a| a > LEGACY_CUTOFF);
    Record::new().with("fraud", i32::from(fraud))
}

pub fn transaction_signature() -> Signature {
    Signature::new(
        Params::new()
            .with("amount", ValueKind::Number)
            .with("hour", ValueKind::Number)
            .with("merchant_risk", ValueKind::Number)
            .with("region", ValueKind::Text),
        Params::new().with("fraud", ValueKind::Number),
    )
}

/// Ground-truth fraud label for a region. `drifted` switches EU to its
/// post-drift rule; US has a single rule.
pub fn true_label(region: &str, inputs: &Record, drifted: bool) -> Record {
    let amount = inputs.number("amount").unwrap_or(0.0);
    let hour = inputs.number("hour").unwrap_or(0.0);
    let risk = inputs.number("merchant_risk").unwrap_or(0.0);
    let fraud = match (region, drifted) {
        ("US", _) => amount > 800.0 && risk > 0.7,
        (_, false) => (amount > 500.0 && hour <= 5.0) || risk > 0.9,
        (_, true) => risk > 0.6,
    };
    Record::new().with("fraud", i32::from(fraud))
}

fn region_hash(region: &str) -> u64 {
    region.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn cents(x: f64) -> f64 {
    ((x * 100.0).round() / 100.0).max(0.01)
}

/// One synthetic transaction, deterministic per (region, step, seed).
///
/// Traffic is a mixture: 75% ordinary daytime purchases, 15% large
/// night-time purchases at risky merchants, 10% uniform noise.
pub fn synth_transaction(region: &str, step: u64, seed: u64) -> Record {
    let mut rng = SeededRng::new(seed ^ region_hash(region) ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let cluster = rng.next_f64();
    let (amount, hour, risk) = if cluster < 0.75 {
        (5.0 + 495.0 * rng.next_f64(), 6 + rng.below(18), 0.9 * rng.next_f64())
    } else if cluster < 0.90 {
        (1100.0 + 900.0 * rng.next_f64(), rng.below(6), 0.92 + 0.08 * rng.next_f64())
    } else {
        (2000.0 * rng.next_f64(), rng.below(24), rng.next_f64())
    };
    Record::new()
        .with("amount", cents(amount))
        .with("hour", hour as f64)
        .with("merchant_risk", (risk * 1e4).round() / 1e4)
        .with("region", region)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoScenario {
    pub regions: Vec<String>,
    pub steps: u64,
    /// Step at which the drift region switches to its post-drift rule.
    pub drift_at: Option<u64>,
    pub drift_region: String,
    pub seed: u64,
    pub feedback_fraction: f64,
    pub edata_fraction: f64,
    pub qualify: QualityThresholds,
    pub validate: QualityThresholds,
    pub drift_window: usize,
    /// Traffic steps between plan steps and candidate retraining.
    pub plan_every: u64,
}

impl Default for DemoScenario {
    fn default() -> Self {
        Self {
            regions: REGIONS.iter().map(|r| r.to_string()).collect(),
            steps: 5000,
            drift_at: None,
            drift_region: "EU".into(),
            seed: 42,
            feedback_fraction: 0.5,
            edata_fraction: 0.2,
            qualify: QualityThresholds::new(0.9, 0.85),
            validate: QualityThresholds::new(0.93, 0.9),
            drift_window: 200,
            plan_every: 100,
        }
    }
}

impl DemoScenario {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.regions.iter().find(|r| !REGIONS.contains(&r.as_str())) {
            return Err(McError::Invalid(format!("unknown region `{r}`, expected one of {REGIONS:?}")));
        }
        if self.drift_at.is_some_and(|d| d >= self.steps) {
            return Err(McError::Invalid("drift_at must be below steps".into()));
        }
        if self.plan_every == 0 || self.drift_window == 0 {
            return Err(McError::Invalid("plan_every and drift_window must be positive".into()));
        }
        Ok(())
    }

    fn drifted(&self, region: &str, step: u64) -> bool {
        region == self.drift_region && self.drift_at.is_some_and(|d| step >= d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub step: u64,
    pub plan_state: String,
    pub call_target: CallTarget,
    pub gold_accuracy: Option<f64>,
    pub silver_accuracy: Option<f64>,
    pub counts: CategoryCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    /// Traffic step after which the alert was raised.
    pub step: u64,
    pub windowed_accuracy: f64,
    pub baseline_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub step: u64,
    pub plan_step: u64,
    pub from: String,
    pub to: String,
    pub gold_accuracy: Option<f64>,
    pub silver_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: String,
    pub caller_id: String,
    pub final_state: String,
    pub call_target: CallTarget,
    pub plan_steps: u64,
    pub gold_accuracy: Option<f64>,
    pub silver_accuracy: Option<f64>,
    /// Accuracy of the served output against the true label, over all traffic.
    pub served_accuracy: Option<f64>,
    pub counts: CategoryCounts,
    pub transitions: Vec<Transition>,
    pub drift_alerts: Vec<DriftEvent>,
    pub timeline: Vec<TimelinePoint>,
    pub anomalies: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub scenario: DemoScenario,
    pub regions: Vec<RegionReport>,
}

impl DemoReport {
    pub fn region(&self, name: &str) -> Option<&RegionReport> {
        self.regions.iter().find(|r| r.region == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Timeline rows for plotting, one per region and plan step.
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
        let mut out = String::from("region,step,plan_state,call_target,gold_accuracy,silver_accuracy,gold,platinum,silver,bronze\n");
        for r in &self.regions {
            for p in &r.timeline {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.region,
                    p.step,
                    p.plan_state,
                    p.call_target.as_str(),
                    opt(p.gold_accuracy),
                    opt(p.silver_accuracy),
                    p.counts.get(Category::Gold),
                    p.counts.get(Category::Platinum),
                    p.counts.get(Category::Silver),
                    p.counts.get(Category::Bronze),
                );
            }
        }
        out
    }

    /// Scenario expectations that failed; empty when the run looks right.
    ///
    /// Without drift every region must reach model_only. With drift, the
    /// drift region must alert within one window after the flip and no
    /// other region may alert at all.
    pub fn check(&self) -> Vec<String> {
        let s = &self.scenario;
        let mut failures = Vec::new();
        for r in &self.regions {
            if !r.anomalies.is_empty() {
                failures.push(format!("{}: {} anomalies", r.region, r.anomalies.len()));
            }
            let drifting = s.drift_at.is_some() && r.region == s.drift_region;
            if !drifting && !r.drift_alerts.is_empty() {
                failures.push(format!("{}: unexpected drift alert at step {}", r.region, r.drift_alerts[0].step));
            }
            if s.drift_at.is_none() && r.final_state != PlanState::ModelOnly.name() {
                failures.push(format!("{}: ended in {}, expected model_only", r.region, r.final_state));
            }
            if let (true, Some(at)) = (drifting, s.drift_at) {
                let window = at + 1..=at + s.drift_window as u64;
                if let Some(early) = r.drift_alerts.iter().find(|a| a.step < at) {
                    failures.push(format!("{}: alert at step {} precedes the drift", r.region, early.step));
                }
                if !r.drift_alerts.iter().any(|a| window.contains(&a.step)) {
                    failures.push(format!("{}: no drift alert in steps {window:?}", r.region));
                }
            }
        }
        failures
    }
}

struct RegionRun {
    region: String,
    caller_id: String,
    candidate: String,
    served: (usize, usize),
    report: RegionReport,
}

fn demo_config(s: &DemoScenario, region: &str) -> CallerConfig {
    CallerConfig {
        feedback_fraction: s.feedback_fraction,
        edata_fraction: s.edata_fraction,
        quality_thresholds: s.qualify,
        validation_threshold: s.validate,
        call_target: CallTarget::Host,
        aggregation: AggregationSpec::new(AggregationStrategy::Voting),
        rng_seed: s.seed ^ region_hash(region),
        ..CallerConfig::default()
    }
}

fn setup_region(hub: &Hub, s: &DemoScenario, region: &str) -> Result<RegionRun> {
    let sig = transaction_signature();
    let host = Callable::named_function(
        format!("fdc-{region}"),
        sig.clone(),
        "legacy_rule",
        hub.library().function("legacy_rule")?,
    );
    let caller_id = hub.create_caller(
        Role::Admin,
        CallerSpec {
            name: format!("fraud-{region}"),
            signature: sig.clone(),
            config: demo_config(s, region),
            host: Some(Arc::new(host)),
            ..CallerSpec::default()
        },
    )?;
    let model = Callable::builtin_model(format!("mfd-{region}"), ModelKind::NearestCentroid, sig, s.seed)?;
    let candidate = hub.register(Role::Admin, &caller_id, model, ROLE_ENSEMBLE, Record::new())?;
    hub.plan_transformation(Role::Admin, &caller_id, &candidate, PlanOptions { drift_window: s.drift_window, ..PlanOptions::default() })?;
    Ok(RegionRun {
        region: region.to_string(),
        caller_id: caller_id.clone(),
        candidate,
        served: (0, 0),
        report: RegionReport {
            region: region.to_string(),
            caller_id,
            final_state: PlanState::HostOnly.name().to_string(),
            call_target: CallTarget::Host,
            plan_steps: 0,
            gold_accuracy: None,
            silver_accuracy: None,
            served_accuracy: None,
            counts: CategoryCounts::default(),
            transitions: Vec::new(),
            drift_alerts: Vec::new(),
            timeline: Vec::new(),
            anomalies: Vec::new(),
        },
    })
}

fn traffic_step(hub: &Hub, s: &DemoScenario, run: &mut RegionRun, step: u64) -> Result<()> {
    let inputs = synth_transaction(&run.region, step, s.seed);
    let truth = true_label(&run.region, &inputs, s.drifted(&run.region, step));
    let res = match hub.call(Role::Admin, &run.caller_id, inputs, CallOptions::default()) {
        Ok(r) => r,
        Err(e) => {
            run.report.anomalies.push(format!("step {step}: call failed: {e}"));
            return Ok(());
        }
    };
    run.served.1 += 1;
    if res.output == truth {
        run.served.0 += 1;
    }
    if let Some(token) = &res.review_token {
        let action = if res.output == truth { FeedbackAction::Confirm } else { FeedbackAction::Override { output: truth } };
        hub.apply_feedback(Role::Operator, token, action)?;
    }
    let caller = hub.caller(&run.caller_id)?;
    let before = caller.alerts().len();
    let check = hub.detect_drift_inner(&caller, s.drift_window)?;
    if caller.alerts().len() > before {
        let alert = check.alert().expect("a new alert was recorded");
        run.report.drift_alerts.push(DriftEvent {
            step,
            windowed_accuracy: alert.windowed_accuracy,
            baseline_accuracy: alert.baseline_accuracy,
        });
    }
    Ok(())
}

fn plan_step(hub: &Hub, run: &mut RegionRun, step: u64) -> Result<()> {
    let caller = hub.caller(&run.caller_id)?;
    let train = TrainSpec {
        target: Some(run.candidate.clone()),
        mode: Scope::Local,
        dataset: DatasetSelector::categories([Category::Platinum]),
        ..TrainSpec::default()
    };
    if let Err(e) = hub.train_inner(&caller, &train) {
        run.report.anomalies.push(format!("step {step}: training skipped: {e}"));
    }
    let before = caller.plan().map_or(0, |p| p.history.len());
    let plan = hub.step_plan(&caller)?;
    for h in &plan.history[before..] {
        run.report.transitions.push(Transition {
            step,
            plan_step: plan.steps,
            from: h.from.as_ref().map_or("none", |f| f.name()).to_string(),
            to: h.to.name().to_string(),
            gold_accuracy: h.evidence.gold_accuracy,
            silver_accuracy: h.evidence.silver_accuracy,
        });
    }
    let state = caller.snapshot();
    let evidence = plan.last_evidence.unwrap_or_default();
    run.report.timeline.push(TimelinePoint {
        step,
        plan_state: plan.state.name().to_string(),
        call_target: state.config.call_target,
        gold_accuracy: evidence.gold_accuracy,
        silver_accuracy: evidence.silver_accuracy,
        counts: caller.store().counts(),
    });
    Ok(())
}

/// Runs the scenario on a fresh deterministic hub.
pub fn run_demo(scenario: &DemoScenario) -> Result<DemoReport> {
    run_demo_on(&Hub::deterministic(), scenario)
}

/// Runs the scenario serially on `hub`. Identical scenarios on fresh
/// deterministic hubs give identical reports.
pub fn run_demo_on(hub: &Hub, scenario: &DemoScenario) -> Result<DemoReport> {
    scenario.validate()?;
    let mut runs = scenario.regions.iter().map(|r| setup_region(hub, scenario, r)).collect::<Result<Vec<_>>>()?;
    for step in 0..scenario.steps {
        for run in &mut runs {
            traffic_step(hub, scenario, run, step)?;
            if (step + 1) % scenario.plan_every == 0 {
                plan_step(hub, run, step)?;
            }
        }
    }
    let mut regions = Vec::new();
    for mut run in runs {
        let caller = hub.caller(&run.caller_id)?;
        let plan = caller.plan().expect("every region has a plan");
        let state = caller.snapshot();
        let reg = state.registration(&run.candidate)?;
        let r = &mut run.report;
        r.final_state = plan.state.name().to_string();
        r.call_target = state.config.call_target;
        r.plan_steps = plan.steps;
        r.gold_accuracy = reg.metrics.gold_accuracy;
        r.silver_accuracy = reg.metrics.silver_accuracy;
        r.served_accuracy = (run.served.1 > 0).then(|| run.served.0 as f64 / run.served.1 as f64);
        r.counts = caller.store().counts();
        regions.push(run.report);
    }
    Ok(DemoReport { scenario: scenario.clone(), regions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stated_label_rules() {
        let tx = |amount: f64, hour: f64, risk: f64| {
            Record::new().with("amount", amount).with("hour", hour).with("merchant_risk", risk)
        };
        assert_eq!(true_label("US", &tx(900.0, 12.0, 0.8), false), Record::new().with("fraud", 1));
        assert_eq!(true_label("EU", &tx(400.0, 3.0, 0.5), false), Record::new().with("fraud", 0));
        assert_eq!(true_label("EU", &tx(400.0, 3.0, 0.65), true), Record::new().with("fraud", 1));
    }

    #[test]
    fn legacy_cutoff() {
        assert_eq!(legacy_rule(&Record::new().with("amount", 1500.0)), Record::new().with("fraud", 1));
        assert_eq!(legacy_rule(&Record::new().with("amount", 999.0)), Record::new().with("fraud", 0));
    }

    #[test]
    fn transactions_are_deterministic_and_in_range() {
        for step in 0..500 {
            let a = synth_transaction("EU", step, 7);
            assert_eq!(a, synth_transaction("EU", step, 7));
            let amount = a.number("amount").unwrap();
            assert!(amount > 0.0 && amount < 2000.0 + 1e-9);
            let hour = a.number("hour").unwrap();
            assert!((0.0..=23.0).contains(&hour) && hour.fract() == 0.0);
            assert!((0.0..=1.0).contains(&a.number("merchant_risk").unwrap()));
        }
        assert_ne!(synth_transaction("EU", 1, 7), synth_transaction("US", 1, 7));
    }

    #[test]
    fn zero_steps_stay_host_only() {
        let report = run_demo(&DemoScenario { steps: 0, ..DemoScenario::default() }).unwrap();
        for r in &report.regions {
            assert_eq!(r.final_state, "host_only");
            assert!(r.timeline.is_empty());
        }
    }
}
