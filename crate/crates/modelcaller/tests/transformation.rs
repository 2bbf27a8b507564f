mod common;

use common::*;
use modelcaller::core::{
    CallTarget, CallerConfig, ConfigPatch, MinEvalSamples, PlanState, QualityThresholds, Record, Role,
};
use modelcaller::transformation::{PlanOptions, TransformationPlan};
use modelcaller::{CallOptions, FeedbackAction, Hub, McError, TargetKind};
use proptest::prelude::*;

const QUALIFY: QualityThresholds = QualityThresholds::new(0.9, 0.8);
const VALIDATE: QualityThresholds = QualityThresholds::new(0.99, 0.95);

/// A host with a constant-1 candidate whose measured accuracy the test
/// controls through the labels it feeds in.
fn setup() -> (Hub, String, String) {
    let hub = Hub::deterministic();
    let cfg = CallerConfig {
        edata_fraction: 1.0,
        feedback_fraction: 0.0,
        quality_thresholds: QUALIFY,
        validation_threshold: VALIDATE,
        min_eval_samples: MinEvalSamples { gold_min: 1, silver_min: 1 },
        ..config(CallTarget::Registered)
    };
    let id = caller(&hub, "legacy", Some(function("fdc", |_| 1.0)), cfg);
    let rid = register(&hub, &id, constant("mfd", 1.0));
    (hub, id, rid)
}

/// `right` samples labelled 1 and `wrong` labelled 0, supervised or not.
fn feed(hub: &Hub, id: &str, right: usize, wrong: usize, supervised: bool) {
    for i in 0..right + wrong {
        let y = if i < right { 1.0 } else { 0.0 };
        let r = hub.add_sensor_sample(ADMIN, id, x(i as f64), Record::new().with("y", y)).unwrap();
        if supervised {
            hub.apply_feedback(ADMIN, &r.review_token, FeedbackAction::Confirm).unwrap();
        }
    }
}

fn target(hub: &Hub, id: &str) -> CallTarget {
    hub.metrics(ADMIN, id).unwrap().call_target
}

#[test]
fn plans_start_host_only() {
    let (hub, id, rid) = setup();
    let plan = hub.plan_transformation(ADMIN, &id, &rid, PlanOptions::default()).unwrap();
    assert_eq!(plan.state, PlanState::HostOnly);
    assert_eq!(target(&hub, &id), CallTarget::Host);
    assert_eq!(plan.history.len(), 1);

    let again = hub.plan_transformation(ADMIN, &id, &rid, PlanOptions::default());
    assert!(matches!(again, Err(McError::Conflict(_))), "{again:?}");

    let hostless = caller(&hub, "no-host", None, config(CallTarget::Registered));
    let m = register(&hub, &hostless, constant("m", 0.0));
    assert!(matches!(hub.plan_transformation(ADMIN, &hostless, &m, PlanOptions::default()), Err(McError::Invalid(_))));

    let (hub, id, _) = setup();
    let f = register(&hub, &id, function("not-a-model", |x| x));
    assert!(hub.plan_transformation(ADMIN, &id, &f, PlanOptions::default()).is_err());
    assert!(matches!(hub.plan_transformation(ADMIN, &id, "r99", PlanOptions::default()), Err(McError::UnknownRegistration(_))));
}

#[test]
fn steps_follow_the_thresholds() {
    let (hub, id, rid) = setup();
    hub.plan_transformation(ADMIN, &id, &rid, PlanOptions::default()).unwrap();

    // Gold 0.5, silver 0.5: stays host-only.
    feed(&hub, &id, 1, 1, true);
    feed(&hub, &id, 1, 1, false);
    assert_eq!(hub.step_transformation(ADMIN, &id).unwrap().state, PlanState::HostOnly);
    assert_eq!(target(&hub, &id), CallTarget::Host);

    // Gold 19/20 = 0.95, silver 9/10 = 0.9.
    feed(&hub, &id, 18, 0, true);
    feed(&hub, &id, 8, 0, false);
    let plan = hub.step_transformation(ADMIN, &id).unwrap();
    assert_eq!(plan.state, PlanState::Hybrid);
    assert_eq!(target(&hub, &id), CallTarget::Both);
    let r = hub.call(ADMIN, &id, x(0.0), CallOptions::default()).unwrap();
    assert_eq!(r.targets_used, [TargetKind::Host, TargetKind::Registered]);

    // Still below validate.
    assert_eq!(hub.step_transformation(ADMIN, &id).unwrap().state, PlanState::Hybrid);

    // Gold 199/200 = 0.995, silver 97/100 = 0.97. The call above cached one
    // more silver sample that matches the candidate.
    feed(&hub, &id, 180, 0, true);
    feed(&hub, &id, 87, 2, false);
    let plan = hub.step_transformation(ADMIN, &id).unwrap();
    let e = plan.last_evidence.unwrap();
    assert_eq!((e.gold_accuracy, e.silver_accuracy), (Some(199.0 / 200.0), Some(97.0 / 100.0)));
    assert_eq!(plan.state, PlanState::ModelOnly);
    assert_eq!(target(&hub, &id), CallTarget::Registered);

    let states: Vec<PlanState> = plan.history.iter().map(|h| h.to.clone()).collect();
    assert_eq!(states, [PlanState::HostOnly, PlanState::Hybrid, PlanState::ModelOnly]);
}

#[test]
fn the_plan_owns_the_call_target() {
    let (hub, id, rid) = setup();
    hub.plan_transformation(ADMIN, &id, &rid, PlanOptions::default()).unwrap();
    let patch = ConfigPatch { call_target: Some(CallTarget::Registered), ..Default::default() };
    assert!(matches!(hub.update_config(ADMIN, &id, &patch), Err(McError::Conflict(_))));
    let other = ConfigPatch { feedback_fraction: Some(0.5), ..Default::default() };
    assert!(hub.update_config(ADMIN, &id, &other).is_ok());
    assert_eq!(target(&hub, &id), CallTarget::Host);
}

fn model_only() -> (Hub, String, String) {
    let (hub, id, rid) = setup();
    hub.plan_transformation(ADMIN, &id, &rid, PlanOptions { demote_on_drift: true, drift_window: 5 }).unwrap();
    feed(&hub, &id, 100, 0, true);
    feed(&hub, &id, 100, 0, false);
    hub.step_transformation(ADMIN, &id).unwrap();
    assert_eq!(hub.step_transformation(ADMIN, &id).unwrap().state, PlanState::ModelOnly);
    (hub, id, rid)
}

#[test]
fn retiring_the_host_is_guarded() {
    let (hub, id, rid) = setup();
    hub.plan_transformation(ADMIN, &id, &rid, PlanOptions::default()).unwrap();
    assert!(matches!(hub.retire_host(ADMIN, &id), Err(McError::Conflict(_))));

    let (hub, id, _) = model_only();
    assert!(matches!(hub.retire_host(Role::Operator, &id), Err(McError::Unauthorized { .. })));
    let plan = hub.retire_host(ADMIN, &id).unwrap();
    assert!(!plan.active);
    assert!(hub.caller(&id).unwrap().snapshot().host.is_none());
    let back = ConfigPatch { call_target: Some(CallTarget::Both), ..Default::default() };
    assert!(matches!(hub.update_config(ADMIN, &id, &back), Err(McError::Conflict(_))));
    assert_eq!(y_of(&hub.call(ADMIN, &id, x(3.0), CallOptions::default()).unwrap().output), 1.0);
    assert!(hub.step_transformation(ADMIN, &id).is_err());
}

#[test]
fn drift_demotes_when_enabled() {
    let (hub, id, _) = model_only();
    hub.update_config(ADMIN, &id, &ConfigPatch { feedback_fraction: Some(1.0), ..Default::default() }).unwrap();
    for i in 0..5 {
        let r = hub.call(ADMIN, &id, x(i as f64), CallOptions::default()).unwrap();
        let fix = FeedbackAction::Override { output: Record::new().with("y", 0) };
        hub.apply_feedback(ADMIN, &r.review_token.unwrap(), fix).unwrap();
    }
    let plan = hub.step_transformation(ADMIN, &id).unwrap();
    assert_eq!(plan.state, PlanState::Hybrid);
    assert!(plan.history.last().unwrap().evidence.drift_alert);
    assert_eq!(target(&hub, &id), CallTarget::Both);
}

#[test]
fn unregistering_the_candidate_halts_the_plan() {
    let (hub, id, rid) = setup();
    hub.plan_transformation(ADMIN, &id, &rid, PlanOptions::default()).unwrap();
    hub.unregister(ADMIN, &id, &rid).unwrap();
    let plan = hub.plan(ADMIN, &id).unwrap().unwrap();
    assert!(matches!(plan.state, PlanState::Halted { .. }));
    assert!(!plan.active);
    assert!(matches!(hub.step_transformation(ADMIN, &id), Err(McError::Conflict(_))));
    assert!(hub.step_all_plans().is_empty());
}

#[derive(Debug, Clone)]
enum Op {
    Gold { right: usize, wrong: usize },
    Silver { right: usize, wrong: usize },
    Call,
    Step,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        2 => (0usize..40, 0usize..3).prop_map(|(right, wrong)| Op::Gold { right, wrong }),
        2 => (0usize..40, 0usize..3).prop_map(|(right, wrong)| Op::Silver { right, wrong }),
        1 => Just(Op::Call),
        4 => Just(Op::Step),
    ]
}

fn allowed(from: &PlanState, to: &PlanState) -> bool {
    matches!(
        (from, to),
        (PlanState::HostOnly, PlanState::Hybrid) | (PlanState::Hybrid, PlanState::ModelOnly) | (PlanState::ModelOnly, PlanState::Hybrid)
    )
}

fn audit(plan: &TransformationPlan) -> Result<(), TestCaseError> {
    for h in &plan.history[1..] {
        let from = h.from.as_ref().unwrap();
        prop_assert!(allowed(from, &h.to), "{:?} -> {:?}", from, h.to);
        prop_assert_eq!(h.call_target, h.to.call_target());
        if h.to == PlanState::ModelOnly {
            let (g, s) = (h.evidence.gold_accuracy.unwrap(), h.evidence.silver_accuracy.unwrap());
            prop_assert!(g >= VALIDATE.supervised_min && s >= VALIDATE.unsupervised_min, "{:?}", h.evidence);
        }
        if *from == PlanState::HostOnly {
            prop_assert!(QUALIFY.met_by(h.evidence.gold_accuracy.unwrap(), h.evidence.silver_accuracy.unwrap()));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn audit_and_history_hold(ops in prop::collection::vec(op(), 1..40)) {
        let (hub, id, rid) = setup();
        hub.plan_transformation(ADMIN, &id, &rid, PlanOptions::default()).unwrap();
        let mut seen_target = target(&hub, &id);
        let mut seen_history = 1;
        for op in ops {
            match op {
                Op::Gold { right, wrong } => feed(&hub, &id, right, wrong, true),
                Op::Silver { right, wrong } => feed(&hub, &id, right, wrong, false),
                Op::Call => { hub.call(ADMIN, &id, x(0.0), CallOptions::default()).unwrap(); }
                Op::Step => { hub.step_transformation(ADMIN, &id).unwrap(); }
            }
            let plan = hub.plan(ADMIN, &id).unwrap().unwrap();
            let now = target(&hub, &id);
            prop_assert_eq!(Some(now), plan.state.call_target());
            if now != seen_target {
                prop_assert_eq!(plan.history.len(), seen_history + 1);
                prop_assert_eq!(plan.history.last().unwrap().call_target, Some(now));
            } else {
                prop_assert_eq!(plan.history.len(), seen_history);
            }
            seen_target = now;
            seen_history = plan.history.len();
            audit(&plan)?;
        }
    }
}
