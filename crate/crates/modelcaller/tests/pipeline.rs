mod common;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use common::*;
use modelcaller::core::value::ID_PARAM;
use modelcaller::core::{
    AggregationSpec, AggregationStrategy, AutoId, CallTarget, CallerConfig, ConfigPatch, Params, Record, SeededRng,
    Signature, Value, ValueKind,
};
use modelcaller::remote::RemoteSpec;
use modelcaller::{CallOptions, Callable, CallableKind, CallerSpec, Hub, McError, TargetKind};
use proptest::prelude::*;

fn mean_config(target: CallTarget) -> CallerConfig {
    CallerConfig { aggregation: AggregationSpec::new(AggregationStrategy::Mean), ..config(target) }
}

#[test]
fn call_target_routes_exactly() {
    let hub = Hub::deterministic();
    let id = caller(&hub, "route", Some(function("host", |x| x)), mean_config(CallTarget::Host));
    register(&hub, &id, constant("m1", 1.0));
    register(&hub, &id, constant("m2", 2.0));
    let c = hub.caller(&id).unwrap();
    let mut rng = SeededRng::new(5);

    let mut expect = BTreeMap::from([("host", 0u64), ("m1", 0), ("m2", 0)]);
    for (target, host, members) in [(CallTarget::Host, 1, 0), (CallTarget::Registered, 0, 1), (CallTarget::Both, 1, 1)] {
        hub.update_config(ADMIN, &id, &ConfigPatch { call_target: Some(target), ..ConfigPatch::default() }).unwrap();
        for _ in 0..100 {
            let v = rng.next_f64() * 10.0;
            let r = hub.call(ADMIN, &id, x(v), CallOptions::default()).unwrap();
            *expect.get_mut("host").unwrap() += host;
            *expect.get_mut("m1").unwrap() += members;
            *expect.get_mut("m2").unwrap() += members;
            for (callable, n) in &expect {
                assert_eq!(c.counter(callable), *n, "{callable} under {target:?}");
            }
            match target {
                CallTarget::Host => assert_eq!(y_of(&r.output), v),
                CallTarget::Registered => assert_eq!(y_of(&r.output), 1.5),
                CallTarget::Both => assert!((y_of(&r.output) - (v + 3.0) / 3.0).abs() < 1e-12),
            }
        }
    }
}

#[test]
fn both_with_a_tie_keeps_the_host_answer() {
    let hub = Hub::deterministic();
    let sig = Signature::new(Params::new().with("x", ValueKind::Number), Params::new().with("fraud", ValueKind::Number));
    let host = Callable::function("rule", sig.clone(), |_: &Record| Ok(Record::new().with("fraud", 0)));
    let model = Callable::builtin_model("model", modelcaller::core::ModelKind::Constant { value: Value::Number(1.0) }, sig.clone(), 0).unwrap();
    let id = hub
        .create_caller(
            ADMIN,
            CallerSpec { name: "tie".into(), signature: sig, config: config(CallTarget::Both), host: Some(Arc::new(host)), ..Default::default() },
        )
        .unwrap();
    register(&hub, &id, model);
    let r = hub.call(ADMIN, &id, x(1.0), CallOptions::default()).unwrap();
    assert_eq!(r.output, Record::new().with("fraud", 0));
    let ids: Vec<&str> = r.member_outputs.iter().map(|m| m.callable_id.as_str()).collect();
    assert_eq!(ids, ["rule", "model"]);
    assert_eq!(r.targets_used, [TargetKind::Host, TargetKind::Registered]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn passthrough_is_transparent(xs in prop::collection::vec(-1e6f64..1e6, 1..20)) {
        let hub = Hub::deterministic();
        let f = |x: f64| 3.0 * x - 7.0;
        let cfg = CallerConfig { auto_id: AutoId::Passthrough, ..config(CallTarget::Host) };
        let id = caller(&hub, "pass", Some(function("f", f)), cfg);
        register(&hub, &id, constant("ignored", 0.0));
        for v in xs {
            let r = hub.call(ADMIN, &id, x(v), CallOptions::default()).unwrap();
            prop_assert_eq!(y_of(&r.output), f(v));
        }
        prop_assert_eq!(hub.caller(&id).unwrap().counter("ignored"), 0);
    }
}

#[test]
fn hosts_and_functions_never_see_context() {
    let hub = Hub::deterministic();
    hub.library().register_provider("tenant", Arc::new(|_: &Record| Ok(Value::Text("acme".into()))));
    let sig = Signature::new(Params::new().with("x", ValueKind::Number), Params::new().with("y", ValueKind::Number))
        .with_context(Params::new().with("tenant", ValueKind::Text));

    let seen: Arc<Mutex<Vec<Record>>> = Arc::default();
    let spy = |log: Arc<Mutex<Vec<Record>>>, id: &str| {
        Callable::function(id, sig_xy(), move |r: &Record| {
            log.lock().unwrap().push(r.clone());
            Ok(Record::new().with("y", 1))
        })
    };
    let stub = StubServer::constant(1.0);
    let model_sig = Signature::new(
        Params::new().with("x", ValueKind::Number).with("tenant", ValueKind::Text).with(ID_PARAM, ValueKind::Text),
        Params::new().with("y", ValueKind::Number),
    );
    let remote = Callable::remote("remote-model", CallableKind::Model, model_sig, RemoteSpec::new(stub.url.clone()));

    let cfg = CallerConfig { auto_id: AutoId::On, ..config(CallTarget::Both) };
    let id = hub
        .create_caller(
            ADMIN,
            CallerSpec {
                name: "ctx".into(),
                signature: sig,
                config: cfg,
                host: Some(Arc::new(spy(seen.clone(), "host"))),
                context_providers: vec![("tenant".into(), "tenant".into())],
                ..Default::default()
            },
        )
        .unwrap();
    register(&hub, &id, spy(seen.clone(), "fn-member"));
    register(&hub, &id, remote);

    let mut rng = SeededRng::new(11);
    for _ in 0..50 {
        hub.call(ADMIN, &id, x(rng.next_f64()), CallOptions::default()).unwrap();
    }
    let records = seen.lock().unwrap();
    assert_eq!(records.len(), 100);
    for r in records.iter() {
        assert_eq!(r.keys().collect::<Vec<_>>(), ["x"], "function saw {r:?}");
    }
    let bodies = stub.seen.lock().unwrap();
    assert_eq!(bodies.len(), 50);
    for b in bodies.iter() {
        assert_eq!(b["inputs"]["tenant"], "acme");
        assert_eq!(b["inputs"][ID_PARAM], serde_json::Value::String(id.clone()));
    }
}

#[test]
fn config_changes_are_atomic_per_call() {
    let hub = Hub::deterministic();
    let id = caller(&hub, "atomic", Some(function("host", |x| x)), config(CallTarget::Host));
    register(&hub, &id, constant("m", -1.0));
    let results = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for t in 0..4 {
            let (hub, id, results) = (&hub, &id, &results);
            s.spawn(move || {
                for i in 0..200 {
                    let v = (t * 1000 + i) as f64;
                    let r = hub.call(ADMIN, id, x(v), CallOptions::default()).unwrap();
                    results.lock().unwrap().push((v, r));
                }
            });
        }
        s.spawn(|| {
            for i in 0..100 {
                let target = if i % 2 == 0 { CallTarget::Registered } else { CallTarget::Host };
                hub.update_config(ADMIN, &id, &ConfigPatch { call_target: Some(target), ..Default::default() }).unwrap();
            }
        });
    });
    let results = results.into_inner().unwrap();
    assert_eq!(results.len(), 800);
    for (v, r) in results {
        // Version 1 starts on Host and every update flips the target.
        let host = r.config_version % 2 == 1;
        assert_eq!(r.targets_used, if host { vec![TargetKind::Host] } else { vec![TargetKind::Registered] });
        assert_eq!(y_of(&r.output), if host { v } else { -1.0 }, "version {}", r.config_version);
    }
}

fn reaches(edges: &[(usize, usize)], from: usize, to: usize) -> bool {
    let mut stack = vec![from];
    let mut seen = [false; 8];
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        if !std::mem::replace(&mut seen[n], true) {
            stack.extend(edges.iter().filter(|e| e.0 == n).map(|e| e.1));
        }
    }
    false
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nesting_never_admits_a_cycle(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..25)) {
        let hub = Hub::deterministic();
        let ids: Vec<String> = (0..5).map(|i| caller(&hub, &format!("n{i}"), None, config(CallTarget::Registered))).collect();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (k, (outer, inner)) in pairs.into_iter().enumerate() {
            let nested = Callable::nested(format!("nest-{k}"), ids[inner].clone(), sig_xy());
            let res = hub.register(ADMIN, &ids[outer], nested, "ensemble", Record::new());
            let cyclic = outer == inner || reaches(&edges, inner, outer);
            prop_assert_eq!(res.is_err(), cyclic, "{:?}", res);
            if cyclic {
                prop_assert!(matches!(res, Err(McError::Cycle(_))));
            } else {
                edges.push((outer, inner));
            }
        }
    }

    #[test]
    fn nested_means_equal_the_flattened_value(inner in prop::collection::vec(-50.0f64..50.0, 1..4), outer in prop::collection::vec(-50.0f64..50.0, 0..3)) {
        let hub = Hub::deterministic();
        let in_id = caller(&hub, "inner", None, mean_config(CallTarget::Registered));
        for (i, v) in inner.iter().enumerate() {
            register(&hub, &in_id, constant(&format!("i{i}"), *v));
        }
        let out_id = caller(&hub, "outer", None, mean_config(CallTarget::Registered));
        register(&hub, &out_id, Callable::nested("inner-as-member", in_id.clone(), sig_xy()));
        for (i, v) in outer.iter().enumerate() {
            register(&hub, &out_id, constant(&format!("o{i}"), *v));
        }
        let inner_mean = inner.iter().sum::<f64>() / inner.len() as f64;
        let expected = (inner_mean + outer.iter().sum::<f64>()) / (1 + outer.len()) as f64;
        let got = y_of(&hub.call_nested(ADMIN, &out_id, x(0.0)).unwrap().output);
        prop_assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        // The inner caller cached its own sample.
        prop_assert_eq!(hub.caller(&in_id).unwrap().store().len(), 1);
    }
}

#[test]
fn two_level_mean_example() {
    let hub = Hub::deterministic();
    let inner = caller(&hub, "inner", None, mean_config(CallTarget::Registered));
    register(&hub, &inner, constant("zero", 0.0));
    register(&hub, &inner, constant("one", 1.0));
    let outer = caller(&hub, "outer", None, mean_config(CallTarget::Registered));
    register(&hub, &outer, Callable::nested("inner-member", inner, sig_xy()));
    register(&hub, &outer, constant("one-again", 1.0));
    assert_eq!(y_of(&hub.call(ADMIN, &outer, x(0.0), CallOptions::default()).unwrap().output), 0.75);
}

#[test]
fn a_remote_failure_does_not_fail_the_call() {
    let hub = Hub::deterministic();
    let id = caller(&hub, "remote", None, mean_config(CallTarget::Registered));
    let dead = RemoteSpec { timeout_ms: 200, retry: 1, ..RemoteSpec::new("http://127.0.0.1:9/predict") };
    register(&hub, &id, Callable::remote("dead", CallableKind::Model, sig_xy(), dead));
    let slow = StubServer::start(std::time::Duration::from_millis(600), |_| serde_json::json!({"outputs": {"y": 100.0}}));
    let slow_spec = RemoteSpec { timeout_ms: 150, ..RemoteSpec::new(slow.url.clone()) };
    register(&hub, &id, Callable::remote("slow", CallableKind::Model, sig_xy(), slow_spec));
    register(&hub, &id, constant("alive", 4.0));
    let r = hub.call(ADMIN, &id, x(0.0), CallOptions::default()).unwrap();
    assert_eq!(y_of(&r.output), 4.0);
    let failed: Vec<&str> = r.member_outputs.iter().filter(|m| m.error.is_some()).map(|m| m.callable_id.as_str()).collect();
    assert_eq!(failed, ["dead", "slow"]);
}

#[test]
fn wrong_remote_outputs_are_rejected() {
    let hub = Hub::deterministic();
    let id = caller(&hub, "wrong", None, config(CallTarget::Registered));
    let stub = StubServer::start(std::time::Duration::ZERO, |_| serde_json::json!({"outputs": {"z": 1}}));
    register(&hub, &id, Callable::remote("wrong", CallableKind::Model, sig_xy(), RemoteSpec::new(stub.url.clone())));
    let err = hub.call(ADMIN, &id, x(0.0), CallOptions::default()).unwrap_err();
    assert!(matches!(err, McError::AllFailed(ref m) if m.contains("wrong")), "{err}");
}

#[test]
fn remote_outputs_follow_the_posted_inputs() {
    let hub = Hub::deterministic();
    let id = caller(&hub, "echo", None, config(CallTarget::Registered));
    let stub = StubServer::start(std::time::Duration::ZERO, |req| serde_json::json!({"outputs": {"y": req["inputs"]["x"]}}));
    register(&hub, &id, Callable::remote("echo", CallableKind::Model, sig_xy(), RemoteSpec::new(stub.url.clone())));
    let r = hub.call(ADMIN, &id, x(42.0), CallOptions::default()).unwrap();
    assert_eq!(y_of(&r.output), 42.0);
}
