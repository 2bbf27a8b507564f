//! Named implementations that can be referenced by id: local functions,
//! context providers, custom aggregation hooks and custom matchers.
//!
//! Names are how persisted state and the gateway refer to code, so local
//! callables rebind by name after a restart.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use modelcaller_core::{MemberMetrics, Record, Value};

use crate::error::{McError, Result};

pub type FunctionImpl = Arc<dyn Fn(&Record) -> Result<Record, String> + Send + Sync>;

/// Computes one context value from the call inputs.
pub type ProviderImpl = Arc<dyn Fn(&Record) -> Result<Value, String> + Send + Sync>;

/// What a custom aggregation hook sees of one member.
pub struct HookMember<'a> {
    pub id: &'a str,
    pub output: &'a Record,
    pub metrics: Option<&'a MemberMetrics>,
}

/// `(member outputs, call inputs) -> aggregate`.
pub type AggregationHook = Arc<dyn Fn(&[HookMember<'_>], &Record) -> Result<Record, String> + Send + Sync>;

/// `(actual, desired) -> matched`.
pub type MatcherHook = Arc<dyn Fn(&Record, &Record) -> bool + Send + Sync>;

#[derive(Default)]
pub struct Library {
    functions: RwLock<BTreeMap<String, FunctionImpl>>,
    providers: RwLock<BTreeMap<String, ProviderImpl>>,
    aggregators: RwLock<BTreeMap<String, AggregationHook>>,
    matchers: RwLock<BTreeMap<String, MatcherHook>>,
}

fn get<T: Clone>(map: &RwLock<BTreeMap<String, T>>, name: &str) -> Result<T> {
    map.read()
        .expect("library lock")
        .get(name)
        .cloned()
        .ok_or_else(|| McError::UnknownFunction(name.to_string()))
}

impl Library {
    /// An empty library plus the built-ins: the `legacy_rule` function,
    /// the `median` aggregation hook and the `case_insensitive` matcher.
    pub fn with_builtins() -> Self {
        let lib = Library::default();
        lib.register_function("legacy_rule", Arc::new(|r: &Record| Ok(crate::demo::legacy_rule(r))));
        lib.register_aggregator("median", Arc::new(median_hook));
        lib.register_matcher("case_insensitive", Arc::new(case_insensitive));
        lib
    }

    pub fn register_function(&self, name: impl Into<String>, f: FunctionImpl) {
        self.functions.write().expect("library lock").insert(name.into(), f);
    }

    pub fn register_provider(&self, name: impl Into<String>, f: ProviderImpl) {
        self.providers.write().expect("library lock").insert(name.into(), f);
    }

    pub fn register_aggregator(&self, name: impl Into<String>, f: AggregationHook) {
        self.aggregators.write().expect("library lock").insert(name.into(), f);
    }

    pub fn register_matcher(&self, name: impl Into<String>, f: MatcherHook) {
        self.matchers.write().expect("library lock").insert(name.into(), f);
    }

    pub fn function(&self, name: &str) -> Result<FunctionImpl> {
        get(&self.functions, name)
    }

    pub fn provider(&self, name: &str) -> Result<ProviderImpl> {
        get(&self.providers, name)
    }

    pub fn aggregator(&self, name: &str) -> Result<AggregationHook> {
        get(&self.aggregators, name)
    }

    pub fn matcher(&self, name: &str) -> Result<MatcherHook> {
        get(&self.matchers, name)
    }

    pub fn function_names(&self) -> Vec<String> {
        self.functions.read().expect("library lock").keys().cloned().collect()
    }
}

/// Per parameter, the median of the numeric member values (lower middle
/// for even counts).
fn median_hook(members: &[HookMember<'_>], _inputs: &Record) -> Result<Record, String> {
    let first = members.first().ok_or("no member outputs")?;
    let mut out = Record::new();
    for param in first.output.keys() {
        let mut xs = members
            .iter()
            .map(|m| m.output.number(param).ok_or_else(|| format!("`{param}` from `{}` is not numeric", m.id)))
            .collect::<Result<Vec<f64>, String>>()?;
        xs.sort_by(f64::total_cmp);
        out.insert(param, xs[(xs.len() - 1) / 2]);
    }
    Ok(out)
}

fn case_insensitive(actual: &Record, desired: &Record) -> bool {
    desired.iter().all(|(k, want)| match (actual.get(k), want) {
        (Some(Value::Text(a)), Value::Text(d)) => a.eq_ignore_ascii_case(d),
        (Some(a), d) => a == d,
        (None, _) => false,
    })
}
