//! Caller configuration: the attribute set that drives routing and automation.

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::aggregate::AggregationSpec;
use crate::error::{Error, Result};
use crate::gate::GateSpec;
use crate::quality::Matcher;

/// Which sources a call invokes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallTarget {
    Host,
    Registered,
    Both,
}

impl CallTarget {
    pub fn includes_host(self) -> bool {
        matches!(self, CallTarget::Host | CallTarget::Both)
    }

    pub fn includes_registered(self) -> bool {
        matches!(self, CallTarget::Registered | CallTarget::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CallTarget::Host => "host",
            CallTarget::Registered => "registered",
            CallTarget::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "host" => Some(CallTarget::Host),
            "registered" => Some(CallTarget::Registered),
            "both" => Some(CallTarget::Both),
            _ => None,
        }
    }
}

/// Caller-id injection. `Passthrough` turns the caller into a thin forwarder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoId {
    On,
    Off,
    Passthrough,
}

/// How registered ensemble members are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// Minimum supervised and unsupervised accuracies, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityThresholds {
    pub supervised_min: f64,
    pub unsupervised_min: f64,
}

impl QualityThresholds {
    pub const fn new(supervised_min: f64, unsupervised_min: f64) -> Self {
        Self { supervised_min, unsupervised_min }
    }

    /// Closed inequality on both components.
    pub fn met_by(&self, supervised: f64, unsupervised: f64) -> bool {
        supervised >= self.supervised_min && unsupervised >= self.unsupervised_min
    }

    fn dominates(&self, other: &QualityThresholds) -> bool {
        self.supervised_min >= other.supervised_min && self.unsupervised_min >= other.unsupervised_min
    }
}

/// Sample counts below which an accuracy is reported as absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinEvalSamples {
    pub gold_min: usize,
    pub silver_min: usize,
}

impl Default for MinEvalSamples {
    fn default() -> Self {
        Self { gold_min: 5, silver_min: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CallerConfig {
    pub auto_cache: bool,
    pub edata_fraction: f64,
    pub feedback_fraction: f64,
    pub quality_thresholds: QualityThresholds,
    /// Stricter pair gating full cutover to registered-only operation.
    pub validation_threshold: QualityThresholds,
    pub auto_train: bool,
    pub auto_test: bool,
    pub auto_id: AutoId,
    pub call_target: CallTarget,
    pub aggregation: AggregationSpec,
    pub gating: GateSpec,
    pub execution: Execution,
    pub anytime: bool,
    pub rng_seed: u64,
    pub min_eval_samples: MinEvalSamples,
    /// Matcher used when evaluating members and detecting drift.
    pub matcher: Matcher,
    /// Review tokens older than this are rejected. `None` keeps them forever.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub review_ttl_ms: Option<u64>,
    /// How long an external member's collaboration request stays open.
    pub collab_timeout_ms: u64,
    /// Learning rate used when fitting caller-level aggregation weights.
    pub weight_learning_rate: f64,
    pub weight_epochs: usize,
}

impl Default for CallerConfig {
    fn default() -> Self {
        Self {
            auto_cache: true,
            edata_fraction: 0.2,
            feedback_fraction: 0.1,
            quality_thresholds: QualityThresholds::new(0.9, 0.8),
            validation_threshold: QualityThresholds::new(0.95, 0.9),
            auto_train: false,
            auto_test: false,
            auto_id: AutoId::Off,
            call_target: CallTarget::Registered,
            aggregation: AggregationSpec::default(),
            gating: GateSpec::None,
            execution: Execution::Parallel,
            anytime: false,
            rng_seed: 0,
            min_eval_samples: MinEvalSamples::default(),
            matcher: Matcher::Exact,
            review_ttl_ms: None,
            collab_timeout_ms: 30_000,
            weight_learning_rate: 0.1,
            weight_epochs: 50,
        }
    }
}

fn check_fraction(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {x}")))
    }
}

impl CallerConfig {
    /// Checks every invariant that depends only on the configuration and on
    /// whether the caller has a host.
    pub fn validate(&self, has_host: bool) -> Result<()> {
        check_fraction("edata_fraction", self.edata_fraction)?;
        check_fraction("feedback_fraction", self.feedback_fraction)?;
        for (name, t) in [("quality_thresholds", &self.quality_thresholds), ("validation_threshold", &self.validation_threshold)] {
            check_fraction(&format!("{name}.supervised_min"), t.supervised_min)?;
            check_fraction(&format!("{name}.unsupervised_min"), t.unsupervised_min)?;
        }
        if !self.validation_threshold.dominates(&self.quality_thresholds) {
            return Err(Error::InvalidConfig(
                "validation_threshold must be at least quality_thresholds in both components".into(),
            ));
        }
        if self.call_target.includes_host() && !has_host {
            return Err(Error::InvalidConfig(format!(
                "call_target={} requires a host",
                self.call_target.as_str()
            )));
        }
        if self.auto_id == AutoId::Passthrough && !has_host {
            return Err(Error::InvalidConfig("passthrough mode requires a host".into()));
        }
        if !(self.weight_learning_rate.is_finite() && self.weight_learning_rate > 0.0) {
            return Err(Error::InvalidConfig("weight_learning_rate must be positive".into()));
        }
        self.aggregation.validate()?;
        self.gating.validate()?;
        self.matcher.validate()?;
        Ok(())
    }

    pub fn apply(&self, patch: &ConfigPatch) -> CallerConfig {
        let mut next = self.clone();
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &patch.$field { next.$field = v.clone(); })*
            };
        }
        take!(
            auto_cache, edata_fraction, feedback_fraction, quality_thresholds,
            validation_threshold, auto_train, auto_test, auto_id, call_target,
            aggregation, gating, execution, anytime, rng_seed, min_eval_samples,
            matcher, collab_timeout_ms, weight_learning_rate, weight_epochs
        );
        if let Some(ttl) = patch.review_ttl_ms {
            next.review_ttl_ms = ttl;
        }
        next
    }
}

/// Partial configuration; absent fields keep their current value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigPatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auto_cache: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edata_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality_thresholds: Option<QualityThresholds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_threshold: Option<QualityThresholds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auto_train: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auto_test: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auto_id: Option<AutoId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub call_target: Option<CallTarget>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gating: Option<GateSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub execution: Option<Execution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anytime: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_eval_samples: Option<MinEvalSamples>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matcher: Option<Matcher>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub review_ttl_ms: Option<Option<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collab_timeout_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_epochs: Option<usize>,
}

impl ConfigPatch {
    pub fn call_target(target: CallTarget) -> Self {
        Self { call_target: Some(target), ..Self::default() }
    }
}
