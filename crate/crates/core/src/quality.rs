//! Output matching, member metrics and qualification.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::aggregate::WeightSource;
use crate::category::CategoryCounts;
use crate::config::{MinEvalSamples, QualityThresholds};
use crate::error::{Error, Result};
use crate::value::{Record, Value};

/// How an actual output is compared to a desired one.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Matcher {
    #[default]
    Exact,
    /// `|actual - desired| <= epsilon` on numeric parameters, exact elsewhere.
    NumericTolerance {
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        per_param: Vec<(String, f64)>,
    },
    Custom { hook: String },
}

impl Matcher {
    pub fn tolerance(epsilon: f64) -> Self {
        Matcher::NumericTolerance { epsilon, per_param: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Matcher::NumericTolerance { epsilon, per_param } = self {
            let bad = |e: f64| !(e.is_finite() && e >= 0.0);
            if bad(*epsilon) || per_param.iter().any(|(_, e)| bad(*e)) {
                return Err(Error::InvalidConfig("matcher epsilon must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    fn epsilon_for(&self, param: &str) -> Option<f64> {
        match self {
            Matcher::NumericTolerance { epsilon, per_param } => Some(
                per_param.iter().find(|(p, _)| p == param).map(|(_, e)| *e).unwrap_or(*epsilon),
            ),
            _ => None,
        }
    }
}

/// Compares two outputs over the same parameter set. Custom matchers are
/// resolved by the runtime.
pub fn match_outputs(actual: &Record, desired: &Record, matcher: &Matcher) -> Result<bool> {
    if !actual.same_keys(desired) {
        return Err(Error::Matching(format!(
            "parameter sets differ: {:?} vs {:?}",
            actual.keys().collect::<Vec<_>>(),
            desired.keys().collect::<Vec<_>>()
        )));
    }
    if let Matcher::Custom { hook } = matcher {
        return Err(Error::Matching(format!("custom matcher `{hook}` must be resolved by the runtime")));
    }
    Ok(desired.iter().all(|(param, want)| {
        let got = actual.get(param).expect("same keys");
        match (got, want, matcher.epsilon_for(param)) {
            (Value::Number(a), Value::Number(d), Some(eps)) => libm::fabs(a - d) <= eps,
            _ => got == want,
        }
    }))
}

/// Qualification state of a registration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Qualification {
    Qualified,
    Unqualified,
    #[default]
    InsufficientData,
}

/// Qualified iff both accuracies are known and meet or exceed their thresholds.
pub fn qualify(gold: Option<f64>, silver: Option<f64>, thresholds: &QualityThresholds) -> Qualification {
    match (gold, silver) {
        (Some(g), Some(s)) if thresholds.met_by(g, s) => Qualification::Qualified,
        (Some(_), Some(_)) => Qualification::Unqualified,
        _ => Qualification::InsufficientData,
    }
}

/// Matches over total for one evaluation set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub matches: usize,
    pub total: usize,
}

impl Tally {
    pub fn record(&mut self, matched: bool) {
        self.total += 1;
        if matched {
            self.matches += 1;
        }
    }

    pub fn merged(self, other: Tally) -> Tally {
        Tally { matches: self.matches + other.matches, total: self.total + other.total }
    }

    /// Accuracy when at least `min` samples were scored.
    pub fn accuracy(&self, min: usize) -> Option<f64> {
        (self.total > 0 && self.total >= min).then(|| self.matches as f64 / self.total as f64)
    }
}

/// Evaluation results for one member (or a whole caller) on one caller's data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemberMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub silver_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub combined_accuracy: Option<f64>,
    pub sample_counts: CategoryCounts,
    pub gold: Tally,
    pub silver: Tally,
    /// Invocation failures, counted as mismatches.
    pub failures: usize,
    /// Samples skipped because a context parameter was missing.
    pub skipped: usize,
    pub latency_ewma_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_evaluated: Option<u64>,
}

impl MemberMetrics {
    /// Derives accuracies from tallies. Combined is the micro-average over
    /// gold and silver samples and needs as many samples as gold does.
    pub fn from_tallies(gold: Tally, silver: Option<Tally>, min: &MinEvalSamples) -> Self {
        let mut m = MemberMetrics { gold, ..Default::default() };
        m.gold_accuracy = gold.accuracy(min.gold_min);
        if let Some(silver) = silver {
            m.silver = silver;
            m.silver_accuracy = silver.accuracy(min.silver_min);
            m.combined_accuracy = gold.merged(silver).accuracy(min.gold_min);
        }
        m
    }

    pub fn accuracy(&self, source: WeightSource) -> Option<f64> {
        match source {
            WeightSource::Gold => self.gold_accuracy,
            WeightSource::Silver => self.silver_accuracy,
            WeightSource::Combined => self.combined_accuracy,
        }
    }

    /// Exponentially weighted latency update.
    pub fn observe_latency(&mut self, ms: f64) {
        const ALPHA: f64 = 0.2;
        self.latency_ewma_ms = if self.latency_ewma_ms == 0.0 {
            ms
        } else {
            ALPHA * ms + (1.0 - ALPHA) * self.latency_ewma_ms
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_and_tolerance() {
        let a = Record::new().with("score", 0.500001);
        let d = Record::new().with("score", 0.5);
        assert!(!match_outputs(&a, &d, &Matcher::Exact).unwrap());
        assert!(match_outputs(&a, &d, &Matcher::tolerance(1e-3)).unwrap());
        let far = Record::new().with("score", 0.51);
        assert!(!match_outputs(&far, &d, &Matcher::tolerance(1e-3)).unwrap());
        assert!(match_outputs(&Record::new().with("x", 1), &Record::new(), &Matcher::Exact).is_err());
    }

    #[test]
    fn tolerance_leaves_text_exact() {
        let m = Matcher::tolerance(10.0);
        let a = Record::new().with("label", "a");
        assert!(!match_outputs(&a, &Record::new().with("label", "b"), &m).unwrap());
    }

    #[test]
    fn qualification_is_closed() {
        let t = QualityThresholds::new(0.9, 0.8);
        assert_eq!(qualify(Some(0.9), Some(0.8), &t), Qualification::Qualified);
        assert_eq!(qualify(Some(0.95), Some(0.79), &t), Qualification::Unqualified);
        assert_eq!(qualify(None, Some(1.0), &t), Qualification::InsufficientData);
    }

    #[test]
    fn combined_is_micro_average() {
        let min = MinEvalSamples { gold_min: 1, silver_min: 1 };
        let m = MemberMetrics::from_tallies(Tally { matches: 1, total: 1 }, Some(Tally { matches: 0, total: 1 }), &min);
        assert_eq!(m.combined_accuracy, Some(0.5));
        let m = MemberMetrics::from_tallies(Tally { matches: 3, total: 3 }, None, &MinEvalSamples { gold_min: 10, silver_min: 20 });
        assert_eq!(m.gold_accuracy, None);
    }
}
