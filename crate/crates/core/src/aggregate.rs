//! Aggregation of member outputs into one record.
//!
//! Stacking, voting and the mean family are pure and live here. The
//! aggregator-model and custom-hook strategies need to invoke something, so
//! the runtime resolves them before falling back to [`aggregate`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{Record, Value};

/// Which historical accuracy weights a member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightSource {
    #[default]
    Gold,
    Silver,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum AggregationStrategy {
    Stacking,
    Voting,
    Mean,
    QualityWeightedMean,
    AggregatorModel,
    FilteredMean { min_accuracy: f64 },
    CustomHook { hook: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationSpec {
    #[serde(flatten)]
    pub strategy: AggregationStrategy,
    #[serde(default)]
    pub weight_source: WeightSource,
}

impl Default for AggregationSpec {
    fn default() -> Self {
        Self::new(AggregationStrategy::Voting)
    }
}

impl AggregationSpec {
    pub fn new(strategy: AggregationStrategy) -> Self {
        Self { strategy, weight_source: WeightSource::Gold }
    }

    pub fn validate(&self) -> Result<()> {
        if let AggregationStrategy::FilteredMean { min_accuracy } = self.strategy {
            if !(0.0..=1.0).contains(&min_accuracy) {
                return Err(Error::InvalidConfig(format!(
                    "filtered mean min_accuracy must lie in [0, 1], got {min_accuracy}"
                )));
            }
        }
        Ok(())
    }
}

/// One successful member output as seen by an aggregation strategy.
#[derive(Debug, Clone, Copy)]
pub struct Contribution<'a> {
    pub id: &'a str,
    pub output: &'a Record,
    /// Historical accuracy from the spec's weight source, if known.
    pub accuracy: Option<f64>,
    /// Caller-level learned weight; takes precedence over `accuracy`.
    pub learned_weight: Option<f64>,
}

impl<'a> Contribution<'a> {
    pub fn new(id: &'a str, output: &'a Record) -> Self {
        Self { id, output, accuracy: None, learned_weight: None }
    }

    pub fn with_accuracy(mut self, accuracy: Option<f64>) -> Self {
        self.accuracy = accuracy;
        self
    }
}

pub fn aggregate(strategy: &AggregationStrategy, contributions: &[Contribution<'_>]) -> Result<Record> {
    if contributions.is_empty() {
        return Err(Error::Aggregation("no outputs to aggregate".into()));
    }
    match strategy {
        AggregationStrategy::Stacking => Ok(stack(contributions)),
        AggregationStrategy::Voting => vote(contributions),
        AggregationStrategy::Mean => {
            let w = alloc::vec![1.0; contributions.len()];
            weighted_mean(contributions, &w)
        }
        AggregationStrategy::QualityWeightedMean => {
            let w = resolve_weights(contributions);
            weighted_mean(contributions, &w)
        }
        AggregationStrategy::FilteredMean { min_accuracy } => {
            let kept: Vec<Contribution<'_>> = contributions
                .iter()
                .filter(|c| c.accuracy.is_some_and(|a| a >= *min_accuracy))
                .copied()
                .collect();
            if kept.is_empty() {
                return Err(Error::Aggregation(format!(
                    "no member reaches the minimum accuracy {min_accuracy}"
                )));
            }
            let w = alloc::vec![1.0; kept.len()];
            weighted_mean(&kept, &w)
        }
        AggregationStrategy::AggregatorModel | AggregationStrategy::CustomHook { .. } => Err(
            Error::Aggregation("strategy must be resolved by the runtime".into()),
        ),
    }
}

/// Namespaces each member's entries as `<id>.<param>` in member order.
pub fn stack(contributions: &[Contribution<'_>]) -> Record {
    let mut out = Record::new();
    for c in contributions {
        for (k, v) in c.output.iter() {
            out.insert(format!("{}.{}", c.id, k), v.clone());
        }
    }
    out
}

/// Recovers each member's output from a stacked record. Member ids must
/// not be prefixes of one another followed by a dot.
pub fn unstack(stacked: &Record, ids: &[&str]) -> Vec<Record> {
    ids.iter()
        .map(|id| {
            let prefix = format!("{id}.");
            stacked
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix.as_str()).map(|p| (String::from(p), v.clone())))
                .collect()
        })
        .collect()
}

/// Per parameter, the value with the most votes. Ties go to the smallest
/// value under [`Value::canonical_cmp`].
pub fn vote(contributions: &[Contribution<'_>]) -> Result<Record> {
    let first = contributions[0].output;
    let mut out = Record::new();
    for param in first.keys() {
        let mut tally: Vec<(&Value, usize)> = Vec::new();
        for c in contributions {
            let v = c
                .output
                .get(param)
                .ok_or_else(|| Error::Aggregation(format!("member `{}` lacks `{param}`", c.id)))?;
            match tally.iter_mut().find(|(seen, _)| *seen == v) {
                Some(slot) => slot.1 += 1,
                None => tally.push((v, 1)),
            }
        }
        let winner = tally
            .into_iter()
            .reduce(|best, cand| {
                if cand.1 > best.1 || (cand.1 == best.1 && cand.0.canonical_cmp(best.0).is_lt()) {
                    cand
                } else {
                    best
                }
            })
            .map(|(v, _)| v.clone())
            .expect("at least one contribution");
        out.insert(param, winner);
    }
    Ok(out)
}

/// Σ wᵢ yᵢ / Σ wᵢ per parameter. All weights zero falls back to equal weights.
pub fn weighted_mean(contributions: &[Contribution<'_>], weights: &[f64]) -> Result<Record> {
    debug_assert_eq!(contributions.len(), weights.len());
    let total: f64 = weights.iter().sum();
    let equal = alloc::vec![1.0; weights.len()];
    let (weights, total) = if total > 0.0 { (weights, total) } else { (&equal[..], weights.len() as f64) };
    let first = contributions[0].output;
    let mut out = Record::new();
    for param in first.keys() {
        let mut acc = 0.0;
        for (c, w) in contributions.iter().zip(weights) {
            let y = c
                .output
                .get(param)
                .ok_or_else(|| Error::Aggregation(format!("member `{}` lacks `{param}`", c.id)))?
                .as_f64()
                .ok_or_else(|| Error::Aggregation(format!("`{param}` from `{}` is not numeric", c.id)))?;
            acc += w * y;
        }
        out.insert(param, acc / total);
    }
    Ok(out)
}

/// Weights for quality weighting: learned weight, else accuracy, else the
/// mean of the known weights (1.0 when none is known).
pub fn resolve_weights(contributions: &[Contribution<'_>]) -> Vec<f64> {
    let known: Vec<Option<f64>> = contributions.iter().map(|c| c.learned_weight.or(c.accuracy)).collect();
    let (sum, n) = known.iter().flatten().fold((0.0, 0usize), |(s, n), w| (s + w, n + 1));
    let fill = if n == 0 { 1.0 } else { sum / n as f64 };
    known.into_iter().map(|w| w.unwrap_or(fill)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(name: &str, v: impl Into<Value>) -> Record {
        Record::new().with(name, v)
    }

    #[test]
    fn majority_vote() {
        let outs = [rec("fraud", 1), rec("fraud", 0), rec("fraud", 1)];
        let cs: Vec<_> = outs.iter().enumerate().map(|(i, o)| Contribution::new(["a", "b", "c"][i], o)).collect();
        assert_eq!(vote(&cs).unwrap(), rec("fraud", 1));
    }

    #[test]
    fn tie_goes_to_lowest_value() {
        let outs = [rec("fraud", 1), rec("fraud", 0)];
        let cs: Vec<_> = outs.iter().map(|o| Contribution::new("m", o)).collect();
        assert_eq!(vote(&cs).unwrap(), rec("fraud", 0));
    }

    #[test]
    fn quality_weighted_mean_example() {
        let outs = [rec("score", 0.2), rec("score", 0.6)];
        let cs = [
            Contribution::new("a", &outs[0]).with_accuracy(Some(0.25)),
            Contribution::new("b", &outs[1]).with_accuracy(Some(0.75)),
        ];
        let r = aggregate(&AggregationStrategy::QualityWeightedMean, &cs).unwrap();
        assert!((r.number("score").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cold_start_weights() {
        let o = rec("s", 1.0);
        let cs = [
            Contribution::new("a", &o).with_accuracy(Some(0.4)),
            Contribution::new("b", &o),
            Contribution::new("c", &o).with_accuracy(Some(0.8)),
        ];
        let w = resolve_weights(&cs);
        assert!((w[1] - 0.6).abs() < 1e-12);
        assert_eq!(resolve_weights(&[Contribution::new("a", &o)]), alloc::vec![1.0]);
    }

    #[test]
    fn mean_of_one_is_identity() {
        let o = rec("s", 0.37);
        let r = aggregate(&AggregationStrategy::Mean, &[Contribution::new("a", &o)]).unwrap();
        assert_eq!(r, o);
    }

    #[test]
    fn mean_rejects_text() {
        let o = rec("s", "x");
        assert!(aggregate(&AggregationStrategy::Mean, &[Contribution::new("a", &o)]).is_err());
    }

    #[test]
    fn stacking_namespaces() {
        let a = rec("score", 0.1);
        let b = rec("score", 0.9);
        let s = stack(&[Contribution::new("m1", &a), Contribution::new("m2", &b)]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.number("m2.score"), Some(0.9));
        assert_eq!(unstack(&s, &["m1", "m2"]), alloc::vec![a, b]);
    }

    #[test]
    fn filtered_mean_drops_weak_and_unknown() {
        let outs = [rec("s", 0.0), rec("s", 1.0), rec("s", 0.5)];
        let cs = [
            Contribution::new("a", &outs[0]).with_accuracy(Some(0.5)),
            Contribution::new("b", &outs[1]).with_accuracy(Some(0.9)),
            Contribution::new("c", &outs[2]),
        ];
        let r = aggregate(&AggregationStrategy::FilteredMean { min_accuracy: 0.8 }, &cs).unwrap();
        assert_eq!(r.number("s"), Some(1.0));
        assert!(aggregate(&AggregationStrategy::FilteredMean { min_accuracy: 0.95 }, &cs).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec = AggregationSpec::new(AggregationStrategy::FilteredMean { min_accuracy: 0.7 });
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(s, r#"{"strategy":"filtered_mean","min_accuracy":0.7,"weight_source":"gold"}"#);
        let back: AggregationSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }
}
