//! Per-caller sample cache and review lifecycle.

use std::collections::BTreeMap;

use modelcaller_core::{categorize, Category, CategoryCounts, Origin, Params, Record, Split, Supervision};
use serde::{Deserialize, Serialize};

use crate::error::{McError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Review {
    None,
    Pending(String),
    Confirmed,
    Overridden,
}

/// One cached input/output pair. Field order is the sample-log line format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub caller_id: String,
    pub inputs: Record,
    pub context: Record,
    pub output: Record,
    pub origin: Origin,
    pub split: Split,
    pub supervision: Supervision,
    pub review: Review,
    /// Output before an override replaced it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_output: Option<Record>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    pub created_at: u64,
    pub config_version: u64,
}

impl Sample {
    pub fn category(&self) -> Category {
        categorize(self.split, self.supervision)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum FeedbackAction {
    Confirm,
    Override { output: Record },
    Reward { value: f64 },
}

impl FeedbackAction {
    fn name(&self) -> &'static str {
        match self {
            FeedbackAction::Confirm => "confirm",
            FeedbackAction::Override { .. } => "override",
            FeedbackAction::Reward { .. } => "reward",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEntry {
    /// Index of the sample in creation order.
    pub sample: usize,
    pub issued_at: u64,
    /// The supervising action that used this token, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consumed: Option<FeedbackAction>,
}

/// Filter over a caller's samples. Empty lists admit everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSelector {
    pub categories: Vec<Category>,
    pub origins: Vec<Origin>,
    /// Inclusive lower bound on `created_at`.
    pub since: Option<u64>,
    /// Inclusive upper bound on `created_at`.
    pub until: Option<u64>,
    pub limit: Option<usize>,
}

impl DatasetSelector {
    pub fn categories(categories: impl IntoIterator<Item = Category>) -> Self {
        Self { categories: categories.into_iter().collect(), ..Self::default() }
    }

    /// Platinum and Bronze: everything in the training split.
    pub fn training() -> Self {
        Self::categories([Category::Platinum, Category::Bronze])
    }

    pub fn admits(&self, s: &Sample) -> bool {
        (self.categories.is_empty() || self.categories.contains(&s.category()))
            && (self.origins.is_empty() || self.origins.contains(&s.origin))
            && self.since.is_none_or(|t| s.created_at >= t)
            && self.until.is_none_or(|t| s.created_at <= t)
    }
}

/// What a new sample carries before the store assigns its id.
#[derive(Debug, Clone)]
pub struct NewSample {
    pub inputs: Record,
    pub context: Record,
    pub output: Record,
    pub origin: Origin,
    pub split: Split,
    pub created_at: u64,
    pub config_version: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleStore {
    caller_id: String,
    samples: Vec<Sample>,
    tokens: BTreeMap<String, TokenEntry>,
    next_token: u64,
    next_sample: u64,
}

impl SampleStore {
    pub fn new(caller_id: impl Into<String>) -> Self {
        Self { caller_id: caller_id.into(), ..Self::default() }
    }

    pub(crate) fn restore(
        caller_id: String,
        samples: Vec<Sample>,
        tokens: BTreeMap<String, TokenEntry>,
        next_token: u64,
        next_sample: u64,
    ) -> Self {
        Self { caller_id, samples, tokens, next_token, next_sample }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub(crate) fn tokens(&self) -> &BTreeMap<String, TokenEntry> {
        &self.tokens
    }

    pub(crate) fn next_token(&self) -> u64 {
        self.next_token
    }

    pub(crate) fn next_sample(&self) -> u64 {
        self.next_sample
    }

    /// Appends an unsupervised sample and returns its index.
    pub fn append(&mut self, new: NewSample) -> usize {
        let idx = self.samples.len();
        self.next_sample += 1;
        self.samples.push(Sample {
            id: format!("{}-s{}", self.caller_id, self.next_sample),
            caller_id: self.caller_id.clone(),
            inputs: new.inputs,
            context: new.context,
            output: new.output,
            origin: new.origin,
            split: new.split,
            supervision: Supervision::Unsupervised,
            review: Review::None,
            original_output: None,
            reward: None,
            created_at: new.created_at,
            config_version: new.config_version,
        });
        idx
    }

    /// Issues a review token for the sample at `idx`. Call samples enter the
    /// pending queue; sensor samples can be reviewed but are never pending.
    pub fn issue_token(&mut self, idx: usize, now: u64) -> String {
        self.next_token += 1;
        let token = format!("{}.{}", self.caller_id, self.next_token);
        self.tokens.insert(token.clone(), TokenEntry { sample: idx, issued_at: now, consumed: None });
        let sample = &mut self.samples[idx];
        if sample.origin == Origin::Call {
            sample.review = Review::Pending(token.clone());
        }
        token
    }

    pub fn apply_feedback(
        &mut self,
        token: &str,
        action: FeedbackAction,
        now: u64,
        ttl_ms: Option<u64>,
        outputs: &Params,
    ) -> Result<Sample> {
        let entry = self.tokens.get_mut(token).ok_or_else(|| McError::UnknownToken(token.to_string()))?;
        let sample = &mut self.samples[entry.sample];
        if let Some(done) = &entry.consumed {
            if *done == action {
                return Ok(sample.clone());
            }
            return Err(McError::Conflict(format!(
                "review token `{token}` was already used to {}",
                done.name()
            )));
        }
        if ttl_ms.is_some_and(|ttl| now.saturating_sub(entry.issued_at) > ttl) {
            return Err(McError::ExpiredToken(token.to_string()));
        }
        match &action {
            FeedbackAction::Confirm => {
                sample.supervision = Supervision::Supervised;
                sample.review = Review::Confirmed;
            }
            FeedbackAction::Override { output } => {
                outputs.check(output, "override output")?;
                sample.original_output = Some(std::mem::replace(&mut sample.output, output.clone()));
                sample.supervision = Supervision::Supervised;
                sample.review = Review::Overridden;
            }
            FeedbackAction::Reward { value } => {
                if !value.is_finite() {
                    return Err(McError::Invalid("reward must be finite".into()));
                }
                sample.reward = Some(*value);
                return Ok(sample.clone());
            }
        }
        entry.consumed = Some(action);
        Ok(sample.clone())
    }

    /// Pending call samples, oldest first.
    pub fn pending(&self, limit: usize) -> Vec<(String, Sample)> {
        self.samples
            .iter()
            .filter_map(|s| match &s.review {
                Review::Pending(t) => Some((t.clone(), s.clone())),
                _ => None,
            })
            .take(limit)
            .collect()
    }

    pub fn pending_count(&self) -> usize {
        self.samples.iter().filter(|s| matches!(s.review, Review::Pending(_))).count()
    }

    pub fn view(&self, selector: &DatasetSelector) -> Vec<Sample> {
        self.samples
            .iter()
            .filter(|s| selector.admits(s))
            .take(selector.limit.unwrap_or(usize::MAX))
            .cloned()
            .collect()
    }

    pub fn counts(&self) -> CategoryCounts {
        let mut c = CategoryCounts::default();
        self.samples.iter().for_each(|s| c.add(s.category()));
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use modelcaller_core::ValueKind;

    fn outputs() -> Params {
        Params::new().with("fraud", ValueKind::Number)
    }

    fn store_with(n: usize, split: Split) -> SampleStore {
        let mut st = SampleStore::new("mc-1");
        for i in 0..n {
            st.append(NewSample {
                inputs: Record::new().with("amount", i as f64),
                context: Record::new(),
                output: Record::new().with("fraud", 0),
                origin: Origin::Call,
                split,
                created_at: i as u64,
                config_version: 1,
            });
        }
        st
    }

    #[test]
    fn override_keeps_original() {
        let mut st = store_with(1, Split::Training);
        let tok = st.issue_token(0, 0);
        let s = st
            .apply_feedback(&tok, FeedbackAction::Override { output: Record::new().with("fraud", 1) }, 1, None, &outputs())
            .unwrap();
        assert_eq!(s.output, Record::new().with("fraud", 1));
        assert_eq!(s.original_output, Some(Record::new().with("fraud", 0)));
        assert_eq!(s.category(), Category::Platinum);
    }

    #[test]
    fn same_action_is_idempotent_other_action_conflicts() {
        let mut st = store_with(1, Split::Evaluation);
        let tok = st.issue_token(0, 0);
        let a = st.apply_feedback(&tok, FeedbackAction::Confirm, 1, None, &outputs()).unwrap();
        let b = st.apply_feedback(&tok, FeedbackAction::Confirm, 2, None, &outputs()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.category(), Category::Gold);
        let err = st.apply_feedback(&tok, FeedbackAction::Override { output: Record::new().with("fraud", 1) }, 3, None, &outputs());
        assert!(matches!(err, Err(McError::Conflict(_))));
    }

    #[test]
    fn reward_leaves_supervision() {
        let mut st = store_with(1, Split::Evaluation);
        let tok = st.issue_token(0, 0);
        let s = st.apply_feedback(&tok, FeedbackAction::Reward { value: 1.0 }, 1, None, &outputs()).unwrap();
        assert_eq!(s.supervision, Supervision::Unsupervised);
        assert_eq!(s.reward, Some(1.0));
        assert_eq!(st.pending_count(), 1);
    }

    #[test]
    fn ttl_expires_tokens() {
        let mut st = store_with(1, Split::Evaluation);
        let tok = st.issue_token(0, 10);
        let err = st.apply_feedback(&tok, FeedbackAction::Confirm, 100, Some(50), &outputs());
        assert!(matches!(err, Err(McError::ExpiredToken(_))));
    }

    #[test]
    fn pending_is_oldest_first() {
        let mut st = store_with(3, Split::Training);
        let t2 = st.issue_token(2, 0);
        let t0 = st.issue_token(0, 1);
        let tokens: Vec<_> = st.pending(10).into_iter().map(|(t, _)| t).collect();
        assert_eq!(tokens, vec![t0, t2]);
    }
}
