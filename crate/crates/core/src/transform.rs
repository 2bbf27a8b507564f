//! Host → both → registered state machine for migrating a legacy function
//! to a model.

use alloc::string::String;
use serde::{Deserialize, Serialize};

use crate::config::{CallTarget, QualityThresholds};
use crate::error::{Error, Result};
use crate::quality::Qualification;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PlanState {
    HostOnly,
    Hybrid,
    ModelOnly,
    Halted { reason: String },
}

impl PlanState {
    /// Call target this state pins while the plan is active.
    pub fn call_target(&self) -> Option<CallTarget> {
        match self {
            PlanState::HostOnly => Some(CallTarget::Host),
            PlanState::Hybrid => Some(CallTarget::Both),
            PlanState::ModelOnly => Some(CallTarget::Registered),
            PlanState::Halted { .. } => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PlanState::HostOnly => "host_only",
            PlanState::Hybrid => "hybrid",
            PlanState::ModelOnly => "model_only",
            PlanState::Halted { .. } => "halted",
        }
    }
}

/// Candidate measurements a step decides on.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub silver_accuracy: Option<f64>,
    pub qualification: Qualification,
    pub drift_alert: bool,
}

impl Evidence {
    pub fn meets(&self, t: &QualityThresholds) -> bool {
        matches!((self.gold_accuracy, self.silver_accuracy), (Some(g), Some(s)) if t.met_by(g, s))
    }
}

/// Next state for one step, or `None` when the criteria are unmet.
pub fn next_state(
    state: &PlanState,
    evidence: &Evidence,
    validate: &QualityThresholds,
    demote_on_drift: bool,
) -> Result<Option<PlanState>> {
    Ok(match state {
        PlanState::Halted { reason } => return Err(Error::Transition(alloc::format!("plan halted: {reason}"))),
        PlanState::HostOnly => (evidence.qualification == Qualification::Qualified).then_some(PlanState::Hybrid),
        PlanState::Hybrid => evidence.meets(validate).then_some(PlanState::ModelOnly),
        PlanState::ModelOnly => (demote_on_drift && evidence.drift_alert).then_some(PlanState::Hybrid),
    })
}
