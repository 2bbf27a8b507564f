//! Host-to-model transformation plans.
//!
//! A plan moves a caller from its host alone, through host and candidate
//! together, to the candidate alone, changing the call target at each
//! transition.

use modelcaller_core::quality::qualify;
use modelcaller_core::transform::{next_state, Evidence};
use modelcaller_core::{CallTarget, Method, PlanState, QualityThresholds, Role};
use serde::{Deserialize, Serialize};

use crate::caller::{check_role, Caller, Hub, ROLE_ENSEMBLE};
use crate::error::{McError, Result};
use crate::quality::{Behavior, EvalSpec};

pub const DEFAULT_DRIFT_WINDOW: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanOptions {
    /// Fall back from model-only to hybrid when a drift alert fires.
    pub demote_on_drift: bool,
    pub drift_window: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self { demote_on_drift: false, drift_window: DEFAULT_DRIFT_WINDOW }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub at: u64,
    pub step: u64,
    /// `None` for the entry that opens the plan.
    pub from: Option<PlanState>,
    pub to: PlanState,
    pub call_target: Option<CallTarget>,
    pub config_version: u64,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformationPlan {
    pub caller_id: String,
    /// Registration id of the candidate model.
    pub candidate: String,
    pub candidate_callable: String,
    pub state: PlanState,
    pub qualify_thresholds: QualityThresholds,
    pub validate_thresholds: QualityThresholds,
    pub demote_on_drift: bool,
    pub drift_window: usize,
    /// False once the host is retired or the plan halts.
    pub active: bool,
    pub steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_evidence: Option<Evidence>,
    pub history: Vec<HistoryEntry>,
    pub created_at: u64,
}

impl TransformationPlan {
    fn log(&mut self, at: u64, from: Option<PlanState>, config_version: u64, evidence: Evidence) {
        self.history.push(HistoryEntry {
            at,
            step: self.steps,
            from,
            to: self.state.clone(),
            call_target: self.state.call_target(),
            config_version,
            evidence,
        });
    }
}

impl Hub {
    pub fn plan_transformation(
        &self,
        role: Role,
        caller_id: &str,
        candidate: &str,
        options: PlanOptions,
    ) -> Result<TransformationPlan> {
        check_role(role, Method::Plan)?;
        if options.drift_window == 0 {
            return Err(McError::Invalid("drift_window must be at least 1".into()));
        }
        let caller = self.caller(caller_id)?;
        let mut slot = caller.plan.lock().expect("plan lock");
        if slot.as_ref().is_some_and(|p| p.active) {
            return Err(McError::Conflict(format!("caller `{}` already has an active plan", caller.id)));
        }
        let state = caller.snapshot();
        if state.host.is_none() {
            return Err(McError::Invalid(format!("caller `{}` has no host to transform", caller.id)));
        }
        let reg = state.registration(candidate)?;
        if reg.role != ROLE_ENSEMBLE || !reg.callable.trainable() {
            return Err(McError::Invalid(format!(
                "candidate `{candidate}` must be a trainable model registered with role {ROLE_ENSEMBLE}"
            )));
        }
        let version = self.set_call_target(&caller, CallTarget::Host)?;
        let mut plan = TransformationPlan {
            caller_id: caller.id.clone(),
            candidate: reg.id.clone(),
            candidate_callable: reg.callable.id.clone(),
            state: PlanState::HostOnly,
            qualify_thresholds: state.config.quality_thresholds,
            validate_thresholds: state.config.validation_threshold,
            demote_on_drift: options.demote_on_drift,
            drift_window: options.drift_window,
            active: true,
            steps: 0,
            last_evidence: None,
            history: Vec::new(),
            created_at: self.now(),
        };
        plan.log(plan.created_at, None, version, Evidence::default());
        *slot = Some(plan.clone());
        Ok(plan)
    }

    pub fn plan(&self, role: Role, caller_id: &str) -> Result<Option<TransformationPlan>> {
        check_role(role, Method::Read)?;
        Ok(self.caller(caller_id)?.plan())
    }

    /// Re-evaluates the candidate and takes at most one transition.
    pub fn step_transformation(&self, role: Role, caller_id: &str) -> Result<TransformationPlan> {
        check_role(role, Method::Plan)?;
        let caller = self.caller(caller_id)?;
        self.step_plan(&caller)
    }

    pub(crate) fn step_plan(&self, caller: &Caller) -> Result<TransformationPlan> {
        let mut slot = caller.plan.lock().expect("plan lock");
        let plan = slot.as_mut().ok_or_else(|| McError::Conflict(format!("caller `{}` has no plan", caller.id)))?;
        if let PlanState::Halted { reason } = &plan.state {
            return Err(McError::Conflict(format!("plan halted: {reason}")));
        }
        if !plan.active {
            return Err(McError::Conflict("plan is closed".into()));
        }
        let report = self.evaluate_inner(caller, &EvalSpec::registration(plan.candidate.clone(), Behavior::Combined))?;
        let metrics = &report.members[0].metrics;
        let drift_alert = plan.demote_on_drift
            && plan.state == PlanState::ModelOnly
            && self.detect_drift_inner(caller, plan.drift_window)?.alert().is_some();
        let evidence = Evidence {
            gold_accuracy: metrics.gold_accuracy,
            silver_accuracy: metrics.silver_accuracy,
            qualification: qualify(metrics.gold_accuracy, metrics.silver_accuracy, &plan.qualify_thresholds),
            drift_alert,
        };
        plan.steps += 1;
        plan.last_evidence = Some(evidence);
        if let Some(next) = next_state(&plan.state, &evidence, &plan.validate_thresholds, plan.demote_on_drift)? {
            let target = next.call_target().expect("live states have a target");
            let version = self.set_call_target(caller, target)?;
            let from = std::mem::replace(&mut plan.state, next);
            plan.log(self.now(), Some(from), version, evidence);
        }
        Ok(plan.clone())
    }

    /// Steps every active plan, skipping failures. Used by the scheduler.
    pub fn step_all_plans(&self) -> Vec<(String, Result<TransformationPlan>)> {
        self.callers()
            .into_iter()
            .filter(|c| c.plan().is_some_and(|p| p.active))
            .map(|c| (c.id.clone(), self.step_plan(&c)))
            .collect()
    }

    /// Detaches the host once the plan is model-only. Manual and admin-only.
    pub fn retire_host(&self, role: Role, caller_id: &str) -> Result<TransformationPlan> {
        check_role(role, Method::RetireHost)?;
        let caller = self.caller(caller_id)?;
        let mut slot = caller.plan.lock().expect("plan lock");
        let plan = slot
            .as_mut()
            .filter(|p| p.active)
            .ok_or_else(|| McError::Conflict(format!("caller `{}` has no active plan", caller.id)))?;
        if plan.state != PlanState::ModelOnly {
            return Err(McError::Conflict(format!("the host can only be retired in model_only, plan is {}", plan.state.name())));
        }
        let (host_id, version) = caller.mutate(|st| {
            let host = st.host.take().ok_or_else(|| McError::Conflict("host already retired".into()))?;
            st.config.call_target = CallTarget::Registered;
            st.target_locked = true;
            st.config_version += 1;
            Ok((host.callable.id.clone(), st.config_version))
        })?;
        self.unbind_name(&host_id);
        plan.active = false;
        let evidence = plan.last_evidence.unwrap_or_default();
        plan.log(self.now(), Some(PlanState::ModelOnly), version, evidence);
        Ok(plan.clone())
    }

    pub(crate) fn halt_plan_if_candidate(&self, caller: &Caller, rid: &str) {
        let mut slot = caller.plan.lock().expect("plan lock");
        if let Some(plan) = slot.as_mut().filter(|p| p.active && p.candidate == rid) {
            let from = std::mem::replace(&mut plan.state, PlanState::Halted { reason: format!("candidate `{rid}` was unregistered") });
            plan.active = false;
            let version = caller.snapshot().config_version;
            plan.log(self.now(), Some(from), version, Evidence::default());
        }
    }
}
