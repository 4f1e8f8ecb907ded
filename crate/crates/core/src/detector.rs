//! Violation detection: compare a source episode against a follow-up and
//! decide whether the planner contradicted the relation's inequality.
//!
//! A follow-up that completes strictly cheaper than its source is a
//! violation — the planner left savings on the table in the source run. Ties
//! are explicitly not violations: an optimal planner answering an ACTION
//! splice recovers at exactly the source cost, and flagging that would make
//! the whole harness unsound. Failures are not violations either; they take
//! a separate branch so the campaign can account for them honestly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::BaselineId;
use crate::gridworld::{Action, Trajectory};
use crate::metamorphic::{FollowUpCase, MRKind};
use crate::planners::EpisodeResult;
use crate::Real;

/// Severity class boundaries on the violation-severity ratio.
const MODERATE_ABOVE: Real = 0.10;
const SEVERE_ABOVE: Real = 0.20;

/// How trajectory cost is measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "model")]
pub enum CostModel {
    /// Every executed action costs 1.
    StepCount,
    /// Per-action weights; construct through [`CostModel::weighted`].
    Weighted(ActionWeights),
}

/// Per-action cost table for [`CostModel::Weighted`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionWeights {
    pub move_ahead: Real,
    pub move_back: Real,
    pub rotate_left: Real,
    pub rotate_right: Real,
    pub done: Real,
}

impl ActionWeights {
    pub fn weight(&self, action: Action) -> Real {
        match action {
            Action::MoveAhead => self.move_ahead,
            Action::MoveBack => self.move_back,
            Action::RotateLeft => self.rotate_left,
            Action::RotateRight => self.rotate_right,
            Action::Done => self.done,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostModelError {
    #[error("motion action weights must be strictly positive")]
    NonPositiveMotionWeight,
    #[error("action weights must be non-negative")]
    NegativeWeight,
}

impl CostModel {
    /// Validates the invariants a weight table must satisfy: nothing
    /// negative, and motion weights strictly positive (a free motion would
    /// let arbitrarily long trajectories tie the optimum).
    pub fn weighted(weights: ActionWeights) -> Result<CostModel, CostModelError> {
        let motions =
            [weights.move_ahead, weights.move_back, weights.rotate_left, weights.rotate_right];
        if motions.iter().any(|&w| w <= 0.0) {
            return Err(CostModelError::NonPositiveMotionWeight);
        }
        if weights.done < 0.0 {
            return Err(CostModelError::NegativeWeight);
        }
        Ok(CostModel::Weighted(weights))
    }
}

/// Severity classes for a violation, plus NONE for non-violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Slight,
    Moderate,
    Severe,
    None,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeverityError {
    #[error("violation severity {vs} outside (0, 1]")]
    OutOfRange { vs: Real },
}

/// Maps a violation-severity ratio to its class. Defined only for actual
/// violations, i.e. vs in (0, 1]; both boundaries are inclusive on the
/// lower class (0.10 is SLIGHT, 0.20 is MODERATE).
pub fn classify_severity(vs: Real) -> Result<Severity, SeverityError> {
    if !(vs > 0.0 && vs <= 1.0) {
        return Err(SeverityError::OutOfRange { vs });
    }
    Ok(if vs > SEVERE_ABOVE {
        Severity::Severe
    } else if vs > MODERATE_ABOVE {
        Severity::Moderate
    } else {
        Severity::Slight
    })
}

/// Sums per-action costs over a trajectory.
pub fn compute_cost(traj: &Trajectory, model: &CostModel) -> Real {
    match model {
        CostModel::StepCount => traj.actions.len() as Real,
        CostModel::Weighted(w) => traj.actions.iter().map(|&a| w.weight(a)).sum(),
    }
}

/// What produced a pair: one of the metamorphic relations or one of the
/// baseline techniques. Serialized as the bare name either way, so records
/// from both pipelines share one schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RelationTag {
    Mr(MRKind),
    Baseline(BaselineId),
}

impl From<MRKind> for RelationTag {
    fn from(mr: MRKind) -> RelationTag {
        RelationTag::Mr(mr)
    }
}

impl From<BaselineId> for RelationTag {
    fn from(id: BaselineId) -> RelationTag {
        RelationTag::Baseline(id)
    }
}

impl RelationTag {
    pub fn name(self) -> &'static str {
        match self {
            RelationTag::Mr(mr) => mr.name(),
            RelationTag::Baseline(id) => id.name(),
        }
    }
}

/// The cost comparison for one (source, follow-up) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub mr: RelationTag,
    pub c_s: Real,
    pub c_f: Real,
    pub violated: bool,
    pub vs: Real,
    pub severity: Severity,
}

/// Which side of a pair failed to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailedSide {
    Source,
    Followup,
    Both,
}

/// Outcome of running the detector on one pair.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectionOutcome {
    Result(Comparison),
    TaskExecutionFailed { which: FailedSide },
}

/// Compares costs for one pair. Either episode failing short-circuits into
/// the failure branch — a failed run has no meaningful cost to compare.
/// Otherwise the pair is a violation exactly when the follow-up came in
/// strictly cheaper.
pub fn detect_violation(
    src_ep: &EpisodeResult,
    fu_ep: &EpisodeResult,
    mr: impl Into<RelationTag>,
    model: &CostModel,
) -> DetectionOutcome {
    let mr = mr.into();
    let which = match (src_ep.success, fu_ep.success) {
        (false, false) => Some(FailedSide::Both),
        (false, true) => Some(FailedSide::Source),
        (true, false) => Some(FailedSide::Followup),
        (true, true) => None,
    };
    if let Some(which) = which {
        return DetectionOutcome::TaskExecutionFailed { which };
    }
    let c_s = compute_cost(&src_ep.trajectory, model);
    let c_f = compute_cost(&fu_ep.trajectory, model);
    let violated = c_f < c_s;
    let (vs, severity) = if violated {
        let vs = (c_s - c_f) / c_s;
        // violated ⇒ 0 < vs ≤ 1 whenever costs are non-negative, so the
        // classifier cannot reject here
        (vs, classify_severity(vs).expect("violation ratio out of range"))
    } else {
        (0.0, Severity::None)
    };
    DetectionOutcome::Result(Comparison { mr, c_s, c_f, violated, vs, severity })
}

/// One detector verdict joined with its provenance, as written to report
/// streams. Field order is the wire order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub source_id: String,
    pub mr: RelationTag,
    pub c_s: Real,
    pub c_f: Real,
    pub violated: bool,
    pub vs: Real,
    pub severity: Severity,
    pub followup: FollowUpCase,
}

impl ViolationRecord {
    pub fn new(
        source_id: impl Into<String>,
        comparison: Comparison,
        followup: FollowUpCase,
    ) -> ViolationRecord {
        ViolationRecord {
            source_id: source_id.into(),
            mr: comparison.mr,
            c_s: comparison.c_s,
            c_f: comparison.c_f,
            violated: comparison.violated,
            vs: comparison.vs,
            severity: comparison.severity,
            followup,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{empty_environment, observe, AgentState, Heading, ObjectCategory};
    use crate::gridworld::{CompletionCondition, SceneObject};
    use crate::planners::{PlannerId, Termination};

    /// Synthetic episode with `steps` executed actions (motions then DONE).
    fn episode(steps: usize, success: bool) -> EpisodeResult {
        let env = empty_environment(
            4,
            4,
            vec![SceneObject { id: 0, category: ObjectCategory::Chair, x: 2, y: 1 }],
        );
        let start = AgentState::new(1, 2, Heading::North);
        let mut trajectory = Trajectory::new(start);
        for _ in 0..steps.saturating_sub(1) {
            trajectory.push(Action::MoveAhead, start);
        }
        if steps > 0 {
            trajectory.push(Action::Done, start);
        }
        EpisodeResult {
            planner: PlannerId::GreedyFrontier,
            seed: 0,
            success,
            steps,
            termination: if success {
                Termination::Completed
            } else {
                Termination::StepBudgetExhausted
            },
            trajectory,
            initial_observation: observe(&env, start, 90.0),
        }
    }

    fn sample_followup() -> FollowUpCase {
        FollowUpCase::Condition {
            refined: CompletionCondition {
                fov_degrees: 67.5,
                max_distance: 1.5,
                requires_line_of_sight: true,
            },
        }
    }

    #[test]
    fn step_count_counts_actions() {
        let ep = episode(20, true);
        assert_eq!(compute_cost(&ep.trajectory, &CostModel::StepCount), 20.0);
        let empty = Trajectory::new(AgentState::new(0, 0, Heading::North));
        assert_eq!(compute_cost(&empty, &CostModel::StepCount), 0.0);
    }

    #[test]
    fn weighted_cost_sums_the_table() {
        let model = CostModel::weighted(ActionWeights {
            move_ahead: 2.0,
            move_back: 2.0,
            rotate_left: 1.0,
            rotate_right: 1.0,
            done: 0.0,
        })
        .unwrap();
        let start = AgentState::new(0, 0, Heading::North);
        let mut traj = Trajectory::new(start);
        traj.push(Action::MoveAhead, start);
        traj.push(Action::RotateLeft, start);
        traj.push(Action::Done, start);
        assert_eq!(compute_cost(&traj, &model), 3.0);
    }

    #[test]
    fn weight_table_is_validated() {
        let base = ActionWeights {
            move_ahead: 1.0,
            move_back: 1.0,
            rotate_left: 1.0,
            rotate_right: 1.0,
            done: 0.0,
        };
        assert!(CostModel::weighted(base.clone()).is_ok());
        assert_eq!(
            CostModel::weighted(ActionWeights { rotate_left: 0.0, ..base.clone() }).unwrap_err(),
            CostModelError::NonPositiveMotionWeight
        );
        assert_eq!(
            CostModel::weighted(ActionWeights { done: -1.0, ..base }).unwrap_err(),
            CostModelError::NegativeWeight
        );
    }

    #[test]
    fn large_violation_matches_hand_arithmetic() {
        let src = episode(367, true);
        let fu = episode(113, true);
        let DetectionOutcome::Result(cmp) =
            detect_violation(&src, &fu, MRKind::Position, &CostModel::StepCount)
        else {
            panic!("expected a comparison");
        };
        assert!(cmp.violated);
        assert!((cmp.vs - 254.0 / 367.0).abs() < 1e-9);
        assert_eq!(cmp.severity, Severity::Severe);
        assert_eq!(cmp.c_s, 367.0);
        assert_eq!(cmp.c_f, 113.0);
    }

    #[test]
    fn ties_are_not_violations() {
        let src = episode(20, true);
        let fu = episode(20, true);
        let DetectionOutcome::Result(cmp) =
            detect_violation(&src, &fu, MRKind::Action, &CostModel::StepCount)
        else {
            panic!();
        };
        assert!(!cmp.violated);
        assert_eq!(cmp.vs, 0.0);
        assert_eq!(cmp.severity, Severity::None);
    }

    #[test]
    fn costlier_followups_are_not_violations() {
        let src = episode(20, true);
        let fu = episode(25, true);
        let DetectionOutcome::Result(cmp) =
            detect_violation(&src, &fu, MRKind::Scene, &CostModel::StepCount)
        else {
            panic!();
        };
        assert!(!cmp.violated);
        assert_eq!(cmp.severity, Severity::None);
    }

    #[test]
    fn failures_take_the_failure_branch() {
        let ok = episode(10, true);
        let bad = episode(10, false);
        let model = CostModel::StepCount;
        assert_eq!(
            detect_violation(&bad, &ok, MRKind::Scene, &model),
            DetectionOutcome::TaskExecutionFailed { which: FailedSide::Source }
        );
        assert_eq!(
            detect_violation(&ok, &bad, MRKind::Scene, &model),
            DetectionOutcome::TaskExecutionFailed { which: FailedSide::Followup }
        );
        assert_eq!(
            detect_violation(&bad, &bad, MRKind::Scene, &model),
            DetectionOutcome::TaskExecutionFailed { which: FailedSide::Both }
        );
    }

    #[test]
    fn severity_boundaries_partition_cleanly() {
        assert_eq!(classify_severity(0.10).unwrap(), Severity::Slight);
        assert_eq!(classify_severity(0.100000001).unwrap(), Severity::Moderate);
        assert_eq!(classify_severity(0.20).unwrap(), Severity::Moderate);
        assert_eq!(classify_severity(0.200000001).unwrap(), Severity::Severe);
        assert_eq!(classify_severity(0.692).unwrap(), Severity::Severe);
        assert_eq!(classify_severity(1.0).unwrap(), Severity::Severe);
        assert_eq!(classify_severity(0.005).unwrap(), Severity::Slight);
    }

    #[test]
    fn severity_rejects_out_of_domain_ratios() {
        for vs in [0.0, -0.25, 1.0000001, Real::NAN] {
            assert!(classify_severity(vs).is_err(), "accepted {vs}");
        }
    }

    #[test]
    fn step_count_agrees_with_raw_length_comparison() {
        for (s, f) in [(10usize, 9usize), (9, 10), (10, 10), (1, 400)] {
            let src = episode(s, true);
            let fu = episode(f, true);
            let DetectionOutcome::Result(cmp) =
                detect_violation(&src, &fu, MRKind::Condition, &CostModel::StepCount)
            else {
                panic!();
            };
            assert_eq!(cmp.violated, fu.trajectory.actions.len() < src.trajectory.actions.len());
            assert_eq!(cmp.violated, cmp.vs > 0.0);
        }
    }

    #[test]
    fn violation_record_wire_order_is_fixed() {
        let src = episode(10, true);
        let fu = episode(8, true);
        let DetectionOutcome::Result(cmp) =
            detect_violation(&src, &fu, MRKind::Condition, &CostModel::StepCount)
        else {
            panic!();
        };
        let record = ViolationRecord::new("case-0007", cmp, sample_followup());
        let json = serde_json::to_string(&record).unwrap();
        assert!(json.starts_with(
            r#"{"source_id":"case-0007","mr":"CONDITION","c_s":10.0,"c_f":8.0,"violated":true,"vs":0.2,"severity":"MODERATE","followup":{"kind":"CONDITION""#
        ));
        let back: ViolationRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, record);
    }
}
