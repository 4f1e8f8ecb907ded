//! Core library for probing grid-world navigation planners for suboptimal
//! decisions.
//!
//! The pieces fit together like this: [`gridworld`] provides the deterministic
//! simulator (environments, kinematics, observation, task completion);
//! [`planners`] implements one optimal and three deliberately flawed planners
//! on top of it; [`metamorphic`] derives follow-up test cases from a source
//! episode; [`filter`] picks the most diverse candidate from each follow-up
//! pool; [`detector`] compares episode costs and classifies violations;
//! [`diversity`] clusters violations to measure how many distinct failure
//! modes were exposed; [`baselines`] implements the reference techniques we
//! compare against.
//!
//! Everything is deterministic: the same seeds and inputs produce the same
//! bytes, which the campaign layer relies on for golden-file tests and replay.

#![forbid(unsafe_code)]

pub mod baselines;
pub mod detector;
pub mod diversity;
pub mod filter;
pub mod fixtures;
pub mod gridworld;
pub mod metamorphic;
pub mod numeric;
pub mod planners;
pub mod seeds;

/// Scalar used by all harness-facing geometry and statistics.
///
/// The numeric kernel in [`numeric`] is generic over `num_traits::Float`;
/// this alias pins the concrete instantiation used everywhere else.
pub type Real = f64;


pub use gridworld::{
    Action, AgentState, CompletionCondition, GridEnvironment, Heading, ObjectCategory,
    Observation, SceneObject, TaskInstruction, Trajectory,
};
pub use baselines::{
    mt_obstacle_run, mt_transform_run, pbt_nr_check, pbt_sp_run, BaselineId, GridTransform,
};
pub use detector::{
    classify_severity, detect_violation, CostModel, DetectionOutcome, RelationTag, Severity,
};
pub use fixtures::{fixture, fixture_pack, parse_map, Fixture};
pub use diversity::{
    levenshtein, violation_diversity, violation_diversity_from_parts, DiversityReport,
    ViewEncodingParams,
};
pub use filter::{
    select_action, select_condition, select_position, select_random, select_scene, PathModel,
    SemanticDistanceTable,
};
pub use metamorphic::{FollowUpCase, MRKind, SourceCase};
pub use planners::{
    execute_episode, shortest_path_cost, EpisodeResult, PlannerId, Termination,
};


