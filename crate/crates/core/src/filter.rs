//! Diversity-guided follow-up selection: exactly one candidate survives per
//! relation, chosen to be as far from the source behavior as possible.
//!
//! Each relation has its own notion of "far": POSITION wants the detour
//! object farthest off the executed route, ACTION the most semantically
//! contrary action, CONDITION the largest cone divergence, SCENE the least
//! similar cosmetics. The ablation arm replaces all of that with a seeded
//! uniform draw, which is what the filtered/unfiltered comparison in the
//! campaign measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{
    scene_feature_vector, Action, CompletionCondition, GridEnvironment, Trajectory,
};
use crate::metamorphic::FollowUpCase;
use crate::Real;

/// How the source route is modeled when measuring a detour candidate's
/// distance from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathModel {
    /// The executed trajectory, segment by segment (default).
    Polyline,
    /// The straight chord from start to final pose.
    Chord,
}

/// Pairwise semantic distances between actions. Symmetric, zero diagonal,
/// and the opposite-motion pairs carry the maximal entry — the selection
/// outcome the table must reproduce is "MOVE_BACK is the most contrary
/// answer to MOVE_AHEAD".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Real>>", into = "Vec<Vec<Real>>")]
pub struct SemanticDistanceTable {
    entries: [[Real; 5]; 5],
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("distance matrix must be 5x5 (one row per action)")]
    WrongShape,
    #[error("distance between {0:?} and {1:?} is negative")]
    NegativeEntry(Action, Action),
    #[error("self-distance of {0:?} must be zero")]
    NonZeroDiagonal(Action),
    #[error("matrix must be symmetric; {0:?}/{1:?} disagree")]
    NotSymmetric(Action, Action),
    #[error("opposite pair {0:?}/{1:?} must carry the maximal entry")]
    OppositesNotMaximal(Action, Action),
}

const ACTION_ORDER: [Action; 5] = [
    Action::MoveAhead,
    Action::MoveBack,
    Action::RotateLeft,
    Action::RotateRight,
    Action::Done,
];

const OPPOSITE_PAIRS: [(Action, Action); 2] = [
    (Action::MoveAhead, Action::MoveBack),
    (Action::RotateLeft, Action::RotateRight),
];

impl SemanticDistanceTable {
    /// Validates and wraps a raw 5x5 matrix in [`ACTION_ORDER`] order.
    pub fn new(entries: [[Real; 5]; 5]) -> Result<SemanticDistanceTable, TableError> {
        let mut max = 0.0_f64;
        for (i, row) in entries.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let (a, b) = (ACTION_ORDER[i], ACTION_ORDER[j]);
                if v < 0.0 {
                    return Err(TableError::NegativeEntry(a, b));
                }
                if i == j && v != 0.0 {
                    return Err(TableError::NonZeroDiagonal(a));
                }
                if entries[j][i] != v {
                    return Err(TableError::NotSymmetric(a, b));
                }
                max = max.max(v);
            }
        }
        for (a, b) in OPPOSITE_PAIRS {
            if entries[a.index()][b.index()] < max {
                return Err(TableError::OppositesNotMaximal(a, b));
            }
        }
        Ok(SemanticDistanceTable { entries })
    }

    pub fn distance(&self, a: Action, b: Action) -> Real {
        self.entries[a.index()][b.index()]
    }

    /// Parses a JSON 5x5 matrix (row-major, [`ACTION_ORDER`] order).
    pub fn from_json(s: &str) -> Result<SemanticDistanceTable, String> {
        serde_json::from_str(s).map_err(|e| e.to_string())
    }
}

impl TryFrom<Vec<Vec<Real>>> for SemanticDistanceTable {
    type Error = String;
    fn try_from(rows: Vec<Vec<Real>>) -> Result<SemanticDistanceTable, String> {
        if rows.len() != 5 || rows.iter().any(|r| r.len() != 5) {
            return Err(TableError::WrongShape.to_string());
        }
        let mut entries = [[0.0; 5]; 5];
        for (i, row) in rows.iter().enumerate() {
            entries[i].copy_from_slice(row);
        }
        SemanticDistanceTable::new(entries).map_err(|e| e.to_string())
    }
}

impl From<SemanticDistanceTable> for Vec<Vec<Real>> {
    fn from(t: SemanticDistanceTable) -> Vec<Vec<Real>> {
        t.entries.iter().map(|r| r.to_vec()).collect()
    }
}

impl Default for SemanticDistanceTable {
    /// Built-in distances: opposites 1.0, rotation vs. translation 0.6,
    /// DONE vs. any motion 0.8.
    fn default() -> SemanticDistanceTable {
        let mut entries = [[0.0; 5]; 5];
        for a in ACTION_ORDER {
            for b in ACTION_ORDER {
                if a == b {
                    continue;
                }
                let d = if OPPOSITE_PAIRS.contains(&(a, b)) || OPPOSITE_PAIRS.contains(&(b, a)) {
                    1.0
                } else if a == Action::Done || b == Action::Done {
                    0.8
                } else {
                    0.6
                };
                entries[a.index()][b.index()] = d;
            }
        }
        SemanticDistanceTable { entries }
    }
}

fn cell_center(x: usize, y: usize) -> (Real, Real) {
    (x as Real + 0.5, y as Real + 0.5)
}

fn point_segment_distance(p: (Real, Real), a: (Real, Real), b: (Real, Real)) -> Real {
    let (px, py) = (p.0 - a.0, p.1 - a.1);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { ((px * dx + py * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    cx.hypot(cy)
}

/// Minimum distance from a point to a polyline (consecutive vertices joined
/// by segments; a single vertex degenerates to point distance).
pub fn point_polyline_distance(p: (Real, Real), polyline: &[(Real, Real)]) -> Real {
    assert!(!polyline.is_empty(), "polyline needs at least one vertex");
    if polyline.len() == 1 {
        return point_segment_distance(p, polyline[0], polyline[0]);
    }
    polyline
        .windows(2)
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(Real::INFINITY, Real::min)
}

/// POSITION selector: the candidate whose intermediate object lies farthest
/// from the source route (ties: lower object id).
pub fn select_position<'a>(
    candidates: &'a [FollowUpCase],
    source_traj: &Trajectory,
) -> &'a FollowUpCase {
    select_position_with(candidates, source_traj, PathModel::Polyline)
}

/// POSITION selector with an explicit route model.
pub fn select_position_with<'a>(
    candidates: &'a [FollowUpCase],
    source_traj: &Trajectory,
    model: PathModel,
) -> &'a FollowUpCase {
    assert!(!candidates.is_empty(), "selector needs candidates");
    let vertices: Vec<(Real, Real)> = match model {
        PathModel::Polyline => {
            source_traj.poses.iter().map(|p| cell_center(p.x, p.y)).collect()
        }
        PathModel::Chord => {
            let first = source_traj.poses.first().expect("trajectory has a start pose");
            let last = source_traj.poses.last().expect("trajectory has a start pose");
            vec![cell_center(first.x, first.y), cell_center(last.x, last.y)]
        }
    };
    candidates
        .iter()
        .map(|c| {
            let FollowUpCase::Position { intermediate_target, .. } = c else {
                panic!("select_position fed a non-POSITION candidate");
            };
            let d = point_polyline_distance(
                cell_center(intermediate_target.x, intermediate_target.y),
                &vertices,
            );
            // max distance first, then min object id
            (c, d, intermediate_target.id)
        })
        .max_by(|(_, d1, id1), (_, d2, id2)| {
            d1.partial_cmp(d2).unwrap().then(id2.cmp(id1))
        })
        .map(|(c, _, _)| c)
        .unwrap()
}

/// ACTION selector: the candidate most semantically contrary to the action
/// the source actually planned (ties: action enumeration order).
pub fn select_action<'a>(
    candidates: &'a [FollowUpCase],
    planned: Action,
    table: &SemanticDistanceTable,
) -> &'a FollowUpCase {
    assert!(!candidates.is_empty(), "selector needs candidates");
    candidates
        .iter()
        .map(|c| {
            let FollowUpCase::Action { extraneous_action, .. } = c else {
                panic!("select_action fed a non-ACTION candidate");
            };
            (c, table.distance(planned, *extraneous_action), extraneous_action.index())
        })
        .max_by(|(_, d1, i1), (_, d2, i2)| d1.partial_cmp(d2).unwrap().then(i2.cmp(i1)))
        .map(|(c, _, _)| c)
        .unwrap()
}

/// CONDITION selector: the candidate with the largest cone divergence from
/// the original (ties: lower refined FOV).
pub fn select_condition<'a>(
    candidates: &'a [FollowUpCase],
    original: &CompletionCondition,
) -> &'a FollowUpCase {
    assert!(!candidates.is_empty(), "selector needs candidates");
    candidates
        .iter()
        .map(|c| {
            let FollowUpCase::Condition { refined } = c else {
                panic!("select_condition fed a non-CONDITION candidate");
            };
            (c, (original.fov_degrees - refined.fov_degrees).abs(), refined.fov_degrees)
        })
        .max_by(|(_, d1, f1), (_, d2, f2)| d1.partial_cmp(d2).unwrap().then(f2.partial_cmp(f1).unwrap()))
        .map(|(c, _, _)| c)
        .unwrap()
}

/// SCENE selector: the candidate least similar to the source cosmetics by
/// cosine similarity of feature vectors (ties: lower candidate index).
pub fn select_scene<'a>(
    candidates: &'a [FollowUpCase],
    source_env: &GridEnvironment,
) -> &'a FollowUpCase {
    assert!(!candidates.is_empty(), "selector needs candidates");
    let reference = scene_feature_vector(source_env);
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let FollowUpCase::Scene { mutated_env } = c else {
                panic!("select_scene fed a non-SCENE candidate");
            };
            (c, cosine_similarity(&reference, &scene_feature_vector(mutated_env)), i)
        })
        .min_by(|(_, s1, i1), (_, s2, i2)| s1.partial_cmp(s2).unwrap().then(i1.cmp(i2)))
        .map(|(c, _, _)| c)
        .unwrap()
}

fn cosine_similarity(a: &[Real], b: &[Real]) -> Real {
    let dot: Real = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: Real = a.iter().map(|x| x * x).sum::<Real>().sqrt();
    let nb: Real = b.iter().map(|x| x * x).sum::<Real>().sqrt();
    // feature vectors carry brightness >= 0.5, so the norms never vanish
    dot / (na * nb)
}

/// Ablation-arm selector: uniform over the candidates, deterministic in the
/// seed.
pub fn select_random(candidates: &[FollowUpCase], seed: u64) -> &FollowUpCase {
    assert!(!candidates.is_empty(), "selector needs candidates");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    &candidates[rng.gen_range(0..candidates.len())]
}
