//! Four executable comparison baselines run alongside the relation suite:
//! two property checks (cell-revisit bound, suffix optimality from
//! intermediate poses) and two environment perturbations (off-path obstacle
//! insertion, grid isometries), each asserting a planner should never be
//! beaten by — or wander outside — its own earlier behaviour.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{detect_violation, CostModel, DetectionOutcome};
use crate::gridworld::{AgentState, GridEnvironment, Heading};
use crate::metamorphic::SourceCase;
use crate::planners::{execute_episode, shortest_path_cost, EpisodeResult, PlannerId};
use crate::seeds::mix2;

/// The four baseline checks, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineId {
    #[serde(rename = "PBT_NR")]
    PbtNr,
    #[serde(rename = "PBT_SP")]
    PbtSp,
    #[serde(rename = "MT_OBSTACLE")]
    MtObstacle,
    #[serde(rename = "MT_TRANSFORM")]
    MtTransform,
}

impl BaselineId {
    pub const ALL: [BaselineId; 4] =
        [BaselineId::PbtNr, BaselineId::PbtSp, BaselineId::MtObstacle, BaselineId::MtTransform];

    pub fn name(self) -> &'static str {
        match self {
            BaselineId::PbtNr => "PBT_NR",
            BaselineId::PbtSp => "PBT_SP",
            BaselineId::MtObstacle => "MT_OBSTACLE",
            BaselineId::MtTransform => "MT_TRANSFORM",
        }
    }
}

impl std::str::FromStr for BaselineId {
    type Err = String;
    fn from_str(s: &str) -> Result<BaselineId, String> {
        BaselineId::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown baseline id: {s}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaselineError {
    #[error("suffix index {index} out of range for a {steps}-step episode (need 0 < i < steps)")]
    IndexOutOfRange { index: usize, steps: usize },
    #[error("cannot place {wanted} obstacles: only {available} free off-path cells exist")]
    PlacementFailure { wanted: usize, available: usize },
    #[error("no feasible obstacle placement found in {attempts} attempts")]
    PlacementInfeasible { attempts: usize },
}

/// Revisit bound: a reasonable plan never enters the same cell more than
/// twice. A visit is a maximal run of consecutive poses in one cell, so
/// rotating in place is a single visit — otherwise every terminal
/// rotate-and-stop sequence would count as a spurious revisit.
///
/// Requires a successful episode; failed runs have no complete path to judge.
pub fn pbt_nr_check(ep: &EpisodeResult) -> bool {
    assert!(ep.success, "revisit check requires a successful episode");
    let mut entries: HashMap<(usize, usize), u32> = HashMap::new();
    let mut previous = None;
    for pose in &ep.trajectory.poses {
        let cell = (pose.x, pose.y);
        if previous != Some(cell) {
            *entries.entry(cell).or_insert(0) += 1;
        }
        previous = Some(cell);
    }
    entries.values().any(|&count| count > 2)
}

/// Default suffix indices: the quartile points of the source episode,
/// clamped to the open interval (0, τ) and deduplicated.
pub fn default_pbt_sp_indices(tau: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = [tau.div_ceil(4), tau.div_ceil(2), (3 * tau).div_ceil(4)]
        .into_iter()
        .filter(|&i| i > 0 && i < tau)
        .collect();
    indices.dedup();
    indices
}

/// Suffix optimality: restart the planner from the source's pose after `i`
/// actions and compare against the remaining τ − i source actions. A
/// violation at `i` means the planner, given a strictly easier sub-problem,
/// beat its own suffix — the suffix wasted steps.
///
/// A failed sub-episode is not a violation; it produced no cheaper plan.
pub fn pbt_sp_run(
    planner: PlannerId,
    src: &SourceCase,
    indices: &[usize],
    max_steps: usize,
    seed: u64,
) -> Result<Vec<(usize, bool)>, BaselineError> {
    let tau = src.episode.steps;
    let mut out = Vec::with_capacity(indices.len());
    for &index in indices {
        if index == 0 || index >= tau {
            return Err(BaselineError::IndexOutOfRange { index, steps: tau });
        }
        let pose = src.episode.trajectory.poses[index];
        let sub =
            execute_episode(planner, &src.env, &src.task, pose, max_steps, mix2(seed, index as u64));
        let violation = sub.success && sub.steps < tau - index;
        out.push((index, violation));
    }
    Ok(out)
}

/// Redraw budget for obstacle placement before giving up.
pub const OBSTACLE_REDRAW_ATTEMPTS: usize = 32;

/// A feasible obstacle set: the modified environment, which cells were
/// walled, and how many draws it took.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstaclePlacement {
    pub env: GridEnvironment,
    pub cells: Vec<(usize, usize)>,
    pub attempts: usize,
}

/// Draws `n_obstacles` distinct wall cells from the free cells that are
/// neither on the source trajectory nor under an object, redrawing until the
/// task stays solvable. Keeping the source path clear means the original
/// plan remains executable, so the perturbation can only make the world
/// harder — the ground truth the comparison relies on.
pub fn place_obstacles(
    src: &SourceCase,
    n_obstacles: usize,
    seed: u64,
) -> Result<ObstaclePlacement, BaselineError> {
    assert!(n_obstacles >= 1, "obstacle insertion needs at least one obstacle");
    let env = &src.env;
    let path: std::collections::HashSet<(usize, usize)> =
        src.episode.trajectory.poses.iter().map(|p| (p.x, p.y)).collect();
    let mut candidates = Vec::new();
    for y in 0..env.height {
        for x in 0..env.width {
            if env.is_free(x, y) && !path.contains(&(x, y)) && env.object_at(x, y).is_none() {
                candidates.push((x, y));
            }
        }
    }
    if candidates.len() < n_obstacles {
        return Err(BaselineError::PlacementFailure {
            wanted: n_obstacles,
            available: candidates.len(),
        });
    }
    for attempt in 0..OBSTACLE_REDRAW_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(mix2(seed, attempt as u64));
        let mut cells: Vec<(usize, usize)> =
            rand::seq::index::sample(&mut rng, candidates.len(), n_obstacles)
                .iter()
                .map(|k| candidates[k])
                .collect();
        cells.sort_unstable();
        let mut modified = env.clone();
        for &(x, y) in &cells {
            let i = modified.idx(x, y);
            modified.occupancy[i] = true;
        }
        if shortest_path_cost(&modified, src.start, &src.task).is_some() {
            return Ok(ObstaclePlacement { env: modified, cells, attempts: attempt + 1 });
        }
    }
    Err(BaselineError::PlacementInfeasible { attempts: OBSTACLE_REDRAW_ATTEMPTS })
}

/// Obstacle insertion: wall off-path cells and re-run. Extra walls can only
/// shrink the set of usable paths, so a strictly cheaper follow-up exposes a
/// wasteful source plan.
pub fn mt_obstacle_run(
    planner: PlannerId,
    src: &SourceCase,
    n_obstacles: usize,
    seed: u64,
    max_steps: usize,
) -> Result<DetectionOutcome, BaselineError> {
    let placement = place_obstacles(src, n_obstacles, seed)?;
    let followup = execute_episode(planner, &placement.env, &src.task, src.start, max_steps, seed);
    Ok(detect_violation(&src.episode, &followup, BaselineId::MtObstacle, &CostModel::StepCount))
}

/// The five grid isometries used by the transform baseline. Quarter turns
/// require a square grid; non-square environments are padded with walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridTransform {
    #[serde(rename = "ROTATE_90")]
    Rotate90,
    #[serde(rename = "ROTATE_180")]
    Rotate180,
    #[serde(rename = "ROTATE_270")]
    Rotate270,
    #[serde(rename = "MIRROR_X")]
    MirrorX,
    #[serde(rename = "MIRROR_Y")]
    MirrorY,
}

impl GridTransform {
    pub const ALL: [GridTransform; 5] = [
        GridTransform::Rotate90,
        GridTransform::Rotate180,
        GridTransform::Rotate270,
        GridTransform::MirrorX,
        GridTransform::MirrorY,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GridTransform::Rotate90 => "ROTATE_90",
            GridTransform::Rotate180 => "ROTATE_180",
            GridTransform::Rotate270 => "ROTATE_270",
            GridTransform::MirrorX => "MIRROR_X",
            GridTransform::MirrorY => "MIRROR_Y",
        }
    }
}

impl std::str::FromStr for GridTransform {
    type Err = String;
    fn from_str(s: &str) -> Result<GridTransform, String> {
        GridTransform::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown grid transform: {s}"))
    }
}

/// Pads an environment to an `side × side` square with wall cells (material
/// 0) below and to the right of the original area.
fn pad_to_square(env: &GridEnvironment, side: usize) -> GridEnvironment {
    if env.width == side && env.height == side {
        return env.clone();
    }
    let mut occupancy = vec![true; side * side];
    let mut materials = vec![0u8; side * side];
    for y in 0..env.height {
        for x in 0..env.width {
            occupancy[y * side + x] = env.occupancy[env.idx(x, y)];
            materials[y * side + x] = env.materials[env.idx(x, y)];
        }
    }
    GridEnvironment {
        width: side,
        height: side,
        occupancy,
        materials,
        objects: env.objects.clone(),
        lighting: env.lighting,
        seed: env.seed,
    }
}

fn transform_heading(heading: Heading, transform: GridTransform) -> Heading {
    match transform {
        GridTransform::Rotate90 => heading.rotate_right(),
        GridTransform::Rotate180 => heading.opposite(),
        GridTransform::Rotate270 => heading.rotate_left(),
        GridTransform::MirrorX => match heading {
            Heading::East => Heading::West,
            Heading::West => Heading::East,
            other => other,
        },
        GridTransform::MirrorY => match heading {
            Heading::North => Heading::South,
            Heading::South => Heading::North,
            other => other,
        },
    }
}

/// Applies an isometry to an environment and a pose. Quarter turns pad to a
/// square first, so their output is `S × S` with `S = max(width, height)`;
/// the padding is solid wall and cannot affect reachability or sight lines,
/// which stay inside the original rectangle.
pub fn transform_case(
    env: &GridEnvironment,
    pose: AgentState,
    transform: GridTransform,
) -> (GridEnvironment, AgentState) {
    let base = match transform {
        GridTransform::Rotate90 | GridTransform::Rotate270 => {
            pad_to_square(env, env.width.max(env.height))
        }
        _ => env.clone(),
    };
    let (w, h) = (base.width, base.height);
    let map_xy = move |x: usize, y: usize| -> (usize, usize) {
        match transform {
            GridTransform::Rotate90 => (h - 1 - y, x),
            GridTransform::Rotate180 => (w - 1 - x, h - 1 - y),
            GridTransform::Rotate270 => (y, w - 1 - x),
            GridTransform::MirrorX => (w - 1 - x, y),
            GridTransform::MirrorY => (x, h - 1 - y),
        }
    };
    // quarter turns swap the axes; for padded squares w == h so the output
    // dimensions are the same either way
    let (nw, nh) = match transform {
        GridTransform::Rotate90 | GridTransform::Rotate270 => (h, w),
        _ => (w, h),
    };
    let mut occupancy = vec![false; nw * nh];
    let mut materials = vec![0u8; nw * nh];
    for y in 0..h {
        for x in 0..w {
            let (nx, ny) = map_xy(x, y);
            occupancy[ny * nw + nx] = base.occupancy[base.idx(x, y)];
            materials[ny * nw + nx] = base.materials[base.idx(x, y)];
        }
    }
    let objects = base
        .objects
        .iter()
        .map(|o| {
            let (nx, ny) = map_xy(o.x, o.y);
            crate::gridworld::SceneObject { id: o.id, category: o.category, x: nx, y: ny }
        })
        .collect();
    let (px, py) = map_xy(pose.x, pose.y);
    let new_env = GridEnvironment {
        width: nw,
        height: nh,
        occupancy,
        materials,
        objects,
        lighting: base.lighting,
        seed: base.seed,
    };
    (new_env, AgentState::new(px, py, transform_heading(pose.heading, transform)))
}

/// Isometry check: run the planner on the transformed case. The world is the
/// same up to rotation or reflection, so a strictly cheaper follow-up means
/// the source run burned steps on an accident of orientation.
pub fn mt_transform_run(
    planner: PlannerId,
    src: &SourceCase,
    transform: GridTransform,
    max_steps: usize,
    seed: u64,
) -> DetectionOutcome {
    let (env, start) = transform_case(&src.env, src.start, transform);
    let followup = execute_episode(planner, &env, &src.task, start, max_steps, seed);
    detect_violation(&src.episode, &followup, BaselineId::MtTransform, &CostModel::StepCount)
}
