//! Deterministic 2-D grid-world simulator.
//!
//! Environments are four-connected grids of free/wall cells with point
//! objects, per-cell materials, and global lighting. The agent occupies one
//! cell with one of four cardinal headings and moves with
//! AI2-THOR-style discrete actions. Perception is a field-of-view cone with
//! discrete-ray occlusion; task completion asks whether an object of the
//! target category is close enough, inside the cone, and (optionally)
//! unoccluded.
//!
//! Everything here is a pure function of its inputs; all randomness is
//! injected through explicit seeds.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::mix2;
use crate::Real;

/// Comparison slack for geometric predicates (distances, cone angles).
/// Kept tiny so refinement monotonicity is decided by the predicate shape,
/// not by the epsilon.
pub const GEOM_EPS: Real = 1e-9;

/// Number of distinct material ids.
pub const MATERIAL_COUNT: u8 = 8;

/// Material families: ids 0-2 wood, 3-5 metal, 6-7 fabric.
/// Scene mutations redraw ids only within the same family.
pub fn material_family(id: u8) -> u8 {
    match id {
        0..=2 => 0,
        3..=5 => 1,
        _ => 2,
    }
}

/// All material ids belonging to `family`.
pub fn family_members(family: u8) -> &'static [u8] {
    match family {
        0 => &[0, 1, 2],
        1 => &[3, 4, 5],
        _ => &[6, 7],
    }
}

/// Closed vocabulary of object categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectCategory {
    Pillow,
    Chair,
    Bed,
    Toilet,
    Basketball,
    Table,
    Lamp,
    Sofa,
}

impl ObjectCategory {
    pub const ALL: [ObjectCategory; 8] = [
        ObjectCategory::Pillow,
        ObjectCategory::Chair,
        ObjectCategory::Bed,
        ObjectCategory::Toilet,
        ObjectCategory::Basketball,
        ObjectCategory::Table,
        ObjectCategory::Lamp,
        ObjectCategory::Sofa,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }
}

/// Discrete agent actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    MoveAhead,
    MoveBack,
    RotateLeft,
    RotateRight,
    Done,
}

impl Action {
    /// The four motion actions, in canonical order (used for candidate
    /// enumeration and tie-breaking).
    pub const MOTIONS: [Action; 4] = [
        Action::MoveAhead,
        Action::MoveBack,
        Action::RotateLeft,
        Action::RotateRight,
    ];

    pub fn index(self) -> usize {
        match self {
            Action::MoveAhead => 0,
            Action::MoveBack => 1,
            Action::RotateLeft => 2,
            Action::RotateRight => 3,
            Action::Done => 4,
        }
    }
}

/// Cardinal heading. 0 deg is north (negative y); degrees grow clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u16", try_from = "u16")]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn degrees(self) -> u16 {
        match self {
            Heading::North => 0,
            Heading::East => 90,
            Heading::South => 180,
            Heading::West => 270,
        }
    }

    /// Unit step for MOVE_AHEAD under this heading (y grows southward).
    pub fn delta(self) -> (i64, i64) {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }

    pub fn rotate_right(self) -> Heading {
        match self {
            Heading::North => Heading::East,
            Heading::East => Heading::South,
            Heading::South => Heading::West,
            Heading::West => Heading::North,
        }
    }

    pub fn rotate_left(self) -> Heading {
        self.rotate_right().rotate_right().rotate_right()
    }

    pub fn opposite(self) -> Heading {
        self.rotate_right().rotate_right()
    }

    /// Index in `ALL`; the canonical tie-breaking order N, E, S, W.
    pub fn index(self) -> usize {
        match self {
            Heading::North => 0,
            Heading::East => 1,
            Heading::South => 2,
            Heading::West => 3,
        }
    }
}

impl From<Heading> for u16 {
    fn from(h: Heading) -> u16 {
        h.degrees()
    }
}

impl TryFrom<u16> for Heading {
    type Error = String;
    fn try_from(deg: u16) -> Result<Heading, String> {
        match deg {
            0 => Ok(Heading::North),
            90 => Ok(Heading::East),
            180 => Ok(Heading::South),
            270 => Ok(Heading::West),
            other => Err(format!("invalid heading degrees: {other}")),
        }
    }
}

/// An object placed on a free cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub category: ObjectCategory,
    pub x: usize,
    pub y: usize,
}

/// Global scene lighting. Hue is normalized to [0, 1]; brightness to
/// [0.5, 1.5].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lighting {
    pub hue: Real,
    pub brightness: Real,
}

mod occupancy_wire {
    //! Occupancy serializes as a row-major 0/1 array.
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[bool], s: S) -> Result<S::Ok, S::Error> {
        let ints: Vec<u8> = v.iter().map(|&b| b as u8).collect();
        ints.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let ints = Vec::<u8>::deserialize(d)?;
        Ok(ints.into_iter().map(|i| i != 0).collect())
    }
}

/// A complete, immutable environment.
///
/// `occupancy[y * width + x]` is true for wall cells. The grid border is not
/// stored; out-of-bounds moves are blocked by the kinematics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEnvironment {
    pub width: usize,
    pub height: usize,
    #[serde(with = "occupancy_wire")]
    pub occupancy: Vec<bool>,
    pub objects: Vec<SceneObject>,
    pub materials: Vec<u8>,
    pub lighting: Lighting,
    pub seed: u64,
}

impl GridEnvironment {
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn is_wall(&self, x: usize, y: usize) -> bool {
        self.occupancy[self.idx(x, y)]
    }

    pub fn is_free(&self, x: usize, y: usize) -> bool {
        !self.is_wall(x, y)
    }

    pub fn object_at(&self, x: usize, y: usize) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.x == x && o.y == y)
    }

    /// Default sensing range: the larger grid dimension, i.e. effectively
    /// unbounded within the grid.
    pub fn default_sensing_range(&self) -> Real {
        self.width.max(self.height) as Real
    }
}

/// Agent pose: a free cell plus a cardinal heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub x: usize,
    pub y: usize,
    pub heading: Heading,
}

impl AgentState {
    pub fn new(x: usize, y: usize, heading: Heading) -> AgentState {
        AgentState { x, y, heading }
    }

    /// Wire form used inside pose lists: `[x, y, heading_degrees]`.
    pub fn wire(&self) -> (usize, usize, u16) {
        (self.x, self.y, self.heading.degrees())
    }
}

/// When is the task considered done, as seen from a pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionCondition {
    /// Full cone width in degrees, in (0, 180].
    pub fov_degrees: Real,
    /// Maximum Euclidean distance between cell centers, > 0.
    pub max_distance: Real,
    pub requires_line_of_sight: bool,
}

/// "Navigate to an object of this category" plus its completion condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskInstruction {
    pub target_category: ObjectCategory,
    pub condition: CompletionCondition,
}

/// One cell the agent can currently see.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibleCell {
    pub x: usize,
    pub y: usize,
    pub occupied: bool,
    pub material: u8,
    pub object_category: Option<ObjectCategory>,
}

/// Everything the agent perceives from one pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Sorted row-major (by y, then x); each entry passed the range, cone,
    /// and occlusion checks.
    pub visible_cells: Vec<VisibleCell>,
    pub agent_pose: AgentState,
    pub lighting: Lighting,
}

/// Executed action sequence with the pose before and after each action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub actions: Vec<Action>,
    pub poses: Vec<AgentState>,
}

impl Trajectory {
    pub fn new(start: AgentState) -> Trajectory {
        Trajectory { actions: Vec::new(), poses: vec![start] }
    }

    pub fn push(&mut self, action: Action, pose_after: AgentState) {
        self.actions.push(action);
        self.poses.push(pose_after);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Parameters for random environment generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationParams {
    pub width: usize,
    pub height: usize,
    /// Per-cell wall probability, in [0, 0.35].
    pub wall_density: Real,
    /// Number of objects to place, >= 2.
    pub object_count: usize,
    /// How many times to redraw before giving up on connectivity.
    pub max_retries: u32,
}

impl Default for GenerationParams {
    fn default() -> GenerationParams {
        GenerationParams {
            width: 12,
            height: 12,
            wall_density: 0.2,
            object_count: 3,
            max_retries: 64,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerationError {
    #[error("grid dimensions must be at least 4x4, got {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("wall density must be in [0, 0.35], got {density}")]
    InvalidDensity { density: String },
    #[error("object count must be at least 2, got {count}")]
    InvalidObjectCount { count: usize },
    #[error("could not place {count} objects on seed {seed} after {retries} retries")]
    PlacementFailed { seed: u64, count: usize, retries: u32 },
    #[error("could not generate a connected layout on seed {seed} after {retries} retries")]
    Disconnected { seed: u64, retries: u32 },
}

/// Which part of the scene a cosmetic mutation redraws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SceneMutation {
    Materials,
    Lighting,
}

/// Generates a random environment. Deterministic in `(seed, params)`.
///
/// Layouts are redrawn until every object is mutually reachable through free
/// cells (or `max_retries` is exhausted).
pub fn generate_environment(
    seed: u64,
    params: &GenerationParams,
) -> Result<GridEnvironment, GenerationError> {
    if params.width < 4 || params.height < 4 {
        return Err(GenerationError::InvalidDimensions {
            width: params.width,
            height: params.height,
        });
    }
    if !(0.0..=0.35).contains(&params.wall_density) || params.wall_density.is_nan() {
        return Err(GenerationError::InvalidDensity {
            density: format!("{}", params.wall_density),
        });
    }
    if params.object_count < 2 {
        return Err(GenerationError::InvalidObjectCount { count: params.object_count });
    }

    let cells = params.width * params.height;
    let mut placement_failures = 0;
    for attempt in 0..params.max_retries.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix2(seed, attempt as u64));

        let occupancy: Vec<bool> =
            (0..cells).map(|_| rng.gen::<Real>() < params.wall_density).collect();
        let materials: Vec<u8> = (0..cells).map(|_| rng.gen_range(0..MATERIAL_COUNT)).collect();
        let lighting = Lighting {
            hue: rng.gen_range(0.0..=1.0),
            brightness: rng.gen_range(0.5..=1.5),
        };

        let free: Vec<usize> = (0..cells).filter(|&i| !occupancy[i]).collect();
        // one extra free cell so a start pose off the objects always exists
        if free.len() < params.object_count + 1 {
            placement_failures += 1;
            continue;
        }

        let mut picks = free.clone();
        picks.shuffle(&mut rng);
        picks.truncate(params.object_count);

        let category_offset = rng.gen_range(0..ObjectCategory::ALL.len());
        let objects: Vec<SceneObject> = picks
            .iter()
            .enumerate()
            .map(|(i, &cell)| SceneObject {
                id: i as u32,
                category: ObjectCategory::ALL[(category_offset + i) % ObjectCategory::ALL.len()],
                x: cell % params.width,
                y: cell / params.width,
            })
            .collect();

        let env = GridEnvironment {
            width: params.width,
            height: params.height,
            occupancy,
            objects,
            materials,
            lighting,
            seed,
        };
        if objects_connected(&env) {
            return Ok(env);
        }
    }

    if placement_failures == params.max_retries.max(1) {
        Err(GenerationError::PlacementFailed {
            seed,
            count: params.object_count,
            retries: params.max_retries,
        })
    } else {
        Err(GenerationError::Disconnected { seed, retries: params.max_retries })
    }
}

/// True when all objects lie in one connected component of the free-cell
/// subgraph (four-connected).
pub fn objects_connected(env: &GridEnvironment) -> bool {
    let Some(first) = env.objects.first() else { return true };
    let reach = reachable_cells(env, (first.x, first.y));
    env.objects.iter().all(|o| reach[env.idx(o.x, o.y)])
}

/// BFS over free cells from `start`; returns a reachability mask.
pub fn reachable_cells(env: &GridEnvironment, start: (usize, usize)) -> Vec<bool> {
    let mut seen = vec![false; env.width * env.height];
    if env.is_wall(start.0, start.1) {
        return seen;
    }
    let mut queue = std::collections::VecDeque::new();
    seen[env.idx(start.0, start.1)] = true;
    queue.push_back(start);
    while let Some((x, y)) = queue.pop_front() {
        for (dx, dy) in [(0i64, -1i64), (1, 0), (0, 1), (-1, 0)] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if env.in_bounds(nx, ny) {
                let (nx, ny) = (nx as usize, ny as usize);
                if !seen[env.idx(nx, ny)] && env.is_free(nx, ny) {
                    seen[env.idx(nx, ny)] = true;
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    seen
}

/// Applies one action to a pose. Blocked moves (wall or out of bounds) leave
/// the position unchanged but still consume the step; DONE changes nothing.
pub fn step(env: &GridEnvironment, state: AgentState, action: Action) -> AgentState {
    match action {
        Action::Done => state,
        Action::RotateLeft => AgentState { heading: state.heading.rotate_left(), ..state },
        Action::RotateRight => AgentState { heading: state.heading.rotate_right(), ..state },
        Action::MoveAhead | Action::MoveBack => {
            let (dx, dy) = state.heading.delta();
            let (dx, dy) = if action == Action::MoveBack { (-dx, -dy) } else { (dx, dy) };
            let (nx, ny) = (state.x as i64 + dx, state.y as i64 + dy);
            if env.in_bounds(nx, ny) && env.is_free(nx as usize, ny as usize) {
                AgentState { x: nx as usize, y: ny as usize, ..state }
            } else {
                state
            }
        }
    }
}

/// Cells strictly between two cell centers along the straight segment,
/// in traversal order. Exact corner crossings step diagonally, so a ray
/// that only grazes a cell's corner does not enter it.
pub fn cells_between(a: (usize, usize), b: (usize, usize)) -> Vec<(usize, usize)> {
    let (x0, y0) = (a.0 as i64, a.1 as i64);
    let (x1, y1) = (b.0 as i64, b.1 as i64);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let (sx, sy) = (dx.signum(), dy.signum());
    let (adx, ady) = (dx.abs(), dy.abs());

    let mut out = Vec::new();
    let (mut cx, mut cy) = (x0, y0);
    let (mut i, mut j) = (1i64, 1i64);
    // The segment runs from (x0+1/2, y0+1/2) to (x1+1/2, y1+1/2). It crosses
    // the i-th vertical grid line at t = (2i-1)/(2|dx|) and the j-th
    // horizontal one at t = (2j-1)/(2|dy|); comparing the two exactly via
    // cross-multiplication keeps the walk free of float ties.
    while i <= adx || j <= ady {
        let tx = if i <= adx { (2 * i - 1) * ady } else { i64::MAX };
        let ty = if j <= ady { (2 * j - 1) * adx } else { i64::MAX };
        if tx < ty {
            cx += sx;
            i += 1;
        } else if ty < tx {
            cy += sy;
            j += 1;
        } else {
            cx += sx;
            cy += sy;
            i += 1;
            j += 1;
        }
        if (cx, cy) == (x1, y1) {
            break;
        }
        out.push((cx as usize, cy as usize));
    }
    out
}

/// True when a wall cell sits strictly between the two cells' centers.
pub fn occluded(env: &GridEnvironment, from: (usize, usize), to: (usize, usize)) -> bool {
    cells_between(from, to).into_iter().any(|(x, y)| env.is_wall(x, y))
}

fn within_cone(state: AgentState, cell: (usize, usize), fov_degrees: Real) -> bool {
    let dx = cell.0 as Real - state.x as Real;
    let dy = cell.1 as Real - state.y as Real;
    if dx == 0.0 && dy == 0.0 {
        return true; // own cell: direction undefined, counts as visible
    }
    let (hx, hy) = state.heading.delta();
    let dot = dx * hx as Real + dy * hy as Real;
    let cos_angle = dot / (dx * dx + dy * dy).sqrt();
    // angle <= fov/2 (+eps), expressed through the cosine to avoid acos
    let threshold = ((fov_degrees / 2.0).to_radians() + GEOM_EPS).cos();
    cos_angle >= threshold
}

fn within_range(state: AgentState, cell: (usize, usize), range: Real) -> bool {
    let dx = cell.0 as Real - state.x as Real;
    let dy = cell.1 as Real - state.y as Real;
    (dx * dx + dy * dy).sqrt() <= range + GEOM_EPS
}

/// Observation with the default sensing range (`max(width, height)`).
pub fn observe(env: &GridEnvironment, state: AgentState, fov_degrees: Real) -> Observation {
    observe_with_range(env, state, fov_degrees, env.default_sensing_range())
}

/// Observation restricted to `range` cells (Euclidean, cell centers).
///
/// A cell is visible iff it is in range, inside the heading-centered cone of
/// width `fov_degrees`, and no wall cell lies strictly between it and the
/// agent. Wall cells themselves are visible when unoccluded.
pub fn observe_with_range(
    env: &GridEnvironment,
    state: AgentState,
    fov_degrees: Real,
    range: Real,
) -> Observation {
    let mut visible_cells = Vec::new();
    for y in 0..env.height {
        for x in 0..env.width {
            let cell = (x, y);
            if !within_range(state, cell, range) || !within_cone(state, cell, fov_degrees) {
                continue;
            }
            if occluded(env, (state.x, state.y), cell) {
                continue;
            }
            visible_cells.push(VisibleCell {
                x,
                y,
                occupied: env.is_wall(x, y),
                material: env.materials[env.idx(x, y)],
                object_category: env.object_at(x, y).map(|o| o.category),
            });
        }
    }
    Observation { visible_cells, agent_pose: state, lighting: env.lighting }
}

/// True when some object of the target category is within `max_distance`,
/// inside the FOV cone, and (if required) not occluded by a wall.
///
/// Monotone in the condition: shrinking the FOV or the distance can only
/// remove satisfying poses.
pub fn is_complete(env: &GridEnvironment, state: AgentState, task: &TaskInstruction) -> bool {
    let cond = &task.condition;
    env.objects.iter().any(|o| {
        o.category == task.target_category
            && within_range(state, (o.x, o.y), cond.max_distance)
            && within_cone(state, (o.x, o.y), cond.fov_degrees)
            && (!cond.requires_line_of_sight || !occluded(env, (state.x, state.y), (o.x, o.y)))
    })
}

/// Redraws materials (within their family) or lighting. Occupancy, objects,
/// and dimensions are untouched, so path costs cannot change.
pub fn mutate_scene(
    env: &GridEnvironment,
    mutation: SceneMutation,
    seed: u64,
) -> GridEnvironment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = env.clone();
    match mutation {
        SceneMutation::Materials => {
            for m in out.materials.iter_mut() {
                let family = family_members(material_family(*m));
                *m = family[rng.gen_range(0..family.len())];
            }
        }
        SceneMutation::Lighting => {
            out.lighting = Lighting {
                hue: rng.gen_range(0.0..=1.0),
                brightness: rng.gen_range(0.5..=1.5),
            };
        }
    }
    out
}

/// Fixed-length scene descriptor: normalized material histogram (8 bins)
/// followed by hue and brightness.
pub fn scene_feature_vector(env: &GridEnvironment) -> Vec<Real> {
    let mut v = vec![0.0; MATERIAL_COUNT as usize + 2];
    let total = env.materials.len() as Real;
    for &m in &env.materials {
        v[m as usize] += 1.0;
    }
    for bin in v.iter_mut().take(MATERIAL_COUNT as usize) {
        *bin /= total;
    }
    v[MATERIAL_COUNT as usize] = env.lighting.hue;
    v[MATERIAL_COUNT as usize + 1] = env.lighting.brightness;
    v
}

/// Builds an all-free environment with the given objects; test and fixture
/// helper.
pub fn empty_environment(width: usize, height: usize, objects: Vec<SceneObject>) -> GridEnvironment {
    GridEnvironment {
        width,
        height,
        occupancy: vec![false; width * height],
        objects,
        materials: vec![0; width * height],
        lighting: Lighting { hue: 0.5, brightness: 1.0 },
        seed: 0,
    }
}
