//! Navigation planners: one optimal reference and three deliberately flawed
//! policies, plus episode execution and shortest-path costs.
//!
//! ORACLE_OPTIMAL plans on full map knowledge and is step-for-step optimal;
//! it is the soundness anchor (a correct harness must never flag it). The
//! flawed planners perceive the world only through their observations,
//! accumulated into a belief map:
//!
//! * GREEDY_FRONTIER chases the nearest unexplored frontier by straight-line
//!   distance, which walks it into detours and local traps.
//! * WALL_BIASED routes as if open ground were expensive: moving onto a cell
//!   not adjacent to a known wall or the boundary costs extra, so its paths
//!   hug walls and become circuitous. (A literal right-hand wall follower
//!   never finishes in open rooms, so the bias is a routing distortion with
//!   ties broken toward keeping a wall on the agent's right.)
//! * SCENE_SENSITIVE explores like GREEDY_FRONTIER but orders frontiers by a
//!   hash keyed on the scene's cosmetic features, so materials and lighting
//!   leak into its route choices.
//!
//! All planners are pure functions of (environment, seed, context,
//! observation, task); identical inputs give identical episodes.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::gridworld::{
    cells_between, is_complete, observe, step, Action, AgentState, GridEnvironment, Heading,
    ObjectCategory, Observation, TaskInstruction, Trajectory,
};
use crate::seeds::{fnv1a64, mix2};
use crate::Real;

/// Cost (in moves) of entering open ground for WALL_BIASED; cells adjacent
/// to a known wall or the grid boundary cost 1.
const OPEN_GROUND_COST: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlannerId {
    OracleOptimal,
    GreedyFrontier,
    WallBiased,
    SceneSensitive,
}

impl PlannerId {
    pub const ALL: [PlannerId; 4] = [
        PlannerId::OracleOptimal,
        PlannerId::GreedyFrontier,
        PlannerId::WallBiased,
        PlannerId::SceneSensitive,
    ];

    pub const FLAWED: [PlannerId; 3] =
        [PlannerId::GreedyFrontier, PlannerId::WallBiased, PlannerId::SceneSensitive];

    pub fn name(self) -> &'static str {
        match self {
            PlannerId::OracleOptimal => "ORACLE_OPTIMAL",
            PlannerId::GreedyFrontier => "GREEDY_FRONTIER",
            PlannerId::WallBiased => "WALL_BIASED",
            PlannerId::SceneSensitive => "SCENE_SENSITIVE",
        }
    }
}

impl std::str::FromStr for PlannerId {
    type Err = String;
    fn from_str(s: &str) -> Result<PlannerId, String> {
        PlannerId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown planner id: {s}"))
    }
}

/// What the agent believes about one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellBelief {
    Unknown,
    Free,
    Wall,
}

/// Mutable planner state threaded through an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerContext {
    width: usize,
    height: usize,
    /// Per-cell belief accumulated from observations.
    pub belief: Vec<CellBelief>,
    /// Per-cell arrival counts.
    pub visited: Vec<u32>,
    /// Remaining planned actions (used by the oracle; flawed planners
    /// replan every step).
    pub pending: VecDeque<Action>,
    /// Task fingerprint the pending plan was computed for.
    pub plan_key: Option<PlanKey>,
    /// Derived RNG stream; planners are currently deterministic rules, but
    /// the seed is threaded so stochastic policies stay reproducible.
    pub rng_state: u64,
    /// Object sightings by cell.
    pub seen_objects: BTreeMap<(usize, usize), ObjectCategory>,
}

/// Fingerprint of the task a pending plan targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanKey {
    pub category: ObjectCategory,
    pub fov_bits: u64,
    pub dist_bits: u64,
    pub los: bool,
}

impl PlanKey {
    fn of(task: &TaskInstruction) -> PlanKey {
        PlanKey {
            category: task.target_category,
            fov_bits: task.condition.fov_degrees.to_bits(),
            dist_bits: task.condition.max_distance.to_bits(),
            los: task.condition.requires_line_of_sight,
        }
    }
}

impl PlannerContext {
    pub fn new(width: usize, height: usize, seed: u64) -> PlannerContext {
        PlannerContext {
            width,
            height,
            belief: vec![CellBelief::Unknown; width * height],
            visited: vec![0; width * height],
            pending: VecDeque::new(),
            plan_key: None,
            rng_state: seed,
            seen_objects: BTreeMap::new(),
        }
    }

    fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Folds an observation into the belief map and object memory. Called by
    /// every planner before deciding, and by replay protocols that feed a
    /// fresh context with a trajectory prefix's observation history.
    pub fn ingest_observation(&mut self, obs: &Observation) {
        for cell in &obs.visible_cells {
            let i = self.idx(cell.x, cell.y);
            self.belief[i] = if cell.occupied { CellBelief::Wall } else { CellBelief::Free };
            if let Some(cat) = cell.object_category {
                self.seen_objects.insert((cell.x, cell.y), cat);
            }
        }
    }

    /// Bumps the arrival count for a pose's cell.
    pub fn record_arrival(&mut self, state: AgentState) {
        let i = self.idx(state.x, state.y);
        self.visited[i] += 1;
    }

    /// Proprioceptive feedback after a blocked move: the intended
    /// destination must be a wall even though no observation has shown it,
    /// so record it — otherwise a planner that routed through an unknown
    /// cell would retry the same blocked move forever.
    pub fn note_blocked(&mut self, from: AgentState, action: Action) {
        let (dx, dy) = from.heading.delta();
        let (dx, dy) = if action == Action::MoveBack { (-dx, -dy) } else { (dx, dy) };
        let (nx, ny) = (from.x as i64 + dx, from.y as i64 + dy);
        if nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height {
            let i = self.idx(nx as usize, ny as usize);
            self.belief[i] = CellBelief::Wall;
        }
    }

    fn traversable(&self, x: usize, y: usize) -> bool {
        self.belief[self.idx(x, y)] != CellBelief::Wall
    }
}

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    StepBudgetExhausted,
    PlannerDeclaredDoneUnsatisfied,
}

/// One executed episode.
///
/// `steps` counts every executed action including the terminal DONE, so for
/// ORACLE_OPTIMAL it equals [`shortest_path_cost`] exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub planner: PlannerId,
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    pub termination: Termination,
    pub trajectory: Trajectory,
    pub initial_observation: Observation,
}

// Wire form: {planner, seed, success, steps, termination, actions, poses}
// with poses as [x, y, heading_degrees] triples. The initial observation is
// an in-process convenience (diversity encodings), not part of the format.
impl Serialize for EpisodeResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("EpisodeResult", 7)?;
        s.serialize_field("planner", &self.planner)?;
        s.serialize_field("seed", &self.seed)?;
        s.serialize_field("success", &self.success)?;
        s.serialize_field("steps", &self.steps)?;
        s.serialize_field("termination", &self.termination)?;
        s.serialize_field("actions", &self.trajectory.actions)?;
        let poses: Vec<(usize, usize, u16)> =
            self.trajectory.poses.iter().map(|p| p.wire()).collect();
        s.serialize_field("poses", &poses)?;
        s.end()
    }
}

/// A planner bound to an environment.
///
/// The environment reference serves two roles: ORACLE_OPTIMAL plans on it
/// directly (full knowledge), and every planner uses the simulator-level
/// completion check to stop — mirroring an embodied stack where episode
/// termination is judged by the engine, not the policy. The flawed planners'
/// *routing* looks only at their belief map.
pub struct Planner<'e> {
    pub id: PlannerId,
    env: &'e GridEnvironment,
    scene_key: u64,
}

impl<'e> Planner<'e> {
    pub fn new(id: PlannerId, env: &'e GridEnvironment) -> Planner<'e> {
        let feature = crate::gridworld::scene_feature_vector(env);
        let mut bytes = Vec::with_capacity(feature.len() * 8);
        for v in &feature {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        Planner { id, env, scene_key: fnv1a64(&bytes) }
    }

    /// Decides the next action from the current observation. Deterministic;
    /// returns the updated context.
    pub fn next_action(
        &self,
        mut ctx: PlannerContext,
        obs: &Observation,
        task: &TaskInstruction,
    ) -> (Action, PlannerContext) {
        ctx.ingest_observation(obs);
        let state = obs.agent_pose;
        if is_complete(self.env, state, task) {
            return (Action::Done, ctx);
        }
        let action = match self.id {
            PlannerId::OracleOptimal => self.oracle_action(&mut ctx, state, task),
            _ => self.flawed_action(&mut ctx, state, task),
        };
        (action, ctx)
    }

    fn oracle_action(
        &self,
        ctx: &mut PlannerContext,
        state: AgentState,
        task: &TaskInstruction,
    ) -> Action {
        let key = PlanKey::of(task);
        if ctx.plan_key != Some(key) || ctx.pending.is_empty() {
            ctx.pending.clear();
            match oracle_plan(self.env, state, task) {
                Some(plan) => ctx.pending.extend(plan),
                None => return Action::Done, // unsatisfiable: give up
            }
            ctx.plan_key = Some(key);
        }
        ctx.pending.pop_front().unwrap_or(Action::Done)
    }

    fn flawed_action(
        &self,
        ctx: &mut PlannerContext,
        state: AgentState,
        task: &TaskInstruction,
    ) -> Action {
        let grid = BeliefGrid { width: self.env.width, height: self.env.height };

        // Head for the target whenever a sighting makes a satisfying pose
        // reachable on the current belief.
        let goals = self.believed_goal_states(ctx, task);
        if !goals.is_empty() {
            let dist = self.reverse_dijkstra(ctx, &grid, &goals);
            if let Some(action) = self.descend(ctx, &grid, &dist, state) {
                return action;
            }
        }

        // Otherwise explore toward a frontier, each planner in its own order.
        match self.id {
            PlannerId::WallBiased => {
                let frontiers = frontier_cells(ctx, &grid);
                if frontiers.is_empty() {
                    return Action::Done; // fully explored, nothing satisfies
                }
                let goals: Vec<usize> = frontiers
                    .iter()
                    .flat_map(|&(x, y)| Heading::ALL.map(|h| grid.state_idx(x, y, h)))
                    .collect();
                let dist = self.reverse_dijkstra(ctx, &grid, &goals);
                self.descend(ctx, &grid, &dist, state).unwrap_or(Action::Done)
            }
            _ => {
                let mut frontiers = frontier_cells(ctx, &grid);
                if frontiers.is_empty() {
                    return Action::Done;
                }
                match self.id {
                    PlannerId::GreedyFrontier => frontiers.sort_by_key(|&(x, y)| {
                        let dx = x as i64 - state.x as i64;
                        let dy = y as i64 - state.y as i64;
                        (dx * dx + dy * dy, y, x)
                    }),
                    PlannerId::SceneSensitive => frontiers.sort_by_key(|&(x, y)| {
                        (mix2(self.scene_key, (y * grid.width + x) as u64), y, x)
                    }),
                    _ => unreachable!(),
                }
                for &(fx, fy) in &frontiers {
                    let goals: Vec<usize> =
                        Heading::ALL.map(|h| grid.state_idx(fx, fy, h)).to_vec();
                    let dist = self.reverse_dijkstra(ctx, &grid, &goals);
                    if let Some(action) = self.descend(ctx, &grid, &dist, state) {
                        return action;
                    }
                }
                Action::Done // every frontier unreachable on belief
            }
        }
    }

    /// States that would satisfy the task if the belief map is right:
    /// within distance of a sighted target object, inside the cone, and with
    /// no *believed* wall on the segment (unknowns are assumed clear).
    fn believed_goal_states(&self, ctx: &PlannerContext, task: &TaskInstruction) -> Vec<usize> {
        let targets: Vec<(usize, usize)> = ctx
            .seen_objects
            .iter()
            .filter(|(_, &cat)| cat == task.target_category)
            .map(|(&pos, _)| pos)
            .collect();
        if targets.is_empty() {
            return Vec::new();
        }
        let grid = BeliefGrid { width: self.env.width, height: self.env.height };
        let cond = &task.condition;
        let mut goals = Vec::new();
        for y in 0..grid.height {
            for x in 0..grid.width {
                if !ctx.traversable(x, y) {
                    continue;
                }
                for h in Heading::ALL {
                    let pose = AgentState::new(x, y, h);
                    let ok = targets.iter().any(|&(ox, oy)| {
                        in_cone_and_range(pose, (ox, oy), cond.fov_degrees, cond.max_distance)
                            && (!cond.requires_line_of_sight
                                || cells_between((x, y), (ox, oy))
                                    .into_iter()
                                    .all(|(cx, cy)| {
                                        ctx.belief[ctx.idx(cx, cy)] != CellBelief::Wall
                                    }))
                    });
                    if ok {
                        goals.push(grid.state_idx(x, y, h));
                    }
                }
            }
        }
        goals
    }

    /// Cost of a move that *enters* `(x, y)`, per planner.
    fn move_cost(&self, ctx: &PlannerContext, x: usize, y: usize) -> u32 {
        match self.id {
            PlannerId::WallBiased => {
                if self.beside_wall_or_boundary(ctx, x, y) {
                    1
                } else {
                    OPEN_GROUND_COST
                }
            }
            _ => 1,
        }
    }

    fn beside_wall_or_boundary(&self, ctx: &PlannerContext, x: usize, y: usize) -> bool {
        for (dx, dy) in [(0i64, -1i64), (1, 0), (0, 1), (-1, 0)] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if !self.env.in_bounds(nx, ny) {
                return true;
            }
            if ctx.belief[ctx.idx(nx as usize, ny as usize)] == CellBelief::Wall {
                return true;
            }
        }
        false
    }

    /// Multi-source Dijkstra on the reversed belief-space graph: afterwards
    /// `dist[s]` is the cheapest cost from state `s` to any goal. Move edges
    /// cost [`Planner::move_cost`] of the destination cell; rotations cost 1.
    fn reverse_dijkstra(
        &self,
        ctx: &PlannerContext,
        grid: &BeliefGrid,
        goals: &[usize],
    ) -> Vec<u32> {
        let n = grid.width * grid.height * 4;
        let mut dist = vec![u32::MAX; n];
        let mut heap = std::collections::BinaryHeap::new();
        for &g in goals {
            if dist[g] != 0 {
                dist[g] = 0;
                heap.push(std::cmp::Reverse((0u32, g)));
            }
        }
        while let Some(std::cmp::Reverse((d, s))) = heap.pop() {
            if d > dist[s] {
                continue;
            }
            let (x, y, h) = grid.state_of(s);
            // the forward edge u -> s costs move_cost(s.pos) for moves
            let enter_cost = self.move_cost(ctx, x, y);
            let (dx, dy) = h.delta();
            // u --MoveAhead--> s  (u sits one step behind s)
            // u --MoveBack--> s   (u sits one step ahead of s)
            for (ux, uy) in [(x as i64 - dx, y as i64 - dy), (x as i64 + dx, y as i64 + dy)] {
                if self.env.in_bounds(ux, uy) && ctx.traversable(ux as usize, uy as usize) {
                    let u = grid.state_idx(ux as usize, uy as usize, h);
                    let nd = d.saturating_add(enter_cost);
                    if nd < dist[u] {
                        dist[u] = nd;
                        heap.push(std::cmp::Reverse((nd, u)));
                    }
                }
            }
            // u --RotateLeft/RotateRight--> s
            for uh in [h.rotate_right(), h.rotate_left()] {
                let u = grid.state_idx(x, y, uh);
                let nd = d.saturating_add(1);
                if nd < dist[u] {
                    dist[u] = nd;
                    heap.push(std::cmp::Reverse((nd, u)));
                }
            }
        }
        dist
    }

    /// First action of a cheapest path from `state` toward the goal set that
    /// produced `dist`. None when the state is at distance 0 (already there)
    /// or unreachable.
    fn descend(
        &self,
        ctx: &PlannerContext,
        grid: &BeliefGrid,
        dist: &[u32],
        state: AgentState,
    ) -> Option<Action> {
        let here = grid.state_idx(state.x, state.y, state.heading);
        if dist[here] == 0 || dist[here] == u32::MAX {
            return None;
        }
        let mut best: Option<(u32, bool, usize, Action)> = None;
        for action in Action::MOTIONS {
            let Some(next) = apply_on_belief(ctx, state, action) else {
                continue; // move blocked on the belief map
            };
            let edge = match action {
                Action::MoveAhead | Action::MoveBack => self.move_cost(ctx, next.x, next.y),
                _ => 1,
            };
            let ni = grid.state_idx(next.x, next.y, next.heading);
            if dist[ni] == u32::MAX {
                continue;
            }
            let total = dist[ni].saturating_add(edge);
            // WALL_BIASED breaks cost ties toward keeping a wall on its
            // right; the others fall through to action order.
            let wall_right_rank = if self.id == PlannerId::WallBiased {
                let right = next.heading.rotate_right();
                let (rx, ry) = (next.x as i64 + right.delta().0, next.y as i64 + right.delta().1);
                let wall_on_right = !self.env.in_bounds(rx, ry)
                    || ctx.belief[ctx.idx(rx as usize, ry as usize)] == CellBelief::Wall;
                !wall_on_right // false sorts first
            } else {
                false
            };
            let key = (total, wall_right_rank, action.index(), action);
            match best {
                Some((t, w, i, _)) if (t, w, i) <= (key.0, key.1, key.2) => {}
                _ => best = Some(key),
            }
        }
        best.map(|(_, _, _, a)| a)
    }
}

// `apply_on_belief` wants Option to thread `?`; rotations never fail.
fn apply_on_belief(
    ctx: &PlannerContext,
    state: AgentState,
    action: Action,
) -> Option<AgentState> {
    match action {
        Action::RotateLeft => {
            Some(AgentState { heading: state.heading.rotate_left(), ..state })
        }
        Action::RotateRight => {
            Some(AgentState { heading: state.heading.rotate_right(), ..state })
        }
        Action::MoveAhead | Action::MoveBack => {
            let (dx, dy) = state.heading.delta();
            let (dx, dy) = if action == Action::MoveBack { (-dx, -dy) } else { (dx, dy) };
            let (nx, ny) = (state.x as i64 + dx, state.y as i64 + dy);
            if nx >= 0
                && ny >= 0
                && (nx as usize) < ctx.width
                && (ny as usize) < ctx.height
                && ctx.traversable(nx as usize, ny as usize)
            {
                Some(AgentState { x: nx as usize, y: ny as usize, ..state })
            } else {
                None
            }
        }
        Action::Done => None,
    }
}

struct BeliefGrid {
    width: usize,
    height: usize,
}

impl BeliefGrid {
    /// State index ordered so that the natural integer order is the
    /// canonical tie-break (lower y, then lower x, then heading N, E, S, W).
    fn state_idx(&self, x: usize, y: usize, h: Heading) -> usize {
        (y * self.width + x) * 4 + h.index()
    }

    fn state_of(&self, idx: usize) -> (usize, usize, Heading) {
        let h = Heading::ALL[idx % 4];
        let cell = idx / 4;
        (cell % self.width, cell / self.width, h)
    }
}

/// Unknown cells adjacent to a believed-free cell, sorted (y, x).
fn frontier_cells(ctx: &PlannerContext, grid: &BeliefGrid) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..grid.height {
        for x in 0..grid.width {
            if ctx.belief[ctx.idx(x, y)] != CellBelief::Unknown {
                continue;
            }
            let adjacent_free = [(0i64, -1i64), (1, 0), (0, 1), (-1, 0)].iter().any(|&(dx, dy)| {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                nx >= 0
                    && ny >= 0
                    && (nx as usize) < grid.width
                    && (ny as usize) < grid.height
                    && ctx.belief[ctx.idx(nx as usize, ny as usize)] == CellBelief::Free
            });
            if adjacent_free {
                out.push((x, y));
            }
        }
    }
    out
}

fn in_cone_and_range(
    pose: AgentState,
    cell: (usize, usize),
    fov_degrees: Real,
    max_distance: Real,
) -> bool {
    let dx = cell.0 as Real - pose.x as Real;
    let dy = cell.1 as Real - pose.y as Real;
    let d = (dx * dx + dy * dy).sqrt();
    if d > max_distance + crate::gridworld::GEOM_EPS {
        return false;
    }
    if dx == 0.0 && dy == 0.0 {
        return true;
    }
    let (hx, hy) = pose.heading.delta();
    let cos_angle = (dx * hx as Real + dy * hy as Real) / d;
    cos_angle >= ((fov_degrees / 2.0).to_radians() + crate::gridworld::GEOM_EPS).cos()
}

/// Full-knowledge BFS plan from `start` to the nearest satisfying state
/// (moves and rotations cost 1 each), ending with DONE. Ties among equally
/// near goal states break by (lower y, lower x, heading N, E, S, W).
fn oracle_plan(
    env: &GridEnvironment,
    start: AgentState,
    task: &TaskInstruction,
) -> Option<Vec<Action>> {
    let grid = BeliefGrid { width: env.width, height: env.height };
    let n = env.width * env.height * 4;
    let start_idx = grid.state_idx(start.x, start.y, start.heading);
    let mut dist = vec![u32::MAX; n];
    let mut parent: Vec<Option<(usize, Action)>> = vec![None; n];
    let mut queue = VecDeque::new();
    dist[start_idx] = 0;
    queue.push_back(start_idx);
    while let Some(s) = queue.pop_front() {
        let (x, y, h) = grid.state_of(s);
        let pose = AgentState::new(x, y, h);
        for action in Action::MOTIONS {
            let next = step(env, pose, action);
            if next == pose {
                continue; // blocked move: useless self-loop
            }
            let ni = grid.state_idx(next.x, next.y, next.heading);
            if dist[ni] == u32::MAX {
                dist[ni] = dist[s] + 1;
                parent[ni] = Some((s, action));
                queue.push_back(ni);
            }
        }
    }

    // nearest satisfying state; index order encodes the canonical tie-break
    let mut goal: Option<(u32, usize)> = None;
    for idx in 0..n {
        if dist[idx] == u32::MAX {
            continue;
        }
        let (x, y, h) = grid.state_of(idx);
        if is_complete(env, AgentState::new(x, y, h), task) {
            let key = (dist[idx], idx);
            if goal.map_or(true, |g| key < g) {
                goal = Some(key);
            }
        }
    }
    let (_, goal_idx) = goal?;

    let mut actions = vec![Action::Done];
    let mut cur = goal_idx;
    while cur != start_idx {
        let (prev, action) = parent[cur].expect("BFS parent chain broken");
        actions.push(action);
        cur = prev;
    }
    actions.reverse();
    Some(actions)
}

/// Minimal number of actions (moves + rotations + the final DONE) for an
/// optimal agent to complete the task from `start`; None when unreachable.
pub fn shortest_path_cost(
    env: &GridEnvironment,
    start: AgentState,
    task: &TaskInstruction,
) -> Option<usize> {
    if is_complete(env, start, task) {
        return Some(1);
    }
    oracle_plan(env, start, task).map(|plan| plan.len())
}

/// Minimal number of motion actions between two exact poses (no DONE).
/// The metric underlying the detour soundness argument.
pub fn state_distance(
    env: &GridEnvironment,
    from: AgentState,
    to: AgentState,
) -> Option<usize> {
    let grid = BeliefGrid { width: env.width, height: env.height };
    let n = env.width * env.height * 4;
    let start_idx = grid.state_idx(from.x, from.y, from.heading);
    let goal_idx = grid.state_idx(to.x, to.y, to.heading);
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    dist[start_idx] = 0;
    queue.push_back(start_idx);
    while let Some(s) = queue.pop_front() {
        if s == goal_idx {
            return Some(dist[s] as usize);
        }
        let (x, y, h) = grid.state_of(s);
        let pose = AgentState::new(x, y, h);
        for action in Action::MOTIONS {
            let next = step(env, pose, action);
            if next == pose {
                continue;
            }
            let ni = grid.state_idx(next.x, next.y, next.heading);
            if dist[ni] == u32::MAX {
                dist[ni] = dist[s] + 1;
                queue.push_back(ni);
            }
        }
    }
    None
}

/// Observation memo for one (environment, fov) pair; flawed planners revisit
/// poses constantly and ray-casting is the hot path.
pub struct ObservationCache<'e> {
    env: &'e GridEnvironment,
    cache: HashMap<(AgentState, u64), Observation>,
}

impl<'e> ObservationCache<'e> {
    pub fn new(env: &'e GridEnvironment) -> ObservationCache<'e> {
        ObservationCache { env, cache: HashMap::new() }
    }

    pub fn observe(&mut self, state: AgentState, fov_degrees: Real) -> Observation {
        self.cache
            .entry((state, fov_degrees.to_bits()))
            .or_insert_with(|| observe(self.env, state, fov_degrees))
            .clone()
    }
}

/// Why a driven episode segment stopped.
pub enum SegmentEnd {
    /// The planner emitted DONE; `satisfied` is the simulator-level verdict.
    Done { satisfied: bool },
    /// The step budget ran out first.
    Budget,
}

/// Drives `planner` from `state` for at most `budget` actions, appending to
/// `trajectory`. When the planner emits DONE it is recorded only if
/// `record_done` is set (detour protocols splice segments together and must
/// not leave a DONE mid-trajectory).
pub fn drive_segment(
    planner: &Planner<'_>,
    ctx: &mut PlannerContext,
    cache: &mut ObservationCache<'_>,
    task: &TaskInstruction,
    state: &mut AgentState,
    budget: usize,
    trajectory: &mut Trajectory,
    record_done: bool,
) -> SegmentEnd {
    let env = cache.env;
    for _ in 0..budget {
        let obs = cache.observe(*state, task.condition.fov_degrees);
        let (action, new_ctx) = planner.next_action(ctx.clone(), &obs, task);
        *ctx = new_ctx;
        if action == Action::Done {
            let satisfied = is_complete(env, *state, task);
            if record_done {
                trajectory.push(Action::Done, *state);
            }
            return SegmentEnd::Done { satisfied };
        }
        let before = *state;
        *state = step(env, *state, action);
        if *state == before && matches!(action, Action::MoveAhead | Action::MoveBack) {
            ctx.note_blocked(before, action);
        }
        trajectory.push(action, *state);
        ctx.record_arrival(*state);
    }
    SegmentEnd::Budget
}

/// Runs one full episode. Deterministic in all arguments.
///
/// `start` must be a free in-bounds cell; `max_steps` bounds the executed
/// actions including the terminal DONE.
pub fn execute_episode(
    planner_id: PlannerId,
    env: &GridEnvironment,
    task: &TaskInstruction,
    start: AgentState,
    max_steps: usize,
    seed: u64,
) -> EpisodeResult {
    assert!(
        env.in_bounds(start.x as i64, start.y as i64) && env.is_free(start.x, start.y),
        "episode start must be a free in-bounds cell"
    );
    let planner = Planner::new(planner_id, env);
    let mut ctx = PlannerContext::new(env.width, env.height, seed);
    let mut cache = ObservationCache::new(env);
    let mut state = start;
    let mut trajectory = Trajectory::new(start);
    ctx.record_arrival(start);
    let initial_observation = cache.observe(start, task.condition.fov_degrees);

    let end = drive_segment(
        &planner,
        &mut ctx,
        &mut cache,
        task,
        &mut state,
        max_steps,
        &mut trajectory,
        true,
    );
    seal_episode(planner_id, seed, trajectory, end, initial_observation)
}

/// Assembles the final [`EpisodeResult`] from a driven trajectory.
pub(crate) fn seal_episode(
    planner: PlannerId,
    seed: u64,
    trajectory: Trajectory,
    end: SegmentEnd,
    initial_observation: Observation,
) -> EpisodeResult {
    let termination = match end {
        SegmentEnd::Done { satisfied: true } => Termination::Completed,
        SegmentEnd::Done { satisfied: false } => Termination::PlannerDeclaredDoneUnsatisfied,
        SegmentEnd::Budget => Termination::StepBudgetExhausted,
    };
    EpisodeResult {
        planner,
        seed,
        success: termination == Termination::Completed,
        steps: trajectory.len(),
        termination,
        trajectory,
        initial_observation,
    }
}
