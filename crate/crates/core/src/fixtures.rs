//! Hand-constructed environments with known geometry, shipped as part of the
//! library so sensitivity tests and golden files can reference them by name.
//!
//! Maps are ASCII drawings: `#` wall, `.` free floor, `^ > v <` the start
//! pose (free, facing N/E/S/W), and one capital letter per scene object —
//! `P` pillow, `C` chair, `B` bed, `O` toilet, `K` basketball, `T` table,
//! `L` lamp, `S` sofa (the lettered cell is free floor underneath). Object
//! ids count up in row-major scan order. Cell materials follow a fixed
//! `(x + 2y) % 3` pattern so scene feature vectors are non-trivial, and the
//! environment seed is a hash of the drawing itself.

use thiserror::Error;

use crate::gridworld::{
    AgentState, CompletionCondition, GridEnvironment, Heading, Lighting, ObjectCategory,
    SceneObject, TaskInstruction,
};
use crate::seeds::fnv1a64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixtureError {
    #[error("map drawing is empty")]
    EmptyMap,
    #[error("map line {line} has a different length than the first line")]
    RaggedLine { line: usize },
    #[error("unknown map symbol {symbol:?} at ({x}, {y})")]
    UnknownSymbol { symbol: char, x: usize, y: usize },
    #[error("map has no start pose (one of '^', '>', 'v', '<')")]
    NoStart,
    #[error("map has more than one start pose")]
    MultipleStarts,
}

/// A parsed map drawing: the environment plus the drawn start pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMap {
    pub env: GridEnvironment,
    pub start: AgentState,
}

fn object_category(symbol: char) -> Option<ObjectCategory> {
    Some(match symbol {
        'P' => ObjectCategory::Pillow,
        'C' => ObjectCategory::Chair,
        'B' => ObjectCategory::Bed,
        'O' => ObjectCategory::Toilet,
        'K' => ObjectCategory::Basketball,
        'T' => ObjectCategory::Table,
        'L' => ObjectCategory::Lamp,
        'S' => ObjectCategory::Sofa,
        _ => return None,
    })
}

fn start_heading(symbol: char) -> Option<Heading> {
    Some(match symbol {
        '^' => Heading::North,
        '>' => Heading::East,
        'v' => Heading::South,
        '<' => Heading::West,
        _ => return None,
    })
}

/// Parses an ASCII map drawing into an environment and start pose.
pub fn parse_map(text: &str) -> Result<ParsedMap, FixtureError> {
    let all: Vec<&str> = text.lines().map(str::trim_end).collect();
    let first = all.iter().position(|l| !l.is_empty()).ok_or(FixtureError::EmptyMap)?;
    let last = all.iter().rposition(|l| !l.is_empty()).unwrap();
    let rows = &all[first..=last];

    let width = rows[0].len();
    let height = rows.len();
    let mut occupancy = vec![false; width * height];
    let mut objects = Vec::new();
    let mut start = None;

    for (y, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(FixtureError::RaggedLine { line: y });
        }
        for (x, symbol) in row.chars().enumerate() {
            match symbol {
                '#' => occupancy[y * width + x] = true,
                '.' => {}
                _ => {
                    if let Some(heading) = start_heading(symbol) {
                        if start.is_some() {
                            return Err(FixtureError::MultipleStarts);
                        }
                        start = Some(AgentState::new(x, y, heading));
                    } else if let Some(category) = object_category(symbol) {
                        let id = objects.len() as u32;
                        objects.push(SceneObject { id, category, x, y });
                    } else {
                        return Err(FixtureError::UnknownSymbol { symbol, x, y });
                    }
                }
            }
        }
    }

    let start = start.ok_or(FixtureError::NoStart)?;
    let materials = (0..height)
        .flat_map(|y| (0..width).map(move |x| ((x + 2 * y) % 3) as u8))
        .collect();
    Ok(ParsedMap {
        env: GridEnvironment {
            width,
            height,
            occupancy,
            objects,
            materials,
            lighting: Lighting { hue: 0.5, brightness: 1.0 },
            seed: fnv1a64(text.as_bytes()),
        },
        start,
    })
}

/// One shipped test environment: a named map plus the task run on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub name: &'static str,
    pub env: GridEnvironment,
    pub start: AgentState,
    pub task: TaskInstruction,
}

fn chair_task(max_distance: f64) -> TaskInstruction {
    TaskInstruction {
        target_category: ObjectCategory::Chair,
        condition: CompletionCondition {
            fov_degrees: 90.0,
            max_distance,
            requires_line_of_sight: true,
        },
    }
}

/// A corridor with a bent dead-end pocket; the chair hangs at the top of a
/// shaft past the pocket mouth. Frontier chasers dive into the pocket.
const POCKET_TRAP: &str = "
#############
###########C#
######.L###.#
######.####.#
######.####.#
#>..........#
#############";

/// A wide open hall. Planners that prize wall adjacency ride the boundary
/// ring instead of cutting straight across.
const BOUNDARY_HALL: &str = "
#####################
#...................#
#.>...............C.#
#...................#
#.L.................#
#...................#
#####################";

/// The chair sits in a walled alcove whose only sight line runs through a
/// one-cell gap to the north.
const OCCLUDED_ALCOVE: &str = "
#######
#>....#
#.#.#.#
#.#C#.#
#.###.#
#....L#
#######";

/// Minimal sanity map: the chair is straight ahead down an open room.
const STRAIGHT_SHOT: &str = "
############
#..........#
#>........C#
#..L.......#
############";

/// Two bent dead-end pockets flank the corridor before the chair shaft.
const TWIN_POCKETS: &str = "
###############
####..L#####C##
####.#######.##
####.#######.##
#>...........##
#######.#######
#######.#######
#####T..#######
###############";

/// Six switchback corridors; the chair waits at the far end of the last one.
const SERPENTINE_LONG: &str = "
#####################
#>..................#
###################.#
#...................#
#.###################
#...................#
###################.#
#...................#
#.###################
#...................#
###################.#
#..L...............C#
#####################";

/// Four rooms joined by door gaps; start and chair sit in opposite corners.
const FOUR_ROOMS: &str = "
#################
#.......#.......#
#.v.....#.....L.#
#.......#.......#
#...............#
#.......#.......#
#.......#.......#
#.......#.......#
####.#######.####
#.......#.......#
#.......#.......#
#.......#.......#
#...............#
#.......#.......#
#.T.....#.....C.#
#.......#.......#
#################";

/// A ring corridor around a solid block; both ways around are equal length.
const RING_AROUND: &str = "
#############
#.....L.....#
#...........#
#...........#
#...#####...#
#...#####...#
#^..#####..C#
#...#####...#
#...#####...#
#...........#
#...........#
#...........#
#############";

/// Warehouse aisles: shelf walls force weaving between rows.
const AISLES: &str = "
#################
#>..............#
#...#...#...#...#
#...#...#...#...#
#...#...#...#...#
#...#...#...#...#
#...#...#...#...#
#.L...........C.#
#################";

/// The lamp sits exactly on the straight start-to-chair line while the table
/// hangs off it; path-distance rankings between the two differ sharply.
const LAMP_ON_PATH: &str = "
###########
#....T....#
#>..L....C#
#.........#
###########";

/// An antechamber over two walled-off chambers reached through door gaps;
/// the chair hides in the east chamber.
const DOUBLE_ALCOVE: &str = "
#############
#...........#
#.v.........#
#...........#
###.#####.###
#.....#.....#
#..L..#..C..#
#.....#.....#
#############";

/// A comb of dead-end teeth over the spine corridor; the chair tops the
/// last tooth.
const COMB_TEETH: &str = "
###############
#.#.#.#.#.#.#C#
#.#.#.#.#.#.#.#
#>............#
#L#############
###############";

/// Two vertical halls joined by one crossbar, like the letter H.
const H_CORRIDOR: &str = "
###############
#v.#########.L#
#..#########..#
#..#########..#
#..#########..#
#.............#
#..#########..#
#..#########..#
#..#########..#
#..#########.C#
###############";

/// A bare court with objects in three corners.
const OPEN_COURT: &str = "
##########
#>......L#
#........#
#........#
#........#
#........#
#........#
#........#
#T......C#
##########";

const PACK: [(&str, &str, f64); 14] = [
    ("pocket_trap", POCKET_TRAP, 1.5),
    ("boundary_hall", BOUNDARY_HALL, 2.0),
    ("occluded_alcove", OCCLUDED_ALCOVE, 2.5),
    ("straight_shot", STRAIGHT_SHOT, 1.5),
    ("twin_pockets", TWIN_POCKETS, 1.5),
    ("serpentine_long", SERPENTINE_LONG, 1.5),
    ("four_rooms", FOUR_ROOMS, 1.5),
    ("ring_around", RING_AROUND, 1.5),
    ("aisles", AISLES, 1.5),
    ("lamp_on_path", LAMP_ON_PATH, 1.5),
    ("double_alcove", DOUBLE_ALCOVE, 1.5),
    ("comb_teeth", COMB_TEETH, 1.5),
    ("h_corridor", H_CORRIDOR, 1.5),
    ("open_court", OPEN_COURT, 2.0),
];

/// All shipped fixtures, in a fixed order. Every map is solvable and every
/// shipped planner completes it within the standard budget.
pub fn fixture_pack() -> Vec<Fixture> {
    PACK.iter()
        .map(|&(name, text, max_distance)| {
            let parsed = parse_map(text).unwrap_or_else(|e| panic!("fixture {name}: {e}"));
            Fixture {
                name,
                env: parsed.env,
                start: parsed.start,
                task: chair_task(max_distance),
            }
        })
        .collect()
}

/// Looks up one shipped fixture by name.
pub fn fixture(name: &str) -> Option<Fixture> {
    fixture_pack().into_iter().find(|f| f.name == name)
}
