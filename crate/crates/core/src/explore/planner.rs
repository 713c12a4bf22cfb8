//! A* path planning on the known map.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use super::ExploreError;
use crate::geometry::{Cell, GridRay};
use crate::semknow::{CellState, KnownMap};

/// Which known-map cells a path may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Passable {
    /// Only cells known to be free.
    #[default]
    KnownFree,
    /// Free and unknown cells; only known obstacles block.
    NotOccupied,
}

impl Passable {
    pub fn allows(self, s: CellState) -> bool {
        match self {
            Passable::KnownFree => s == CellState::Free,
            Passable::NotOccupied => s != CellState::Occupied,
        }
    }
}

/// A 4-connected cell path.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// From start to goal, inclusive.
    pub cells: Vec<Cell>,
    /// Meters: one resolution per move.
    pub length: f64,
}

impl Path {
    pub fn moves(&self) -> usize {
        self.cells.len() - 1
    }

    pub fn goal(&self) -> Cell {
        *self.cells.last().expect("paths are nonempty")
    }
}

/// Shortest path through known free cells.
///
/// A* with the Manhattan heuristic. The open set pops the lowest `f`, then
/// the lowest cell index; neighbors expand N, E, S, W.
pub fn plan_path(known: &KnownMap, start: Cell, goal: Cell) -> Result<Path, ExploreError> {
    plan_path_with(known, start, goal, Passable::KnownFree)
}

pub fn plan_path_with(
    known: &KnownMap,
    start: Cell,
    goal: Cell,
    passable: Passable,
) -> Result<Path, ExploreError> {
    let (w, h) = (known.width, known.height);
    if start.x >= w || start.y >= h || !passable.allows(known.get(start)) {
        return Err(ExploreError::StartBlocked(start));
    }
    if goal.x >= w || goal.y >= h || !passable.allows(known.get(goal)) {
        return Err(ExploreError::Unreachable(goal));
    }
    const NONE: u32 = u32::MAX;
    let mut g = vec![NONE; w * h];
    let mut parent = vec![NONE; w * h];
    let mut closed = vec![false; w * h];
    let mut open = BinaryHeap::new();
    let si = start.index(w);
    g[si] = 0;
    open.push(Reverse((start.manhattan(&goal) as u32, si)));
    while let Some(Reverse((_, i))) = open.pop() {
        if closed[i] {
            continue;
        }
        closed[i] = true;
        let c = Cell::from_index(i, w);
        if c == goal {
            let mut cells = vec![c];
            let mut k = i;
            while parent[k] != NONE {
                k = parent[k] as usize;
                cells.push(Cell::from_index(k, w));
            }
            cells.reverse();
            let length = (cells.len() - 1) as f64 * known.resolution;
            return Ok(Path { cells, length });
        }
        for n in c.neighbors4(w, h) {
            let ni = n.index(w);
            if closed[ni] || !passable.allows(known.get_index(ni)) {
                continue;
            }
            let ng = g[i] + 1;
            if ng < g[ni] {
                g[ni] = ng;
                parent[ni] = i as u32;
                open.push(Reverse((ng + n.manhattan(&goal) as u32, ni)));
            }
        }
    }
    Err(ExploreError::Unreachable(goal))
}

/// Cells 4-connected to `start` through passable cells.
pub fn reachable_from(known: &KnownMap, start: Cell, passable: Passable) -> Vec<bool> {
    let (w, h) = (known.width, known.height);
    let mut seen = vec![false; w * h];
    if start.x >= w || start.y >= h || !passable.allows(known.get(start)) {
        return seen;
    }
    seen[start.index(w)] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for n in c.neighbors4(w, h) {
            let i = n.index(w);
            if !seen[i] && passable.allows(known.get_index(i)) {
                seen[i] = true;
                queue.push_back(n);
            }
        }
    }
    seen
}

/// Lateral offset, in cells, of the side rays that check a shortcut keeps
/// clear of obstacles.
const CLEARANCE: f64 = 0.3;

fn segment_clear(known: &KnownMap, a: (f64, f64), b: (f64, f64), passable: Passable) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return true;
    }
    let side = CLEARANCE * known.resolution;
    let (nx, ny) = (-dy / len * side, dx / len * side);
    [0.0, 1.0, -1.0].iter().all(|&s| {
        let from = (a.0 + s * nx, a.1 + s * ny);
        let to = (b.0 + s * nx, b.1 + s * ny);
        let inside = |p: (f64, f64)| {
            known
                .cell_at(p.0, p.1)
                .is_some_and(|c| passable.allows(known.get(c)))
        };
        inside(from)
            && inside(to)
            && GridRay::segment(from, to, known.resolution, known.width, known.height)
                .all(|rc| passable.allows(known.get(rc.cell)))
    })
}

/// Waypoints (cell centers) for following `path` from `origin`, skipping
/// intermediate cells wherever a straight shortcut stays clear.
pub fn waypoints(
    known: &KnownMap,
    path: &Path,
    origin: (f64, f64),
    passable: Passable,
) -> VecDeque<(f64, f64)> {
    let res = known.resolution;
    let mut out = VecDeque::new();
    let mut anchor = origin;
    let mut i = 0;
    let last = path.cells.len() - 1;
    if last == 0 {
        out.push_back(path.cells[0].center(res));
        return out;
    }
    while i < last {
        let mut j = i + 1;
        while j < last && segment_clear(known, anchor, path.cells[j + 1].center(res), passable) {
            j += 1;
        }
        anchor = path.cells[j].center(res);
        out.push_back(anchor);
        i = j;
    }
    out
}
