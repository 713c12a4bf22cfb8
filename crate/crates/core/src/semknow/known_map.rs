//! The robot's ternary occupancy grid and its run-length cell encoding.

use serde::{Deserialize, Serialize};

use crate::geometry::{Cell, GridRay};
use crate::simkernel::LidarScan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellState {
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

/// Ternary occupancy grid built from lidar. A cell is written at most once:
/// it leaves `Unknown` and never changes again.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownMap {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    cells: Vec<CellState>,
}

impl KnownMap {
    pub fn unknown(width: usize, height: usize, resolution: f64) -> Self {
        Self {
            width,
            height,
            resolution,
            cells: vec![CellState::Unknown; width * height],
        }
    }

    pub fn get(&self, c: Cell) -> CellState {
        self.cells[c.index(self.width)]
    }

    pub fn get_index(&self, i: usize) -> CellState {
        self.cells[i]
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.get(c) == CellState::Free
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        crate::geometry::world_to_cell(x, y, self.resolution, self.width, self.height)
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }

    /// Sets an unknown cell; returns whether it changed.
    pub fn reveal(&mut self, c: Cell, state: CellState) -> bool {
        let i = c.index(self.width);
        if self.cells[i] == CellState::Unknown && state != CellState::Unknown {
            self.cells[i] = state;
            true
        } else {
            false
        }
    }

    /// Carves one scan into the map and returns the newly revealed cells in
    /// index order.
    ///
    /// Cells a beam traverses before its hit are free, the hit cell is
    /// occupied, and no-hit beams only free cells up to max range. Within a
    /// single scan occupied wins over free.
    pub fn integrate_scan(&mut self, scan: &LidarScan) -> Vec<(usize, CellState)> {
        const EPS: f64 = 1e-9;
        let origin = (scan.origin.x, scan.origin.y);
        let mut free = Vec::new();
        let mut occupied = Vec::new();
        let unknown = |c: Cell| self.cells[c.index(self.width)] == CellState::Unknown;
        for beam in &scan.beams {
            let ray = GridRay::new(
                origin,
                beam.angle,
                scan.max_range,
                self.resolution,
                self.width,
                self.height,
            );
            if beam.hit {
                // The hit cell is the last one entered at or before the measured range.
                let mut last: Option<Cell> = None;
                for c in ray {
                    if c.entry > beam.range + EPS {
                        break;
                    }
                    if let Some(p) = last.filter(|&p| unknown(p)) {
                        free.push(p);
                    }
                    last = Some(c.cell);
                }
                occupied.extend(last.filter(|&p| unknown(p)));
            } else {
                for c in ray {
                    if c.entry >= beam.range {
                        break;
                    }
                    if unknown(c.cell) {
                        free.push(c.cell);
                    }
                }
            }
        }
        let mut changed: Vec<(usize, CellState)> = Vec::new();
        for c in occupied {
            if self.reveal(c, CellState::Occupied) {
                changed.push((c.index(self.width), CellState::Occupied));
            }
        }
        for c in free {
            if self.reveal(c, CellState::Free) {
                changed.push((c.index(self.width), CellState::Free));
            }
        }
        changed.sort_unstable_by_key(|(i, _)| *i);
        changed
    }

    /// Free cells with at least one unknown 4-neighbor, in index order.
    pub fn frontier_cells(&self) -> Vec<Cell> {
        (0..self.cells.len())
            .filter(|&i| self.cells[i] == CellState::Free)
            .map(|i| Cell::from_index(i, self.width))
            .filter(|c| {
                c.neighbors4(self.width, self.height)
                    .any(|n| self.get(n) == CellState::Unknown)
            })
            .collect()
    }
}

/// Run-length encodes `(index, state)` changes sorted by index into
/// `[start, length, state]` triples of consecutive indices with one state.
pub fn encode_cell_runs(changes: &[(usize, CellState)]) -> Vec<[usize; 3]> {
    let mut runs: Vec<[usize; 3]> = Vec::new();
    for &(i, s) in changes {
        match runs.last_mut() {
            Some(r) if r[0] + r[1] == i && r[2] == s as usize => r[1] += 1,
            _ => runs.push([i, 1, s as usize]),
        }
    }
    runs
}
