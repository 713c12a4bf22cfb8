//! Planar geometry shared by the simulator, the known map and the planners.
//!
//! Grid convention: cell `(x, y)` covers `[x·res, (x+1)·res) × [y·res, (y+1)·res)`
//! in world meters, and its row-major index is `y·width + x`. "North" is `+y`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (x - self.x).hypot(y - self.y)
    }

    /// Bearing of `(x, y)` relative to the heading, in `(-π, π]`.
    pub fn bearing_to(&self, x: f64, y: f64) -> f64 {
        normalize_angle((y - self.y).atan2(x - self.x) - self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn index(&self, width: usize) -> usize {
        self.y * width + self.x
    }

    pub fn from_index(index: usize, width: usize) -> Self {
        Self::new(index % width, index / width)
    }

    /// Center of the cell in world meters.
    pub fn center(&self, resolution: f64) -> (f64, f64) {
        (
            (self.x as f64 + 0.5) * resolution,
            (self.y as f64 + 0.5) * resolution,
        )
    }

    /// 4-neighbors inside a `width × height` grid in N, E, S, W order.
    pub fn neighbors4(&self, width: usize, height: usize) -> impl Iterator<Item = Cell> {
        let Cell { x, y } = *self;
        [
            (y + 1 < height).then(|| Cell::new(x, y + 1)),
            (x + 1 < width).then(|| Cell::new(x + 1, y)),
            (y > 0).then(|| Cell::new(x, y - 1)),
            (x > 0).then(|| Cell::new(x - 1, y)),
        ]
        .into_iter()
        .flatten()
    }

    pub fn manhattan(&self, other: &Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

/// Maps a world coordinate to the containing cell, if inside the grid.
pub fn world_to_cell(x: f64, y: f64, resolution: f64, width: usize, height: usize) -> Option<Cell> {
    let cx = (x / resolution).floor();
    let cy = (y / resolution).floor();
    if cx < 0.0 || cy < 0.0 || cx >= width as f64 || cy >= height as f64 {
        return None;
    }
    Some(Cell::new(cx as usize, cy as usize))
}

/// One cell visited by a [`GridRay`], with the ray parameter (distance in
/// meters from the origin) at which the ray enters and leaves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCell {
    pub cell: Cell,
    pub entry: f64,
    pub exit: f64,
}

/// Exact cell traversal of a ray over a bounded grid (Amanatides & Woo).
///
/// Yields every cell whose entry distance is below `max_dist`, starting with
/// the cell containing the origin. Consecutive cells are 4-adjacent; when the
/// ray passes exactly through a cell corner the x-step is taken first.
#[derive(Debug, Clone)]
pub struct GridRay {
    x: i64,
    y: i64,
    step_x: i64,
    step_y: i64,
    t_max_x: f64,
    t_max_y: f64,
    t_delta_x: f64,
    t_delta_y: f64,
    entry: f64,
    max_dist: f64,
    width: i64,
    height: i64,
    done: bool,
}

impl GridRay {
    /// `angle` is the ray direction in world radians.
    pub fn new(
        origin: (f64, f64),
        angle: f64,
        max_dist: f64,
        resolution: f64,
        width: usize,
        height: usize,
    ) -> Self {
        let (dx, dy) = (angle.cos(), angle.sin());
        Self::with_direction(origin, (dx, dy), max_dist, resolution, width, height)
    }

    /// Ray from `from` to `to`; `max_dist` is the segment length.
    pub fn segment(
        from: (f64, f64),
        to: (f64, f64),
        resolution: f64,
        width: usize,
        height: usize,
    ) -> Self {
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        let len = dx.hypot(dy);
        let dir = if len > 0.0 {
            (dx / len, dy / len)
        } else {
            (1.0, 0.0)
        };
        Self::with_direction(from, dir, len, resolution, width, height)
    }

    fn with_direction(
        origin: (f64, f64),
        (dx, dy): (f64, f64),
        max_dist: f64,
        resolution: f64,
        width: usize,
        height: usize,
    ) -> Self {
        let (ox, oy) = origin;
        let x = (ox / resolution).floor() as i64;
        let y = (oy / resolution).floor() as i64;
        let axis = |o: f64, d: f64, c: i64| -> (i64, f64, f64) {
            if d > 0.0 {
                (1, ((c + 1) as f64 * resolution - o) / d, resolution / d)
            } else if d < 0.0 {
                (-1, (c as f64 * resolution - o) / d, -resolution / d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (step_x, t_max_x, t_delta_x) = axis(ox, dx, x);
        let (step_y, t_max_y, t_delta_y) = axis(oy, dy, y);
        let (width, height) = (width as i64, height as i64);
        let done = x < 0 || y < 0 || x >= width || y >= height;
        Self {
            x,
            y,
            step_x,
            step_y,
            t_max_x,
            t_max_y,
            t_delta_x,
            t_delta_y,
            entry: 0.0,
            max_dist,
            width,
            height,
            done,
        }
    }
}

impl Iterator for GridRay {
    type Item = RayCell;

    fn next(&mut self) -> Option<RayCell> {
        if self.done || (self.entry >= self.max_dist && self.entry > 0.0) {
            return None;
        }
        let cell = Cell::new(self.x as usize, self.y as usize);
        let entry = self.entry;
        let exit = self.t_max_x.min(self.t_max_y);
        if self.t_max_x <= self.t_max_y {
            self.x += self.step_x;
            self.entry = self.t_max_x;
            self.t_max_x += self.t_delta_x;
        } else {
            self.y += self.step_y;
            self.entry = self.t_max_y;
            self.t_max_y += self.t_delta_y;
        }
        if self.x < 0 || self.y < 0 || self.x >= self.width || self.y >= self.height {
            self.done = true;
        }
        Some(RayCell { cell, entry, exit })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_wraps_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((normalize_angle(0.1 + 4.0 * TAU) - 0.1).abs() < 1e-9);
    }

    #[test]
    fn ray_along_x_visits_consecutive_cells() {
        let cells: Vec<_> = GridRay::new((0.05, 0.05), 0.0, 0.35, 0.1, 10, 10).collect();
        let xs: Vec<_> = cells.iter().map(|c| c.cell.x).collect();
        assert_eq!(xs, vec![0, 1, 2, 3]);
        assert!(cells.iter().all(|c| c.cell.y == 0));
        assert!((cells[1].entry - 0.05).abs() < 1e-12);
    }

    #[test]
    fn ray_cells_are_four_adjacent() {
        for k in 0..64 {
            let angle = k as f64 * TAU / 64.0;
            let cells: Vec<_> = GridRay::new((2.53, 2.47), angle, 2.0, 0.1, 60, 60).collect();
            for w in cells.windows(2) {
                assert_eq!(w[0].cell.manhattan(&w[1].cell), 1, "angle {angle}");
                assert!(w[1].entry >= w[0].entry);
            }
        }
    }

    #[test]
    fn ray_stops_at_grid_edge() {
        let cells: Vec<_> = GridRay::new((0.15, 0.15), PI, 10.0, 0.1, 5, 5).collect();
        assert_eq!(cells.len(), 2);
    }

    #[test]
    fn segment_ends_in_target_cell() {
        let cells: Vec<_> = GridRay::segment((0.05, 0.05), (0.73, 0.41), 0.1, 10, 10).collect();
        assert_eq!(cells.last().unwrap().cell, Cell::new(7, 4));
    }
}
