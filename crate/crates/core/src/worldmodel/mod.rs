//! Worlds, objects and the taxonomy, plus the groundtruth semantic map
//! derived from them.
//!
//! A [`WorldSpec`] is immutable once built: every constructor validates it,
//! so the rest of the crate can assume footprints are in bounds, ids are
//! unique and every class has a chain to the taxonomy root.

mod bundled;
mod format;
mod taxonomy;

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::geometry::{world_to_cell, Cell, Pose};

pub use bundled::{bundled_names, bundled_source, load_bundled};
pub use format::parse_world;
pub use taxonomy::{predicates_for, Predicate, PredicateKind, Taxonomy, ROOT_CLASS};

pub type ObjectId = u32;

/// Surface points per meter of footprint perimeter.
pub const DEFAULT_POINT_DENSITY: f64 = 50.0;

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid world: {0}")]
    Validation(String),
    #[error("unknown class '{0}'")]
    UnknownClass(String),
    #[error("cannot read world file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameId(pub String);

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub index: u32,
    pub x: f64,
    pub y: f64,
}

/// Axis-aligned rectangle in world meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        )
    }

    /// Euclidean distance from a point to the rectangle (0 inside).
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        let dx = (self.min_x - x).max(0.0).max(x - self.max_x);
        let dy = (self.min_y - y).max(0.0).max(y - self.max_y);
        dx.hypot(dy)
    }
}

/// Inclusive cell range covered by a footprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRange {
    pub min: Cell,
    pub max: Cell,
}

impl CellRange {
    pub fn contains(&self, c: Cell) -> bool {
        (self.min.x..=self.max.x).contains(&c.x) && (self.min.y..=self.max.y).contains(&c.y)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.min.y..=self.max.y)
            .flat_map(move |y| (self.min.x..=self.max.x).map(move |x| Cell::new(x, y)))
    }

    /// Clamps a cell-space coordinate pair into the range.
    fn clamp(&self, cx: f64, cy: f64) -> Cell {
        let x = (cx.max(self.min.x as f64) as usize).min(self.max.x);
        let y = (cy.max(self.min.y as f64) as usize).min(self.max.y);
        Cell::new(x, y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub class_label: String,
    pub pose: Pose,
    /// Extent along the object's own x and y axes before rotation.
    pub size: (f64, f64),
    pub footprint: Rect,
    pub cells: CellRange,
    pub surface_points: Vec<SurfacePoint>,
}

impl ObjectInstance {
    /// Places a `w × h` box at `pose`; `pose.theta` must be a multiple of π/2.
    pub fn new(
        id: ObjectId,
        class_label: impl Into<String>,
        pose: Pose,
        (w, h): (f64, f64),
        point_density: f64,
        resolution: f64,
    ) -> Result<Self, WorldError> {
        let class_label = class_label.into();
        if !(w > 0.0 && h > 0.0) {
            return Err(WorldError::Validation(format!(
                "object {id}: footprint {w}×{h} must have positive area"
            )));
        }
        let quarter_turns = pose.theta / FRAC_PI_2;
        if (quarter_turns - quarter_turns.round()).abs() > 1e-6 {
            return Err(WorldError::Validation(format!(
                "object {id}: theta {} is not a multiple of π/2",
                pose.theta
            )));
        }
        let (fw, fh) = if (quarter_turns.round() as i64).rem_euclid(2) == 1 {
            (h, w)
        } else {
            (w, h)
        };
        let footprint = Rect {
            min_x: pose.x - fw / 2.0,
            min_y: pose.y - fh / 2.0,
            max_x: pose.x + fw / 2.0,
            max_y: pose.y + fh / 2.0,
        };
        const EPS: f64 = 1e-9;
        let lo = |v: f64| (v / resolution + EPS).floor();
        let hi = |v: f64| (v / resolution - EPS).ceil() - 1.0;
        let (x0, y0, x1, y1) = (
            lo(footprint.min_x),
            lo(footprint.min_y),
            hi(footprint.max_x),
            hi(footprint.max_y),
        );
        if x0 < 0.0 || y0 < 0.0 {
            return Err(WorldError::Validation(format!(
                "object {id} ({class_label}) lies outside the grid"
            )));
        }
        let cells = CellRange {
            min: Cell::new(x0 as usize, y0 as usize),
            max: Cell::new(x1.max(x0) as usize, y1.max(y0) as usize),
        };
        let surface_points = perimeter_points(&footprint, point_density);
        if surface_points.len() < 4 {
            return Err(WorldError::Validation(format!(
                "object {id} ({class_label}) has only {} surface points",
                surface_points.len()
            )));
        }
        Ok(Self {
            id,
            class_label,
            pose,
            size: (w, h),
            footprint,
            cells,
            surface_points,
        })
    }

    pub fn point_count(&self) -> usize {
        self.surface_points.len()
    }

    /// The footprint cell a surface point belongs to.
    pub fn owner_cell(&self, p: &SurfacePoint, resolution: f64) -> Cell {
        self.cells
            .clamp((p.x / resolution).floor(), (p.y / resolution).floor())
    }
}

/// `ceil(perimeter × density)` points evenly spaced counterclockwise from the
/// lower-left corner.
fn perimeter_points(r: &Rect, density: f64) -> Vec<SurfacePoint> {
    let (w, h) = (r.width(), r.height());
    let perimeter = 2.0 * (w + h);
    let n = (perimeter * density - 1e-9).ceil().max(0.0) as usize;
    let spacing = perimeter / n as f64;
    (0..n)
        .map(|i| {
            let s = i as f64 * spacing;
            let (x, y) = if s < w {
                (r.min_x + s, r.min_y)
            } else if s < w + h {
                (r.max_x, r.min_y + (s - w))
            } else if s < 2.0 * w + h {
                (r.max_x - (s - w - h), r.max_y)
            } else {
                (r.min_x, r.max_y - (s - 2.0 * w - h))
            };
            SurfacePoint {
                index: i as u32,
                x,
                y,
            }
        })
        .collect()
}

/// A validated grid world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub name: String,
    pub frame: FrameId,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub point_density: f64,
    pub start: Pose,
    /// Row-major, `true` = wall.
    pub walls: Vec<bool>,
    pub objects: Vec<ObjectInstance>,
    pub taxonomy: Taxonomy,
    /// Index into `objects` of the footprint covering each cell.
    owner: Vec<Option<u32>>,
}

/// Unvalidated world description, as read from a world file.
#[derive(Debug, Clone)]
pub struct WorldDraft {
    pub name: String,
    pub frame: String,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub point_density: f64,
    pub start: Option<Pose>,
    pub walls: Vec<bool>,
    pub taxonomy: Vec<(String, String)>,
    pub objects: Vec<ObjectDraft>,
}

#[derive(Debug, Clone)]
pub struct ObjectDraft {
    pub id: ObjectId,
    pub class: String,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub w: f64,
    pub h: f64,
}

impl WorldSpec {
    pub fn from_draft(d: WorldDraft) -> Result<Self, WorldError> {
        if d.width == 0 || d.height == 0 {
            return Err(WorldError::Validation("grid must be non-empty".into()));
        }
        if !(d.resolution > 0.0) {
            return Err(WorldError::Validation("resolution must be positive".into()));
        }
        if !(d.point_density > 0.0) {
            return Err(WorldError::Validation(
                "point density must be positive".into(),
            ));
        }
        if d.walls.len() != d.width * d.height {
            return Err(WorldError::Validation(format!(
                "wall bitmap has {} cells, expected {}",
                d.walls.len(),
                d.width * d.height
            )));
        }
        let taxonomy = Taxonomy::new(d.taxonomy)?;
        let mut owner: Vec<Option<u32>> = vec![None; d.width * d.height];
        let mut objects = Vec::with_capacity(d.objects.len());
        let mut ids = BTreeSet::new();
        for o in d.objects {
            if !ids.insert(o.id) {
                return Err(WorldError::Validation(format!(
                    "duplicate object id {}",
                    o.id
                )));
            }
            if !taxonomy.contains(&o.class) {
                return Err(WorldError::Validation(format!(
                    "object {} has class '{}' which is not in the taxonomy",
                    o.id, o.class
                )));
            }
            let obj = ObjectInstance::new(
                o.id,
                o.class,
                Pose::new(o.x, o.y, o.theta),
                (o.w, o.h),
                d.point_density,
                d.resolution,
            )?;
            if obj.cells.max.x >= d.width || obj.cells.max.y >= d.height {
                return Err(WorldError::Validation(format!(
                    "object {} ({}) lies outside the grid",
                    obj.id, obj.class_label
                )));
            }
            for c in obj.cells.cells() {
                let i = c.index(d.width);
                if d.walls[i] {
                    return Err(WorldError::Validation(format!(
                        "object {} ({}) overlaps a wall at cell ({}, {})",
                        obj.id, obj.class_label, c.x, c.y
                    )));
                }
                if let Some(other) = owner[i] {
                    let other: &ObjectInstance = &objects[other as usize];
                    return Err(WorldError::Validation(format!(
                        "object {} ({}) overlaps object {} ({})",
                        obj.id, obj.class_label, other.id, other.class_label
                    )));
                }
                owner[i] = Some(objects.len() as u32);
            }
            objects.push(obj);
        }
        let mut world = Self {
            name: d.name,
            frame: FrameId(d.frame),
            resolution: d.resolution,
            width: d.width,
            height: d.height,
            point_density: d.point_density,
            start: Pose::new(0.0, 0.0, 0.0),
            walls: d.walls,
            objects,
            taxonomy,
            owner,
        };
        world.start = match d.start {
            Some(p) => {
                if !world.is_free_point(p.x, p.y) {
                    return Err(WorldError::Validation(format!(
                        "start pose ({}, {}) is not in free space",
                        p.x, p.y
                    )));
                }
                p
            }
            None => world.default_start()?,
        };
        Ok(world)
    }

    fn default_start(&self) -> Result<Pose, WorldError> {
        let center = Cell::new(self.width / 2, self.height / 2);
        (0..self.width * self.height)
            .map(|i| Cell::from_index(i, self.width))
            .filter(|c| !self.is_blocked(*c))
            .min_by_key(|c| (c.manhattan(&center), c.index(self.width)))
            .map(|c| {
                let (x, y) = c.center(self.resolution);
                Pose::new(x, y, 0.0)
            })
            .ok_or_else(|| WorldError::Validation("world has no free cell".into()))
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.walls[c.index(self.width)]
    }

    /// Wall or object footprint.
    pub fn is_blocked(&self, c: Cell) -> bool {
        let i = c.index(self.width);
        self.walls[i] || self.owner[i].is_some()
    }

    /// Index into `objects` of the footprint covering `c`.
    pub fn owner_of(&self, c: Cell) -> Option<usize> {
        self.owner[c.index(self.width)].map(|i| i as usize)
    }

    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        world_to_cell(x, y, self.resolution, self.width, self.height)
    }

    /// True when the point is inside the grid and not on a blocked cell.
    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_some_and(|c| !self.is_blocked(c))
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn to_world_file(&self) -> String {
        format::write_world(self)
    }

    /// Free cells 4-connected to the start cell through unblocked cells.
    pub fn reachable_free_cells(&self) -> Vec<bool> {
        let mut seen = vec![false; self.cell_count()];
        let Some(start) = self.cell_at(self.start.x, self.start.y) else {
            return seen;
        };
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start.index(self.width)] = true;
        while let Some(c) = queue.pop_front() {
            for n in c.neighbors4(self.width, self.height) {
                let i = n.index(self.width);
                if !seen[i] && !self.is_blocked(n) {
                    seen[i] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }
}

/// Loads a world file from disk. A bare bundled world name is also accepted.
pub fn load_world(path: impl AsRef<Path>) -> Result<WorldSpec, WorldError> {
    let path = path.as_ref();
    if !path.exists() {
        if let Some(name) = path.to_str() {
            if let Some(world) = load_bundled(name) {
                return world;
            }
        }
    }
    let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_world(&text)
}

/// The ⟨R, M, P⟩ tuple: a frame, per-object surface-point index sets and a
/// predicate set, all expressed in that frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticMap {
    pub frame: FrameId,
    pub geometry: BTreeMap<ObjectId, BTreeSet<u32>>,
    pub predicates: BTreeSet<Predicate>,
}

impl SemanticMap {
    pub fn empty(frame: FrameId) -> Self {
        Self {
            frame,
            geometry: BTreeMap::new(),
            predicates: BTreeSet::new(),
        }
    }

    /// Predicates this map attributes to one object: its `instance-of`
    /// facts and the `is-a` chains reachable from their classes.
    pub fn predicates_of(&self, id: ObjectId) -> BTreeSet<Predicate> {
        let subject = id.to_string();
        let mut out = BTreeSet::new();
        let mut frontier: Vec<String> = Vec::new();
        for p in &self.predicates {
            if p.kind == PredicateKind::InstanceOf && p.subject == subject {
                out.insert(p.clone());
                frontier.push(p.object.clone());
            }
        }
        while let Some(class) = frontier.pop() {
            for p in &self.predicates {
                if p.kind == PredicateKind::IsA && p.subject == class && out.insert(p.clone()) {
                    frontier.push(p.object.clone());
                }
            }
        }
        out
    }
}

/// Per-object reference quantities: `ps_G(n)` and the groundtruth predicate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundtruthObject {
    pub id: ObjectId,
    pub class_label: String,
    pub point_count: usize,
    pub predicates: BTreeSet<Predicate>,
}

/// The groundtruth provider: the complete reference semantic map of a world
/// plus the per-object counts the metrics need.
#[derive(Debug, Clone, PartialEq)]
pub struct Groundtruth {
    pub map: SemanticMap,
    pub objects: Vec<GroundtruthObject>,
}

impl Groundtruth {
    pub fn from_world(spec: &WorldSpec) -> Self {
        let objects: Vec<_> = spec
            .objects
            .iter()
            .map(|o| GroundtruthObject {
                id: o.id,
                class_label: o.class_label.clone(),
                point_count: o.point_count(),
                predicates: predicates_for(o.id, &o.class_label, &spec.taxonomy)
                    .expect("validated world has a chain for every class"),
            })
            .collect();
        Self {
            map: groundtruth_map(spec),
            objects,
        }
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }
}

/// Every surface point of every object, and the union of their predicates.
pub fn groundtruth_map(spec: &WorldSpec) -> SemanticMap {
    let mut map = SemanticMap::empty(spec.frame.clone());
    for o in &spec.objects {
        map.geometry
            .insert(o.id, o.surface_points.iter().map(|p| p.index).collect());
        map.predicates.extend(
            predicates_for(o.id, &o.class_label, &spec.taxonomy)
                .expect("validated world has a chain for every class"),
        );
    }
    map
}
