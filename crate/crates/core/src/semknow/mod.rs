//! What the robot has learned: a ternary occupancy map carved from lidar and
//! a per-object store fed by detections.

mod known_map;
mod store;

pub use known_map::{encode_cell_runs, CellState, KnownMap};
pub use store::{LabelPolicy, ObjectMessage, ObjectRecord, SpatialKnowledge};

use crate::worldmodel::ObjectId;

/// Default confidence at which a record starts asserting predicates.
pub const DEFAULT_KNOWLEDGE_THRESHOLD: f64 = 0.25;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SemknowError {
    #[error("label {0:?} is not in the taxonomy")]
    UnknownClass(String),
    #[error("detection of object {0} has no visible points")]
    EmptyDetection(ObjectId),
    #[error(
        "object {object_id} has {count} surface points but a detection refers to index {index}"
    )]
    PointOutOfRange {
        object_id: ObjectId,
        index: u32,
        count: usize,
    },
}
