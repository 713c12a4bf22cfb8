//! Deterministic 2D benchmark for semantic mapping.
//!
//! The pipeline is world → simulator → spatial knowledge → metrics:
//!
//! - [`worldmodel`]: worlds, objects, taxonomy and the groundtruth provider.
//! - [`simkernel`]: robot kinematics, lidar, camera visibility and the detector model.
//! - [`semknow`]: the robot's known map and its per-object knowledge store.
//! - [`explore`]: path planning and the frontier, random and external policies.
//! - [`metrics`]: ORI, cORI and OPI and the pluggable metric registry.
//! - [`harness`]: sessions, benchmarks, event logs, replay and the live server.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod explore;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod semknow;
pub mod simkernel;
pub mod worldmodel;

mod index_runs;
