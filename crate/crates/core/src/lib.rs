//! Cascaded sign sketches of point sets on the unit sphere and in the unit
//! ball, with multiplicative squared-distance recovery through iterated
//! sines, plus a quantized random-projection baseline.
//!
//! A point set is planned ([`planner::plan`]), sketched layer by layer
//! ([`cascade::sketch_set`]) and decoded pairwise ([`recovery::estimate_all`]).

pub mod cascade;
pub mod formats;
pub mod harness;
pub mod iterates;
pub mod jl_baseline;
pub mod planner;
pub mod points;
pub mod recovery;
pub mod signsketch;

pub use cascade::{sketch_set, CascadeError, SketchBundle};
pub use iterates::{f, f_iter, g, g_iter, IterateLevel};
pub use planner::{plan, plan_with, CascadePlan, PlanConfig, PlanError};
pub use points::{Mode, PointSet, PointSetError};
pub use recovery::{estimate_all, estimate_pair, PairEstimate};
pub use signsketch::PackedSignVector;
