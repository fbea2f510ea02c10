//! Multi-vehicle inspection planning from signal temporal logic specifications.
//!
//! A mission (workspace, obstacles, inspection targets, blade sides, homes, vehicles) becomes an
//! STL formula. A routing MILP assigns tasks to vehicles, a kinematic seed follows the routes,
//! and projected gradient ascent on the smooth robustness refines the seed. During execution the
//! replanner rebuilds the residual mission after disturbances.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod mission;
pub mod optimizer;
pub mod pipeline;
pub mod replanner;
pub mod robustness;
pub mod router;
pub mod stl;
pub mod units;

pub use error::{Error, Result};
