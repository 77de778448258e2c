//! Vector-field k-means: clustering 2-D time-stamped trajectories by fitting
//! one piecewise-linear vector field per cluster.
//!
//! Each cluster is summarized not by a representative trajectory but by a
//! vector field on a regular triangulated grid, fit by regularized least
//! squares so that the cluster's trajectories are approximately integral
//! lines of the field. The algorithm alternates between fitting the
//! best field for each cluster and reassigning every trajectory to the
//! field that explains it best, driving down a single global energy.
//!
//! Pipeline:
//! 1. [`trajectory::parse_trajectories`] reads `id,t,x,y` CSV records.
//! 2. [`grid::Grid`] discretizes the bounding box; trajectories are
//!    tessellated so no segment crosses a triangle boundary.
//! 3. [`trajectory::build_segments`] / [`field::build_constraints`] turn
//!    segments into weighted least-squares constraints.
//! 4. [`clustering::run`] drives the alternating optimize/assign loop.

pub mod clustering;
pub mod error;
pub mod field;
pub mod geom;
pub mod grid;
pub mod laplacian;
pub mod solver;
pub mod sparse;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
pub use geom::Vec2;
pub use grid::Grid;
