//! Solvers for sample-average chance constrained programs.
//!
//! The crate implements two penalty-based proximal difference-of-convex
//! algorithms (one in the primal space, one in a lifted complementarity
//! space), together with DCA and CVaR baselines, an exact subset-enumeration
//! oracle, and stationarity certificates. Problem instances are convex
//! quadratic programs over bounded polyhedra with scenario constraints given
//! as maxima of affine-plus-diagonal-quadratic pieces.

pub mod algorithms;
pub mod convex;
pub mod harness;
pub mod model;
pub mod rankops;
