//! Articulated part-based Gaussian-splat cyclists.
//!
//! Bicycle parts are posed with an 8-DoF rig (crank, steering, body rotation,
//! body translation), riders with a 24-joint kinematic tree, and the rider is
//! seated on the bicycle by a Chamfer-objective IK refinement.

pub mod bike;
pub mod body;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod pipeline;
pub mod refine;
pub mod se3;
pub mod splat;

pub use error::{Error, Result};
