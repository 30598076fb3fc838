//! Self-propelled deformable solid in a viscous incompressible fluid, solved on
//! the fixed reference fluid domain with transformed unknowns.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod extension;
pub mod kinematics;
pub mod linsolve;
pub mod mesh;
pub mod operators;
pub mod stepper;
pub mod verify;
pub mod vtk;

pub use error::{FsiError, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
