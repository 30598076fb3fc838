//! Finite element machinery and the linear solvers.

pub mod coupled;
pub mod fe;
pub mod sparse;
pub mod stokes;
pub mod system;

pub use fe::{FeSpace, MiniField};
pub use stokes::{solve_steady_stokes, StokesSolver};
pub use system::{MiniLoad, MiniSolution, MiniSystem, NodeRole, RigidBlock};
pub use coupled::{assemble_coupled, CoupledSystem, FluidState, LinearStep};
