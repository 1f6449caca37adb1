//! Parametric convex optimal control with linear dynamics: solving at a
//! fixed parameter and computing subdifferentials of the optimal value
//! function.

pub mod convex;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod polyhedron;
pub mod qp;
pub mod sensitivity;
pub mod serde_ext;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use model::{assemble_operators, validate_problem, AssembledSystem, ControlProblem, Solution};
pub use sensitivity::{analyze, ModeRequest, SensMode, SensOptions, SensitivityReport};
pub use solver::{solve, SolveResult, SolveStatus};
