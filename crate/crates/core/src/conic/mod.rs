//! Convex AV subproblem and the conic solver behind it.

pub mod admm;
pub mod dump;
pub mod kkt;
pub mod program;
pub mod sets;
pub mod subproblem;

pub use admm::{ConicSolution, SolveReport, SolveStatus, SolverSettings};
pub use kkt::{kkt_check, KktReport};
pub use program::ConicProgram;
pub use subproblem::{assemble, assemble_with_initial, extract_plan, ConicProblem, InitialAv, Layout, RowBlocks};
