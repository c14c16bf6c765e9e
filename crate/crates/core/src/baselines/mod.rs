//! Reference solvers: kernel policy iteration with the exact transition
//! expectation, and tabular policy iteration on a uniform grid.

pub mod direct;
pub mod grid;

pub use direct::{
    direct_kernel_policy_evaluation, run_direct_policy_iteration, DirectPolicy, DirectSolver,
};
pub use grid::{grid_policy_iteration, CellGrid, DiscreteMdp, GridSolution, TabularSolution};
