//! Deterministic reference solvers in one space dimension, a Kalman–Bucy filter, and numerical
//! quadrature and differentiation utilities.

mod grid;
mod kalman;
mod numerics;
mod pde;

pub use grid::{Grid1D, GridSpec};
pub use kalman::{kalman_bucy, riccati_stationary, KalmanMode, RiccatiState};
pub use numerics::{central_difference, dense_quadrature, richardson, second_difference, RichardsonReport};
pub use pde::{backward_pde_solve, forward_fp_solve, zakai_grid_solve, BackwardSolution, GridInit, ZakaiGridSolution};

/// Largest admissible `a_max·Δt/Δx²` for the grid solvers.
pub const CFL_LIMIT: f64 = 0.45;
