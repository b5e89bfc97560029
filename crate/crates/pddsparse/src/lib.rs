//! Probabilistic domain decomposition at desk scale: Monte Carlo assembly
//! of the sparse interface system, structural and conditioning diagnostics,
//! and Neumann / Neumann-Arnoldi preconditioned GMRES.
//!
//! Pipeline: [`geometry`] tessellates the square domain and places knots on
//! the interface skeleton; [`stochastics`] runs patch-confined trajectories;
//! [`interp`] supplies the cardinal functions read at first-exit points;
//! [`assembly`] averages trajectory scores into the sparse system;
//! [`matrix_analysis`] checks the structure the limit theory predicts and
//! evaluates the exit-time condition bounds; [`preconditioning`] projects
//! onto a dominant M-matrix and builds the truncated-Neumann and low-rank
//! corrected preconditioners; [`krylov`] solves; [`bench`] wires the whole
//! thing into the manufactured-solution benchmark, scaling sweeps and
//! iteration grids.

pub mod assembly;
pub mod bench;
pub mod error;
pub mod geometry;
pub mod interp;
pub mod krylov;
pub mod matrix_analysis;
pub mod preconditioning;
pub mod rng;
pub mod sparse;
pub mod stochastics;

pub use error::{Error, Result};
