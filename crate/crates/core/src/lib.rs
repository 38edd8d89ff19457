//! Trajectory-based quantum dynamics on constraint phase space.
//!
//! A quantum state of dimension `F` is mapped onto points of a sphere (or a
//! complex Stiefel manifold); each point evolves under the mapping
//! Hamiltonian, and kernel-weighted averages over initial points estimate
//! quantum time-correlation functions.

pub mod cps;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod linalg;
pub mod models;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
