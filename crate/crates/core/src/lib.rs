//! Characteristic evolution of semilinear waves on the Schwarzschild exterior
//! with short-pulse data, together with the energy functionals, multiplier
//! currents and identity checks used to study the solutions.

pub mod angular;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod nullforms;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
