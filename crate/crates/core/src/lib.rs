//! Quadratic matrix programming (QMP) and LMMSE transceiver design.

pub mod conic;
pub mod designer;
pub mod error;
pub mod matrix;
pub mod model;
pub mod robust;
pub mod scenario;
pub mod sim;
pub mod solvers;

pub use error::{Error, Result};
