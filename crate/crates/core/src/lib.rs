//! Control-coding capacity of linear-quadratic-Gaussian partially observable systems,
//! with a finite-alphabet information-state engine for exhaustive cross-checks.

pub mod capacity;
pub mod error;
pub mod filters;
pub mod infostate;
pub mod io;
pub mod linalg;
pub mod model;
pub mod riccati;
pub mod sim;

pub use error::{Error, Result};
pub use model::{stationary, FiniteNposs, LqgSystem, StageMatrices, ValidationReport, Violation};
