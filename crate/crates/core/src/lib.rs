//! Pseudo-spectral simulator for constrained multi-phase-field models of
//! nuclear architecture reorganization.
//!
//! N chromosome fields and one heterochromatin field follow an Allen–Cahn
//! gradient flow on a periodic square. Lagrange multipliers hold every
//! chromosome volume and heterochromatin volume on prescribed schedules.
//! The core is generic over the scalar type; [`Field`], [`State`] and friends
//! are the `f64` instantiations used by the command-line tools.

pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod real;
pub mod schedules;
pub mod schemes;
pub mod spectral;

pub use error::{NarError, Result};
pub use real::Real;

pub type Grid = spectral::Grid2D<f64>;
pub type Field = spectral::ScalarField2D<f64>;
pub type State = model::NuclearState<f64>;
pub type Params = model::ModelParams<f64>;
pub type Ramp = schedules::RampSchedule<f64>;
