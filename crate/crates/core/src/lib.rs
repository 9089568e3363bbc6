//! Sundman time reparametrization of dynamical vector fields, with the geometric
//! machinery (Liouville fields, Levi-Civita connections, conformal and Jacobi
//! metrics) needed to check its consequences numerically.

pub mod error;
pub mod fields;
pub mod kepler;
pub mod linstruct;
pub mod mechanics;
pub mod numerics;
pub mod riemann;

pub use error::{Error, Result};
pub use fields::{ScalarField, Trajectory, VectorField, VolumeForm};
