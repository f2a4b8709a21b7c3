//! Simulation and topology optimisation of two-material garment patches
//! worn over a moving body.

pub mod beso;
pub mod config;
pub mod energy;
pub mod equilibrium;
pub mod error;
pub mod field;
pub mod fixture;
pub mod lbfgs;
pub mod material;
pub mod membrane;
pub mod mesh;
pub mod patch;
pub mod pulltest;

pub use error::{Error, Result};
pub use material::MaterialPair;
pub use mesh::{SurfaceMesh, Vec3};
pub use patch::GarmentPatch;
