//! Data-driven Koopman operator toolkit: EDMD fits, spectral census of
//! invariant sets, phase-space stitching of local operators, transport across
//! symmetric regions, and topological-conjugacy checks.

pub mod cases;
pub mod cli;
pub mod conjugacy;
pub mod dictionary;
pub mod dynamics;
pub mod edmd;
pub mod equivariance;
pub mod error;
pub mod io;
mod kmeans;
pub mod linalg;
pub mod spectral;
pub mod stitching;

pub use conjugacy::Homeomorphism;
pub use dictionary::Dictionary;
pub use dynamics::{GridBox, SnapshotSet, Trajectory, VectorField};
pub use edmd::KoopmanModel;
pub use equivariance::GroupAction;
pub use error::{Error, Result};
pub use kmeans::kmeans;
pub use spectral::SpectralReport;
pub use stitching::{StitchedModel, SubspacePredicate};
