//! Simulation toolkit for critical first-passage percolation on the square lattice.

pub mod field;
pub mod fourarm;
pub mod fpp;
pub mod invasion;
pub mod lattice;
pub mod mc;
pub mod percolation;
pub mod weights;

pub use field::{mix_seed, LazyField, Omega, WeightField};
pub use fpp::{EdgeMask, PassageResult};
pub use lattice::{AnnulusSpec, BoxSpec, DualEdgeId, DualVertex, EdgeId, Orientation, Vertex};
pub use weights::{Classification, DistributionSpec, P_C};

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Weights(#[from] weights::WeightsError),
    #[error(transparent)]
    Field(#[from] field::FieldError),
    #[error(transparent)]
    Fpp(#[from] fpp::FppError),
    #[error(transparent)]
    Percolation(#[from] percolation::PercolationError),
    #[error(transparent)]
    Invasion(#[from] invasion::InvasionError),
    #[error(transparent)]
    FourArm(#[from] fourarm::FourArmError),
    #[error(transparent)]
    Mc(#[from] mc::McError),
}
