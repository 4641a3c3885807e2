//! Distortion energies on signed singular values, their symmetrization and a
//! numerical property analyzer.

pub mod analysis;
mod catalog;
mod svd;

pub use analysis::{classify_energy, minimize_fsym, sample_level_sets, EnergyProperties, LevelSetKind};
pub use catalog::Energy;
pub use svd::{signed_svd, SignedSvd};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("energy {energy} diverges on a singular Jacobian")]
    Divergent { energy: &'static str },
}
