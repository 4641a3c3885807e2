pub mod cli;
pub mod energies;
pub mod mapping;
pub mod mesh;
pub mod metrics;
pub mod objective;
pub mod solver;
pub mod transfer;
