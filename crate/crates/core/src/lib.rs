//! Two optical modes coupled to one mechanical mode near the parametric
//! instability: normal modes, master-equation dynamics and photon blockade.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fockspace;
pub mod model;
pub mod normalmodes;
pub mod observables;

pub use error::{Error, Result};
pub use fockspace::{FockConfig, ModeOperator, QuantumState};
pub use model::{LindbladChannel, SystemParams};
pub use normalmodes::{Approximation, NormalModeData};
