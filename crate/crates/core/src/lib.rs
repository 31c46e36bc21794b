//! Limited-detector gamma CT toolkit: analytic disc phantoms, fan-beam
//! scanning with a scintillation counting model, fan-to-parallel rebinning,
//! Hamming-family filtered backprojection, and the KT-1 / RMSE / normality
//! audits used to rank detector electronics settings.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod detector;
pub mod error;
pub mod formats;
pub mod par;
pub mod phantom;
pub mod projector;
pub mod recon;
pub mod sinogram;
pub mod verify;

pub use error::{Error, Result};
