//! Channel-grouped 1D convolutional network for surgical skill
//! classification from da Vinci kinematics.
//!
//! The crate covers the numerical kernels ([`nn`]), the grouped
//! architecture ([`model`]), data ingestion and LOSO folds ([`data`]), the
//! per-trial Adam training loop ([`training`]), micro/macro scoring
//! ([`metrics`]) and class activation maps with CSV/SVG export ([`cam`]).

pub mod cam;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
